//! Interface fluxes predicted by KBR from nodal flux values.

use serde::{Deserialize, Serialize};

use super::Grid1D;
use crate::error::{KbrError, Result};
use crate::kernel::{KernelModel, LinearPredictor, TrainingSet};
use crate::training::{fit_theta_with, log_space, SweepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KbrFluxConfig {
    pub sweep: SweepConfig,
    /// Sweep size when re-fitting around the previous optimum.
    pub warm_count: usize,
}

impl Default for KbrFluxConfig {
    fn default() -> Self {
        Self { sweep: SweepConfig::default(), warm_count: 5 }
    }
}

impl KbrFluxConfig {
    /// `warm_count` values bracketing `k` with the spacing of the full sweep,
    /// shifted as needed to stay inside `[k_min, k_max]`.
    pub fn warm_ks(&self, k: f64) -> Vec<f64> {
        let s = &self.sweep;
        let step = (s.k_max / s.k_min).ln() / (s.n_sweep - 1) as f64;
        let half = (self.warm_count.saturating_sub(1)) as f64 / 2.0 * step;
        let (lo, hi) = (s.k_min.ln(), s.k_max.ln());
        let c = if hi - lo <= 2.0 * half { 0.5 * (lo + hi) } else { k.ln().clamp(lo + half, hi - half) };
        log_space((c - half).exp(), (c + half).exp(), self.warm_count.max(2))
    }
}

/// Fitted kernel width for fluxes on a fixed grid, with the interface
/// predictor for that width.
#[derive(Debug, Clone)]
pub struct FluxPredictor {
    pub k: f64,
    /// Normalized units.
    pub theta: f64,
    predictor: LinearPredictor,
}

impl FluxPredictor {
    pub fn with_theta(grid: &Grid1D, k: f64, theta: f64) -> Result<Self> {
        let nodes = grid.nodes().to_vec();
        let ones = vec![1.0; nodes.len()];
        let geometry = KernelModel::new(TrainingSet::from_1d(&nodes, &ones)?, theta)?;
        let predictor = geometry.linear_predictor(grid.interfaces())?;
        Ok(Self { k, theta, predictor })
    }

    /// Sweeps `ks` on the nodal field `values` and builds the predictor for
    /// the selected width.
    pub fn fit(grid: &Grid1D, values: &[f64], cfg: &KbrFluxConfig, ks: &[f64]) -> Result<Self> {
        let data = TrainingSet::from_1d(grid.nodes(), values)?;
        let fit = fit_theta_with(&data, &cfg.sweep, ks, Default::default())?;
        log::debug!("flux fit k={:.4e} theta={:.4e}", fit.k, fit.model.theta());
        Self::with_theta(grid, fit.k, fit.model.theta())
    }

    /// Interface values `F^_{i+1/2}`. An all-zero field gives zeros; interfaces
    /// whose moment solve failed fall back to the neighbor mean.
    pub fn predict(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.iter().all(|v| *v == 0.0) {
            return Ok(vec![0.0; values.len() - 1]);
        }
        let raw = self.predictor.apply(values)?;
        Ok(raw
            .into_iter()
            .enumerate()
            .map(|(j, v)| {
                v.unwrap_or_else(|| {
                    log::warn!("interface {j}: moment solve failed, using neighbor mean");
                    0.5 * (values[j] + values[j + 1])
                })
            })
            .collect())
    }
}

/// How interface fluxes are obtained.
#[derive(Debug, Clone)]
pub enum InterfaceFlux {
    /// Arithmetic mean of the neighboring nodal fluxes (KBR disabled).
    Mean,
    /// One predictor (one fitted width) shared by every component.
    Kbr(FluxPredictor),
}

impl InterfaceFlux {
    pub fn interfaces(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            InterfaceFlux::Mean => Ok(values.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()),
            InterfaceFlux::Kbr(p) => p.predict(values),
        }
    }
}

/// Fits `theta` on the nodal fluxes and returns the KBR interface values.
/// Falls back to the neighbor mean if no sweep point can be evaluated.
pub fn kbr_interface_flux(flux_at_nodes: &[f64], grid: &Grid1D, cfg: &KbrFluxConfig) -> Result<Vec<f64>> {
    if flux_at_nodes.len() != grid.len() {
        return Err(KbrError::InvalidInput("flux values do not match the grid".into()));
    }
    if flux_at_nodes.iter().any(|v| !v.is_finite()) {
        return Err(KbrError::InvalidInput("non-finite nodal flux".into()));
    }
    if flux_at_nodes.iter().all(|v| *v == 0.0) {
        return Ok(vec![0.0; grid.len() - 1]);
    }
    match FluxPredictor::fit(grid, flux_at_nodes, cfg, &cfg.sweep.ks()) {
        Ok(p) => p.predict(flux_at_nodes),
        Err(KbrError::FitFailed) => {
            log::warn!("flux fit failed, using neighbor mean");
            InterfaceFlux::Mean.interfaces(flux_at_nodes)
        }
        Err(e) => Err(e),
    }
}
