//! Kernel-width selection through the dimensionless sweep `k = theta / d_typ^2`,
//! train/validation splitting and the multiplicative noise model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};
use crate::kernel::{KernelConfig, KernelModel, Normalization, TrainingSet};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Predictor {
    /// Exact second-order correction.
    #[default]
    Exact,
    /// Original self-correction; comparison only.
    #[doc(hidden)]
    SelfCorrection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub k_min: f64,
    pub k_max: f64,
    pub n_sweep: usize,
    pub knn: usize,
    pub split_ratio: f64,
    pub seed: u64,
    /// Golden-section refinement of `log k` around the best sweep point.
    pub refine: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { k_min: 0.01, k_max: 100.0, n_sweep: 15, knn: 5, split_ratio: 0.9, seed: 0, refine: false }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_min > 0.0 && self.k_min < self.k_max && self.k_max.is_finite()) {
            return Err(KbrError::InvalidConfig(format!("need 0 < k_min < k_max, got {} {}", self.k_min, self.k_max)));
        }
        if self.n_sweep < 2 {
            return Err(KbrError::InvalidConfig("n_sweep must be at least 2".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(KbrError::InvalidConfig(format!("split_ratio {} outside (0, 1)", self.split_ratio)));
        }
        if self.knn == 0 {
            return Err(KbrError::InvalidConfig("knn must be at least 1".into()));
        }
        Ok(())
    }

    /// Log-spaced sweep values from `k_min` to `k_max`.
    pub fn ks(&self) -> Vec<f64> {
        log_space(self.k_min, self.k_max, self.n_sweep)
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// `s = %noise / 100`; the perturbation has standard deviation `s / 3`.
    pub s: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn sigma(&self) -> f64 {
        self.s / 3.0
    }
}

/// `phi_i (1 + zeta_i)` with `zeta_i ~ N(0, (s/3)^2)`.
pub fn add_noise(values: &[f64], cfg: &NoiseConfig) -> Result<Vec<f64>> {
    if !(cfg.s >= 0.0 && cfg.s.is_finite()) {
        return Err(KbrError::InvalidConfig(format!("noise scale must be >= 0, got {}", cfg.s)));
    }
    if cfg.s == 0.0 {
        return Ok(values.to_vec());
    }
    let normal = Normal::new(0.0, cfg.sigma()).map_err(|e| KbrError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(values.iter().map(|v| v * (1.0 + normal.sample(&mut rng))).collect())
}

/// Mean over all points of the mean distance to their `knn` nearest
/// neighbors. `points` is row-major `n x dim`.
pub fn typical_distance(points: &[f64], dim: usize, knn: usize) -> Result<f64> {
    let n = points.len() / dim.max(1);
    if dim == 0 || knn == 0 {
        return Err(KbrError::InvalidInput("dimension and knn must be positive".into()));
    }
    if n < knn + 1 {
        return Err(KbrError::InsufficientData { needed: knn + 1, got: n });
    }
    let per_point: Vec<f64> = if dim == 1 {
        let mut sorted = points.to_vec();
        sorted.sort_by(f64::total_cmp);
        par::map(n, |i| {
            // Merge outward from position i.
            let (mut l, mut r) = (i, i);
            let mut sum = 0.0;
            for _ in 0..knn {
                let dl = if l > 0 { sorted[i] - sorted[l - 1] } else { f64::INFINITY };
                let dr = if r + 1 < n { sorted[r + 1] - sorted[i] } else { f64::INFINITY };
                if dl <= dr {
                    sum += dl;
                    l -= 1;
                } else {
                    sum += dr;
                    r += 1;
                }
            }
            sum / knn as f64
        })
    } else {
        par::map(n, |i| {
            let p = &points[i * dim..(i + 1) * dim];
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let q = &points[j * dim..(j + 1) * dim];
                    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
                })
                .collect();
            d.select_nth_unstable_by(knn - 1, f64::total_cmp);
            d[..knn].iter().sum::<f64>() / knn as f64
        })
    };
    Ok(per_point.iter().sum::<f64>() / n as f64)
}

/// Seeded uniform split without replacement; returns `(train, validation)`
/// index lists.
pub fn split(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(KbrError::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    if n < 2 {
        return Err(KbrError::InsufficientData { needed: 2, got: n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((n as f64 * ratio).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

/// One evaluated sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: f64,
    /// Normalized units.
    pub theta: f64,
    /// Normalized validation RMSE; `None` if no validation point could be
    /// evaluated.
    pub rmse: Option<f64>,
    /// Validation points that took part.
    pub used: usize,
}

#[derive(Debug, Clone)]
pub struct Fit {
    pub model: KernelModel,
    pub k: f64,
    /// Normalized units.
    pub d_typ: f64,
    pub sweep: Vec<SweepPoint>,
}

/// Validation error of a model trained on `train` and evaluated on `val`,
/// both sharing the normalization of the full data.
fn validation_rmse(
    data: &TrainingSet,
    train: &[usize],
    val: &[usize],
    norm: &Normalization,
    theta: f64,
    kcfg: KernelConfig,
    predictor: Predictor,
) -> Result<(Option<f64>, usize)> {
    let model = KernelModel::with_normalization(data.select(train), theta, norm.clone(), kcfg)?;
    let errs: Vec<Option<f64>> = par::map(val.len(), |q| {
        let i = val[q];
        let x = data.point(i);
        let p = match predictor {
            Predictor::Exact => model.predict_order2_detailed(x).ok().map(|r| r.value),
            Predictor::SelfCorrection => model.predict_self_correction(x).ok(),
        }?;
        let e = (p - data.values()[i]) / norm.field;
        e.is_finite().then_some(e * e)
    });
    let used: Vec<f64> = errs.into_iter().flatten().collect();
    if used.is_empty() {
        return Ok((None, 0));
    }
    Ok((Some((used.iter().sum::<f64>() / used.len() as f64).sqrt()), used.len()))
}

/// Validation RMSE at each `k` in `ks`.
pub fn sweep(
    data: &TrainingSet,
    cfg: &SweepConfig,
    ks: &[f64],
    kcfg: KernelConfig,
    predictor: Predictor,
) -> Result<(Vec<SweepPoint>, f64)> {
    cfg.validate()?;
    let norm = Normalization::fit(data)?;
    let pts: Vec<f64> = data.points().chunks(data.dim()).flat_map(|p| norm.to_normalized(p)).collect();
    let d_typ = typical_distance(&pts, data.dim(), cfg.knn)?;
    let (train, val) = split(data.len(), cfg.split_ratio, cfg.seed)?;
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let theta = k * d_typ * d_typ;
        let (rmse, used) = validation_rmse(data, &train, &val, &norm, theta, kcfg, predictor)?;
        log::debug!("sweep k={k:.4e} theta={theta:.4e} rmse={rmse:?}");
        out.push(SweepPoint { k, theta, rmse, used });
    }
    Ok((out, d_typ))
}

fn argmin(points: &[SweepPoint]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(r) = p.rmse {
            // Strict comparison keeps the smallest k on ties.
            if best.map_or(true, |b| r < points[b].rmse.unwrap()) {
                best = Some(i);
            }
        }
    }
    best
}

/// Selects `theta = k d_typ^2` minimizing validation RMSE of the exact
/// second-order prediction, then retrains on the full data.
pub fn fit_theta(data: &TrainingSet, cfg: &SweepConfig) -> Result<Fit> {
    fit_theta_with(data, cfg, &cfg.ks(), KernelConfig::default())
}

/// As [`fit_theta`] over an explicit list of `k` values (sorted ascending).
pub fn fit_theta_with(data: &TrainingSet, cfg: &SweepConfig, ks: &[f64], kcfg: KernelConfig) -> Result<Fit> {
    let (mut points, d_typ) = sweep(data, cfg, ks, kcfg, Predictor::Exact)?;
    let best = argmin(&points).ok_or(KbrError::FitFailed)?;
    let mut k = points[best].k;
    if cfg.refine {
        let mut trail = Vec::new();
        k = refine(data, cfg, kcfg, &points, best, d_typ, &mut trail)?.unwrap_or(k);
        points.extend(trail);
        points.sort_by(|a, b| a.k.total_cmp(&b.k));
    }
    let model = KernelModel::with_config(data.clone(), k * d_typ * d_typ, kcfg)?;
    Ok(Fit { model, k, d_typ, sweep: points })
}

/// Golden-section search on `log k` between the neighbors of the best sweep
/// point.
fn refine(
    data: &TrainingSet,
    cfg: &SweepConfig,
    kcfg: KernelConfig,
    points: &[SweepPoint],
    best: usize,
    d_typ: f64,
    trail: &mut Vec<SweepPoint>,
) -> Result<Option<f64>> {
    let norm = Normalization::fit(data)?;
    let (train, val) = split(data.len(), cfg.split_ratio, cfg.seed)?;
    let mut eval = |lk: f64| -> Result<f64> {
        let k = lk.exp();
        let theta = k * d_typ * d_typ;
        let (r, used) = validation_rmse(data, &train, &val, &norm, theta, kcfg, Predictor::Exact)?;
        trail.push(SweepPoint { k, theta, rmse: r, used });
        Ok(r.unwrap_or(f64::INFINITY))
    };
    let mut a = points[best.saturating_sub(1)].k.ln();
    let mut b = points[(best + 1).min(points.len() - 1)].k.ln();
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    for _ in 0..12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    let (lk, f) = if fc <= fd { (c, fc) } else { (d, fd) };
    let base = points[best].rmse.unwrap();
    Ok((f < base).then(|| lk.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_space_endpoints() {
        let k = log_space(0.01, 100.0, 15);
        assert_eq!(k.len(), 15);
        assert_eq!(k[0], 0.01);
        assert_eq!(k[14], 100.0);
        assert!((k[7] - 1.0).abs() < 1e-12);
    }

    fn brute_dtyp(points: &[f64], dim: usize, knn: usize) -> f64 {
        let n = points.len() / dim;
        let mut total = 0.0;
        for i in 0..n {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    (0..dim)
                        .map(|a| (points[i * dim + a] - points[j * dim + a]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            d.sort_by(f64::total_cmp);
            total += d[..knn].iter().sum::<f64>() / knn as f64;
        }
        total / n as f64
    }

    #[test]
    fn typical_distance_uniform_grid() {
        let h = 0.01;
        let pts: Vec<f64> = (0..101).map(|i| i as f64 * h).collect();
        let d = typical_distance(&pts, 1, 5).unwrap();
        assert!((d - brute_dtyp(&pts, 1, 5)).abs() < 1e-14);
        assert!((d / h - 1.8).abs() < 0.05);
    }

    #[test]
    fn typical_distance_clusters_and_2d() {
        let mut pts: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        pts.extend((0..20).map(|i| 100.0 + i as f64 * 0.02));
        let mut shuffled = pts.clone();
        shuffled.reverse();
        assert!((typical_distance(&shuffled, 1, 5).unwrap() - brute_dtyp(&pts, 1, 5)).abs() < 1e-12);

        let hexagon: Vec<f64> = (0..6)
            .flat_map(|i| {
                let a = i as f64 * std::f64::consts::PI / 3.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let d = typical_distance(&hexagon, 2, 5).unwrap();
        assert!((d - brute_dtyp(&hexagon, 2, 5)).abs() < 1e-14);
    }

    #[test]
    fn typical_distance_needs_enough_points() {
        assert!(matches!(
            typical_distance(&[0.0, 1.0, 2.0], 1, 5),
            Err(KbrError::InsufficientData { needed: 6, got: 3 })
        ));
    }

    #[test]
    fn split_is_disjoint_cover() {
        let (t, v) = split(101, 0.9, 3).unwrap();
        assert_eq!(t.len() + v.len(), 101);
        let mut all: Vec<usize> = t.iter().chain(&v).copied().collect();
        all.sort();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(split(101, 0.9, 3).unwrap(), (t, v));
    }

    #[test]
    fn noise_zero_identity_and_seeded() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(add_noise(&v, &NoiseConfig { s: 0.0, seed: 1 }).unwrap(), v);
        let a = add_noise(&v, &NoiseConfig { s: 0.05, seed: 9 }).unwrap();
        let b = add_noise(&v, &NoiseConfig { s: 0.05, seed: 9 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_std_matches_sigma() {
        let v = vec![1.0; 20000];
        let n = add_noise(&v, &NoiseConfig { s: 0.09, seed: 4 }).unwrap();
        let mean = n.iter().map(|x| x - 1.0).sum::<f64>() / n.len() as f64;
        let var = n.iter().map(|x| (x - 1.0 - mean).powi(2)).sum::<f64>() / (n.len() - 1) as f64;
        assert!((var.sqrt() / 0.03 - 1.0).abs() < 0.05);
    }

    #[test]
    fn fit_quadratic_is_deterministic() {
        let xs: Vec<f64> = (0..60).map(|i| (i as f64 / 59.0).powf(1.3)).collect();
        let vals: Vec<f64> = xs.iter().map(|x| 1.0 + x - 2.0 * x * x).collect();
        let data = TrainingSet::from_1d(&xs, &vals).unwrap();
        let cfg = SweepConfig { seed: 5, ..Default::default() };
        let a = fit_theta(&data, &cfg).unwrap();
        let b = fit_theta(&data, &cfg).unwrap();
        assert_eq!(a.k, b.k);
        assert_eq!(a.model.theta(), b.model.theta());
        let best = a.sweep.iter().filter_map(|p| p.rmse).fold(f64::INFINITY, f64::min);
        assert!(best < 1e-10, "{best}");
    }
}
