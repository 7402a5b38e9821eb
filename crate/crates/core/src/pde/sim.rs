//! Time loop for the two benchmarks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::flux::{FluxPredictor, InterfaceFlux, KbrFluxConfig};
use super::solvers::{burgers_flux, maccormack_kbr_step, maccormack_step, roe_kbr_step, roe_step, MacCormackForm};
use super::{ConservedState, Grid1D};
use crate::baselines::euler::{flux as euler_flux, EulerPrimitive, SOD_LEFT, SOD_RIGHT};
use crate::baselines::muscl::muscl_tvd_step;
use crate::error::{KbrError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    BurgersMaccormack,
    BurgersMaccormackKbr,
    SodRoe,
    SodRoeKbr,
    SodMuscl,
}

impl Problem {
    pub const ALL: [Problem; 5] =
        [Problem::BurgersMaccormack, Problem::BurgersMaccormackKbr, Problem::SodRoe, Problem::SodRoeKbr, Problem::SodMuscl];

    pub fn name(&self) -> &'static str {
        match self {
            Problem::BurgersMaccormack => "burgers-maccormack",
            Problem::BurgersMaccormackKbr => "burgers-maccormack-kbr",
            Problem::SodRoe => "sod-roe",
            Problem::SodRoeKbr => "sod-roe-kbr",
            Problem::SodMuscl => "sod-muscl",
        }
    }

    pub fn is_burgers(&self) -> bool {
        matches!(self, Problem::BurgersMaccormack | Problem::BurgersMaccormackKbr)
    }

    pub fn uses_kbr(&self) -> bool {
        matches!(self, Problem::BurgersMaccormackKbr | Problem::SodRoeKbr)
    }

    pub fn default_t_end(&self) -> f64 {
        if self.is_burgers() {
            0.3
        } else {
            0.15
        }
    }

    /// Uniform grid on `[0, 1]` for Burgers, clustered toward the diaphragm
    /// for Sod.
    pub fn grid(&self, cfg: &SolverConfig) -> Result<Grid1D> {
        if self.is_burgers() {
            Grid1D::uniform(cfg.nodes, 0.0, 1.0)
        } else {
            Grid1D::clustered(cfg.nodes, cfg.grid_ratio)
        }
    }

    pub fn initial_state(&self, grid: &Grid1D) -> ConservedState {
        if self.is_burgers() {
            ConservedState::scalar(grid.nodes().iter().map(|&x| if x < 0.5 { 1.0 } else { 0.0 }).collect())
        } else {
            let prims: Vec<EulerPrimitive> =
                grid.nodes().iter().map(|&x| if x < 0.5 { SOD_LEFT } else { SOD_RIGHT }).collect();
            ConservedState::euler(&prims)
        }
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = KbrError;

    fn from_str(s: &str) -> Result<Self> {
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| KbrError::InvalidConfig(format!("unknown problem '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cfl: f64,
    /// Defaults to the problem's benchmark time.
    pub t_end: Option<f64>,
    /// Stop after this many steps even if `t_end` is not reached.
    pub max_steps: Option<usize>,
    pub retrain_every: usize,
    pub nodes: usize,
    /// Max over min spacing of the clustered Sod grid.
    pub grid_ratio: f64,
    pub maccormack_form: MacCormackForm,
    /// Run the KBR schemes with neighbor-mean interface fluxes.
    pub disable_kbr: bool,
    /// Keep every n-th state (the initial and final states are always kept).
    pub snapshot_every: Option<usize>,
    pub flux: KbrFluxConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            cfl: 0.4,
            t_end: None,
            max_steps: None,
            retrain_every: 10,
            nodes: 251,
            grid_ratio: 3.0,
            maccormack_form: MacCormackForm::Displayed,
            disable_kbr: false,
            snapshot_every: None,
            flux: KbrFluxConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(KbrError::InvalidConfig(format!("cfl must be in (0, 1), got {}", self.cfl)));
        }
        if let Some(t) = self.t_end {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(KbrError::InvalidConfig(format!("t_end must be >= 0, got {t}")));
            }
        }
        if self.retrain_every == 0 {
            return Err(KbrError::InvalidConfig("retrain_every must be >= 1".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(KbrError::InvalidConfig("snapshot_every must be >= 1".into()));
        }
        if !(self.grid_ratio >= 1.0) {
            return Err(KbrError::InvalidConfig(format!("grid_ratio must be >= 1, got {}", self.grid_ratio)));
        }
        self.flux.sweep.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrainRecord {
    pub step: usize,
    pub time: f64,
    pub k: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub problem: Problem,
    pub grid: Grid1D,
    pub snapshots: Vec<ConservedState>,
    pub steps: usize,
    /// Per step, the largest over components of
    /// `|sum_i dx_i (U^{n+1}_i - U^n_i) + dt (F_out - F_in)|`.
    pub conservation: Vec<f64>,
    pub retrains: Vec<RetrainRecord>,
    /// Largest `max|U|` seen over the run divided by the initial value.
    pub growth: f64,
    /// Refits that failed and kept the previous interface model.
    pub fit_failures: usize,
}

impl Simulation {
    pub fn final_state(&self) -> &ConservedState {
        self.snapshots.last().expect("initial state is always recorded")
    }

    pub fn max_conservation_residual(&self) -> f64 {
        self.conservation.iter().copied().fold(0.0, f64::max)
    }
}

fn nodal_flux(state: &ConservedState) -> Vec<Vec<f64>> {
    if state.n_comps() == 1 {
        vec![state.comps[0].iter().map(|&u| burgers_flux(u)).collect()]
    } else {
        let f: Vec<[f64; 3]> = (0..state.len()).map(|i| euler_flux(&state.node(i))).collect();
        (0..3).map(|c| f.iter().map(|q| q[c]).collect()).collect()
    }
}

/// Field the width is fitted on: the mass flux, or the first nonzero
/// component when the mass flux vanishes (Sod at rest).
fn training_flux(state: &ConservedState) -> Option<Vec<f64>> {
    let comps = nodal_flux(state);
    let order: Vec<usize> = if comps.len() == 1 { vec![0] } else { vec![0, 1, 2] };
    order.into_iter().map(|c| comps[c].clone()).find(|f| f.iter().any(|v| *v != 0.0))
}

fn wave_speed(state: &ConservedState) -> f64 {
    if state.n_comps() == 1 {
        state.comps[0].iter().fold(0.0, |m, u| m.max(u.abs()))
    } else {
        state.primitives().iter().map(|p| p.u.abs() + p.sound_speed()).fold(0.0, f64::max)
    }
}

/// Change of `sum dx U` against the net boundary flux. For Burgers the two
/// Dirichlet nodes are excluded, which is exact while their neighbors stay
/// at the boundary values.
fn conservation_residual(prev: &ConservedState, next: &ConservedState, grid: &Grid1D, dt: f64) -> f64 {
    let n = prev.len();
    let w = grid.widths();
    let fl = nodal_flux(prev);
    let range = if prev.n_comps() == 1 { 1..n - 1 } else { 0..n };
    (0..prev.n_comps())
        .map(|c| {
            let change: f64 = range.clone().map(|i| w[i] * (next.comps[c][i] - prev.comps[c][i])).sum();
            (change + dt * (fl[c][n - 1] - fl[c][0])).abs()
        })
        .fold(0.0, f64::max)
}

fn refit(
    grid: &Grid1D,
    state: &ConservedState,
    cfg: &SolverConfig,
    current: &InterfaceFlux,
) -> Result<Option<FluxPredictor>> {
    let Some(values) = training_flux(state) else { return Ok(None) };
    let ks = match current {
        InterfaceFlux::Kbr(p) => cfg.flux.warm_ks(p.k),
        InterfaceFlux::Mean => cfg.flux.sweep.ks(),
    };
    match FluxPredictor::fit(grid, &values, &cfg.flux, &ks) {
        Ok(p) => Ok(Some(p)),
        Err(KbrError::FitFailed) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn run_simulation(problem: Problem, cfg: &SolverConfig) -> Result<Simulation> {
    cfg.validate()?;
    let grid = problem.grid(cfg)?;
    let initial = problem.initial_state(&grid);
    let t_end = cfg.t_end.unwrap_or(problem.default_t_end());
    let min_width = grid.widths().iter().copied().fold(f64::INFINITY, f64::min);
    let scale0 = initial.max_abs();
    let kbr = problem.uses_kbr() && !cfg.disable_kbr;

    let mut sim = Simulation {
        problem,
        grid: grid.clone(),
        snapshots: vec![initial.clone()],
        steps: 0,
        conservation: Vec::new(),
        retrains: Vec::new(),
        growth: 1.0,
        fit_failures: 0,
    };
    let mut state = initial;
    let mut interface = InterfaceFlux::Mean;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    // Relative slack so round-off in the accumulated time does not add a
    // vanishing last step.
    while state.time < t_end * (1.0 - 1e-14) && sim.steps < max_steps {
        let step = sim.steps;
        if kbr && step % cfg.retrain_every == 0 {
            match refit(&grid, &state, cfg, &interface)? {
                Some(p) => {
                    sim.retrains.push(RetrainRecord { step, time: state.time, k: p.k, theta: p.theta });
                    interface = InterfaceFlux::Kbr(p);
                }
                None => {
                    log::warn!("step {step}: flux refit failed, keeping previous interface model");
                    sim.fit_failures += 1;
                }
            }
        }
        let speed = wave_speed(&state);
        let mut dt = if speed > 0.0 { cfg.cfl * min_width / speed } else { t_end - state.time };
        dt = dt.min(t_end - state.time);
        let next = match problem {
            Problem::BurgersMaccormack => maccormack_step(&state, &grid, dt),
            Problem::BurgersMaccormackKbr => maccormack_kbr_step(&state, &grid, dt, &interface, cfg.maccormack_form),
            Problem::SodRoe => roe_step(&state, &grid, dt),
            Problem::SodRoeKbr => roe_kbr_step(&state, &grid, dt, &interface),
            Problem::SodMuscl => muscl_tvd_step(&state, &grid, dt),
        }
        .map_err(|e| match e {
            KbrError::Unstable { reason, .. } => KbrError::Unstable { step, reason },
            KbrError::NonPhysicalState(reason) => KbrError::Unstable { step, reason },
            other => other,
        })?;
        next.check(step)?;
        sim.conservation.push(conservation_residual(&state, &next, &grid, dt));
        sim.growth = sim.growth.max(next.max_abs() / scale0);
        sim.steps += 1;
        state = next;
        if let Some(every) = cfg.snapshot_every {
            if sim.steps % every == 0 {
                sim.snapshots.push(state.clone());
            }
        }
    }
    if sim.snapshots.last().map(|s| s.time) != Some(state.time) {
        sim.snapshots.push(state);
    }
    Ok(sim)
}

/// Rightmost downward crossing of `level`, linearly interpolated.
pub fn shock_position(x: &[f64], u: &[f64], level: f64) -> Option<f64> {
    (0..u.len().saturating_sub(1))
        .rev()
        .find(|&i| u[i] >= level && u[i + 1] < level)
        .map(|i| x[i] + (u[i] - level) / (u[i] - u[i + 1]) * (x[i + 1] - x[i]))
}
