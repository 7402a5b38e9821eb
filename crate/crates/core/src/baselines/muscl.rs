//! Second-order MUSCL reconstruction with the minmod limiter, Roe interface
//! fluxes and a forward-Euler update.

use serde::{Deserialize, Serialize};

use super::euler::{conserved, roe_flux_conserved, EulerPrimitive};
use crate::error::{KbrError, Result};
use crate::pde::{ConservedState, Grid1D};

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

/// Limited slopes of `v` on the (possibly non-uniform) grid; zero at the two
/// boundary nodes.
fn slopes(v: &[f64], x: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut s = vec![0.0; n];
    for i in 1..n - 1 {
        s[i] = minmod((v[i] - v[i - 1]) / (x[i] - x[i - 1]), (v[i + 1] - v[i]) / (x[i + 1] - x[i]));
    }
    s
}

fn cfl_check(dt: f64, speed: f64, grid: &Grid1D, limit: f64) -> Result<()> {
    let dx = grid.widths().iter().copied().fold(f64::INFINITY, f64::min);
    let c = dt * speed / dx;
    if !(dt > 0.0) || !(c <= limit) {
        return Err(KbrError::Unstable { step: 0, reason: format!("CFL number {c} exceeds {limit}") });
    }
    Ok(())
}

/// One MUSCL-TVD step for the Euler equations with zero-gradient outflow
/// boundaries. Primitive variables are reconstructed.
pub fn muscl_tvd_step(state: &ConservedState, grid: &Grid1D, dt: f64) -> Result<ConservedState> {
    let n = state.len();
    if state.n_comps() != 3 || n != grid.len() {
        return Err(KbrError::InvalidInput("MUSCL step needs an Euler state on the given grid".into()));
    }
    let prims = state.primitives();
    let speed = prims.iter().map(|p| p.u.abs() + p.sound_speed()).fold(0.0, f64::max);
    cfl_check(dt, speed, grid, 1.0)?;
    let x = grid.nodes();
    let xf = grid.interfaces();
    let cols = [
        prims.iter().map(|p| p.rho).collect::<Vec<_>>(),
        prims.iter().map(|p| p.u).collect(),
        prims.iter().map(|p| p.p).collect(),
    ];
    let sl: Vec<Vec<f64>> = cols.iter().map(|c| slopes(c, x)).collect();
    let recon = |i: usize, at: f64| {
        let d = at - x[i];
        EulerPrimitive::new(cols[0][i] + sl[0][i] * d, cols[1][i] + sl[1][i] * d, cols[2][i] + sl[2][i] * d)
    };
    // Interface j sits between nodes j and j+1; boundaries copy the edge node.
    let mut f = vec![[0.0; 3]; n + 1];
    f[0] = roe_flux_conserved(&state.node(0), &state.node(0))?;
    f[n] = roe_flux_conserved(&state.node(n - 1), &state.node(n - 1))?;
    for j in 0..n - 1 {
        let (l, r) = (recon(j, xf[j]), recon(j + 1, xf[j]));
        if !l.is_physical() || !r.is_physical() {
            return Err(KbrError::NonPhysicalState(format!("reconstruction at interface {j}")));
        }
        f[j + 1] = roe_flux_conserved(&conserved(&l), &conserved(&r))?;
    }
    let w = grid.widths();
    let mut out = state.clone();
    for c in 0..3 {
        for i in 0..n {
            out.comps[c][i] -= dt / w[i] * (f[i + 1][c] - f[i][c]);
        }
    }
    out.time += dt;
    Ok(out)
}

/// Scalar conservation law for the TVD checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScalarLaw {
    Advection { speed: f64 },
    Burgers,
}

impl ScalarLaw {
    fn flux(&self, u: f64) -> f64 {
        match self {
            ScalarLaw::Advection { speed } => speed * u,
            ScalarLaw::Burgers => 0.5 * u * u,
        }
    }

    /// Murman-Roe flux.
    fn roe(&self, ul: f64, ur: f64) -> f64 {
        let a = match self {
            ScalarLaw::Advection { speed } => *speed,
            ScalarLaw::Burgers => 0.5 * (ul + ur),
        };
        0.5 * (self.flux(ul) + self.flux(ur)) - 0.5 * a.abs() * (ur - ul)
    }

    fn max_speed(&self, u: &[f64]) -> f64 {
        match self {
            ScalarLaw::Advection { speed } => speed.abs(),
            ScalarLaw::Burgers => u.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// One scalar MUSCL step on a uniform periodic grid (`u` holds one value per
/// cell of width `dx`).
pub fn muscl_scalar_step(u: &[f64], dx: f64, dt: f64, law: ScalarLaw) -> Result<Vec<f64>> {
    let n = u.len();
    if n < 3 {
        return Err(KbrError::InsufficientData { needed: 3, got: n });
    }
    let c = dt * law.max_speed(u) / dx;
    if !(c <= 0.5) {
        return Err(KbrError::Unstable { step: 0, reason: format!("CFL number {c} exceeds 0.5") });
    }
    let at = |i: isize| u[i.rem_euclid(n as isize) as usize];
    let s: Vec<f64> = (0..n as isize).map(|i| minmod(at(i) - at(i - 1), at(i + 1) - at(i))).collect();
    let face = |i: usize| {
        let j = (i + 1) % n;
        law.roe(u[i] + 0.5 * s[i], u[j] - 0.5 * s[j])
    };
    let f: Vec<f64> = (0..n).map(face).collect();
    Ok((0..n).map(|i| u[i] - dt / dx * (f[i] - f[(i + n - 1) % n])).collect())
}

pub fn total_variation(u: &[f64]) -> f64 {
    u.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}
