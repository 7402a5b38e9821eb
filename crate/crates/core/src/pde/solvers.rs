//! Single time steps: MacCormack for inviscid Burgers with Dirichlet ends,
//! first-order Roe for Euler with outflow ends. Each KBR scheme has a
//! classical twin it reduces to when interface fluxes are neighbor means.

use serde::{Deserialize, Serialize};

use super::flux::InterfaceFlux;
use super::{ConservedState, Grid1D};
use crate::baselines::euler::{flux as euler_flux, roe_dissipation, roe_flux_conserved};
use crate::error::{KbrError, Result};

pub fn burgers_flux(u: f64) -> f64 {
    0.5 * u * u
}

/// Which update the KBR MacCormack step performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MacCormackForm {
    /// Predictor over the half cell `x_{i+1/2} - x_i`, corrector over
    /// `x_i - x_{i-1/2}`, exactly as the scheme is usually written down.
    #[default]
    Displayed,
    /// Flux-difference form with the same predictor-corrector fluxes,
    /// `G = F^n_{i+1/2} + F^*_{i+1/2} - (F_i + F^*_{i+1}) / 2`, which telescopes.
    FluxForm,
}

fn check_scalar(state: &ConservedState, grid: &Grid1D, dt: f64) -> Result<()> {
    if state.n_comps() != 1 || state.len() != grid.len() {
        return Err(KbrError::InvalidInput("Burgers step needs a scalar state on the given grid".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KbrError::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

fn finish(mut out: ConservedState, dt: f64) -> Result<ConservedState> {
    out.time += dt;
    out.check(0)?;
    Ok(out)
}

/// Classical MacCormack on a non-uniform grid: forward predictor, backward
/// corrector. End values are held (Dirichlet).
pub fn maccormack_step(state: &ConservedState, grid: &Grid1D, dt: f64) -> Result<ConservedState> {
    check_scalar(state, grid, dt)?;
    let u = &state.comps[0];
    let x = grid.nodes();
    let n = u.len();
    let f: Vec<f64> = u.iter().map(|&v| burgers_flux(v)).collect();
    let mut us = u.clone();
    for i in 0..n - 1 {
        us[i] = u[i] - dt / (x[i + 1] - x[i]) * (f[i + 1] - f[i]);
    }
    let fs: Vec<f64> = us.iter().map(|&v| burgers_flux(v)).collect();
    let mut out = state.clone();
    for i in 1..n - 1 {
        out.comps[0][i] = 0.5 * (u[i] + us[i] - dt / (x[i] - x[i - 1]) * (fs[i] - fs[i - 1]));
    }
    finish(out, dt)
}

/// MacCormack with predicted interface fluxes. `InterfaceFlux::Mean`
/// dispatches to [`maccormack_step`] (the classical scheme is the
/// mean-flux limit of the flux form on any grid).
pub fn maccormack_kbr_step(
    state: &ConservedState,
    grid: &Grid1D,
    dt: f64,
    flux: &InterfaceFlux,
    form: MacCormackForm,
) -> Result<ConservedState> {
    check_scalar(state, grid, dt)?;
    if matches!(flux, InterfaceFlux::Mean) {
        return maccormack_step(state, grid, dt);
    }
    maccormack_interfaces(state, grid, dt, flux, form)
}

/// The predicted-flux update for any interface model, without the
/// classical dispatch.
#[doc(hidden)]
pub fn maccormack_interfaces(
    state: &ConservedState,
    grid: &Grid1D,
    dt: f64,
    flux: &InterfaceFlux,
    form: MacCormackForm,
) -> Result<ConservedState> {
    check_scalar(state, grid, dt)?;
    let u = &state.comps[0];
    let x = grid.nodes();
    let xf = grid.interfaces();
    let n = u.len();
    let f: Vec<f64> = u.iter().map(|&v| burgers_flux(v)).collect();
    let fh = flux.interfaces(&f)?;
    let mut us = u.clone();
    for i in 0..n - 1 {
        us[i] = u[i] - dt / (xf[i] - x[i]) * (fh[i] - f[i]);
    }
    let fs: Vec<f64> = us.iter().map(|&v| burgers_flux(v)).collect();
    let fhs = flux.interfaces(&fs)?;
    let mut out = state.clone();
    match form {
        MacCormackForm::Displayed => {
            for i in 1..n - 1 {
                out.comps[0][i] = 0.5 * (u[i] + us[i] - dt / (x[i] - xf[i - 1]) * (fs[i] - fhs[i - 1]));
            }
        }
        MacCormackForm::FluxForm => {
            let g: Vec<f64> = (0..n - 1).map(|j| fh[j] + fhs[j] - 0.5 * (f[j] + fs[j + 1])).collect();
            let w = grid.widths();
            for i in 1..n - 1 {
                out.comps[0][i] = u[i] - dt / w[i] * (g[i] - g[i - 1]);
            }
        }
    }
    finish(out, dt)
}

fn check_euler(state: &ConservedState, grid: &Grid1D, dt: f64) -> Result<()> {
    if state.n_comps() != 3 || state.len() != grid.len() {
        return Err(KbrError::InvalidInput("Euler step needs a three-component state on the given grid".into()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(KbrError::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

fn euler_update(state: &ConservedState, grid: &Grid1D, dt: f64, f: &[[f64; 3]]) -> Result<ConservedState> {
    let w = grid.widths();
    let mut out = state.clone();
    for c in 0..3 {
        for i in 0..state.len() {
            out.comps[c][i] -= dt / w[i] * (f[i + 1][c] - f[i][c]);
        }
    }
    finish(out, dt)
}

/// Boundary fluxes from ghost copies of the edge states.
fn outflow(state: &ConservedState, f: &mut [[f64; 3]]) -> Result<()> {
    let n = state.len();
    f[0] = roe_flux_conserved(&state.node(0), &state.node(0))?;
    f[n] = roe_flux_conserved(&state.node(n - 1), &state.node(n - 1))?;
    Ok(())
}

/// First-order Roe with outflow boundaries.
pub fn roe_step(state: &ConservedState, grid: &Grid1D, dt: f64) -> Result<ConservedState> {
    check_euler(state, grid, dt)?;
    let n = state.len();
    let mut f = vec![[0.0; 3]; n + 1];
    outflow(state, &mut f)?;
    for j in 0..n - 1 {
        f[j + 1] = roe_flux_conserved(&state.node(j), &state.node(j + 1))?;
    }
    euler_update(state, grid, dt, &f)
}

/// Roe with the central term replaced by the interface model, per conserved
/// component. Dissipation is the usual Roe-averaged upwind term; the two
/// boundary interfaces keep the ghost-state flux.
pub fn roe_kbr_step(state: &ConservedState, grid: &Grid1D, dt: f64, flux: &InterfaceFlux) -> Result<ConservedState> {
    check_euler(state, grid, dt)?;
    let n = state.len();
    let nodal: Vec<[f64; 3]> = (0..n).map(|i| euler_flux(&state.node(i))).collect();
    let mut central = Vec::with_capacity(3);
    for c in 0..3 {
        let fc: Vec<f64> = nodal.iter().map(|q| q[c]).collect();
        central.push(match flux {
            // Same expression as the classical Roe flux, so the twin is exact.
            InterfaceFlux::Mean => (0..n - 1).map(|j| 0.5 * (nodal[j][c] + nodal[j + 1][c])).collect(),
            _ => flux.interfaces(&fc)?,
        });
    }
    let mut f = vec![[0.0; 3]; n + 1];
    outflow(state, &mut f)?;
    for j in 0..n - 1 {
        let d = roe_dissipation(&state.node(j), &state.node(j + 1))?;
        for c in 0..3 {
            f[j + 1][c] = central[c][j] - 0.5 * d[c];
        }
    }
    euler_update(state, grid, dt, &f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::euler::{SOD_LEFT, SOD_RIGHT};
    use crate::pde::FluxPredictor;

    fn riemann(g: &Grid1D) -> ConservedState {
        ConservedState::scalar(g.nodes().iter().map(|&x| if x < 0.5 { 1.0 } else { 0.0 }).collect())
    }

    #[test]
    fn constant_states_unchanged() {
        let g = Grid1D::uniform(31, 0.0, 1.0).unwrap();
        let s = ConservedState::scalar(vec![0.7; 31]);
        let p = FluxPredictor::with_theta(&g, 1.0, 1e-3).unwrap();
        let kbr = InterfaceFlux::Kbr(p.clone());
        for form in [MacCormackForm::Displayed, MacCormackForm::FluxForm] {
            let next = maccormack_kbr_step(&s, &g, 0.01, &kbr, form).unwrap();
            for v in &next.comps[0] {
                assert!((v - 0.7).abs() < 1e-14);
            }
        }
        let e = ConservedState::euler(&vec![SOD_RIGHT; 31]);
        let next = roe_kbr_step(&e, &g, 0.01, &InterfaceFlux::Kbr(p)).unwrap();
        for c in 0..3 {
            for (a, b) in next.comps[c].iter().zip(&e.comps[c]) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mean_flux_twins_bit_match() {
        let g = Grid1D::uniform(51, 0.0, 1.0).unwrap();
        let s = riemann(&g);
        let a = maccormack_step(&s, &g, 0.008).unwrap();
        let b = maccormack_kbr_step(&s, &g, 0.008, &InterfaceFlux::Mean, MacCormackForm::Displayed).unwrap();
        assert_eq!(a, b);
        let c = Grid1D::clustered(51, 3.0).unwrap();
        let e = ConservedState::euler(&c.nodes().iter().map(|&x| if x < 0.5 { SOD_LEFT } else { SOD_RIGHT }).collect::<Vec<_>>());
        assert_eq!(roe_step(&e, &c, 1e-3).unwrap(), roe_kbr_step(&e, &c, 1e-3, &InterfaceFlux::Mean).unwrap());
    }

    #[test]
    fn mean_flux_form_matches_classical_on_uniform_grid() {
        let g = Grid1D::uniform(51, 0.0, 1.0).unwrap();
        let mut s = riemann(&g);
        let mut t = s.clone();
        for _ in 0..20 {
            s = maccormack_step(&s, &g, 0.008).unwrap();
            t = maccormack_interfaces(&t, &g, 0.008, &InterfaceFlux::Mean, MacCormackForm::FluxForm).unwrap();
        }
        for (a, b) in s.comps[0].iter().zip(&t.comps[0]) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn roe_kbr_conserves() {
        let g = Grid1D::clustered(81, 3.0).unwrap();
        let prims: Vec<_> = g.nodes().iter().map(|&x| if x < 0.5 { SOD_LEFT } else { SOD_RIGHT }).collect();
        let s = ConservedState::euler(&prims);
        let rho_u: Vec<f64> = (0..81).map(|i| euler_flux(&s.node(i))[1]).collect();
        let p = FluxPredictor::fit(&g, &rho_u, &Default::default(), &crate::training::log_space(0.01, 100.0, 15)).unwrap();
        let fl = InterfaceFlux::Kbr(p);
        let dt = 1e-3;
        let next = roe_kbr_step(&s, &g, dt, &fl).unwrap();
        let (a, b) = (s.totals(g.widths()), next.totals(g.widths()));
        let (fl0, fln) = (euler_flux(&s.node(0)), euler_flux(&s.node(80)));
        for c in 0..3 {
            assert!((b[c] - a[c] + dt * (fln[c] - fl0[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs_rejected() {
        let g = Grid1D::uniform(11, 0.0, 1.0).unwrap();
        let s = ConservedState::scalar(vec![0.0; 11]);
        assert!(maccormack_step(&s, &g, -1.0).is_err());
        assert!(roe_step(&s, &g, 0.1).is_err());
        let nan = ConservedState::scalar(vec![f64::NAN; 11]);
        assert!(matches!(maccormack_step(&nan, &g, 0.01), Err(KbrError::Unstable { .. })));
    }
}
