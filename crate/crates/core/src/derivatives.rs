//! Gradient, Laplacian and Hessian extraction from a trained kernel model.
//!
//! Both schemes assume the field is locally `a + b.x + C:xx^T`. The explicit
//! scheme reads the coefficients off the difference between the uncorrected
//! and the moment-corrected predictions; the implicit scheme solves a small
//! linear system built from perturbed kernel centers. All sums run in the
//! query-centered normalized frame and are converted to raw units on return.

use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};
use crate::kernel::{gaussian_weights, KernelModel, Local};
use crate::linalg;
use crate::par;

/// `phi(x) = a + b.x + C:xx^T` with symmetric `C` (row-major `D x D`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl QuadraticFit {
    /// Fit from the value, gradient and Hessian at `x0`.
    pub fn from_local(x0: &[f64], value: f64, grad: &[f64], hessian: &[f64]) -> Self {
        let d = x0.len();
        let c: Vec<f64> = hessian.iter().map(|h| 0.5 * h).collect();
        let cx: Vec<f64> = (0..d).map(|r| (0..d).map(|k| c[r * d + k] * x0[k]).sum()).collect();
        let b: Vec<f64> = (0..d).map(|r| grad[r] - 2.0 * cx[r]).collect();
        let xcx: f64 = (0..d).map(|r| x0[r] * cx[r]).sum();
        let bx: f64 = (0..d).map(|r| b[r] * x0[r]).sum();
        Self { a: value - bx - xcx, b, c }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = self.a;
        for r in 0..d {
            v += self.b[r] * x[r];
            for k in 0..d {
                v += self.c[r * d + k] * x[r] * x[k];
            }
        }
        v
    }

    /// `b + 2 C x`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|r| self.b[r] + 2.0 * (0..d).map(|k| self.c[r * d + k] * x[k]).sum::<f64>())
            .collect()
    }

    pub fn hessian(&self) -> Vec<f64> {
        self.c.iter().map(|c| 2.0 * c).collect()
    }

    pub fn laplacian(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|r| 2.0 * self.c[r * d + r]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Explicit,
    Implicit,
}

/// Derivatives at one query point, raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeEstimate {
    pub grad: Vec<f64>,
    pub lap: f64,
    /// Row-major `D x D`; implicit scheme in two dimensions only.
    pub hessian: Option<Vec<f64>>,
    pub scheme: Scheme,
    /// `cond_1(A)` of the implicit system.
    pub condition: Option<f64>,
    /// `|x_hat - x|` of the explicit scheme, normalized units.
    pub denominator: Option<f64>,
    /// Perturbation finally used by the implicit scheme, normalized units.
    pub epsilon: Option<f64>,
}

/// Which sixth equation closes the two-dimensional implicit system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SixthRow {
    /// Corrected weights at `x~ + eps (e1 + e2)`.
    #[default]
    Diagonal,
    /// Uncorrected weights centered at `x`. Singular whenever the training
    /// points near `x` are mirror-symmetric about both axes through `x`.
    Uncorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplicitConfig {
    /// Perturbation in normalized units; `None` means `0.025 sqrt(theta)`.
    pub epsilon: Option<f64>,
    pub cond_limit: f64,
    /// Doublings of `epsilon` tried after an ill-conditioned solve.
    pub retries: usize,
    pub sixth_row: SixthRow,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        Self { epsilon: None, cond_limit: 1e12, retries: 3, sixth_row: SixthRow::Diagonal }
    }
}

impl ImplicitConfig {
    pub fn epsilon_for(&self, theta: f64) -> Result<f64> {
        let eps = self.epsilon.unwrap_or(0.025 * theta.sqrt());
        if !(eps > 0.0 && eps < theta.sqrt()) {
            return Err(KbrError::InvalidConfig(format!(
                "epsilon {eps} must lie in (0, sqrt(theta) = {})",
                theta.sqrt()
            )));
        }
        Ok(eps)
    }
}

/// Denominator guard `|x_hat - x|`, normalized units.
pub const TOL_DENOM: f64 = 1e-10;

fn require_dim(model: &KernelModel, d: usize) -> Result<()> {
    if model.dim() != d {
        return Err(KbrError::InvalidInput(format!(
            "scheme needs a {d}-dimensional model, got {}",
            model.dim()
        )));
    }
    Ok(())
}

fn converged_local(model: &KernelModel, xn: &[f64]) -> Result<Local> {
    let local = model.solve_local(xn, model.config().max_iter)?;
    if !local.converged {
        return Err(KbrError::NotConverged { iterations: local.iterations, residual: local.residual });
    }
    Ok(local)
}

fn finite(est: DerivativeEstimate) -> Result<DerivativeEstimate> {
    let ok = est.lap.is_finite()
        && est.grad.iter().all(|g| g.is_finite())
        && est.hessian.as_ref().map_or(true, |h| h.iter().all(|v| v.is_finite()));
    if ok {
        Ok(est)
    } else {
        Err(KbrError::SolverFailed("non-finite derivative estimate".into()))
    }
}

/// Uncorrected and corrected quantities shared by the explicit variants.
struct ExplicitParts {
    phi0: f64,
    phi1: f64,
    theta0: f64,
    theta: f64,
    m0: f64,
}

fn explicit_parts(model: &KernelModel, xn: &[f64], local: &Local) -> Result<ExplicitParts> {
    let raw = model.local_at(xn, &[0.0])?;
    let vals = model.normalized_values();
    Ok(ExplicitParts {
        phi0: raw.weighted(vals),
        phi1: local.weighted(vals),
        theta0: raw.second_moment()[0],
        theta: local.second_moment()[0],
        m0: raw.first_moment()[0],
    })
}

/// Curvature `c` and gradient from the two predictions given a reference
/// value `phi_ref` for `phi(x)` (normalized units).
fn explicit_from_parts(model: &KernelModel, p: &ExplicitParts, phi_ref: f64) -> Result<DerivativeEstimate> {
    if p.theta.abs() < model.theta_floor() {
        return Err(KbrError::LaplacianDegenerate(p.theta));
    }
    if p.m0.abs() < TOL_DENOM {
        return Err(KbrError::GradientDegenerate(p.m0));
    }
    let c = (p.phi1 - phi_ref) / p.theta;
    let grad = (p.phi0 - p.phi1 - c * (p.theta0 - p.theta)) / p.m0;
    let norm = model.normalization();
    finite(DerivativeEstimate {
        grad: vec![grad * norm.field / norm.scale],
        lap: 2.0 * c * norm.field / (norm.scale * norm.scale),
        hessian: None,
        scheme: Scheme::Explicit,
        condition: None,
        denominator: Some(p.m0.abs()),
        epsilon: None,
    })
}

/// Explicit scheme at an unseen point. The Laplacian comes from
/// `phi1 - phi(x) = c Theta(x)` with `phi(x)` replaced by the exact
/// second-order prediction, the gradient from
/// `phi0 - phi1 = b (x_hat - x) + c (Theta0 - Theta)`.
pub fn explicit_derivatives_1d(model: &KernelModel, x: f64) -> Result<DerivativeEstimate> {
    require_dim(model, 1)?;
    let xn = model.normalize_query(&[x])?;
    let local = converged_local(model, &xn)?;
    let second = model.second_order_local(&local);
    if second.degenerate {
        return Err(KbrError::DegenerateCorrection);
    }
    let parts = explicit_parts(model, &xn, &local)?;
    explicit_from_parts(model, &parts, second.value)
}

/// Explicit scheme when `phi(x)` is known (grid nodes, clean benchmark
/// fields). `phi_x` is in raw field units.
pub fn explicit_derivatives_known_field(model: &KernelModel, x: f64, phi_x: f64) -> Result<DerivativeEstimate> {
    require_dim(model, 1)?;
    if !phi_x.is_finite() {
        return Err(KbrError::InvalidInput("non-finite field value".into()));
    }
    let xn = model.normalize_query(&[x])?;
    let local = converged_local(model, &xn)?;
    let parts = explicit_parts(model, &xn, &local)?;
    explicit_from_parts(model, &parts, phi_x / model.normalization().field)
}

/// The explicit update with the Laplacian taken as `2 (phi0 - phi1) / Theta`.
/// That relation drops the `b (x_hat - x)` and `c Theta0` terms, so it is not
/// exact even for quadratics; kept to quantify the difference.
#[doc(hidden)]
pub fn explicit_derivatives_1d_uncompensated(model: &KernelModel, x: f64) -> Result<DerivativeEstimate> {
    require_dim(model, 1)?;
    let xn = model.normalize_query(&[x])?;
    let local = converged_local(model, &xn)?;
    let p = explicit_parts(model, &xn, &local)?;
    if p.theta.abs() < model.theta_floor() {
        return Err(KbrError::LaplacianDegenerate(p.theta));
    }
    if p.m0.abs() < TOL_DENOM {
        return Err(KbrError::GradientDegenerate(p.m0));
    }
    let lap = 2.0 * (p.phi0 - p.phi1) / p.theta;
    let grad = (p.phi0 - p.phi1 - 0.5 * lap * (p.theta0 - p.theta)) / p.m0;
    let norm = model.normalization();
    finite(DerivativeEstimate {
        grad: vec![grad * norm.field / norm.scale],
        lap: lap * norm.field / (norm.scale * norm.scale),
        hessian: None,
        scheme: Scheme::Explicit,
        condition: None,
        denominator: Some(p.m0.abs()),
        epsilon: None,
    })
}

/// One row of the implicit system: the monomial moments of a weight set,
/// with coordinates scaled by `sigma = sqrt(theta)`, and its weighted field sum.
fn moment_row(local: &Local, w: &[f64], vals: &[f64], sigma: f64) -> (Vec<f64>, f64) {
    let dim = local.dim;
    let ncol = if dim == 1 { 3 } else { 6 };
    let mut row = vec![0.0; ncol];
    let mut rhs = 0.0;
    for ((p, &i), wi) in local.xi.chunks(dim).zip(&local.idx).zip(w) {
        rhs += vals[i] * wi;
        if dim == 1 {
            let u = p[0] / sigma;
            row[0] += wi;
            row[1] += u * wi;
            row[2] += u * u * wi;
        } else {
            let (u, v) = (p[0] / sigma, p[1] / sigma);
            row[0] += wi;
            row[1] += u * wi;
            row[2] += v * wi;
            row[3] += u * u * wi;
            row[4] += u * v * wi;
            row[5] += v * v * wi;
        }
    }
    (row, rhs)
}

fn implicit_solve(
    model: &KernelModel,
    xn: &[f64],
    local: &Local,
    cfg: &ImplicitConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let dim = model.dim();
    let theta = model.theta();
    let sigma = theta.sqrt();
    let vals = model.normalized_values();
    let mut eps = cfg.epsilon_for(theta)?;
    let n = if dim == 1 { 3 } else { 6 };
    let mut last_cond = f64::INFINITY;
    for attempt in 0..=cfg.retries {
        let mut a = Vec::with_capacity(n * n);
        let mut b = Vec::with_capacity(n);
        let mut push = |w: &[f64], loc: &Local| {
            let (row, rhs) = moment_row(loc, w, vals, sigma);
            a.extend(row);
            b.push(rhs);
        };
        let shifted = |delta: &[f64]| -> Result<Vec<f64>> {
            let s: Vec<f64> = local.shift.iter().zip(delta).map(|(a, d)| a + d).collect();
            gaussian_weights(&local.xi, dim, &s, theta)
        };
        if dim == 1 {
            push(&local.w, local);
            push(&shifted(&[-eps])?, local);
            push(&shifted(&[eps])?, local);
        } else {
            push(&local.w, local);
            push(&shifted(&[eps, 0.0])?, local);
            push(&shifted(&[-eps, 0.0])?, local);
            push(&shifted(&[0.0, eps])?, local);
            push(&shifted(&[0.0, -eps])?, local);
            match cfg.sixth_row {
                SixthRow::Diagonal => push(&shifted(&[eps, eps])?, local),
                SixthRow::Uncorrected => {
                    let raw = model.local_at(xn, &[0.0, 0.0])?;
                    let (row, rhs) = moment_row(&raw, &raw.w, vals, sigma);
                    a.extend(row);
                    b.push(rhs);
                }
            }
        }
        let cond = linalg::cond1(&a, n);
        last_cond = cond;
        if cond <= cfg.cond_limit {
            let x = linalg::solve(&a, &b, n)?;
            return Ok((x, cond, eps));
        }
        log::debug!("implicit system cond {cond:e} at attempt {attempt}, eps {eps:e}");
        eps *= 2.0;
        if eps >= sigma {
            break;
        }
    }
    Err(KbrError::IllConditioned(last_cond))
}

/// Implicit scheme in one dimension: rows from the weight sets at `x~`,
/// `x~ - eps`, `x~ + eps`.
pub fn implicit_derivatives_1d(model: &KernelModel, x: f64, cfg: &ImplicitConfig) -> Result<DerivativeEstimate> {
    require_dim(model, 1)?;
    let xn = model.normalize_query(&[x])?;
    let local = converged_local(model, &xn)?;
    let (coef, cond, eps) = implicit_solve(model, &xn, &local, cfg)?;
    let sigma = model.theta().sqrt();
    let norm = model.normalization();
    let gscale = norm.field / norm.scale;
    let lscale = norm.field / (norm.scale * norm.scale);
    finite(DerivativeEstimate {
        grad: vec![coef[1] / sigma * gscale],
        lap: 2.0 * coef[2] / (sigma * sigma) * lscale,
        hessian: None,
        scheme: Scheme::Implicit,
        condition: Some(cond),
        denominator: None,
        epsilon: Some(eps),
    })
}

/// Implicit scheme in two dimensions for `(a, b1, b2, c11, c12, c22)`.
pub fn implicit_derivatives_2d(model: &KernelModel, x: [f64; 2], cfg: &ImplicitConfig) -> Result<DerivativeEstimate> {
    require_dim(model, 2)?;
    let xn = model.normalize_query(&x)?;
    let local = converged_local(model, &xn)?;
    let (coef, cond, eps) = implicit_solve(model, &xn, &local, cfg)?;
    let s2 = model.theta();
    let sigma = s2.sqrt();
    let norm = model.normalization();
    let gscale = norm.field / norm.scale;
    let lscale = norm.field / (norm.scale * norm.scale);
    // coef[4] multiplies u v, i.e. 2 c12 in the symmetric form.
    let h11 = 2.0 * coef[3] / s2 * lscale;
    let h12 = coef[4] / s2 * lscale;
    let h22 = 2.0 * coef[5] / s2 * lscale;
    finite(DerivativeEstimate {
        grad: vec![coef[1] / sigma * gscale, coef[2] / sigma * gscale],
        lap: h11 + h22,
        hessian: Some(vec![h11, h12, h12, h22]),
        scheme: Scheme::Implicit,
        condition: Some(cond),
        denominator: None,
        epsilon: Some(eps),
    })
}

/// Derivatives at many points; parallel over queries.
pub fn derivatives_batch(
    model: &KernelModel,
    xs: &[f64],
    scheme: Scheme,
    cfg: &ImplicitConfig,
) -> Vec<Result<DerivativeEstimate>> {
    match (scheme, model.dim()) {
        (Scheme::Explicit, _) => par::map(xs.len(), |i| explicit_derivatives_1d(model, xs[i])),
        (Scheme::Implicit, 1) => par::map(xs.len(), |i| implicit_derivatives_1d(model, xs[i], cfg)),
        (Scheme::Implicit, _) => {
            par::map(xs.len() / 2, |i| implicit_derivatives_2d(model, [xs[2 * i], xs[2 * i + 1]], cfg))
        }
    }
}
