//! Kinetic-based regularization: normalized Gaussian weights, first-moment
//! enforcement through a shifted kernel center, and the zeroth, first and
//! exact second-order predictions.
//!
//! All internal arithmetic runs in normalized coordinates (domain mapped
//! affinely into `[0, 1]^D` with a single isotropic scale, field divided by
//! `max |phi|`) and in a frame centered on the query point. Public methods
//! take raw coordinates and return raw-scale values.
//!
//! The exact second-order correction needs a curvature estimate per training
//! point. It is computed once when the model is built: every training point
//! `x_k` gets its own converged Lagrange center, from which
//! `phi1(x_k)`, `Theta(x_k)` and `c_k = (phi(x_k) - phi1(x_k)) / Theta(x_k)`
//! follow. For a quadratic field `c_k` equals minus the quadratic coefficient
//! exactly, so the correction `Theta(x) * sum_k c_k P_k` cancels the
//! second-moment error of the first-order prediction at any unseen point.
//! Training points whose own moment constraint cannot be met (the hull
//! extremes) or whose `Theta(x_k)` is negligible are left out of the sum and
//! the remaining weights renormalized.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{KbrError, Result};
use crate::neighbors::NeighborIndex;
use crate::par;

/// Tunables for weight evaluation and the moment solve. Distances and
/// tolerances are in normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// First-moment defect accepted as converged.
    pub tol_moment: f64,
    /// Iteration cap `K` of the Lagrange solve.
    pub max_iter: usize,
    /// Absolute floor on `Theta(x_k)` for a training point to enter the
    /// second-order correction.
    pub tol_theta: f64,
    /// Floor on `Theta(x_k)` relative to `theta`.
    pub tol_theta_rel: f64,
    /// Kernel window: points with `d^2 > d_min^2 + cutoff * theta` carry
    /// weight below `exp(-cutoff)` relative to the nearest and are skipped.
    pub cutoff: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            tol_moment: 1e-12,
            max_iter: 100,
            tol_theta: 1e-12,
            tol_theta_rel: 1e-4,
            cutoff: 40.0,
        }
    }
}

/// Scattered samples `{x_i, phi(x_i)}` in `D` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    points: Vec<f64>,
    values: Vec<f64>,
}

impl TrainingSet {
    /// `points` is row-major `n x dim`.
    pub fn new(points: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(KbrError::InvalidInput("dimension must be at least 1".into()));
        }
        if points.len() % dim != 0 || points.len() / dim != values.len() {
            return Err(KbrError::InvalidInput(format!(
                "{} coordinates do not match {} values in dimension {dim}",
                points.len(),
                values.len()
            )));
        }
        if values.is_empty() {
            return Err(KbrError::InsufficientData { needed: 1, got: 0 });
        }
        if points.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(KbrError::InvalidInput("non-finite training data".into()));
        }
        let mut seen = HashSet::with_capacity(values.len());
        for p in points.chunks(dim) {
            let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(KbrError::InvalidInput(format!("duplicate training point {p:?}")));
            }
        }
        Ok(Self { dim, points, values })
    }

    pub fn from_1d(xs: &[f64], values: &[f64]) -> Result<Self> {
        Self::new(xs.to_vec(), 1, values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Subset in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut points = Vec::with_capacity(idx.len() * self.dim);
        let mut values = Vec::with_capacity(idx.len());
        for &i in idx {
            points.extend_from_slice(self.point(i));
            values.push(self.values[i]);
        }
        Self { dim: self.dim, points, values }
    }

    /// Same points, new field values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.points.clone(), self.dim, values)
    }
}

/// Affine maps between raw and normalized coordinates / field values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub origin: Vec<f64>,
    /// Isotropic length scale: `x_norm = (x - origin) / scale`.
    pub scale: f64,
    /// `max |phi|` over the training values.
    pub field: f64,
}

impl Normalization {
    pub fn fit(set: &TrainingSet) -> Result<Self> {
        let dim = set.dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in set.points.chunks(dim) {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let field = set.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if field == 0.0 {
            return Err(KbrError::InvalidInput("all-zero field cannot be normalized".into()));
        }
        Ok(Self { origin: lo, scale: if extent > 0.0 { extent } else { 1.0 }, field })
    }

    pub fn to_normalized(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.origin).map(|(v, o)| (v - o) / self.scale).collect()
    }

    pub fn to_raw(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.origin).map(|(v, o)| v * self.scale + o).collect()
    }
}

/// Normalized kernel weights, one per training point.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w: Vec<f64>,
    /// Kernel center in raw coordinates.
    pub center: Vec<f64>,
}

/// Converged (or best-effort) shifted kernel center for one query point.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangeResult {
    /// Shifted center in raw coordinates.
    pub x_tilde: Vec<f64>,
    pub weights: Weights,
    pub iterations: usize,
    /// First-moment defect `|sum x_i w_i - x|` in normalized coordinates.
    pub residual: f64,
    pub converged: bool,
    /// Query lies outside the training bounding box by more than `sqrt(theta)`.
    pub extrapolated: bool,
}

/// Second-moment errors in raw squared-length units, one entry per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentError {
    /// `Theta(x) = sum x_i^2 P_i - x^2` with the shifted weights.
    pub theta_corrected: Vec<f64>,
    /// `Theta0(x)`, same with weights centered at `x`.
    pub theta_raw: Vec<f64>,
    /// `Theta(x_k)` for every training point, each from its own shifted
    /// weights.
    pub theta_train: Vec<Vec<f64>>,
}

/// Breakdown of one exact second-order prediction (raw field units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrder {
    pub value: f64,
    pub first_order: f64,
    /// `Theta(x)` (trace over axes), normalized units.
    pub theta: f64,
    /// No training point survived the division guard; `value` is the
    /// first-order prediction.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
struct Stencil {
    idx: Vec<usize>,
    w: Vec<f64>,
    theta: f64,
    converged: bool,
}

/// Second-order predictions at fixed query points as a function of the
/// training values, for a fixed geometry and `theta`.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    n: usize,
    queries: Vec<Stencil>,
    /// `None` for training points excluded from the correction.
    points: Vec<Option<Stencil>>,
}

impl LinearPredictor {
    pub fn n_queries(&self) -> usize {
        self.queries.len()
    }

    /// Predictions for the training values `values` (any units). Entries are
    /// `None` where the query's moment solve did not converge; a degenerate
    /// correction yields the first-order value.
    pub fn apply(&self, values: &[f64]) -> Result<Vec<Option<f64>>> {
        if values.len() != self.n {
            return Err(KbrError::InvalidInput(format!("expected {} values, got {}", self.n, values.len())));
        }
        let curv: Vec<Option<f64>> = self
            .points
            .iter()
            .enumerate()
            .map(|(k, st)| {
                st.as_ref().map(|st| {
                    let r: f64 = st.idx.iter().zip(&st.w).map(|(&i, w)| w * (values[k] - values[i])).sum();
                    r / st.theta
                })
            })
            .collect();
        Ok(par::map(self.queries.len(), |q| {
            let st = &self.queries[q];
            if !st.converged {
                return None;
            }
            let mut p1 = 0.0;
            let mut wsum = 0.0;
            let mut csum = 0.0;
            for (&i, w) in st.idx.iter().zip(&st.w) {
                p1 += values[i] * w;
                if let Some(c) = curv[i] {
                    wsum += w;
                    csum += c * w;
                }
            }
            Some(if wsum > 0.0 { p1 + st.theta * (csum / wsum) } else { p1 })
        }))
    }
}

/// Per-training-point state computed at build time.
#[derive(Debug, Clone, PartialEq)]
struct PointState {
    p1: f64,
    theta: Vec<f64>,
    curvature: Option<f64>,
}

/// Kernel weights and moments around one query point, in the query-centered
/// normalized frame.
#[derive(Debug, Clone)]
pub(crate) struct Local {
    pub dim: usize,
    pub idx: Vec<usize>,
    /// `x_i - x`, row-major.
    pub xi: Vec<f64>,
    pub shift: Vec<f64>,
    pub w: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl Local {
    pub fn first_moment(&self) -> Vec<f64> {
        moment1(&self.xi, &self.w, self.dim)
    }

    /// Per-axis `sum xi_a^2 w`.
    pub fn second_moment(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.xi.chunks(self.dim).zip(&self.w) {
            for a in 0..self.dim {
                m[a] += p[a] * p[a] * w;
            }
        }
        m
    }

    pub fn weighted(&self, values: &[f64]) -> f64 {
        self.idx.iter().zip(&self.w).map(|(&i, w)| values[i] * w).sum()
    }
}

fn moment1(xi: &[f64], w: &[f64], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for (p, w) in xi.chunks(dim).zip(w) {
        for a in 0..dim {
            m[a] += p[a] * w;
        }
    }
    m
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Normalized Gaussian weights of the window points `xi` for a kernel
/// centered at `shift` (both in the query frame). Exponents are shifted by
/// their minimum so the largest weight is exactly `exp(0)` before
/// normalization.
pub(crate) fn gaussian_weights(xi: &[f64], dim: usize, shift: &[f64], theta: f64) -> Result<Vec<f64>> {
    let d: Vec<f64> = xi
        .chunks(dim)
        .map(|p| p.iter().zip(shift).map(|(a, s)| (a - s) * (a - s)).sum::<f64>() / theta)
        .collect();
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    if !dmin.is_finite() {
        return Err(KbrError::NumericalUnderflow);
    }
    let mut w: Vec<f64> = d.iter().map(|v| (dmin - v).exp()).collect();
    let s: f64 = w.iter().sum();
    if !(s > 0.0 && s.is_finite()) {
        return Err(KbrError::NumericalUnderflow);
    }
    w.iter_mut().for_each(|v| *v /= s);
    Ok(w)
}

/// Trained KBR state.
#[derive(Debug, Clone)]
pub struct KernelModel {
    training: TrainingSet,
    theta: f64,
    norm: Normalization,
    config: KernelConfig,
    pts: Vec<f64>,
    vals: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    index: NeighborIndex,
    state: Vec<PointState>,
}

impl KernelModel {
    /// Builds the model with `theta` given in normalized squared-length units.
    pub fn new(training: TrainingSet, theta: f64) -> Result<Self> {
        Self::with_config(training, theta, KernelConfig::default())
    }

    pub fn with_config(training: TrainingSet, theta: f64, config: KernelConfig) -> Result<Self> {
        let norm = Normalization::fit(&training)?;
        Self::with_normalization(training, theta, norm, config)
    }

    /// Builds with an externally fixed normalization (used when a subset of a
    /// data set must share the frame of the full set).
    pub fn with_normalization(
        training: TrainingSet,
        theta: f64,
        norm: Normalization,
        config: KernelConfig,
    ) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(KbrError::InvalidConfig(format!("theta must be positive, got {theta}")));
        }
        if !(norm.field > 0.0) {
            return Err(KbrError::InvalidInput("field normalization must be positive".into()));
        }
        let dim = training.dim;
        let pts: Vec<f64> = training
            .points
            .chunks(dim)
            .flat_map(|p| norm.to_normalized(p))
            .collect();
        let vals: Vec<f64> = training.values.iter().map(|v| v / norm.field).collect();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in pts.chunks(dim) {
            for a in 0..dim {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let index = NeighborIndex::build(&pts, dim, (config.cutoff * theta).sqrt());
        let mut model = Self {
            training,
            theta,
            norm,
            config,
            pts,
            vals,
            lo,
            hi,
            index,
            state: Vec::new(),
        };
        model.state = par::map(model.training.len(), |k| model.train_point(k));
        Ok(model)
    }

    fn train_point(&self, k: usize) -> PointState {
        let dim = self.dim();
        let xk = &self.pts[k * dim..(k + 1) * dim];
        let Ok(local) = self.solve_local(xk, self.config.max_iter) else {
            return PointState { p1: self.vals[k], theta: vec![0.0; dim], curvature: None };
        };
        let p1 = local.weighted(&self.vals);
        let theta = local.second_moment();
        let trace: f64 = theta.iter().sum();
        let defect = norm(&local.first_moment());
        let usable = local.converged && trace >= self.theta_floor() && defect <= 1e-12 * trace.sqrt();
        // sum_j w_j (phi_k - phi_j) equals phi_k - p1 but avoids cancellation
        // when the weight concentrates on k itself.
        let resid: f64 = local.idx.iter().zip(&local.w).map(|(&j, w)| w * (self.vals[k] - self.vals[j])).sum();
        let curvature = usable.then(|| resid / trace);
        PointState { p1, theta, curvature }
    }

    pub fn dim(&self) -> usize {
        self.training.dim
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    /// Number of training points whose curvature estimate enters the
    /// second-order correction.
    pub fn active_curvatures(&self) -> usize {
        self.state.iter().filter(|s| s.curvature.is_some()).count()
    }

    /// Smallest `Theta` accepted as a divisor, normalized units.
    pub(crate) fn theta_floor(&self) -> f64 {
        self.config.tol_theta.max(self.config.tol_theta_rel * self.theta)
    }

    pub(crate) fn normalized_values(&self) -> &[f64] {
        &self.vals
    }

    pub(crate) fn normalize_query(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(KbrError::InvalidInput(format!(
                "query has {} coordinates, model dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KbrError::InvalidInput("non-finite query point".into()));
        }
        Ok(self.norm.to_normalized(x))
    }

    fn extrapolated(&self, xn: &[f64]) -> bool {
        let s = self.theta.sqrt();
        xn.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .any(|(v, (l, h))| *v < l - s || *v > h + s)
    }

    /// Window points for a kernel centered at `xn + shift`, expressed in the
    /// frame centered on `xn`.
    fn gather(&self, xn: &[f64], shift: &[f64], widen: f64, buf: &mut Vec<usize>) -> (Vec<usize>, Vec<f64>, f64) {
        let dim = self.dim();
        let center: Vec<f64> = xn.iter().zip(shift).map(|(a, b)| a + b).collect();
        let d2 = self.index.nearest_dist2(&self.pts, &center);
        let r2 = d2 + widen * self.config.cutoff * self.theta;
        self.index.within(&self.pts, &center, r2, buf);
        let idx = buf.clone();
        let mut xi = Vec::with_capacity(idx.len() * dim);
        for &i in &idx {
            for a in 0..dim {
                xi.push(self.pts[i * dim + a] - xn[a]);
            }
        }
        (idx, xi, r2.sqrt())
    }

    /// Weights centered exactly at the normalized query (no shift).
    pub(crate) fn local_at(&self, xn: &[f64], shift: &[f64]) -> Result<Local> {
        let dim = self.dim();
        let mut buf = Vec::new();
        let (idx, xi, _) = self.gather(xn, shift, 1.0, &mut buf);
        let w = gaussian_weights(&xi, dim, shift, self.theta)?;
        let residual = norm(&moment1(&xi, &w, dim));
        Ok(Local {
            dim,
            idx,
            xi,
            shift: shift.to_vec(),
            w,
            residual,
            iterations: 0,
            converged: residual <= self.config.tol_moment,
        })
    }

    /// Shifted-center solve around the normalized query `xn`. Always returns
    /// the best iterate; `converged` tells whether the moment constraint holds.
    pub(crate) fn solve_local(&self, xn: &[f64], max_iter: usize) -> Result<Local> {
        // A query inside a gap much wider than sqrt(theta) can see points on
        // one side only; widen the window until the constraint is reachable.
        let mut widen = 1.0;
        loop {
            let local = self.solve_window(xn, max_iter, widen)?;
            if local.converged || local.idx.len() == self.training.len() || widen > 1e6 {
                return Ok(local);
            }
            widen *= 4.0;
        }
    }

    fn solve_window(&self, xn: &[f64], max_iter: usize, widen: f64) -> Result<Local> {
        let dim = self.dim();
        let mut shift = vec![0.0; dim];
        let mut buf = Vec::new();
        let mut total_iters = 0;
        let mut best: Option<Local> = None;
        // The window is re-gathered if the center drifts far enough that the
        // cutoff ball around it is no longer covered.
        for _ in 0..4 {
            let (idx, xi, radius) = self.gather(xn, &shift, widen, &mut buf);
            let gathered_at = shift.clone();
            let (s, w, res, iters) = if dim == 1 {
                self.newton_1d(&xi, shift[0], max_iter)?
            } else {
                self.newton_nd(&xi, &shift, max_iter)?
            };
            total_iters += iters;
            let local = Local {
                dim,
                idx,
                xi,
                shift: s.clone(),
                w,
                residual: res,
                iterations: total_iters,
                converged: res <= self.config.tol_moment,
            };
            let drift = norm(&s.iter().zip(&gathered_at).map(|(a, b)| a - b).collect::<Vec<_>>());
            let center: Vec<f64> = xn.iter().zip(&s).map(|(a, b)| a + b).collect();
            let need = (self.index.nearest_dist2(&self.pts, &center) + widen * self.config.cutoff * self.theta).sqrt();
            let covered = drift + need <= radius * (1.0 + 1e-12);
            shift = s;
            let better = best.as_ref().map_or(true, |b| local.residual <= b.residual);
            if better {
                best = Some(local);
            }
            if covered {
                break;
            }
        }
        Ok(best.expect("at least one solve pass"))
    }

    /// Safeguarded Newton on `g(s) = sum xi_i P_i(s)`, which is increasing
    /// with `g'(s) = (2/theta) Var_P(xi) >= 0`.
    fn newton_1d(&self, xi: &[f64], s0: f64, max_iter: usize) -> Result<(Vec<f64>, Vec<f64>, f64, usize)> {
        let theta = self.theta;
        let eval = |s: f64| -> Result<(f64, f64, Vec<f64>)> {
            let w = gaussian_weights(xi, 1, &[s], theta)?;
            let m1: f64 = xi.iter().zip(&w).map(|(a, b)| a * b).sum();
            let var: f64 = xi.iter().zip(&w).map(|(a, b)| (a - m1) * (a - m1) * b).sum();
            Ok((m1, var, w))
        };
        let (g0, var0, w0) = eval(s0)?;
        let mut best = (s0, w0.clone(), g0.abs());
        if g0 == 0.0 {
            return Ok((vec![s0], w0, 0.0, 0));
        }
        // Bracket of width 4 sqrt(theta) around the start, widened until the
        // sign change is enclosed.
        let h = 2.0 * theta.sqrt();
        let (mut lo, mut hi) = (s0 - h, s0 + h);
        let mut step = h;
        let mut expansions = 0;
        while eval(lo)?.0 > 0.0 {
            step *= 2.0;
            lo = s0 - step;
            expansions += 1;
            if expansions > 60 {
                return Ok((vec![best.0], best.1, best.2, expansions));
            }
        }
        step = h;
        while eval(hi)?.0 < 0.0 {
            step *= 2.0;
            hi = s0 + step;
            expansions += 1;
            if expansions > 120 {
                return Ok((vec![best.0], best.1, best.2, expansions));
            }
        }
        let (mut s, mut g, mut var) = (s0, g0, var0);
        let mut prev = f64::INFINITY;
        let mut iters = 0;
        while iters < max_iter {
            if g < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let newton = if var > 0.0 { s - g * theta / (2.0 * var) } else { f64::NAN };
            s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            iters += 1;
            let (m1, v, w) = eval(s)?;
            g = m1;
            var = v;
            if g.abs() < best.2 {
                best = (s, w, g.abs());
            }
            let stalled = g.abs() >= 0.5 * prev && best.2 <= self.config.tol_moment;
            if g == 0.0 || stalled || hi - lo <= 4.0 * f64::EPSILON * (1.0 + s.abs()) {
                break;
            }
            prev = g.abs();
        }
        Ok((vec![best.0], best.1, best.2, iters))
    }

    /// Damped Newton with Jacobian `(2/theta) Cov_P(xi)`.
    fn newton_nd(&self, xi: &[f64], s0: &[f64], max_iter: usize) -> Result<(Vec<f64>, Vec<f64>, f64, usize)> {
        let dim = self.dim();
        let theta = self.theta;
        let eval = |s: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
            let w = gaussian_weights(xi, dim, s, theta)?;
            Ok((moment1(xi, &w, dim), w))
        };
        let mut s = s0.to_vec();
        let (mut g, mut w) = eval(&s)?;
        let mut gn = norm(&g);
        let mut prev = f64::INFINITY;
        let mut iters = 0;
        while iters < max_iter && gn > 0.0 {
            let mut cov = vec![0.0; dim * dim];
            for (p, wi) in xi.chunks(dim).zip(&w) {
                for a in 0..dim {
                    for b in 0..dim {
                        cov[a * dim + b] += (p[a] - g[a]) * (p[b] - g[b]) * wi;
                    }
                }
            }
            cov.iter_mut().for_each(|c| *c *= 2.0 / theta);
            let delta = crate::linalg::solve_psd(&cov, &g, dim);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = s.iter().zip(&delta).map(|(a, d)| a - t * d).collect();
                let (gt, wt) = eval(&trial)?;
                let nt = norm(&gt);
                if nt < gn {
                    s = trial;
                    g = gt;
                    w = wt;
                    prev = gn;
                    gn = nt;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            iters += 1;
            if !accepted || (gn >= 0.5 * prev && gn <= self.config.tol_moment) {
                break;
            }
        }
        Ok((s, w, gn, iters))
    }

    fn dense_weights(&self, local: &Local) -> Vec<f64> {
        let mut w = vec![0.0; self.training.len()];
        for (&i, v) in local.idx.iter().zip(&local.w) {
            w[i] = *v;
        }
        w
    }

    /// `P_i = exp(-|x_i - c|^2 / theta) / sum_j exp(-|x_j - c|^2 / theta)`.
    pub fn kernel_weights(&self, center: &[f64]) -> Result<Weights> {
        let cn = self.normalize_query(center)?;
        let local = self.local_at(&cn, &vec![0.0; self.dim()])?;
        Ok(Weights { w: self.dense_weights(&local), center: center.to_vec() })
    }

    /// Shifted kernel center `x~` such that `sum x_i P(|x_i - x~|) = x`.
    pub fn solve_lagrange_multiplier(&self, x: &[f64], max_iter: usize) -> Result<LagrangeResult> {
        if max_iter == 0 {
            return Err(KbrError::InvalidConfig("max_iter must be at least 1".into()));
        }
        let xn = self.normalize_query(x)?;
        let local = self.solve_local(&xn, max_iter)?;
        if !local.converged {
            return Err(KbrError::NotConverged { iterations: local.iterations, residual: local.residual });
        }
        Ok(self.lagrange_result(&xn, &local))
    }

    fn lagrange_result(&self, xn: &[f64], local: &Local) -> LagrangeResult {
        let xt_n: Vec<f64> = xn.iter().zip(&local.shift).map(|(a, b)| a + b).collect();
        let x_tilde = self.norm.to_raw(&xt_n);
        LagrangeResult {
            weights: Weights { w: self.dense_weights(local), center: x_tilde.clone() },
            x_tilde,
            iterations: local.iterations,
            residual: local.residual,
            converged: local.converged,
            extrapolated: self.extrapolated(xn),
        }
    }

    /// `phi0(x) = sum phi_i P(|x_i - x|)`.
    pub fn predict_order0(&self, x: &[f64]) -> Result<f64> {
        let xn = self.normalize_query(x)?;
        let local = self.local_at(&xn, &vec![0.0; self.dim()])?;
        Ok(local.weighted(&self.vals) * self.norm.field)
    }

    /// `phi1(x) = sum phi_i P(|x_i - x~|)`.
    pub fn predict_order1(&self, x: &[f64], lag: &LagrangeResult) -> Result<f64> {
        if !lag.converged {
            return Err(KbrError::NotConverged { iterations: lag.iterations, residual: lag.residual });
        }
        let _ = self.normalize_query(x)?;
        Ok(lag.weights.w.iter().zip(&self.training.values).map(|(w, v)| w * v).sum())
    }

    pub fn moment_errors(&self, x: &[f64], lag: &LagrangeResult) -> Result<MomentError> {
        if !lag.converged {
            return Err(KbrError::NotConverged { iterations: lag.iterations, residual: lag.residual });
        }
        let dim = self.dim();
        let xn = self.normalize_query(x)?;
        let s2 = self.norm.scale * self.norm.scale;
        let axis_theta = |w: &[f64]| -> Vec<f64> {
            let mut t = vec![0.0; dim];
            for (i, wi) in w.iter().enumerate() {
                if *wi == 0.0 {
                    continue;
                }
                for a in 0..dim {
                    let d = self.pts[i * dim + a] - xn[a];
                    t[a] += d * d * wi;
                }
            }
            t.iter().map(|v| v * s2).collect()
        };
        let theta_corrected = axis_theta(&lag.weights.w);
        let raw = self.local_at(&xn, &vec![0.0; dim])?;
        let theta_raw = axis_theta(&self.dense_weights(&raw));
        let theta_train = self
            .state
            .iter()
            .map(|s| s.theta.iter().map(|v| v * s2).collect())
            .collect();
        Ok(MomentError { theta_corrected, theta_raw, theta_train })
    }

    /// Exact second-order prediction; errors if the query's moment solve
    /// fails or every training point is excluded by the division guard.
    pub fn predict_order2_exact(&self, x: &[f64]) -> Result<f64> {
        let r = self.predict_order2_detailed(x)?;
        if r.degenerate {
            return Err(KbrError::DegenerateCorrection);
        }
        Ok(r.value)
    }

    /// Second-order prediction with fallback to first order when the
    /// correction is degenerate.
    pub fn predict_order2_detailed(&self, x: &[f64]) -> Result<SecondOrder> {
        let xn = self.normalize_query(x)?;
        let local = self.solve_local(&xn, self.config.max_iter)?;
        if !local.converged {
            return Err(KbrError::NotConverged { iterations: local.iterations, residual: local.residual });
        }
        let r = self.second_order_local(&local);
        Ok(SecondOrder {
            value: r.value * self.norm.field,
            first_order: r.first_order * self.norm.field,
            ..r
        })
    }

    /// Second-order correction from an already solved local window
    /// (normalized units).
    pub(crate) fn second_order_local(&self, local: &Local) -> SecondOrder {
        let p1 = local.weighted(&self.vals);
        let theta: f64 = local.second_moment().iter().sum();
        let mut wsum = 0.0;
        let mut csum = 0.0;
        for (&i, w) in local.idx.iter().zip(&local.w) {
            if let Some(c) = self.state[i].curvature {
                wsum += w;
                csum += c * w;
            }
        }
        if wsum > 0.0 {
            SecondOrder { value: p1 + theta * (csum / wsum), first_order: p1, theta, degenerate: false }
        } else {
            SecondOrder { value: p1, first_order: p1, theta, degenerate: true }
        }
    }

    /// The second-order prediction at fixed `queries` is linear in the
    /// training values; this precomputes everything that depends only on
    /// geometry and `theta` (all Lagrange solves).
    pub fn linear_predictor(&self, queries: &[f64]) -> Result<LinearPredictor> {
        let dim = self.dim();
        if queries.len() % dim != 0 {
            return Err(KbrError::InvalidInput("query coordinates not a multiple of the dimension".into()));
        }
        let stencils = par::try_map(queries.len() / dim, |q| {
            let xn = self.normalize_query(&queries[q * dim..(q + 1) * dim])?;
            let local = self.solve_local(&xn, self.config.max_iter)?;
            Ok(Stencil {
                theta: local.second_moment().iter().sum(),
                converged: local.converged,
                idx: local.idx,
                w: local.w,
            })
        })?;
        let points = par::map(self.training.len(), |k| {
            let dim = self.dim();
            let xk = &self.pts[k * dim..(k + 1) * dim];
            match (self.state[k].curvature, self.solve_local(xk, self.config.max_iter)) {
                (Some(_), Ok(local)) => Some(Stencil {
                    theta: local.second_moment().iter().sum(),
                    converged: true,
                    idx: local.idx,
                    w: local.w,
                }),
                _ => None,
            }
        });
        Ok(LinearPredictor { n: self.training.len(), queries: stencils, points })
    }

    /// Batch of second-order predictions (parallel over queries). Queries
    /// whose moment solve fails keep their error.
    pub fn predict_order2_batch(&self, xs: &[f64]) -> Vec<Result<SecondOrder>> {
        let dim = self.dim();
        par::map(xs.len() / dim, |q| self.predict_order2_detailed(&xs[q * dim..(q + 1) * dim]))
    }

    /// Original self-correction, `sum (2 phi_i - phi1(x_i)) P_i`. Kept only as
    /// the comparison baseline for the exact correction.
    #[doc(hidden)]
    pub fn predict_self_correction(&self, x: &[f64]) -> Result<f64> {
        let xn = self.normalize_query(x)?;
        let local = self.solve_local(&xn, self.config.max_iter)?;
        if !local.converged {
            return Err(KbrError::NotConverged { iterations: local.iterations, residual: local.residual });
        }
        let v: f64 = local
            .idx
            .iter()
            .zip(&local.w)
            .map(|(&i, w)| (2.0 * self.vals[i] - self.state[i].p1) * w)
            .sum();
        Ok(v * self.norm.field)
    }

    /// Interpolated training error `sum_k Theta(x_k) P_k` (trace over axes,
    /// raw units). Diagnostic only.
    pub fn interpolated_theta(&self, lag: &LagrangeResult) -> f64 {
        let s2 = self.norm.scale * self.norm.scale;
        lag.weights
            .w
            .iter()
            .zip(&self.state)
            .map(|(w, s)| w * s.theta.iter().sum::<f64>() * s2)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_1d(xs: &[f64], f: impl Fn(f64) -> f64, theta: f64) -> KernelModel {
        let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        KernelModel::new(TrainingSet::from_1d(xs, &vals).unwrap(), theta).unwrap()
    }

    #[test]
    fn single_point_weight_is_one() {
        let m = model_1d(&[0.4], |_| 2.0, 0.1);
        for c in [-3.0, 0.4, 0.9] {
            assert_eq!(m.kernel_weights(&[c]).unwrap().w, vec![1.0]);
        }
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        for theta in [1e-3, 0.1, 10.0] {
            let m = model_1d(&[0.0, 1.0], |x| x + 1.0, theta);
            let w = m.kernel_weights(&[0.5]).unwrap().w;
            assert_eq!(w, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn three_point_weights_match_direct_formula() {
        let m = model_1d(&[0.0, 0.5, 1.0], |x| 1.0 + x, 1.0);
        let w = m.kernel_weights(&[0.0]).unwrap().w;
        let raw = [1.0, (-0.25f64).exp(), (-1.0f64).exp()];
        let s: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / s).abs() < 1e-15);
        }
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tiny_theta_does_not_underflow() {
        let m = model_1d(&[0.0, 0.3, 1.0], |x| x + 1.0, 1e-8);
        let w = m.kernel_weights(&[0.7]).unwrap().w;
        assert_eq!(w[2], 1.0);
    }

    #[test]
    fn duplicate_points_rejected() {
        assert!(TrainingSet::from_1d(&[0.1, 0.2, 0.1], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn all_zero_field_rejected() {
        let t = TrainingSet::from_1d(&[0.0, 1.0, 2.0], &[0.0; 3]).unwrap();
        assert!(KernelModel::new(t, 0.1).is_err());
    }

    #[test]
    fn lagrange_symmetric_pair_keeps_center() {
        let m = model_1d(&[0.0, 1.0], |x| x, 0.2);
        let lag = m.solve_lagrange_multiplier(&[0.5], 100).unwrap();
        assert_eq!(lag.x_tilde, vec![0.5]);
        assert_eq!(lag.residual, 0.0);
    }

    fn bisect_center(xs: &[f64], x: f64, theta: f64) -> f64 {
        let g = |s: f64| {
            let raw: Vec<f64> = xs.iter().map(|xi| (-(xi - s) * (xi - s) / theta).exp()).collect();
            let z: f64 = raw.iter().sum();
            xs.iter().zip(&raw).map(|(a, b)| a * b).sum::<f64>() / z - x
        };
        let (mut lo, mut hi) = (-5.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lagrange_matches_bisection_oracle() {
        let xs = [0.0, 0.3, 1.0];
        let m = model_1d(&xs, |x| x * x + 1.0, 0.05);
        let lag = m.solve_lagrange_multiplier(&[0.4], 100).unwrap();
        let oracle = bisect_center(&xs, 0.4, 0.05);
        assert!((lag.x_tilde[0] - oracle).abs() < 1e-10, "{} vs {oracle}", lag.x_tilde[0]);
        assert!(lag.residual <= 1e-12);
    }

    #[test]
    fn lagrange_outside_hull_fails() {
        let m = model_1d(&[0.0, 0.5, 1.0], |x| x + 1.0, 0.01);
        assert!(matches!(
            m.solve_lagrange_multiplier(&[1.5], 100),
            Err(KbrError::NotConverged { .. })
        ));
    }

    #[test]
    fn order0_constant_and_direct_sum() {
        let m = model_1d(&[0.0, 0.2, 0.7, 1.0], |_| 3.5, 0.05);
        assert!((m.predict_order0(&[0.33]).unwrap() - 3.5).abs() < 1e-14);

        let xs: Vec<f64> = (0..5).map(|i| i as f64 * 0.25).collect();
        let m = model_1d(&xs, |x| x + 1.0, 0.01);
        let raw: Vec<f64> = xs.iter().map(|xi| (-(xi - 0.5f64).powi(2) / 0.01).exp()).collect();
        let z: f64 = raw.iter().sum();
        let direct: f64 = xs.iter().zip(&raw).map(|(x, w)| (x + 1.0) * w / z).sum();
        assert!((m.predict_order0(&[0.5]).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn order1_exact_for_affine() {
        let xs = [0.0, 0.11, 0.3, 0.42, 0.77, 0.9, 1.0];
        let m = model_1d(&xs, |x| 3.0 * x + 2.0, 0.02);
        for x in [0.2, 0.5, 0.85] {
            let lag = m.solve_lagrange_multiplier(&[x], 100).unwrap();
            let p = m.predict_order1(&[x], &lag).unwrap();
            assert!((p - (3.0 * x + 2.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn order1_equals_field_plus_theta_for_square() {
        let xs = [0.0, 0.25, 0.5, 0.75, 1.0];
        let m = model_1d(&xs, |x| x * x, 0.02);
        let lag = m.solve_lagrange_multiplier(&[0.6], 100).unwrap();
        let me = m.moment_errors(&[0.6], &lag).unwrap();
        let p1 = m.predict_order1(&[0.6], &lag).unwrap();
        assert!((p1 - (0.36 + me.theta_corrected[0])).abs() < 1e-12);
    }

    #[test]
    fn moment_errors_symmetric_triplet() {
        // Extent 2h = 1 so normalized and raw units coincide.
        let h = 0.5;
        let theta = 0.05;
        let m = model_1d(&[-h, 0.0, h], |x| 1.0 + x, theta);
        let lag = m.solve_lagrange_multiplier(&[0.0], 100).unwrap();
        let me = m.moment_errors(&[0.0], &lag).unwrap();
        let e = (-h * h / theta).exp();
        let w = e / (1.0 + 2.0 * e);
        assert!((me.theta_corrected[0] - 2.0 * w * h * h).abs() < 1e-15);
        assert!((me.theta_raw[0] - 2.0 * w * h * h).abs() < 1e-15);
    }

    #[test]
    fn moment_errors_single_point_vanish() {
        let m = model_1d(&[0.3], |_| 1.0, 0.1);
        let lag = m.solve_lagrange_multiplier(&[0.3], 100).unwrap();
        let me = m.moment_errors(&[0.3], &lag).unwrap();
        assert_eq!(me.theta_corrected, vec![0.0]);
        assert_eq!(me.theta_raw, vec![0.0]);
        assert_eq!(me.theta_train, vec![vec![0.0]]);
    }

    #[test]
    fn moment_errors_ignore_field_values() {
        let xs = [0.0, 0.2, 0.45, 0.6, 1.0];
        let a = model_1d(&xs, |x| x.sin() + 2.0, 0.03);
        let b = model_1d(&xs, |x| (3.0 * x).exp(), 0.03);
        let la = a.solve_lagrange_multiplier(&[0.5], 100).unwrap();
        let lb = b.solve_lagrange_multiplier(&[0.5], 100).unwrap();
        assert_eq!(a.moment_errors(&[0.5], &la).unwrap(), b.moment_errors(&[0.5], &lb).unwrap());
    }

    #[test]
    fn order2_exact_for_quadratic_on_random_points() {
        let xs = [0.02, 0.13, 0.29, 0.41, 0.58, 0.77, 0.93];
        let m = model_1d(&xs, |x| 2.0 + 3.0 * x - 5.0 * x * x, 0.01);
        for x in [0.2, 0.35, 0.5, 0.66, 0.81] {
            let p = m.predict_order2_exact(&[x]).unwrap();
            assert!((p - (2.0 + 3.0 * x - 5.0 * x * x)).abs() <= 1e-12, "x={x} err={}", p - (2.0 + 3.0 * x - 5.0 * x * x));
        }
    }

    #[test]
    fn order2_constant_field() {
        let m = model_1d(&[0.0, 0.3, 0.5, 0.9, 1.0], |_| -4.0, 0.05);
        assert!((m.predict_order2_exact(&[0.6]).unwrap() + 4.0).abs() < 1e-14);
    }

    #[test]
    fn hull_extremes_excluded_from_correction() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let m = model_1d(&xs, |x| x * x + 1.0, 0.02);
        assert!(m.state[0].curvature.is_none());
        assert!(m.state[10].curvature.is_none());
        assert!(m.state[5].curvature.is_some());
    }

    #[test]
    fn two_dimensional_solve_converges() {
        let mut pts = Vec::new();
        let mut vals = Vec::new();
        for i in 0..11 {
            for j in 0..11 {
                let (x, y) = (i as f64 / 10.0, j as f64 / 10.0);
                pts.extend([x, y]);
                vals.push(1.0 + x + 2.0 * y);
            }
        }
        let m = KernelModel::new(TrainingSet::new(pts, 2, vals).unwrap(), 0.01).unwrap();
        let lag = m.solve_lagrange_multiplier(&[0.43, 0.61], 100).unwrap();
        assert!(lag.residual <= 1e-12);
        let p = m.predict_order1(&[0.43, 0.61], &lag).unwrap();
        assert!((p - (1.0 + 0.43 + 1.22)).abs() < 1e-10);
    }
}
