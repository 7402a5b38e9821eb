//! Convergence, noise and kernel-width studies on the analytic test fields.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::error::{max_abs, mse};
use super::functions::TestFunction;
use crate::baselines::{fd_derivatives_at, smoothing_spline};
use crate::derivatives::{
    explicit_derivatives_1d, explicit_derivatives_known_field, implicit_derivatives_1d, implicit_derivatives_2d,
    DerivativeEstimate, ImplicitConfig,
};
use crate::error::{KbrError, Result};
use crate::kernel::{KernelConfig, TrainingSet};
use crate::par;
use crate::training::{add_noise, fit_theta, sweep, NoiseConfig, Predictor, SweepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KbrExplicit,
    KbrImplicit,
    /// Three-point finite differences on the nearest training nodes.
    Fd,
    /// Cubic smoothing spline with residual budget `N sigma^2` on the
    /// normalized field.
    Spline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::KbrExplicit, Method::KbrImplicit, Method::Fd, Method::Spline];

    pub fn name(&self) -> &'static str {
        match self {
            Method::KbrExplicit => "kbr-explicit",
            Method::KbrImplicit => "kbr-implicit",
            Method::Fd => "fd",
            Method::Spline => "spline",
        }
    }

    fn is_kbr(&self) -> bool {
        matches!(self, Method::KbrExplicit | Method::KbrImplicit)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = KbrError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| KbrError::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub sweep: SweepConfig,
    pub implicit: ImplicitConfig,
    pub n_test: usize,
    pub test_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self { sweep: SweepConfig::default(), implicit: ImplicitConfig::default(), n_test: 5000, test_seed: 12345 }
    }
}

/// One (N, noise, seed, method) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub s: f64,
    pub seed: u64,
    pub method: Method,
    /// Normalized by the largest exact value over the test set.
    pub rmse_grad: Option<f64>,
    pub rmse_lap: Option<f64>,
    /// Test points that produced an estimate.
    pub used: usize,
    pub k: Option<f64>,
    pub theta: Option<f64>,
}

/// `n` points uniform on the function's domain, flattened.
pub fn sample_points(f: TestFunction, n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let (lo, hi) = f.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n * f.dim()).map(|_| rng.gen_range(lo..hi)).collect()
}

fn hull_filter(train: &[f64], tests: &[f64], dim: usize) -> Vec<f64> {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in train.chunks(dim) {
        for a in 0..dim {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    tests.chunks(dim).filter(|p| (0..dim).all(|a| p[a] >= lo[a] && p[a] <= hi[a])).flatten().copied().collect()
}

/// Derivative estimates at `tests` (raw units): `(grad, laplacian)` per
/// point, `None` where the method failed.
type Estimates = Vec<Option<(Vec<f64>, f64)>>;

fn kbr_estimates(
    f: TestFunction,
    data: &TrainingSet,
    method: Method,
    tests: &[f64],
    cfg: &StudyConfig,
) -> Result<(Estimates, f64, f64)> {
    let fit = fit_theta(data, &cfg.sweep)?;
    let model = &fit.model;
    let d = f.dim();
    let est = par::map(tests.len() / d, |i| {
        let x = &tests[i * d..(i + 1) * d];
        let r: Result<DerivativeEstimate> = match (method, d) {
            (Method::KbrExplicit, 1) => explicit_derivatives_1d(model, x[0]),
            (Method::KbrImplicit, 1) => implicit_derivatives_1d(model, x[0], &cfg.implicit),
            (Method::KbrImplicit, 2) => implicit_derivatives_2d(model, [x[0], x[1]], &cfg.implicit),
            _ => Err(KbrError::InvalidInput(format!("{method} is not available in {d}D"))),
        };
        r.ok().map(|e| (e.grad, e.lap))
    });
    if est.iter().all(Option::is_none) && !tests.is_empty() {
        // A method unavailable in this dimension fails everywhere.
        if let (Method::KbrExplicit, 2) = (method, d) {
            return Err(KbrError::InvalidInput("explicit scheme is one-dimensional".into()));
        }
    }
    Ok((est, fit.k, model.theta()))
}

fn sorted_1d(data: &TrainingSet) -> (Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.points()[a].total_cmp(&data.points()[b]));
    (idx.iter().map(|&i| data.points()[i]).collect(), idx.iter().map(|&i| data.values()[i]).collect())
}

fn classical_estimates(data: &TrainingSet, method: Method, tests: &[f64], sigma: f64) -> Result<Estimates> {
    if data.dim() != 1 {
        return Err(KbrError::InvalidInput(format!("{method} baseline is one-dimensional")));
    }
    let (xs, ys) = sorted_1d(data);
    match method {
        Method::Fd => Ok(tests.iter().map(|&x| fd_derivatives_at(&xs, &ys, x).ok().map(|(g, l)| (vec![g], l))).collect()),
        Method::Spline => {
            let scale = max_abs(&ys);
            let yn: Vec<f64> = ys.iter().map(|y| y / scale).collect();
            let w = xs.len() as f64 * sigma * sigma;
            let s = smoothing_spline(&xs, &yn, w)?;
            Ok(tests
                .iter()
                .map(|&x| {
                    let (_, d1, d2) = s.eval(x);
                    Some((vec![d1 * scale], d2 * scale))
                })
                .collect())
        }
        _ => unreachable!("KBR methods are handled separately"),
    }
}

fn score(f: TestFunction, tests: &[f64], est: &Estimates, grad_max: f64, lap_max: f64) -> (Option<f64>, Option<f64>, usize) {
    let d = f.dim();
    let (mut pg, mut eg, mut pl, mut el) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, e) in est.iter().enumerate() {
        let Some((g, l)) = e else { continue };
        if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let x = &tests[i * d..(i + 1) * d];
        pg.extend_from_slice(g);
        eg.extend(f.gradient(x));
        pl.push(*l);
        el.push(f.laplacian(x));
    }
    let used = pl.len();
    let rg = mse(&pg, &eg).ok().map(|m| m.sqrt() / grad_max);
    let rl = mse(&pl, &el).ok().map(|m| m.sqrt() / lap_max);
    (rg, rl, used)
}

fn exact_maxima(f: TestFunction, tests: &[f64]) -> (f64, f64) {
    let d = f.dim();
    let g = tests.chunks(d).flat_map(|x| f.gradient(x)).fold(0.0, |m: f64, v| m.max(v.abs()));
    let l = tests.chunks(d).map(|x| f.laplacian(x)).fold(0.0, |m: f64, v| m.max(v.abs()));
    (g, l)
}

#[allow(clippy::too_many_arguments)]
fn cell(
    f: TestFunction,
    n: usize,
    s: f64,
    seed: u64,
    methods: &[Method],
    tests: &[f64],
    maxima: (f64, f64),
    cfg: &StudyConfig,
) -> Result<Vec<StudyRow>> {
    let points = sample_points(f, n, seed, n as u64);
    let clean: Vec<f64> = points.chunks(f.dim()).map(|x| f.value(x)).collect();
    let noise = NoiseConfig { s, seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ n as u64 };
    let values = add_noise(&clean, &noise)?;
    let data = TrainingSet::new(points.clone(), f.dim(), values)?;
    let tests = hull_filter(&points, tests, f.dim());
    let sweep_cfg = StudyConfig { sweep: SweepConfig { seed, ..cfg.sweep }, ..*cfg };
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let (est, k, theta) = if method.is_kbr() {
            match kbr_estimates(f, &data, method, &tests, &sweep_cfg) {
                Ok((e, k, t)) => (e, Some(k), Some(t)),
                Err(KbrError::FitFailed) => (vec![None; tests.len() / f.dim()], None, None),
                Err(e) => return Err(e),
            }
        } else {
            (classical_estimates(&data, method, &tests, noise.sigma())?, None, None)
        };
        let (rmse_grad, rmse_lap, used) = score(f, &tests, &est, maxima.0, maxima.1);
        rows.push(StudyRow { n, s, seed, method, rmse_grad, rmse_lap, used, k, theta });
    }
    Ok(rows)
}

fn fixed_tests(f: TestFunction, cfg: &StudyConfig) -> Result<(Vec<f64>, (f64, f64))> {
    if cfg.n_test == 0 {
        return Err(KbrError::InvalidConfig("n_test must be positive".into()));
    }
    let tests = sample_points(f, cfg.n_test, cfg.test_seed, u64::MAX);
    let maxima = exact_maxima(f, &tests);
    Ok((tests, maxima))
}

/// RMSE of the derivative estimates against sample size. Every `N` shares
/// the same fixed test set; each `(N, seed)` cell draws its own training
/// points.
pub fn convergence_study(
    f: TestFunction,
    ns: &[usize],
    methods: &[Method],
    seeds: &[u64],
    cfg: &StudyConfig,
) -> Result<Vec<StudyRow>> {
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(KbrError::InvalidConfig("sample sizes must be strictly increasing".into()));
    }
    let (tests, maxima) = fixed_tests(f, cfg)?;
    let cells: Vec<(usize, u64)> = ns.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let out = par::try_map(cells.len(), |i| cell(f, cells[i].0, 0.0, cells[i].1, methods, &tests, maxima, cfg))?;
    Ok(out.into_iter().flatten().collect())
}

/// RMSE against the multiplicative noise level `s`, at fixed `N`.
pub fn noise_study(
    f: TestFunction,
    n: usize,
    levels: &[f64],
    methods: &[Method],
    seeds: &[u64],
    cfg: &StudyConfig,
) -> Result<Vec<StudyRow>> {
    let (tests, maxima) = fixed_tests(f, cfg)?;
    let cells: Vec<(f64, u64)> = levels.iter().flat_map(|&s| seeds.iter().map(move |&sd| (s, sd))).collect();
    let out = par::try_map(cells.len(), |i| cell(f, n, cells[i].0, cells[i].1, methods, &tests, maxima, cfg))?;
    Ok(out.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    Grad,
    Lap,
}

fn ols_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

fn log_points<'a>(rows: impl Iterator<Item = &'a StudyRow>, q: Quantity) -> Vec<(f64, f64)> {
    rows.filter_map(|r| {
        let v = match q {
            Quantity::Grad => r.rmse_grad,
            Quantity::Lap => r.rmse_lap,
        }?;
        (v > 0.0).then(|| ((r.n as f64).log10(), v.log10()))
    })
    .collect()
}

/// Least-squares slope of `log10 RMSE` against `log10 N` over all rows of
/// `method`.
pub fn convergence_slope(rows: &[StudyRow], method: Method, q: Quantity) -> Option<f64> {
    ols_slope(&log_points(rows.iter().filter(|r| r.method == method), q))
}

/// Median over seeds of the per-seed slope.
pub fn median_seed_slope(rows: &[StudyRow], method: Method, q: Quantity) -> Option<f64> {
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let slopes: Vec<f64> = seeds
        .iter()
        .filter_map(|&s| ols_slope(&log_points(rows.iter().filter(|r| r.method == method && r.seed == s), q)))
        .collect();
    median(slopes)
}

pub fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Validation error of the exact and the self-correcting prediction over
/// the same sweep, split and validation points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeRow {
    pub k: f64,
    pub theta: f64,
    pub rmse_exact: Option<f64>,
    pub rmse_self: Option<f64>,
}

pub fn theta_landscape(f: TestFunction, n: usize, seed: u64, sweep_cfg: &SweepConfig) -> Result<Vec<LandscapeRow>> {
    let points = sample_points(f, n, seed, n as u64);
    let values: Vec<f64> = points.chunks(f.dim()).map(|x| f.value(x)).collect();
    let data = TrainingSet::new(points, f.dim(), values)?;
    let ks = sweep_cfg.ks();
    let (exact, _) = sweep(&data, sweep_cfg, &ks, KernelConfig::default(), Predictor::Exact)?;
    let (selfc, _) = sweep(&data, sweep_cfg, &ks, KernelConfig::default(), Predictor::SelfCorrection)?;
    Ok(exact
        .iter()
        .zip(&selfc)
        .map(|(a, b)| LandscapeRow { k: a.k, theta: a.theta, rmse_exact: a.rmse, rmse_self: b.rmse })
        .collect())
}

/// Known-field benchmark: the field is learned from random samples and
/// the derivatives are evaluated on a uniform deployment grid where the
/// field value is known. Raw (non-normalized) MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnownFieldConfig {
    pub n_train: usize,
    pub n_deploy: usize,
    pub seed: u64,
    pub sweep: SweepConfig,
    pub implicit: ImplicitConfig,
}

impl Default for KnownFieldConfig {
    fn default() -> Self {
        Self { n_train: 5000, n_deploy: 1001, seed: 7, sweep: SweepConfig::default(), implicit: ImplicitConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnownFieldRow {
    pub function: TestFunction,
    pub method: Method,
    pub mse_grad: f64,
    pub mse_lap: f64,
    /// Deployment points that produced an estimate.
    pub used: usize,
    pub theta: f64,
}

pub fn known_field_table(functions: &[TestFunction], cfg: &KnownFieldConfig) -> Result<Vec<KnownFieldRow>> {
    if cfg.n_deploy < 2 {
        return Err(KbrError::InvalidConfig("n_deploy must be at least 2".into()));
    }
    let mut rows = Vec::new();
    for &f in functions {
        if f.dim() != 1 {
            return Err(KbrError::InvalidInput(format!("{f} is not one-dimensional")));
        }
        let (lo, hi) = f.domain();
        let points = sample_points(f, cfg.n_train, cfg.seed, 0);
        let values: Vec<f64> = points.iter().map(|&x| f.value(&[x])).collect();
        let data = TrainingSet::from_1d(&points, &values)?;
        let fit = fit_theta(&data, &SweepConfig { seed: cfg.seed, ..cfg.sweep })?;
        let model = &fit.model;
        let deploy: Vec<f64> = (0..cfg.n_deploy).map(|i| lo + (hi - lo) * i as f64 / (cfg.n_deploy - 1) as f64).collect();
        let deploy = hull_filter(&points, &deploy, 1);
        for method in [Method::KbrImplicit, Method::KbrExplicit] {
            let est = par::map(deploy.len(), |i| {
                let x = deploy[i];
                match method {
                    Method::KbrExplicit => explicit_derivatives_known_field(model, x, f.value(&[x])),
                    _ => implicit_derivatives_1d(model, x, &cfg.implicit),
                }
                .ok()
            });
            let (mut pg, mut eg, mut pl, mut el) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for (x, e) in deploy.iter().zip(&est) {
                if let Some(e) = e {
                    pg.push(e.grad[0]);
                    eg.push(f.gradient(&[*x])[0]);
                    pl.push(e.lap);
                    el.push(f.laplacian(&[*x]));
                }
            }
            rows.push(KnownFieldRow {
                function: f,
                method,
                mse_grad: mse(&pg, &eg)?,
                mse_lap: mse(&pl, &el)?,
                used: pl.len(),
                theta: model.theta(),
            });
        }
    }
    Ok(rows)
}

/// Two-dimensional check: implicit derivatives of `camel2d` learned from a
/// uniform `n_side x n_side` grid, scored at random interior points against
/// second-order central differences of the exact field with the grid
/// spacing as step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camel2dResult {
    pub rmse_grad: f64,
    pub rmse_lap: f64,
    pub cd_rmse_grad: f64,
    pub cd_rmse_lap: f64,
    pub used: usize,
    pub theta: f64,
}

pub fn camel2d_study(n_side: usize, n_test: usize, seed: u64, cfg: &StudyConfig) -> Result<Camel2dResult> {
    if n_side < 3 || n_test == 0 {
        return Err(KbrError::InvalidConfig("need n_side >= 3 and n_test >= 1".into()));
    }
    let f = TestFunction::Camel2d;
    let h = 1.0 / (n_side - 1) as f64;
    let points: Vec<f64> =
        (0..n_side * n_side).flat_map(|i| [(i % n_side) as f64 * h, (i / n_side) as f64 * h]).collect();
    let values: Vec<f64> = points.chunks(2).map(|x| f.value(x)).collect();
    let data = TrainingSet::new(points, 2, values)?;
    // Keep test points a few kernel widths away from the boundary.
    let tests: Vec<f64> = sample_points(f, n_test, seed, 1).iter().map(|v| 0.15 + 0.7 * v).collect();
    let maxima = exact_maxima(f, &tests);
    let (est, _, theta) = kbr_estimates(f, &data, Method::KbrImplicit, &tests, &StudyConfig { sweep: SweepConfig { seed, ..cfg.sweep }, ..*cfg })?;
    let (rg, rl, used) = score(f, &tests, &est, maxima.0, maxima.1);
    let cd: Estimates = tests
        .chunks(2)
        .map(|x| {
            let at = |dx: f64, dy: f64| f.value(&[x[0] + dx, x[1] + dy]);
            let c = at(0.0, 0.0);
            let gx = (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h);
            let gy = (at(0.0, h) - at(0.0, -h)) / (2.0 * h);
            let lap = (at(h, 0.0) + at(-h, 0.0) + at(0.0, h) + at(0.0, -h) - 4.0 * c) / (h * h);
            Some((vec![gx, gy], lap))
        })
        .collect();
    let (cg, cl, _) = score(f, &tests, &cd, maxima.0, maxima.1);
    let missing = || KbrError::SolverFailed("no test point produced an estimate".into());
    Ok(Camel2dResult {
        rmse_grad: rg.ok_or_else(missing)?,
        rmse_lap: rl.ok_or_else(missing)?,
        cd_rmse_grad: cg.ok_or_else(missing)?,
        cd_rmse_lap: cl.ok_or_else(missing)?,
        used,
        theta,
    })
}
