//! Subcommands. Each one reads only the resolved [`RunConfig`], so a run can
//! be replayed from its `resolved_config.toml`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kbr::baselines::euler::{SOD_LEFT, SOD_RIGHT};
use kbr::baselines::sod_exact;
use kbr::derivatives::{derivatives_batch, Scheme};
use kbr::metrics::{
    convergence_slope, known_field_table, median, median_seed_slope, noise_study, normalized_rmse, sample_points,
    shock_metrics, convergence_study, Method, Quantity, SodRegion, StudyRow, TestFunction, SOD_REGION_1,
    SOD_REGION_2,
};
use kbr::pde::{run_simulation, shock_position, Simulation};
use kbr::training::{add_noise, fit_theta, Fit, NoiseConfig};
use kbr::TrainingSet;
use serde_json::{json, Value as Json};

use crate::config::{BurgersScheme, RunConfig, SodScheme, RESOLVED_NAME};
use crate::csvio::{read_csv, schema, write_csv, Row, Value};
use crate::error::{CliError, Result};
use crate::plot::{Plot, Series};

#[derive(Debug, Parser)]
#[command(name = "kbr", version, about = "Kinetic-based regularization studies and solvers")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $KBR_OUT_DIR or ./kbr-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select the kernel width on noisy samples and write the sweep curve.
    Fit(FitArgs),
    /// Derivatives of a fitted field on a uniform grid inside the samples.
    Derive(DeriveArgs),
    /// Derivative RMSE against sample size.
    Converge(ConvergeArgs),
    /// Derivative RMSE against noise level.
    NoiseSweep(NoiseArgs),
    /// Known-field MSE table for sin, x^2 and ln.
    DnnTable(DnnArgs),
    /// Conservative solvers.
    Pde {
        #[command(subcommand)]
        which: PdeCommand,
    },
    /// Shock metrics of an existing Euler snapshot file.
    Metrics(MetricsArgs),
    /// Replay a run from its resolved configuration.
    Rerun { resolved: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum PdeCommand {
    Burgers(BurgersArgs),
    Sod(SodArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long = "fn", value_parser = parse_function)]
    pub function: Option<TestFunction>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[arg(long = "fn", value_parser = parse_function)]
    pub function: Option<TestFunction>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[arg(long = "fn", value_parser = parse_function)]
    pub function: Option<TestFunction>,
    /// explicit, implicit, fd or spline; comma separated.
    #[arg(long, value_parser = parse_method, value_delimiter = ',')]
    pub scheme: Vec<Method>,
    #[arg(long, value_delimiter = ',')]
    pub ns: Vec<usize>,
    /// Seeds per sample size.
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long = "fn", value_parser = parse_function)]
    pub function: Option<TestFunction>,
    #[arg(long, value_parser = parse_method, value_delimiter = ',')]
    pub scheme: Vec<Method>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub levels: Vec<f64>,
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DnnArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_deploy: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BurgersArgs {
    #[arg(long, value_parser = parse_burgers)]
    pub scheme: Option<BurgersScheme>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    #[arg(long)]
    pub snapshot_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SodArgs {
    #[arg(long, value_parser = parse_sod)]
    pub scheme: Option<SodScheme>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub cfl: Option<f64>,
    #[arg(long)]
    pub grid_ratio: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
}

fn parse_function(s: &str) -> std::result::Result<TestFunction, String> {
    s.parse().map_err(|e: kbr::KbrError| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "explicit" => Ok(Method::KbrExplicit),
        "implicit" => Ok(Method::KbrImplicit),
        _ => s.parse().map_err(|_| format!("unknown scheme '{s}' (explicit, implicit, fd, spline)")),
    }
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    match s {
        "explicit" => Ok(Scheme::Explicit),
        "implicit" => Ok(Scheme::Implicit),
        _ => Err(format!("unknown scheme '{s}' (explicit, implicit)")),
    }
}

fn parse_burgers(s: &str) -> std::result::Result<BurgersScheme, String> {
    [BurgersScheme::Maccormack, BurgersScheme::KbrMaccormack]
        .into_iter()
        .find(|b| b.name() == s)
        .ok_or_else(|| format!("unknown scheme '{s}' (maccormack, kbr-maccormack)"))
}

fn parse_sod(s: &str) -> std::result::Result<SodScheme, String> {
    [SodScheme::Roe, SodScheme::KbrRoe, SodScheme::Muscl]
        .into_iter()
        .find(|b| b.name() == s)
        .ok_or_else(|| format!("unknown scheme '{s}' (roe, kbr-roe, muscl)"))
}

/// Short name used in file names and the `scheme` column.
pub fn method_label(m: Method) -> &'static str {
    match m {
        Method::KbrExplicit => "explicit",
        Method::KbrImplicit => "implicit",
        Method::Fd => "fd",
        Method::Spline => "spline",
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl Command {
    /// Writes the flags into `cfg` and records the command words.
    pub fn apply(self, cfg: &mut RunConfig) {
        let words: &[&str] = match self {
            Command::Fit(a) => {
                set(&mut cfg.function, a.function);
                set(&mut cfg.fit.n, a.n);
                set(&mut cfg.fit.noise, a.noise);
                &["fit"]
            }
            Command::Derive(a) => {
                set(&mut cfg.function, a.function);
                set(&mut cfg.derive.scheme, a.scheme);
                set(&mut cfg.derive.n, a.n);
                set(&mut cfg.derive.noise, a.noise);
                set(&mut cfg.derive.points, a.points);
                &["derive"]
            }
            Command::Converge(a) => {
                set(&mut cfg.function, a.function);
                if !a.scheme.is_empty() {
                    cfg.study.methods = a.scheme;
                }
                if !a.ns.is_empty() {
                    cfg.study.ns = a.ns;
                }
                set(&mut cfg.study.seeds, a.seeds);
                &["converge"]
            }
            Command::NoiseSweep(a) => {
                set(&mut cfg.function, a.function);
                if !a.scheme.is_empty() {
                    cfg.study.methods = a.scheme;
                }
                if !a.levels.is_empty() {
                    cfg.study.levels = a.levels;
                }
                set(&mut cfg.study.n, a.n);
                set(&mut cfg.study.seeds, a.seeds);
                &["noise-sweep"]
            }
            Command::DnnTable(a) => {
                set(&mut cfg.known_field.n_train, a.n_train);
                set(&mut cfg.known_field.n_deploy, a.n_deploy);
                &["dnn-table"]
            }
            Command::Pde { which: PdeCommand::Burgers(a) } => {
                set(&mut cfg.pde.burgers_scheme, a.scheme);
                set(&mut cfg.solver.nodes, a.n);
                set(&mut cfg.solver.cfl, a.cfl);
                cfg.solver.t_end = a.t_end.or(cfg.solver.t_end);
                cfg.solver.snapshot_every = a.snapshot_every.or(cfg.solver.snapshot_every);
                &["pde", "burgers"]
            }
            Command::Pde { which: PdeCommand::Sod(a) } => {
                set(&mut cfg.pde.sod_scheme, a.scheme);
                set(&mut cfg.solver.nodes, a.n);
                set(&mut cfg.solver.cfl, a.cfl);
                set(&mut cfg.solver.grid_ratio, a.grid_ratio);
                cfg.solver.t_end = a.t_end.or(cfg.solver.t_end);
                &["pde", "sod"]
            }
            Command::Metrics(a) => {
                cfg.metrics.snapshot = a.snapshot.or(cfg.metrics.snapshot.take());
                set(&mut cfg.metrics.label, a.label);
                &["metrics"]
            }
            Command::Rerun { .. } => unreachable!("rerun is resolved before apply"),
        };
        cfg.command = words.iter().map(|w| w.to_string()).collect();
    }
}

/// Runs the command recorded in `cfg`, writing into `out`. Returns the
/// summary that goes to `summary.json`.
pub fn execute(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let words: Vec<&str> = cfg.command.iter().map(String::as_str).collect();
    match words.as_slice() {
        ["fit"] => fit(cfg, out),
        ["derive"] => derive(cfg, out),
        ["converge"] => converge(cfg, out),
        ["noise-sweep"] => noise_sweep(cfg, out),
        ["dnn-table"] => dnn_table(cfg, out),
        ["pde", "burgers"] => burgers(cfg, out),
        ["pde", "sod"] => sod(cfg, out),
        ["metrics"] => metrics(cfg, out),
        _ => Err(CliError::Config(format!("command: unknown command {:?}", cfg.command))),
    }
}

pub fn write_resolved(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::write(out.join(RESOLVED_NAME), cfg.to_toml()?)?;
    Ok(())
}

/// Training data for `fit` and `derive`: uniform samples with optional
/// multiplicative noise.
fn noisy_samples(f: TestFunction, n: usize, noise: f64, seed: u64) -> Result<TrainingSet> {
    let points = sample_points(f, n, seed, 0);
    let values: Vec<f64> = points.chunks(f.dim()).map(|x| f.value(x)).collect();
    let values = add_noise(&values, &NoiseConfig { s: noise, seed })?;
    Ok(TrainingSet::new(points, f.dim(), values)?)
}

fn fit_summary(fit: &Fit) -> Json {
    json!({ "k": fit.k, "theta": fit.model.theta(), "d_typ": fit.d_typ })
}

fn fit(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let f = cfg.function;
    let data = noisy_samples(f, cfg.fit.n, cfg.fit.noise, cfg.seed)?;
    let fit = fit_theta(&data, &cfg.sweep())?;
    let rows: Vec<Row> = fit.sweep.iter().map(|p| vec![p.k.into(), p.theta.into(), p.rmse.into(), p.used.into()]).collect();
    let name = format!("fit_{}", f.name());
    write_csv(&out.join(format!("{name}.csv")), schema::SWEEP, &rows)?;
    let pts = fit.sweep.iter().filter_map(|p| Some((p.k, p.rmse?))).collect();
    Plot::new(format!("validation error, {}", f.name()), "k", "normalized RMSE")
        .log_log()
        .with(Series::line("sweep", pts))
        .save(&out.join(format!("{name}.svg")))?;
    Ok(json!({ "function": f.name(), "n": cfg.fit.n, "noise": cfg.fit.noise, "fit": fit_summary(&fit) }))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn bounds(points: &[f64], dim: usize, axis: usize) -> (f64, f64) {
    points.chunks(dim).map(|p| p[axis]).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn derive(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let f = cfg.function;
    let d = f.dim();
    let scheme = cfg.derive.scheme;
    if scheme == Scheme::Explicit && d != 1 {
        return Err(CliError::Config(format!("derive.scheme: explicit is one-dimensional, {} is not", f.name())));
    }
    let data = noisy_samples(f, cfg.derive.n, cfg.derive.noise, cfg.seed)?;
    let fit = fit_theta(&data, &cfg.sweep())?;
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|a| {
            let (lo, hi) = bounds(data.points(), d, a);
            linspace(lo, hi, cfg.derive.points)
        })
        .collect();
    let queries: Vec<f64> = if d == 1 {
        axes[0].clone()
    } else {
        axes[1].iter().flat_map(|&y| axes[0].iter().flat_map(move |&x| [x, y])).collect()
    };
    let est = derivatives_batch(&fit.model, &queries, scheme, &cfg.implicit);
    let (mut pg, mut eg, mut pl, mut el) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows = Vec::with_capacity(est.len());
    for (x, e) in queries.chunks(d).zip(&est) {
        let (ge, le) = (f.gradient(x), f.laplacian(x));
        let e = e.as_ref().ok();
        if let Some(e) = e {
            pg.extend(&e.grad);
            eg.extend(&ge);
            pl.push(e.lap);
            el.push(le);
        }
        let grad = |a: usize| Value::from(e.map(|e| e.grad[a]));
        let lap = Value::from(e.map(|e| e.lap));
        rows.push(if d == 1 {
            let phi = fit.model.predict_order2_exact(x).ok();
            vec![x[0].into(), phi.into(), grad(0), lap, ge[0].into(), le.into()]
        } else {
            vec![x[0].into(), x[1].into(), grad(0), grad(1), lap, ge[0].into(), ge[1].into(), le.into()]
        });
    }
    let label = match scheme {
        Scheme::Explicit => "explicit",
        Scheme::Implicit => "implicit",
    };
    let name = format!("derive_{}_{label}", f.name());
    write_csv(&out.join(format!("{name}.csv")), if d == 1 { schema::DERIVE_1D } else { schema::DERIVE_2D }, &rows)?;
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let (rg, rl) = if pl.is_empty() {
        (None, None)
    } else {
        (Some(normalized_rmse(&pg, &eg, max_abs(&eg))?), Some(normalized_rmse(&pl, &el, max_abs(&el))?))
    };
    let plot = if d == 1 {
        let pick = |col: usize| -> Vec<(f64, f64)> {
            rows.iter().filter_map(|r| Some((r[0].as_f64()?, r[col].as_f64()?))).collect()
        };
        Plot::new(format!("{label} derivatives, {}", f.name()), "x", "value")
            .with(Series::line("grad", pick(2)))
            .with(Series::line("grad exact", pick(4)))
            .with(Series::line("lap", pick(3)))
            .with(Series::line("lap exact", pick(5)))
    } else {
        Plot::new(format!("{label} Laplacian, {}", f.name()), "exact", "estimate")
            .with(Series::markers("lap", el.iter().copied().zip(pl.iter().copied()).collect()))
    };
    plot.save(&out.join(format!("{name}.svg")))?;
    Ok(json!({
        "function": f.name(),
        "scheme": label,
        "points": est.len(),
        "used": pl.len(),
        "rmse_grad": rg,
        "rmse_lap": rl,
        "fit": fit_summary(&fit),
    }))
}

/// Median over seeds per `(x, method)`; `x` is `N` or `s`.
fn seed_medians(rows: &[StudyRow], key: impl Fn(&StudyRow) -> f64, methods: &[Method]) -> Vec<(f64, Method, Option<f64>, Option<f64>)> {
    let mut cells: BTreeMap<(u64, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let m = methods.iter().position(|&m| m == r.method).unwrap_or(usize::MAX);
        let c = cells.entry((key(r).to_bits(), m)).or_default();
        c.0.extend(r.rmse_grad);
        c.1.extend(r.rmse_lap);
    }
    // Keys are nonnegative, so bit order is numeric order.
    cells.into_iter().map(|((x, m), (g, l))| (f64::from_bits(x), methods[m], median(g), median(l))).collect()
}

fn scheme_suffix(methods: &[Method]) -> String {
    methods.iter().map(|&m| method_label(m)).collect::<Vec<_>>().join("+")
}

fn study_plot(title: String, x_label: &str, meds: &[(f64, Method, Option<f64>, Option<f64>)], methods: &[Method]) -> Plot {
    let mut plot = Plot::new(title, x_label, "normalized RMSE");
    for &m in methods {
        let of = |q: usize| -> Vec<(f64, f64)> {
            meds.iter().filter(|r| r.1 == m).filter_map(|r| Some((r.0, if q == 0 { r.2 } else { r.3 }?))).collect()
        };
        plot = plot.with(Series::line(format!("{} grad", method_label(m)), of(0)));
        plot = plot.with(Series::line(format!("{} lap", method_label(m)), of(1)));
    }
    plot
}

fn converge(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let f = cfg.function;
    let methods = &cfg.study.methods;
    let rows = convergence_study(f, &cfg.study.ns, methods, &cfg.seeds(), &cfg.study_config())?;
    let meds = seed_medians(&rows, |r| r.n as f64, methods);
    let csv: Vec<Row> = meds
        .iter()
        .map(|&(n, m, g, l)| vec![Value::Int(n as i64), method_label(m).into(), g.into(), l.into()])
        .collect();
    let name = format!("converge_{}_{}", f.name(), scheme_suffix(methods));
    write_csv(&out.join(format!("{name}.csv")), schema::CONVERGE, &csv)?;
    study_plot(format!("convergence, {}", f.name()), "N", &meds, methods)
        .log_log()
        .save(&out.join(format!("{name}.svg")))?;
    let slopes: serde_json::Map<String, Json> = methods
        .iter()
        .map(|&m| {
            let s = json!({
                "grad_median_seed": median_seed_slope(&rows, m, Quantity::Grad),
                "lap_median_seed": median_seed_slope(&rows, m, Quantity::Lap),
                "grad_pooled": convergence_slope(&rows, m, Quantity::Grad),
                "lap_pooled": convergence_slope(&rows, m, Quantity::Lap),
            });
            (method_label(m).to_string(), s)
        })
        .collect();
    Ok(json!({ "function": f.name(), "ns": cfg.study.ns, "seeds": cfg.seeds(), "slopes": slopes }))
}

fn noise_sweep(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let f = cfg.function;
    let methods = &cfg.study.methods;
    let rows = noise_study(f, cfg.study.n, &cfg.study.levels, methods, &cfg.seeds(), &cfg.study_config())?;
    let meds = seed_medians(&rows, |r| r.s, methods);
    let csv: Vec<Row> =
        meds.iter().map(|&(s, m, g, l)| vec![s.into(), method_label(m).into(), g.into(), l.into()]).collect();
    let name = format!("noise_{}", f.name());
    write_csv(&out.join(format!("{name}.csv")), schema::NOISE, &csv)?;
    study_plot(format!("noise, {}, N = {}", f.name(), cfg.study.n), "s", &meds, methods)
        .log_y()
        .save(&out.join(format!("{name}.svg")))?;
    Ok(json!({ "function": f.name(), "n": cfg.study.n, "levels": cfg.study.levels, "seeds": cfg.seeds() }))
}

/// Published DNN gradient MSE, quoted for comparison only.
pub const DNN_QUOTED: [(TestFunction, f64); 3] =
    [(TestFunction::Sin, 7.5e-6), (TestFunction::Square, 1.1e-3), (TestFunction::Log, 3.6e-6)];

fn dnn_table(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let functions: Vec<TestFunction> = DNN_QUOTED.iter().map(|p| p.0).collect();
    let table = known_field_table(&functions, &cfg.known_field_config())?;
    let get = |f: TestFunction, m: Method| table.iter().find(|r| r.function == f && r.method == m);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &(f, dnn) in &DNN_QUOTED {
        let (i, e) = (get(f, Method::KbrImplicit), get(f, Method::KbrExplicit));
        let cell = |r: Option<_>, grad: bool| -> Value {
            r.map(|r: &kbr::metrics::KnownFieldRow| if grad { r.mse_grad } else { r.mse_lap }).into()
        };
        rows.push(vec![f.name().into(), dnn.into(), cell(i, true), cell(i, false), cell(e, true), cell(e, false)]);
        summary.push(json!({ "function": f.name(), "theta": i.map(|r| r.theta), "used": i.map(|r| r.used) }));
    }
    write_csv(&out.join("dnn_table.csv"), schema::DNN_TABLE, &rows)?;
    let col = |c: usize| -> Vec<(f64, f64)> {
        rows.iter().enumerate().filter_map(|(k, r)| Some((k as f64, r[c].as_f64()?))).collect()
    };
    Plot::new("known-field MSE (0 sin, 1 x^2, 2 ln)", "function", "MSE")
        .log_y()
        .with(Series::markers("DNN grad", col(1)))
        .with(Series::markers("implicit grad", col(2)))
        .with(Series::markers("implicit lap", col(3)))
        .with(Series::markers("explicit grad", col(4)))
        .with(Series::markers("explicit lap", col(5)))
        .save(&out.join("dnn_table.svg"))?;
    Ok(json!({ "rows": summary }))
}

fn grid_rows(sim: &Simulation) -> Vec<Row> {
    let ifc = sim.grid.interfaces();
    sim.grid.nodes().iter().enumerate().map(|(i, &x)| vec![i.into(), x.into(), ifc.get(i).copied().into()]).collect()
}

fn retrain_rows(sim: &Simulation) -> Vec<Row> {
    sim.retrains.iter().map(|r| vec![r.step.into(), r.time.into(), r.k.into(), r.theta.into()]).collect()
}

fn sim_summary(sim: &Simulation) -> Json {
    json!({
        "problem": sim.problem.name(),
        "nodes": sim.grid.len(),
        "steps": sim.steps,
        "t_final": sim.final_state().time,
        "max_conservation_residual": sim.max_conservation_residual(),
        "growth": sim.growth,
        "retrains": sim.retrains.len(),
        "fit_failures": sim.fit_failures,
    })
}

fn burgers(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let scheme = cfg.pde.burgers_scheme;
    let sim = run_simulation(scheme.problem(), &cfg.solver)?;
    let x = sim.grid.nodes();
    let mut rows = Vec::new();
    let mut plot = Plot::new(format!("Burgers, {}", scheme.name()), "x", "u");
    for s in &sim.snapshots {
        rows.extend(x.iter().zip(&s.comps[0]).map(|(&xi, &u)| vec![s.time.into(), xi.into(), u.into()]));
        plot = plot.with(Series::line(format!("t = {:.3}", s.time), x.iter().copied().zip(s.comps[0].iter().copied()).collect()));
    }
    let name = format!("burgers_{}", scheme.name());
    write_csv(&out.join(format!("{name}_snapshots.csv")), schema::BURGERS_SNAPSHOT, &rows)?;
    write_csv(&out.join("burgers_grid.csv"), schema::GRID, &grid_rows(&sim))?;
    write_csv(&out.join(format!("{name}_retrain.csv")), schema::RETRAIN, &retrain_rows(&sim))?;
    plot.save(&out.join(format!("{name}.svg")))?;
    let mut s = sim_summary(&sim);
    s["shock_position"] = json!(shock_position(x, &sim.final_state().comps[0], 0.5));
    Ok(s)
}

/// Density metrics for both Sod regions against the exact solution at `t`.
pub fn sod_metric_rows(label: &str, x: &[f64], rho: &[f64], t: f64) -> Result<Vec<Row>> {
    let exact: Vec<f64> = sod_exact(x, t, &SOD_LEFT, &SOD_RIGHT)?.iter().map(|p| p.rho).collect();
    let regions: [(&str, SodRegion); 2] = [("1", SOD_REGION_1), ("2", SOD_REGION_2)];
    regions
        .iter()
        .map(|(name, r)| {
            let m = shock_metrics(rho, &exact, x, r.shock, r.post)?;
            Ok(vec![
                label.into(),
                (*name).into(),
                m.l1.into(),
                m.linf.into(),
                m.thickness.into(),
                m.post_shock_osc.into(),
                m.tv.into(),
            ])
        })
        .collect()
}

fn metrics_json(rows: &[Row]) -> Json {
    let names = ["l1", "linf", "thickness", "post_shock_osc", "tv"];
    rows.iter()
        .map(|r| {
            let mut o = serde_json::Map::new();
            o.insert("region".into(), json!(r[1].as_str()));
            for (k, v) in names.iter().zip(&r[2..]) {
                o.insert(k.to_string(), json!(v.as_f64()));
            }
            Json::Object(o)
        })
        .collect()
}

fn sod(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let scheme = cfg.pde.sod_scheme;
    let sim = run_simulation(scheme.problem(), &cfg.solver)?;
    let x = sim.grid.nodes();
    let mut rows = Vec::new();
    for s in &sim.snapshots {
        for (xi, p) in x.iter().zip(s.primitives()) {
            rows.push(vec![s.time.into(), (*xi).into(), p.rho.into(), p.u.into(), p.p.into()]);
        }
    }
    let last = sim.final_state();
    let rho: Vec<f64> = last.primitives().iter().map(|p| p.rho).collect();
    let metrics = sod_metric_rows(scheme.name(), x, &rho, last.time)?;
    let name = format!("sod_{}", scheme.name());
    write_csv(&out.join(format!("{name}_snapshots.csv")), schema::EULER_SNAPSHOT, &rows)?;
    write_csv(&out.join("sod_grid.csv"), schema::GRID, &grid_rows(&sim))?;
    write_csv(&out.join("sod_metrics.csv"), schema::SOD_METRICS, &metrics)?;
    if scheme.problem().uses_kbr() {
        write_csv(&out.join(format!("{name}_retrain.csv")), schema::RETRAIN, &retrain_rows(&sim))?;
    }
    let exact: Vec<f64> = sod_exact(x, last.time, &SOD_LEFT, &SOD_RIGHT)?.iter().map(|p| p.rho).collect();
    Plot::new(format!("Sod density, {}, t = {:.3}", scheme.name(), last.time), "x", "rho")
        .with(Series::markers(scheme.name(), x.iter().copied().zip(rho.iter().copied()).collect()))
        .with(Series::line("exact", x.iter().copied().zip(exact).collect()))
        .save(&out.join(format!("{name}.svg")))?;
    let mut s = sim_summary(&sim);
    s["metrics"] = metrics_json(&metrics);
    Ok(s)
}

fn metrics(cfg: &RunConfig, out: &Path) -> Result<Json> {
    let path = cfg.metrics.snapshot.as_ref().ok_or_else(|| CliError::Config("metrics.snapshot: required".into()))?;
    let rows = read_csv(path, schema::EULER_SNAPSHOT)?;
    let cell = |r: &Row, c: usize| r[c].as_f64().ok_or_else(|| CliError::Schema {
        column: schema::EULER_SNAPSHOT[c].name.into(),
        reason: "empty cell".into(),
    });
    let mut t_last = f64::NEG_INFINITY;
    for r in &rows {
        t_last = t_last.max(cell(r, 0)?);
    }
    let (mut x, mut rho) = (Vec::new(), Vec::new());
    for r in rows.iter().filter(|r| r[0].as_f64() == Some(t_last)) {
        x.push(cell(r, 1)?);
        rho.push(cell(r, 2)?);
    }
    if x.is_empty() {
        return Err(CliError::Schema { column: "t".into(), reason: "snapshot file has no rows".into() });
    }
    let metrics = sod_metric_rows(&cfg.metrics.label, &x, &rho, t_last)?;
    write_csv(&out.join("sod_metrics.csv"), schema::SOD_METRICS, &metrics)?;
    Ok(json!({ "snapshot": path, "t": t_last, "nodes": x.len(), "metrics": metrics_json(&metrics) }))
}
