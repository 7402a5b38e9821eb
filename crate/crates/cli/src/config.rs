//! Run configuration: a TOML file, then command-line flags on top. Unknown
//! keys are errors. The resolved configuration is written next to the
//! results and `kbr rerun` replays it.

use std::path::{Path, PathBuf};

use kbr::derivatives::{ImplicitConfig, Scheme};
use kbr::metrics::{KnownFieldConfig, Method, StudyConfig, TestFunction};
use kbr::pde::{Problem, SolverConfig};
use kbr::training::SweepConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const OUT_DIR_ENV: &str = "KBR_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "kbr-out";
pub const RESOLVED_NAME: &str = "resolved_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySection {
    pub ns: Vec<usize>,
    /// Number of seeds per cell, counted up from the global seed.
    pub seeds: usize,
    /// Training size of the noise sweep.
    pub n: usize,
    pub levels: Vec<f64>,
    pub methods: Vec<Method>,
    pub n_test: usize,
    pub test_seed: u64,
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            ns: vec![100, 300, 1000, 3000, 10000],
            seeds: 5,
            n: 1000,
            levels: vec![0.0, 0.01, 0.02, 0.03, 0.05],
            methods: vec![Method::KbrExplicit, Method::KbrImplicit, Method::Spline],
            n_test: 5000,
            test_seed: 12345,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub n: usize,
    /// Multiplicative noise scale `s`.
    pub noise: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { n: 1000, noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeriveSection {
    pub n: usize,
    pub noise: f64,
    pub scheme: Scheme,
    /// Evaluation points per axis, uniform inside the training hull.
    pub points: usize,
}

impl Default for DeriveSection {
    fn default() -> Self {
        Self { n: 1000, noise: 0.0, scheme: Scheme::Implicit, points: 201 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KnownFieldSection {
    pub n_train: usize,
    pub n_deploy: usize,
}

impl Default for KnownFieldSection {
    fn default() -> Self {
        let d = KnownFieldConfig::default();
        Self { n_train: d.n_train, n_deploy: d.n_deploy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BurgersScheme {
    Maccormack,
    KbrMaccormack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SodScheme {
    Roe,
    KbrRoe,
    Muscl,
}

impl BurgersScheme {
    pub fn problem(self) -> Problem {
        match self {
            BurgersScheme::Maccormack => Problem::BurgersMaccormack,
            BurgersScheme::KbrMaccormack => Problem::BurgersMaccormackKbr,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BurgersScheme::Maccormack => "maccormack",
            BurgersScheme::KbrMaccormack => "kbr-maccormack",
        }
    }
}

impl SodScheme {
    pub fn problem(self) -> Problem {
        match self {
            SodScheme::Roe => Problem::SodRoe,
            SodScheme::KbrRoe => Problem::SodRoeKbr,
            SodScheme::Muscl => Problem::SodMuscl,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SodScheme::Roe => "roe",
            SodScheme::KbrRoe => "kbr-roe",
            SodScheme::Muscl => "muscl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub burgers_scheme: BurgersScheme,
    pub sod_scheme: SodScheme,
}

impl Default for PdeSection {
    fn default() -> Self {
        Self { burgers_scheme: BurgersScheme::KbrMaccormack, sod_scheme: SodScheme::KbrRoe }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Snapshot CSV (`t, x, rho, u, p`) to score; its last time level is used.
    pub snapshot: Option<PathBuf>,
    /// Label written in the `scheme` column.
    pub label: String,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { snapshot: None, label: "snapshot".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Subcommand words, filled in when the configuration is resolved.
    pub command: Vec<String>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub function: TestFunction,
    pub sweep: SweepConfig,
    pub implicit: ImplicitConfig,
    pub study: StudySection,
    pub fit: FitSection,
    pub derive: DeriveSection,
    pub known_field: KnownFieldSection,
    pub solver: SolverConfig,
    pub pde: PdeSection,
    pub metrics: MetricsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Vec::new(),
            seed: 7,
            out_dir: None,
            function: TestFunction::Camel1d,
            sweep: SweepConfig::default(),
            implicit: ImplicitConfig::default(),
            study: StudySection::default(),
            fit: FitSection::default(),
            derive: DeriveSection::default(),
            known_field: KnownFieldSection::default(),
            solver: SolverConfig::default(),
            pde: PdeSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    /// Sweep settings with the global seed applied.
    pub fn sweep(&self) -> SweepConfig {
        SweepConfig { seed: self.seed, ..self.sweep }
    }

    pub fn study_config(&self) -> StudyConfig {
        StudyConfig {
            sweep: self.sweep(),
            implicit: self.implicit,
            n_test: self.study.n_test,
            test_seed: self.study.test_seed,
        }
    }

    pub fn known_field_config(&self) -> KnownFieldConfig {
        KnownFieldConfig {
            n_train: self.known_field.n_train,
            n_deploy: self.known_field.n_deploy,
            seed: self.seed,
            sweep: self.sweep(),
            implicit: self.implicit,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.study.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Flag, then config file, then `KBR_OUT_DIR`, then `./kbr-out`.
    pub fn resolve_out_dir(&mut self) -> PathBuf {
        let dir = self.out_dir.clone().unwrap_or_else(|| {
            std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
        });
        self.out_dir = Some(dir.clone());
        dir
    }

    /// Semantic checks serde cannot express.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(CliError::Config(format!("{key}: {why}")));
        self.sweep.validate().map_err(|e| CliError::Config(format!("sweep: {e}")))?;
        self.solver.validate().map_err(|e| CliError::Config(format!("solver: {e}")))?;
        if self.study.seeds == 0 {
            return bad("study.seeds", "must be at least 1".into());
        }
        if self.study.ns.is_empty() || self.study.ns.windows(2).any(|w| w[1] <= w[0]) {
            return bad("study.ns", format!("must be non-empty and strictly increasing, got {:?}", self.study.ns));
        }
        if self.study.levels.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("study.levels", format!("noise levels must be >= 0, got {:?}", self.study.levels));
        }
        if self.study.methods.is_empty() {
            return bad("study.methods", "at least one method is required".into());
        }
        for (key, v) in [("fit.noise", self.fit.noise), ("derive.noise", self.derive.noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(key, format!("must be >= 0, got {v}"));
            }
        }
        if self.derive.points < 2 {
            return bad("derive.points", "must be at least 2".into());
        }
        Ok(())
    }
}
