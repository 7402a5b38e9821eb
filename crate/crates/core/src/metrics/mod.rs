//! Test fields, error measures and study drivers.

mod error;
mod functions;
mod shock;
mod study;

pub use error::{max_abs, mse, normalized_rmse};
pub use functions::{TestFunction, CAMEL_K, RASTRIGIN_A};
pub use shock::{shock_metrics, ShockMetrics, SodRegion, Window, SOD_REGION_1, SOD_REGION_2};
pub use study::{
    camel2d_study, convergence_slope, convergence_study, known_field_table, median, median_seed_slope, noise_study, sample_points,
    theta_landscape, Camel2dResult, KnownFieldConfig, KnownFieldRow, LandscapeRow, Method, Quantity, StudyConfig, StudyRow,
};
