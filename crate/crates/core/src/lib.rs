//! Kinetic-based regularization (KBR) for scattered-data interpolation,
//! derivative estimation and interface fluxes in finite-volume solvers.

pub mod baselines;
pub mod derivatives;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod neighbors;
pub mod par;
pub mod pde;
pub mod training;

pub use error::{KbrError, Result};
pub use kernel::{KernelConfig, KernelModel, LagrangeResult, LinearPredictor, MomentError, Normalization, SecondOrder, TrainingSet, Weights};
