//! Reference methods: non-uniform finite differences, cubic smoothing
//! spline, the exact Sod solution, Roe's flux and MUSCL-TVD.

pub mod euler;
pub mod fd;
pub mod muscl;
pub mod spline;

pub use euler::{roe_dissipation, roe_flux, sod_exact, EulerPrimitive, GAMMA};
pub use fd::{fd_derivatives_at, fd_weights, FdStencil};
pub use muscl::{muscl_scalar_step, muscl_tvd_step, ScalarLaw};
pub use spline::{smoothing_spline, SmoothingSpline};
