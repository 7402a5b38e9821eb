//! Conservative finite-volume solvers with KBR interface fluxes.

mod flux;
mod grid;
mod sim;
mod solvers;
mod state;

pub use flux::{kbr_interface_flux, FluxPredictor, InterfaceFlux, KbrFluxConfig};
pub use grid::{Grid1D, GridKind};
pub use sim::{run_simulation, shock_position, Problem, RetrainRecord, Simulation, SolverConfig};
pub use solvers::{
    burgers_flux, maccormack_interfaces, maccormack_kbr_step, maccormack_step, roe_kbr_step, roe_step, MacCormackForm,
};
pub use state::ConservedState;
