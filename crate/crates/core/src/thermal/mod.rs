//! Transient conduction with sequential element activation.

mod history;
mod material;
mod solver;

pub use history::{Snapshot, TemperatureHistory};
pub use material::{h_c, stable_dt, MaterialModel, PiecewiseLinear, STABILITY_SAFETY, STEFAN_BOLTZMANN};
pub use solver::{activate, simulate, step, StepReport, ThermalSolver, ThermalState, ACCURACY_FRACTION};
