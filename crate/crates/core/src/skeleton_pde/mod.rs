//! Finite-volume solver for the controlled skeleton equation
//! `∂ₜρ = ΔΦ(ρ) + η_visc Δρ − ∇·(σ(ρ)g)` on the periodic unit torus, with
//! energy, relative-entropy and kinetic diagnostics.
//!
//! The torus stands in for `R^d`: every smooth periodic function is an
//! admissible test function, so compact support is not imposed here.

mod control;
mod diagnostics;
mod ops;
mod solver;

pub use control::{ControlField, Potential};
pub use diagnostics::{
    energy_report, entropy_dissipation, kinetic_diagnostics, uniqueness_probe, weak_residual, ChiSlice, EnergyReport,
    KineticReport, UniquenessReport,
};
pub use ops::{interpolate_cells, Stencil};
pub use solver::{
    solve_fokker_planck, solve_skeleton, ControlKind, Scheme, SolutionBundle, SolverParams, DEGENERATE_FLOOR,
};

use thiserror::Error;

use crate::rates::RateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("explicit step dt = {dt:.3e} exceeds the stability limit {limit:.3e}")]
    Cfl { dt: f64, limit: f64 },
    #[error("negative density {value:.3e} in cell {cell} at step {step} (t = {time:.6})")]
    Negative { step: usize, time: f64, cell: usize, value: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Rate(#[from] RateError),
}
