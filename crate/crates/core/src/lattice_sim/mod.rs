//! Exact simulation of the zero-range process on the discrete torus and the
//! observables built on its trajectories.

mod counterexample;
mod lattice;
mod observables;
mod profile;
mod simulate;

pub use counterexample::{
    counterexample_profile, select_two_block_sites, CounterexampleD2, CounterexampleD3, CounterexampleParams,
    CounterexampleReport, TwoBlockSites,
};
pub use lattice::{Configuration, Lattice, SumTree, DEFAULT_MAX_SITES};
pub use observables::{
    box_average, box_mean, box_radius, coarse_grain, pair_with_test, two_block_observable, v_functional,
    CylinderObservable, ObservableKind, VReport,
};
pub use profile::{
    continuum_dissipation, dirichlet_local_eq, local_equilibrium_sample, DirichletReport, LocalEquilibrium,
    ProfileSpec,
};
pub use simulate::{simulate, uniform_times, SimOptions, Simulator, Trajectory};

use thiserror::Error;

use crate::rates::RateError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("constraint violated: {0}")]
    Validation(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error(transparent)]
    Rate(#[from] RateError),
}
