//! Jump-rate models, their invariant measures and the macroscopic
//! nonlinearity `φ` together with the entropy-related scalar functions.

mod concavity;
mod entropy;
mod equilibrium;
mod jump;
mod moment;
mod nonlinearity;

pub use concavity::{defective_concavity_check, ConcavityReport};
pub use entropy::relative_entropy_field;
pub use equilibrium::{
    fugacity_of_density, mean_density, partition_z, sample_equilibrium, EquilibriumLaw, PartitionValue,
};
pub(crate) use equilibrium::draw;
pub use jump::{check_assumptions, AssumptionReport, JumpRate, JumpRateSpec};
pub use moment::{moment_check, MomentReport, MomentStatus, MomentWeight, WeightFunction};
pub use nonlinearity::{
    build_nonlinearity, linspace, ClosedForm, GridNode, Interpolation, NonlinearityKind, NonlinearityModel,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("partition series diverges at fugacity {fugacity} (critical fugacity {critical})")]
    Divergent { fugacity: f64, critical: f64 },
    #[error("density {density} is beyond the reachable range (sup density ≈ {sup_density})")]
    OutOfRange { density: f64, sup_density: f64 },
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("inconsistent: {0}")]
    Inconsistent(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("domain error: {0}")]
    Domain(String),
}
