//! Upper rate functional: `sup_H J(H, ρ)` over a finite test basis, and
//! the control-norm route that inverts the controlled equation for `H`.

mod basis;
mod functional;
mod recover;

pub use basis::{wave_vectors, Combination, HEval, SpaceTimeFunction, SpatialMode, TestBasis, Trig};
pub use functional::{
    assemble, i_up, j_functional, maximize, static_part, variational_d, DiffusionConvention, Maximum, QuadraticForm,
    RateMethod, RateReport, VariationalReport,
};
pub use recover::{
    rate_total, recover_control, weighted_gradient_error, ControlRecovery, RateTotal, RecoveryOptions, TimeDifference,
};

use thiserror::Error;

use crate::rates::RateError;
use crate::skeleton_pde::PdeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateFnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("ellipticity lost: {0}")]
    Ellipticity(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error(transparent)]
    Pde(#[from] PdeError),
    #[error(transparent)]
    Rate(#[from] RateError),
}
