//! Zero-range process workbench: microscopic rates and their equilibrium
//! structure, an exact lattice simulator, a finite-volume solver for the
//! controlled skeleton equation, the large-deviations rate functional and an
//! experiment harness tying them together.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod field;
pub mod numerics;
pub mod rates;
pub mod lattice_sim;
pub mod skeleton_pde;
pub mod rate_functional;
pub mod harness;
