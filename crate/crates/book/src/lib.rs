//! Guide chapters compiled as doc-tests.
//!
//! mdbook cannot run the snippets against this workspace, so each chapter
//! is pulled in as the docs of an empty module and `cargo test` runs it.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/rates.md")]
pub mod rates {}
#[doc = include_str!("../../../book/src/lattice.md")]
pub mod lattice {}
#[doc = include_str!("../../../book/src/skeleton.md")]
pub mod skeleton {}
#[doc = include_str!("../../../book/src/rate_functional.md")]
pub mod rate_functional {}
#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
#[doc = include_str!("../../../book/src/conventions.md")]
pub mod conventions {}
