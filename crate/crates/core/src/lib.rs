//! Federated interior-point method for block-structured convex programs
//!
//! ```text
//! min c^T x   s.t.  A x = b,  x in K_1 x K_2 x ... x K_m
//! ```
//!
//! Column blocks of `A` (and the barrier for each `K_i`) live on clients. Every
//! round the server assembles a sketch-compressed Newton projection from the
//! clients' sketched uploads and broadcasts the step back.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! threaded transport live in the `fedipm` companion crate.
//!
//! Module map:
//! - [`sketch`]: AMS / SRHT sketch matrices and their estimators.
//! - [`barrier`]: self-concordant barriers for the per-block sets.
//! - [`newton`]: exact and sketched projections, Newton deltas, error evaluators.
//! - [`centralpath`]: the path-following driver, initial point and termination.
//! - [`erm`]: reduction of empirical risk minimization to the conic form.
//! - [`fednet`]: client/server protocol, wire format, ledger and baselines.
//! - [`instances`], [`reference`]: problem generators and brute-force optima.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod barrier;
pub mod centralpath;
pub mod erm;
mod error;
pub mod fednet;
pub mod instances;
pub mod linalg;
pub mod newton;
pub mod reference;
pub mod sketch;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
