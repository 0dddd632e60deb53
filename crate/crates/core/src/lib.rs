//! Robust model predictive control by scenario optimization.
//!
//! The crate compiles sampled uncertainty scenarios into a convex
//! finite-horizon program ([`fhocp`]), solves it with an embedded cone solver
//! ([`solver`]), runs the receding-horizon controller ([`mpcs`]) and checks
//! the resulting probabilistic guarantees by Monte Carlo ([`harness`]).

pub mod error;
pub mod fhocp;
pub mod harness;
pub mod model;
pub mod mpcs;
pub mod prediction;
pub mod rng;
pub mod samplesize;
pub mod solver;
pub mod terminal;

pub use error::{Error, Result};
