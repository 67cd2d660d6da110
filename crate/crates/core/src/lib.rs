//! Decentralized bilevel optimization.
//!
//! `n` agents on a communication graph minimize
//! `Φ(x) = (1/n) Σ f_i(x, y*(x))` where `y*(x)` minimizes the strongly convex
//! average `(1/n) Σ g_i(x, y)`. The crate provides the mixing layer, the
//! problem oracles, the Jacobian-Hessian-inverse product (JHIP) oracle, the
//! four hypergradient estimators and the DBO, DBOGT and DSBO solvers.

pub mod csvio;
pub mod error;
pub mod harness;
pub mod hypergrad;
pub mod jhip;
pub mod network;
pub mod numerics;
pub mod problem;
pub mod rng;
pub mod schedule;
pub mod solvers;

pub use error::{Error, Result};
pub use rng::RngPlan;
pub use schedule::StepSchedule;

/// Dense vector of the default precision.
pub type Vector = numerics::DVector<f64>;
/// Dense matrix of the default precision.
pub type Matrix = numerics::DMatrix<f64>;
/// Mixing matrix of the default precision.
pub type Network = network::WeightMatrix<f64>;
