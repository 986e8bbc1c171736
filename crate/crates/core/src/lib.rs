//! Decentralized annuity engine: mortality laws, the pool ledger, transfer
//! solvers, plan families, fairness evaluation and Monte Carlo statistics.

pub mod error;
pub mod transfers;
pub mod ledger;
pub mod mortality;
pub mod quadrature;
pub mod rng;
pub mod schemes;
pub mod montecarlo;
pub mod fairness;

pub use error::{Error, Result};
