use thiserror::Error;

/// Errors raised by the engine. Infeasibility is kept apart from validation so
/// callers can map them to different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("infeasible transfer system: {0}")]
    Infeasible(Infeasibility),
    #[error("quadrature did not reach tolerance {tolerance:e} (residual {residual:e})")]
    Quadrature { tolerance: f64, residual: f64 },
    #[error("solver failed to converge: {0}")]
    Convergence(String),
    #[error("negative balance {balance} for account {account} at t={time}")]
    NegativeBalance { account: usize, time: f64, balance: f64 },
    #[error("clearing violated at t={time}: residual {residual:e}")]
    Clearing { time: f64, residual: f64 },
    #[error("conservation violated at t={time}: residual {residual:e}")]
    Conservation { time: f64, residual: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("input error: {0}")]
    Input(String),
}

/// The dominance inequality `sum_{j != i} w_j >= w_i` that failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Infeasibility {
    pub index: usize,
    pub weight: f64,
    pub others: f64,
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "survivor {} has weight {} exceeding the sum of the others {} (need sum_{{j != {}}} w_j >= w_{})",
            self.index, self.weight, self.others, self.index, self.index
        )
    }
}

impl Error {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
