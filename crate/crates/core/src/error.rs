use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// Every packet is lost, so the cost grows without bound.
    #[error("cost diverges: {0}")]
    Divergent(&'static str),

    #[error("rho = {rho} is outside the domain {domain}")]
    Domain { rho: f64, domain: &'static str },

    #[error("quadrature did not converge: value {partial} with error bound {error_bound:e}")]
    NumericalFailure { partial: f64, error_bound: f64 },

    /// A simulated inter-event interval ran past the horizon cap.
    #[error("horizon {horizon} exceeded after {elapsed} time units ({steps} steps)")]
    HorizonExceeded {
        horizon: f64,
        elapsed: f64,
        steps: u64,
        partial_cost: f64,
    },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> Self {
        Error::InvalidParameter {
            name,
            value,
            reason,
        }
    }
}
