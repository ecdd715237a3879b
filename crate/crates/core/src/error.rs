use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("mass mismatch: target density carries {target:.12e}, current density carries {current:.12e}")]
    MassMismatch { target: f64, current: f64 },

    #[error("CFL number {cfl:.4} exceeds 1; largest admissible time step is {admissible_dt:.6e}")]
    CflExceeded { cfl: f64, admissible_dt: f64 },

    #[error("non-finite velocity for agent {agent}")]
    NonFiniteAgent { agent: usize },

    #[error("non-finite state at step {step}: {what}")]
    NonFiniteState { step: usize, what: String },

    #[error("no stability guarantee: 2*Kp = {two_kp} does not exceed the divergence bound {w_hat}")]
    NoGuarantee { two_kp: f64, w_hat: f64 },

    #[error("config {path}: line {line}: {reason}")]
    Config {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors that come from bad user input rather than a numerical fault.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::Config { .. }
                | Error::GridMismatch(_)
                | Error::Io { .. }
        )
    }
}
