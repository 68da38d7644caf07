use thiserror::Error;

use crate::selection::SelectionTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent arguments.
    #[error("invalid input: {0}")]
    Input(String),

    /// The inducing Gram matrix could not be factorized even at the largest jitter,
    /// or a conditional variance came out materially negative.
    #[error("conditioning failure: {0}")]
    Conditioning(String),

    /// exp() overflowed while integrating the intensity at a quadrature node.
    #[error("intensity overflow at quadrature node {node} (log-value {log_value})")]
    Range { node: usize, log_value: f64 },

    /// Greedy selection hit its iteration cap. The partial trace is attached.
    #[error("inducing-point selection did not converge: {message}")]
    Selection {
        message: String,
        trace: Box<SelectionTrace>,
    },

    /// A posterior summary is too large to represent.
    #[error("overflow: {0}")]
    Overflow(String),

    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn conditioning(msg: impl Into<String>) -> Self {
        Error::Conditioning(msg.into())
    }

    /// True for failures caused by the numbers rather than by the caller.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Conditioning(_)
                | Error::Range { .. }
                | Error::Overflow(_)
                | Error::Sampler(_)
                | Error::Internal(_)
        )
    }
}
