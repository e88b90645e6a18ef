use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The analytic construction needs an assumption the inputs do not meet
    /// (for example `gamma > 1` or a finite jump mean).
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("quadrature did not converge on [{lo}, {hi}]: last estimates {previous:e} and {last:e}")]
    Quadrature {
        lo: f64,
        hi: f64,
        previous: f64,
        last: f64,
    },

    /// Fixed-point iteration hit its cap. `deltas` holds the weighted-norm
    /// increments of every iteration performed.
    #[error("fixed-point iteration did not converge after {iterations} iterations (last delta {last_delta:e})")]
    NonConvergence {
        iterations: usize,
        last_delta: f64,
        deltas: Vec<f64>,
    },

    #[error("{0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. } | Error::Config(_) | Error::Io(_) => 1,
            Error::Quadrature { .. } | Error::NonConvergence { .. } | Error::Numerical(_) => 2,
            Error::HypothesisViolated(_) => 3,
        }
    }
}
