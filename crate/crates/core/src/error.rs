use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("forward map produced a non-finite value at covariate {x}")]
    ModelEvaluation { x: f64 },

    #[error("integration failed: non-finite state at x = {x}")]
    IntegrationFailure { x: f64 },

    #[error("unsupported model: {0}")]
    UnsupportedModel(&'static str),

    /// The particle flow produced a non-finite coordinate. `last_finite`
    /// holds the ensemble (row-major, `N × p`) before the failing update.
    #[error("particle flow diverged at iteration {iteration} with step {step}")]
    Divergence {
        iteration: u64,
        step: f64,
        last_finite: Vec<f64>,
    },

    #[error("fixed-point iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    /// True for failures caused by numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ModelEvaluation { .. }
                | Error::IntegrationFailure { .. }
                | Error::Divergence { .. }
                | Error::NonConvergence { .. }
        )
    }
}
