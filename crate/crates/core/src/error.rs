use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameter value.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    /// Explicit time step exceeds the advective stability limit.
    #[error("CFL violation: dt = {dt} exceeds limit {limit} (max velocity {max_velocity})")]
    Cfl {
        dt: f64,
        limit: f64,
        max_velocity: f64,
    },

    #[error("non-finite value {context}")]
    NonFinite { context: String },

    #[error("training diverged at step {step} (lr = {lr}): loss = {loss}")]
    TrainingDiverged { step: usize, lr: f64, loss: f64 },
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }
}
