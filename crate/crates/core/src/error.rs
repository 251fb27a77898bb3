use thiserror::Error;

#[derive(Debug, Error)]
pub enum FklError {
    #[error("resolution: {n_modes} modes requested but a {m_points}-point grid holds at most {max_modes}")]
    Resolution {
        n_modes: usize,
        m_points: usize,
        max_modes: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {0} outside the admissible range")]
    TimeOutOfRange(f64),

    #[error("closed form unavailable: {0}")]
    ClosedFormUnavailable(String),

    #[error("simulation diverged on path {path} at step {step}")]
    Divergence { path: usize, step: usize },

    #[error("non-finite training loss at iteration {iteration} (batch stream {iteration} of seed {batch_seed})")]
    NonFiniteLoss { iteration: usize, batch_seed: u64 },

    #[error("off-grid snapshot time {0}")]
    OffGrid(f64),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FklError>;
