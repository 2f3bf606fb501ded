use thiserror::Error;

/// Errors produced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A diagonal channel entry that must be inverted is zero or not finite.
    #[error("singular channel H[{rx}{tx}] at slot {slot}")]
    SingularChannel { rx: usize, tx: usize, slot: usize },

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("ill-conditioned covariance: {0}")]
    IllConditioned(String),

    #[error("degenerate effective channel: {0}")]
    DegenerateEffectiveChannel(String),

    /// Every realization in a set was degenerate.
    #[error("all {0} realizations were degenerate")]
    AllDegenerate(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
