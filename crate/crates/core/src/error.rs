use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum FomoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point outside the input domain: {0}")]
    Domain(String),

    #[error("kernel matrix is ill-conditioned (jitter {jitter:e} exhausted)")]
    IllConditioned { jitter: f64 },

    #[error("all KDE weights are zero")]
    DegenerateWeights,

    #[error("KDE needs at least two data points, got {0}")]
    InsufficientData(usize),

    #[error("model is not trained")]
    Untrained,

    #[error("training diverged in ensemble member {member}")]
    TrainingDiverged { member: usize },

    #[error("normalized MSE undefined: all reference outputs are zero")]
    UndefinedNormalization,

    #[error("solver blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("solver unstable at t = {time}: norm grew by {growth:e}")]
    Unstable { time: f64, growth: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl FomoError {
    /// Numerical failures (as opposed to bad inputs or configuration).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            FomoError::IllConditioned { .. }
                | FomoError::TrainingDiverged { .. }
                | FomoError::BlowUp { .. }
                | FomoError::Unstable { .. }
                | FomoError::DegenerateWeights
                | FomoError::UndefinedNormalization
        )
    }
}

impl From<serde_json::Error> for FomoError {
    fn from(e: serde_json::Error) -> Self {
        FomoError::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for FomoError {
    fn from(e: toml::de::Error) -> Self {
        FomoError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FomoError>;
