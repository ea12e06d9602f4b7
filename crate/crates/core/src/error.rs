use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("covariance sum is numerically singular (det = {det:e})")]
    SingularCovariance { det: f64 },

    #[error("operation requires a fixed squeezing angle")]
    NotFixedAngle,

    #[error("metric determinant is not positive ({0:e})")]
    NonPositiveDeterminant(f64),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("SVM dual ascent did not converge after {iterations} iterations (max KKT residual {max_residual:e})")]
    NotConverged { iterations: usize, max_residual: f64 },

    #[error("Fisher score is degenerate: within-class scatter vanishes")]
    DegenerateFisher,

    #[error("no sign change of the decision function found near ({x1}, {x2})")]
    NoBoundary { x1: f64, x2: f64 },

    #[error("decision function gradient vanishes at the boundary point")]
    VanishingGradient,

    #[error("rejection sampling exceeded {0} draws")]
    RejectionLimit(u64),

    #[error("seed #{index} (seed {seed}) failed: {source}")]
    SeedFailure {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that come from a bad configuration rather than a
    /// failure while running. The CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParams(_))
    }
}
