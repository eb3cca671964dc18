use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Scene construction or validation failed (bad simplex, coincident emitters, ...).
    #[error("invalid scene: {0}")]
    InvalidScene(String),

    /// Two emitter positions are numerically coincident; the Gram matrix is singular.
    #[error("degenerate positions: minimum pairwise separation {min_sep:.3e} below {threshold:.3e}")]
    DegeneratePositions { min_sep: f64, threshold: f64 },

    /// A vector expected on the probability simplex is not.
    #[error("invalid simplex vector: {0}")]
    InvalidSimplex(String),

    /// A matrix is numerically rank-deficient where full rank is required.
    #[error("numerical rank deficiency: {0}")]
    RankDeficient(String),

    /// A matrix inversion or linear solve failed.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// A scalar argument is outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    InvalidParameter(String),

    /// An operation that needs data received none (or too little).
    #[error("empty or insufficient input: {0}")]
    EmptyInput(String),

    /// A discretization is too coarse for the requested accuracy.
    #[error("grid resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    /// Random scene generation exhausted its rejection budget.
    #[error("rejection sampling budget exceeded: {0}")]
    RejectionBudget(String),

    /// Experiment configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Output directory holds results from a different configuration.
    #[error("output hash mismatch: {0}")]
    OutputHashMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code the CLI maps this error to: 2 for configuration
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Io(_)
            | Error::Serde(_)
            | Error::Csv(_)
            | Error::OutputHashMismatch(_)
            | Error::InvalidScene(_)
            | Error::EmptyInput(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
