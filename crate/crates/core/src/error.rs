use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Cholesky factorization failed with jitter up to {jitter:e}")]
    Cholesky { jitter: f64 },

    #[error("only {kept} points kept, need at least {min}")]
    TooFewPoints { kept: usize, min: usize },

    #[error("intensity {intensity} exceeds thinning bound {bound}")]
    BoundViolated { intensity: f64, bound: f64 },

    #[error("zero spread in coordinates")]
    ZeroSpread,

    #[error("known-weight mode requires selection probabilities")]
    MissingSelectionProb,

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("log density is not finite")]
    NonFinite,

    #[error("divergence rate {rate:.3} after burn-in exceeds 0.2")]
    Divergent { rate: f64 },

    #[error("chain is stuck: acceptance rate {rate:.4} after burn-in")]
    StuckChain { rate: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
