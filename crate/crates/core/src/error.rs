use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("bad grid scheme: {0}")]
    BadScheme(String),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` requires parameter `{param}`")]
    MissingParam { model: String, param: String },
    #[error("invalid parameter `{param}`: {reason}")]
    InvalidParam { param: String, reason: String },
    #[error("non-finite coefficient at path {path}, cell {cell} (t = {t})")]
    CoefficientEvaluation { path: usize, cell: usize, t: f64 },
    #[error("covariance density is not positive semidefinite at path {path}, cell {cell} (min eigenvalue {min_eigenvalue:e})")]
    NonPsdCovariance { path: usize, cell: usize, min_eigenvalue: f64 },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),
    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NonPsd(f64),
    #[error("structure condition holds; there is no bounded-variation arbitrage to construct")]
    NoViolation,
    #[error("structure condition violated on {fraction:.3e} of cells")]
    StructureViolated { fraction: f64 },
    #[error("need at least {required} paths, got {got}")]
    TooFewPaths { required: usize, got: usize },
    #[error("wealth process `{id}` takes negative value {min:e}")]
    NegativeWealth { id: String, min: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
