use thiserror::Error;

/// Errors raised by the simulation engines and their inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    Lattice(String),

    #[error("lattice configuration error: {0}")]
    Config(String),

    #[error("invalid observable: {0}")]
    Observable(String),

    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("singular value decomposition failed")]
    Svd,

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("cannot fit extrapolation: {0}")]
    Unfit(String),

    #[error("result tables do not match: {0}")]
    KeyMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Lattice(_) => "lattice",
            Error::Config(_) => "config",
            Error::Observable(_) => "observable",
            Error::UnknownObservable(_) => "unknown_observable",
            Error::Shape(_) => "shape",
            Error::NonFinite(_) => "non_finite",
            Error::Svd => "svd",
            Error::ResourceLimit(_) => "resource_limit",
            Error::Unfit(_) => "unfit",
            Error::KeyMismatch(_) => "key_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
