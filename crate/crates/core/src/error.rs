use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate feature: row {row} has zero norm")]
    DegenerateFeature { row: usize },

    #[error("pixel outside feature grid: ({u}, {v})")]
    OutsideGrid { u: f64, v: f64 },

    #[error("feature map geometry mismatch: {0}")]
    FeatureGeometry(String),

    #[error("insufficient sampling space: {found} eligible points, need at least 2")]
    InsufficientSamplingSpace { found: usize },

    #[error("extrinsics not rigid: {0}")]
    NotRigid(String),

    #[error("truncated record: file length {len} is not a multiple of {record} bytes")]
    TruncatedRecord { len: u64, record: usize },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    Version(u32),

    #[error("payload size mismatch: header expects {expected} values, found {found}")]
    PayloadSize { expected: usize, found: usize },

    #[error("object placement failed: {0}")]
    Placement(String),

    #[error("stale cache: {0}")]
    StaleCache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed inputs or configuration, as opposed
    /// to failures of the environment (IO) or of the computation itself.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Placement(_) | Error::StaleCache(_))
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}
