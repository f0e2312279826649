use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("timestamp {t} lies outside segment ({start}, {end}]")]
    OutOfSegment { t: f64, start: f64, end: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dimension {0}; must be at least 1")]
    InvalidDimension(usize),
    #[error("negative variance {0}")]
    NegativeVariance(f64),
    #[error("interpolated position coincides with anchor {anchor}")]
    AnchorCoincidesWithPosition { anchor: usize },
    #[error("singular sensing geometry (norm {0:e} below 1e-12)")]
    SingularGeometry(f64),
    #[error("stale measurement at t={t}; terminal segment starts at {segment_start}")]
    StaleMeasurement { t: f64, segment_start: f64 },
    #[error("innovation covariance is not invertible")]
    SingularInnovation,
    #[error("insufficient data to initialize: {0}")]
    InsufficientInitData(String),
    #[error("stream not sorted by (t, seq) at record {index}")]
    UnsortedStream { index: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("covariance {index} is singular")]
    SingularCovariance { index: usize },
    #[error("scheduled timestamp {t} outside truth horizon [{start}, {end}]")]
    ScheduleOutOfRange { t: f64, start: f64, end: f64 },
    #[error("unknown anchor id {0}")]
    UnknownAnchor(u32),
    #[error("non-finite measurement at t={0}")]
    NonFinite(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("schema violation at line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("refusing to overwrite existing file {0} (pass --force)")]
    WouldOverwrite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
