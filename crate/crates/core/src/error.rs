use thiserror::Error;

/// Errors raised anywhere in the compositing toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("{context}: expected {expected} channel(s), found {found}")]
    ChannelCount {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{0}")]
    TooSmall(String),

    #[error("insufficient data: need at least {needed} usable pixels, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("parameter `{field}` = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("comparison graph is disconnected; unreachable methods: {}", .0.join(", "))]
    Disconnected(Vec<String>),

    #[error("methods without any win: {}", .0.join(", "))]
    ZeroWins(Vec<String>),

    #[error("scores not identifiable; these methods never lose against the rest: {}", .0.join(", "))]
    NonIdentifiable(Vec<String>),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("invalid format: {0}")]
    Format(String),

    #[error("refiner failed: {0}")]
    Refiner(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics (degenerate fits, unidentifiable rankings, domain
    /// violations) as opposed to I/O or parsing problems.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::Image(_) | Error::Json(_) | Error::Csv(_) | Error::Parse { .. } | Error::Format(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
