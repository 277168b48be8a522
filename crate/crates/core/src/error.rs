use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("no threshold: histogram has a single distinct value")]
    NoThreshold,

    #[error("template: {0}")]
    Template(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("malformed shape: {0}")]
    MalformedShape(String),

    #[error("corrupt container at byte {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },

    #[error("{codec} backend failed{}: {reason}", bin.map(|b| format!(" on bin {b}")).unwrap_or_default())]
    Backend {
        codec: &'static str,
        bin: Option<usize>,
        reason: String,
    },

    #[error("backend {0} is not available in this build")]
    BackendUnavailable(&'static str),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("decode limit exceeded: {0}")]
    Limit(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("internal consistency failure: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn corrupt(offset: usize, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        offset,
        reason: reason.into(),
    }
}
