use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("shape error: {0}")]
    ShapeError(String),

    /// A mantissa block exceeded the element format's largest finite value.
    /// This means a renormalization step was skipped and indicates a bug.
    #[error("mantissa {value} exceeds the element format limit {limit}")]
    MantissaOverflow { value: f64, limit: f64 },

    #[error("unsupported transform size {0}: must be a power of two >= 2")]
    UnsupportedSize(usize),

    #[error("unknown format {name:?}; known formats: {known}")]
    UnknownFormat { name: String, known: String },

    #[error("invalid format: {0}")]
    InvalidFormat(String),

    #[error("reference image is all zero (or constant)")]
    DegenerateReference,

    #[error("image side {side} is smaller than the {window}x{window} SSIM window")]
    WindowTooLarge { side: usize, window: usize },

    #[error("configuration error in `{field}`: {message}")]
    ConfigError { field: &'static str, message: String },

    #[error("bad magic: expected \"MXCG\"")]
    BadMagic,

    #[error("unsupported MXCG version {0}")]
    BadVersion(u32),

    #[error("file is truncated")]
    TruncatedFile,

    #[error("file has {0} trailing bytes after the payload")]
    TrailingData(usize),

    #[error("payload contains a non-finite value")]
    NonFinitePayload,

    #[error("bad domain tag {0}")]
    BadDomain(u8),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
