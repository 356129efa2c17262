use std::path::PathBuf;

/// Errors produced anywhere in the quality pipeline and its tooling.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt image file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },

    #[error("image is {width}x{height}, the minimum is {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid kernel specification: {0}")]
    InvalidSpec(String),

    #[error("kernel {kernel_width}x{kernel_height} does not fit a {width}x{height} map")]
    KernelTooLarge {
        kernel_width: usize,
        kernel_height: usize,
        width: usize,
        height: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("percentile of an empty distance list")]
    EmptyDistances,

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("line {line}: malformed manifest row: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("line {line}: unknown distortion category {label:?}")]
    UnknownCategory { line: usize, label: String },

    #[error("line {line}: duplicate reference/distorted pair")]
    DuplicatePair { line: usize },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("{failed} of {total} records failed, aborting")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs (bad files, bad
    /// configuration, mismatched images) rather than by the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::EmptyDistances | Error::DegenerateData(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
