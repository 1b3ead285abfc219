use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad category of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input: out-of-range parameters, malformed files, precondition failures.
    Validation,
    /// The filesystem refused a read or a write.
    Io,
    /// An internal invariant did not hold.
    Invariant,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("audio contains no samples")]
    ZeroLengthAudio,

    #[error("audio too short: {actual_sec:.3} s, need at least {min_sec:.3} s")]
    TooShort { actual_sec: f64, min_sec: f64 },

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRateMismatch { expected: u32, actual: u32 },

    #[error("length mismatch: {0} vs {1} samples")]
    LengthMismatch(usize, usize),

    #[error("silent input: reference RMS is zero")]
    SilentInput,

    #[error("{what} = {value} is outside [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector is not unit-norm (norm = {norm})")]
    NotNormalized { norm: f64 },

    #[error("count mismatch: header declares {declared}, payload holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("index is empty")]
    EmptyIndex,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("duplicate clip ({song_id}, {clip_index})")]
    DuplicateClip { song_id: String, clip_index: u32 },

    #[error("unknown song id {0:?}")]
    UnknownSong(String),

    #[error("unknown clip ({song_id}, {clip_index})")]
    UnknownClip { song_id: String, clip_index: u32 },

    #[error("unknown trial id {0:?}")]
    UnknownTrial(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Invariant(_) => ErrorKind::Invariant,
            _ => ErrorKind::Validation,
        }
    }
}

/// Fails with [`Error::OutOfRange`] unless `min <= value <= max`.
pub(crate) fn check_range(what: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what,
            value,
            min,
            max,
        })
    }
}
