use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure modes of
/// the index, codec, memory, transport, and dataset layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: at least one record is required")]
    EmptyInput,

    #[error("search on an empty graph")]
    EmptyGraph,

    #[error("duplicate vector id {0}")]
    DuplicateId(u64),

    #[error("unknown cluster id {0}")]
    UnknownCluster(u32),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("bad magic: expected {expected:?}, got {got:?}")]
    BadMagic { expected: [u8; 4], got: [u8; 4] },

    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },

    #[error("truncated input at byte offset {offset}")]
    Truncated { offset: usize },

    #[error("corrupt encoding: {0}")]
    Corrupt(String),

    #[error("capacity exceeded: need {needed} bytes, {available} available")]
    CapacityExceeded { needed: u64, available: u64 },

    #[error("out of bounds: offset {offset} + len {len} past end of region")]
    OutOfBounds { offset: u64, len: u64 },

    #[error("misaligned access at offset {offset}: 4-byte alignment required")]
    Misaligned { offset: u64 },

    #[error("transport is disconnected")]
    Disconnected,

    #[error("wire protocol error: {0}")]
    Protocol(String),

    #[error("no registered memory region")]
    NoRegion,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Coarse category used for CLI exit codes.
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            DimensionMismatch { .. }
            | EmptyInput
            | BadMagic { .. }
            | CrcMismatch { .. }
            | Truncated { .. }
            | Corrupt(_)
            | DuplicateId(_)
            | EmptyGraph
            | UnknownCluster(_) => ErrorCategory::Dataset,
            Disconnected | Protocol(_) | Io(_) | NoRegion => ErrorCategory::Connection,
            CapacityExceeded { .. } | OutOfBounds { .. } | Misaligned { .. } => {
                ErrorCategory::Capacity
            }
            InvalidParameter(_) | Config(_) => ErrorCategory::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Dataset,
    Connection,
    Capacity,
    Config,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Dataset => 2,
            ErrorCategory::Connection => 3,
            ErrorCategory::Capacity => 4,
            ErrorCategory::Config => 5,
        }
    }
}
