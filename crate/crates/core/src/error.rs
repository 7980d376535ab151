use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("user position coincides with an antenna element or the array center")]
    CoincidentUser,
    #[error("invalid codebook grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("channel of user {0} is identically zero")]
    ZeroChannel(usize),
    #[error("channel Gram matrix is rank deficient (condition number {cond:e})")]
    RankDeficient { cond: f64 },
    #[error("codebook has {codewords} codewords but {users} users must be served")]
    InsufficientCodebook { users: usize, codewords: usize },
    #[error("calibration set contains a single class")]
    SingleClass,
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("malformed file at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("blob checksum does not match manifest")]
    ChecksumMismatch,
    #[error("prediction record {0} has no matching dataset record")]
    IdMismatch(u64),
    #[error("dataset has no oracle targets")]
    MissingOracle,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
