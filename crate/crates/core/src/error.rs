use std::path::PathBuf;

use crate::domain::NodeId;
use crate::transport::MessageKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("k = {k} is out of range for n = {n} (need {min} <= k <= {max})")]
    KOutOfRange { k: usize, n: usize, min: usize, max: usize },

    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("midpoint of an empty interval: lo = {lo} > hi = {hi}")]
    EmptyInterval { lo: u64, hi: u64 },

    #[error("filter interval has lower bound above upper bound")]
    InvertedFilter,

    #[error("{0:?} is not a broadcast message kind")]
    NotBroadcast(MessageKind),

    #[error("extremum protocol started with no participants")]
    EmptyProtocol,

    #[error("{participants} participants exceed the protocol bound N = {bound}")]
    TooManyParticipants { participants: usize, bound: u64 },

    #[error("protocol bound N must be at least 1")]
    ZeroBound,

    #[error("node {0} does not exist")]
    UnknownNode(NodeId),

    #[error("snapshot for time {got} does not follow time {previous}")]
    TimeGap { previous: u64, got: u64 },

    #[error("time step {t} is outside the trace (1..={len})")]
    TimeOutOfRange { t: u64, len: u64 },

    #[error("invalid window [{t1}, {t2}] for a trace of length {len}")]
    InvalidWindow { t1: u64, t2: u64, len: u64 },

    #[error("invalid trace dimensions: {0}")]
    InvalidDimensions(String),

    #[error("filter violation handler invoked without any communicated value")]
    NothingCommunicated,

    #[error("{path}:{line}: {msg}")]
    Csv { path: PathBuf, line: u64, msg: String },

    #[error("top-k mismatch at t = {t}: monitor {monitor:?}, oracle {oracle:?}")]
    OracleMismatch { t: u64, monitor: Vec<NodeId>, oracle: Vec<NodeId> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
