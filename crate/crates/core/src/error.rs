use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid operation: {0}")]
    InvalidOperation(String),

    #[error(transparent)]
    Replay(#[from] ReplayError),

    #[error("state is not of background-plus-GHZ form: {0}")]
    NotClusterForm(String),

    #[error("malformed tape: {0}")]
    Tape(String),

    #[error("tape checksum mismatch")]
    Checksum,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("scaling analysis failed: {0}")]
    Fss(String),

    #[error("engine invariant violated at seed {seed:#x}, stream {stream}: {message}")]
    Trajectory { seed: u64, stream: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Divergence between a recorded tape and the engine consuming it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("tape exhausted at entry {0}")]
    Exhausted(usize),

    #[error("entry {index}: engine expected {expected}, tape holds {found}")]
    KindMismatch {
        index: usize,
        expected: &'static str,
        found: &'static str,
    },

    #[error("entry {index}: deterministic outcome {engine} disagrees with tape {tape}")]
    OutcomeMismatch { index: usize, engine: i8, tape: i8 },

    #[error("{0} tape entries left unconsumed")]
    Unconsumed(usize),
}
