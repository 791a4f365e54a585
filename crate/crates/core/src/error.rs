use std::path::PathBuf;

/// Errors raised by the gadget pipeline, the simulator and the store.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("constraint has an empty support (all coefficients are zero)")]
    EmptySupport,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("qubit count {0} is outside the supported range 1..=24")]
    QubitCount(usize),

    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },

    #[error("variable index {index} out of range for {n} variables")]
    VariableOutOfRange { index: usize, n: usize },

    #[error("problem too large for exhaustive treatment: {what} = {value} exceeds {limit}")]
    TooLarge {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("expected {expected} angles for {what}, got {actual}")]
    AngleCount {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("instance has no feasible solution")]
    NoFeasibleSolution,

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("gadget does not match the instance constraints: {0}")]
    GadgetMismatch(String),

    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("rejection sampling gave up after {0} attempts")]
    RejectionCap(usize),

    #[error("gadget store {path}: {message}")]
    StoreCorrupt { path: PathBuf, message: String },

    #[error("gadget store {path}: unsupported version {found} (expected {expected})")]
    StoreVersion {
        path: PathBuf,
        found: u64,
        expected: u64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
