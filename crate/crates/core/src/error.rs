//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator, device model, runtime, and algorithms.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("qubit count {0} outside supported range 1..=24")]
    QubitCountOutOfRange(usize),
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },
    #[error("classical bit {index} out of range for {num_clbits} bits")]
    ClbitOutOfRange { index: usize, num_clbits: usize },
    #[error("control and target refer to the same qubit {0}")]
    QubitClash(usize),
    #[error("matrix dimension {0} is not 2 or 4")]
    BadMatrixDimension(usize),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("state norm {0:.3e} below tolerance; register is degenerate")]
    DegenerateNorm(f64),
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("phase power must be at least 1")]
    ZeroPower,
    #[error("precision must be in 1..=10, got {0}")]
    BadPrecision(usize),
    #[error("circuit failed validation: {0}")]
    InvalidCircuit(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("circuit needs {needed} qubits but device {device} provides {available}")]
    DeviceTooSmall {
        device: String,
        needed: usize,
        available: usize,
    },
    #[error("shots must be at least 1")]
    ZeroShots,
    #[error("shots per bit must be odd, got {0}")]
    EvenShots(u64),
    #[error("fragment needs {fragment_qubits} qubits / {fragment_clbits} clbits but the session holds {session_qubits} / {session_clbits}")]
    FragmentExceedsSession {
        fragment_qubits: usize,
        fragment_clbits: usize,
        session_qubits: usize,
        session_clbits: usize,
    },
    #[error("device {0} already has an active session")]
    SessionBusy(String),
    #[error("no active session on device {0}")]
    NoSession(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("session {0} is closed")]
    SessionClosed(u64),
    #[error("unknown device index {0}")]
    UnknownDevice(usize),
    #[error("dependency on unknown task {0}")]
    UnknownDependency(u64),
    #[error("graph is not dynamic; tasks may not be appended at run time")]
    NotDynamic,
    #[error("creg bit {bit} of session {session} was not declared as an input")]
    UndeclaredRead { session: u64, bit: usize },
    #[error("creg bit {bit} of session {session} has not been written")]
    UnwrittenBit { session: u64, bit: usize },
    #[error("task {0} failed: {1}")]
    TaskFailed(u64, String),
    #[error("phase bit list is empty")]
    EmptyBits,
    #[error("phase bits must be 0 or 1")]
    BadBit,
    #[error("angle grid must have at least 4 points, got {0}")]
    GridTooSmall(usize),
    #[error("no accepted samples; every angle was exhausted by retries")]
    NoAcceptedSamples,
}

pub type Result<T> = std::result::Result<T, Error>;
