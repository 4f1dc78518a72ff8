//! Hybrid quantum-classical task runtime with a simulated QPU accelerator.
//!
//! The crate layers four pieces. [`statevector`] is an exact complex
//! amplitude simulator of up to 24 qubits. [`circuit`] is the gate-level
//! instruction representation the devices accept, with validation,
//! moment-based depth, and a swap-free inverse-Fourier builder. [`qpu`]
//! wraps the simulator in a device model: shot loops, trajectory noise,
//! mid-shot sessions for classical feedback, and a latency model that
//! prices every offload round trip. [`runtime`] schedules graphs of
//! circuit jobs, session fragments, and classical callbacks over a virtual
//! clock, synchronously or asynchronously, and produces traces and
//! metrics; [`algorithms`] expresses iterative and parallel eigenphase
//! recovery and an error-detected variational loop on top of it.

pub mod algorithms;
pub mod circuit;
pub mod error;
pub mod qpu;
pub mod rng;
pub mod runtime;
pub mod statevector;

pub use circuit::{build_iqft, iqft_readout_permutation, Circuit, Instruction, InstructionKind};
pub use error::{Error, Result};
pub use qpu::{
    estimate_exec_time, ExecutionResult, FragmentOutcome, LatencyModel, NoiseParams, QpuDevice,
};
pub use runtime::{
    compute_metrics, infer_dependencies, metrics_csv, trace_json, ExecMode, Metrics, RunOutcome,
    Runtime, TaskGraph, TaskId, TraceEvent,
};
pub use statevector::{Amplitude, GateMatrix, NoiseKind, PauliAxis, StateVector};

pub use algorithms::{
    correction_angle, decode_bits, encode_phase, ipe_sync, qpe_parallel, vqe_error_detected,
    IpeResult, PhaseEstimationProblem, VqeProblem, VqeResult, VqeVariant,
};
