//! Reference hybrid workloads expressed as task-graph programs: iterative
//! phase estimation with classical feedback, parallel phase estimation with
//! an inverse-Fourier barrier, and an error-detected variational loop.

mod phase;
mod vqe;

pub use phase::{
    correction_angle, decode_bits, decode_measured_index, encode_phase, ipe_sync, qpe_parallel,
    run_ipe, run_ipe_ensemble, run_qpe, IpeResult, PhaseEncoding, PhaseEstimationProblem,
    ResourceSummary,
};
pub use vqe::{run_vqe, vqe_error_detected, AngleEstimate, VqeProblem, VqeResult, VqeVariant};
