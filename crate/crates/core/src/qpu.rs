//! The QPU device model: instruction parsing and validation on the way in,
//! shot-loop execution against a state vector, mid-shot sessions for
//! fragment execution with classical feedback, and a latency model that
//! prices each offload round trip.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Instruction, InstructionKind};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::statevector::{Amplitude, GateMatrix, NoiseKind, PauliAxis, StateVector, MAX_QUBITS};

const SHOT_STREAM: u64 = 1 << 62;
const JITTER_STREAM: u64 = 1 << 63;

/// Stochastic error knobs applied during execution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Depolarizing probability per qubit touched per gate instruction.
    pub p_depol_per_gate: f64,
    /// Probability of flipping each recorded measurement bit.
    pub p_readout_flip: f64,
}

impl NoiseParams {
    pub fn noiseless() -> Self {
        NoiseParams {
            p_depol_per_gate: 0.0,
            p_readout_flip: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p_depol_per_gate, self.p_readout_flip] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::BadProbability(p));
            }
        }
        Ok(())
    }
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self::noiseless()
    }
}

/// Job ordering on a busy device. Only FIFO is modeled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueuePolicy {
    #[default]
    Fifo,
}

/// Offload cost model, all times in microseconds of model time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    /// Register initialization per shot.
    pub t_init: f64,
    /// Per circuit moment.
    pub t_gate: f64,
    /// Per measurement.
    pub t_meas: f64,
    /// Host-to-device communication per submission.
    pub t_submit: f64,
    /// Device-to-host communication per submission.
    pub t_return: f64,
    pub queue_policy: QueuePolicy,
    /// Uniform multiplicative jitter on execution time: a factor drawn from
    /// [1, 1 + jitter_frac] per submission.
    pub jitter_frac: f64,
}

impl LatencyModel {
    /// Co-located coupling: 1 us each way.
    pub fn tight() -> Self {
        LatencyModel {
            t_init: 10.0,
            t_gate: 1.0,
            t_meas: 50.0,
            t_submit: 1.0,
            t_return: 1.0,
            queue_policy: QueuePolicy::Fifo,
            jitter_frac: 0.0,
        }
    }

    /// Remote access: 10^4 us each way, same device-side timings.
    pub fn cloud() -> Self {
        LatencyModel {
            t_submit: 1.0e4,
            t_return: 1.0e4,
            ..Self::tight()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "tight" => Some(Self::tight()),
            "cloud" => Some(Self::cloud()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in [
            self.t_init,
            self.t_gate,
            self.t_meas,
            self.t_submit,
            self.t_return,
            self.jitter_frac,
        ] {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::BadProbability(t));
            }
        }
        Ok(())
    }
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self::tight()
    }
}

/// Aggregated outcome of a shot-loop submission.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExecutionResult {
    /// Classical-register bitstrings (most significant bit leftmost) to
    /// occurrence counts; counts always sum to `shots`.
    pub counts: BTreeMap<String, u64>,
    pub shots: u64,
    /// Modeled wall time of the submission in microseconds, jitter included.
    pub model_exec_time: f64,
    /// Per-shot register snapshots, when recording was requested.
    pub per_shot_records: Option<Vec<String>>,
}

/// Bits measured while running one fragment, in execution order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FragmentOutcome {
    pub measured: Vec<(usize, u8)>,
}

/// Deterministic, jitter-free value of the submission time formula:
/// shots * (t_init + depth * t_gate + n_meas * t_meas) + t_submit + t_return.
pub fn estimate_exec_time(circuit: &Circuit, shots: u64, latency: &LatencyModel) -> f64 {
    shots as f64 * shot_exec_time(circuit, latency) + latency.t_submit + latency.t_return
}

fn shot_exec_time(circuit: &Circuit, latency: &LatencyModel) -> f64 {
    latency.t_init
        + circuit.depth() as f64 * latency.t_gate
        + circuit.num_measurements() as f64 * latency.t_meas
}

/// Jitter-free cost of one fragment round trip. Register initialization is
/// charged only on the first fragment of a session.
pub fn estimate_fragment_time(
    fragment: &Circuit,
    first_in_session: bool,
    latency: &LatencyModel,
) -> f64 {
    let init = if first_in_session {
        latency.t_init
    } else {
        0.0
    };
    init + fragment.depth() as f64 * latency.t_gate
        + fragment.num_measurements() as f64 * latency.t_meas
        + latency.t_submit
        + latency.t_return
}

struct SessionState {
    state: Option<StateVector>,
    creg: Vec<u8>,
    written: BTreeSet<usize>,
    rng: StreamRng,
    num_qubits: usize,
    num_clbits: usize,
    fragments_run: u64,
}

/// A quantum device: exclusive accelerator with its own noise, latency, and
/// seeded random stream. Replaying a freshly constructed device with the
/// same seed reproduces every result bit for bit.
pub struct QpuDevice {
    device_id: String,
    max_qubits: usize,
    noise: NoiseParams,
    latency: LatencyModel,
    seed: u64,
    shot_counter: u64,
    submission_counter: u64,
    session: Option<SessionState>,
}

impl QpuDevice {
    pub fn new(
        device_id: impl Into<String>,
        max_qubits: usize,
        noise: NoiseParams,
        latency: LatencyModel,
        seed: u64,
    ) -> Result<Self> {
        if max_qubits == 0 || max_qubits > MAX_QUBITS {
            return Err(Error::QubitCountOutOfRange(max_qubits));
        }
        noise.validate()?;
        latency.validate()?;
        Ok(QpuDevice {
            device_id: device_id.into(),
            max_qubits,
            noise,
            latency,
            seed,
            shot_counter: 0,
            submission_counter: 0,
            session: None,
        })
    }

    pub fn device_id(&self) -> &str {
        &self.device_id
    }

    pub fn max_qubits(&self) -> usize {
        self.max_qubits
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    pub fn noise(&self) -> &NoiseParams {
        &self.noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Jitter factor for the next submission, drawn from the device stream.
    pub fn draw_jitter_factor(&mut self) -> f64 {
        let mut rng = StreamRng::new(self.seed, JITTER_STREAM | self.submission_counter);
        self.submission_counter += 1;
        1.0 + rng.next_f64() * self.latency.jitter_frac
    }

    fn next_shot_rng(&mut self) -> StreamRng {
        let rng = StreamRng::new(self.seed, SHOT_STREAM | self.shot_counter);
        self.shot_counter += 1;
        rng
    }

    /// Run `shots` independent trajectories of a complete circuit.
    pub fn submit(&mut self, circuit: &Circuit, shots: u64) -> Result<ExecutionResult> {
        self.submit_inner(circuit, shots, false)
    }

    /// Like [`QpuDevice::submit`], additionally recording each shot's register.
    pub fn submit_recorded(&mut self, circuit: &Circuit, shots: u64) -> Result<ExecutionResult> {
        self.submit_inner(circuit, shots, true)
    }

    fn submit_inner(
        &mut self,
        circuit: &Circuit,
        shots: u64,
        record: bool,
    ) -> Result<ExecutionResult> {
        if shots == 0 {
            return Err(Error::ZeroShots);
        }
        circuit.ensure_valid()?;
        if circuit.num_qubits > self.max_qubits {
            return Err(Error::DeviceTooSmall {
                device: self.device_id.clone(),
                needed: circuit.num_qubits,
                available: self.max_qubits,
            });
        }
        let jitter = self.draw_jitter_factor();
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut records = record.then(Vec::new);
        for _ in 0..shots {
            let mut rng = self.next_shot_rng();
            let mut state = if circuit.num_qubits > 0 {
                Some(StateVector::new(circuit.num_qubits)?)
            } else {
                None
            };
            let mut creg = vec![0u8; circuit.num_clbits];
            for instr in &circuit.instructions {
                execute_instruction(&mut state, &mut creg, instr, &self.noise, &mut rng)?;
            }
            let key = render_register(&creg);
            *counts.entry(key.clone()).or_insert(0) += 1;
            if let Some(records) = records.as_mut() {
                records.push(key);
            }
        }
        let model_exec_time = shots as f64 * shot_exec_time(circuit, &self.latency) * jitter
            + self.latency.t_submit
            + self.latency.t_return;
        Ok(ExecutionResult {
            counts,
            shots,
            model_exec_time,
            per_shot_records: records,
        })
    }

    /// Open a mid-shot session holding one register across fragments.
    pub fn open_session(&mut self, num_qubits: usize, num_clbits: usize) -> Result<()> {
        if self.session.is_some() {
            return Err(Error::SessionBusy(self.device_id.clone()));
        }
        if num_qubits > self.max_qubits {
            return Err(Error::DeviceTooSmall {
                device: self.device_id.clone(),
                needed: num_qubits,
                available: self.max_qubits,
            });
        }
        let state = if num_qubits > 0 {
            Some(StateVector::new(num_qubits)?)
        } else {
            None
        };
        let rng = self.next_shot_rng();
        self.session = Some(SessionState {
            state,
            creg: vec![0u8; num_clbits],
            written: BTreeSet::new(),
            rng,
            num_qubits,
            num_clbits,
            fragments_run: 0,
        });
        Ok(())
    }

    pub fn has_session(&self) -> bool {
        self.session.is_some()
    }

    fn session_ref(&self) -> Result<&SessionState> {
        self.session
            .as_ref()
            .ok_or_else(|| Error::NoSession(self.device_id.clone()))
    }

    /// Execute a circuit fragment against the session register. Classical
    /// bits written by earlier fragments are visible to conditions.
    pub fn run_fragment(&mut self, fragment: &Circuit) -> Result<FragmentOutcome> {
        let noise = self.noise;
        let device_id = self.device_id.clone();
        let session = self.session.as_mut().ok_or(Error::NoSession(device_id))?;
        if fragment.num_qubits > session.num_qubits || fragment.num_clbits > session.num_clbits {
            return Err(Error::FragmentExceedsSession {
                fragment_qubits: fragment.num_qubits,
                fragment_clbits: fragment.num_clbits,
                session_qubits: session.num_qubits,
                session_clbits: session.num_clbits,
            });
        }
        let diagnostics = fragment.validate_with_written(&session.written);
        if !diagnostics.is_empty() {
            let joined = diagnostics
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::InvalidCircuit(joined));
        }
        let mut outcome = FragmentOutcome::default();
        for instr in &fragment.instructions {
            if let Some((cbit, bit)) = execute_instruction(
                &mut session.state,
                &mut session.creg,
                instr,
                &noise,
                &mut session.rng,
            )? {
                session.written.insert(cbit);
                outcome.measured.push((cbit, bit));
            }
        }
        session.fragments_run += 1;
        Ok(outcome)
    }

    /// Exact Pauli expectation on the live session register.
    pub fn session_expectation(&self, qubit: usize, axis: PauliAxis) -> Result<f64> {
        let session = self.session_ref()?;
        let state = session
            .state
            .as_ref()
            .ok_or(Error::QubitCountOutOfRange(0))?;
        state.expectation(qubit, axis)
    }

    /// Amplitudes of the live session register.
    pub fn session_amplitudes(&self) -> Result<&[Amplitude]> {
        let session = self.session_ref()?;
        let state = session
            .state
            .as_ref()
            .ok_or(Error::QubitCountOutOfRange(0))?;
        Ok(state.amplitudes())
    }

    /// Current classical register of the session.
    pub fn session_creg(&self) -> Result<&[u8]> {
        Ok(&self.session_ref()?.creg)
    }

    /// A session register bit, or `None` if nothing has written it yet.
    pub fn session_bit(&self, bit: usize) -> Result<Option<u8>> {
        let session = self.session_ref()?;
        if bit >= session.num_clbits {
            return Err(Error::ClbitOutOfRange {
                index: bit,
                num_clbits: session.num_clbits,
            });
        }
        Ok(session.written.contains(&bit).then(|| session.creg[bit]))
    }

    /// Number of fragments the session has executed so far.
    pub fn session_fragments_run(&self) -> Result<u64> {
        Ok(self.session_ref()?.fragments_run)
    }

    /// Discard the session state.
    pub fn close_session(&mut self) -> Result<()> {
        if self.session.take().is_none() {
            return Err(Error::NoSession(self.device_id.clone()));
        }
        Ok(())
    }
}

/// Render a classical register with the most significant bit leftmost.
pub fn render_register(creg: &[u8]) -> String {
    creg.iter()
        .rev()
        .map(|&b| if b == 0 { '0' } else { '1' })
        .collect()
}

/// Apply one instruction; returns the recorded (cbit, bit) for measurements.
fn execute_instruction(
    state: &mut Option<StateVector>,
    creg: &mut [u8],
    instr: &Instruction,
    noise: &NoiseParams,
    rng: &mut StreamRng,
) -> Result<Option<(usize, u8)>> {
    if let Some(cond) = instr.condition {
        if creg[cond.cbit] != cond.value {
            return Ok(None);
        }
    }
    let state = state.as_mut().ok_or(Error::QubitCountOutOfRange(0))?;
    let mut measured = None;
    match &instr.kind {
        InstructionKind::H(q) => state.apply_1q(&GateMatrix::hadamard(), *q)?,
        InstructionKind::X(q) => state.apply_1q(&GateMatrix::pauli_x(), *q)?,
        InstructionKind::SDagger(q) => state.apply_1q(&GateMatrix::s_dagger(), *q)?,
        InstructionKind::Rz { theta, qubit } => state.apply_1q(&GateMatrix::rz(*theta), *qubit)?,
        InstructionKind::Ry { theta, qubit } => state.apply_1q(&GateMatrix::ry(*theta), *qubit)?,
        InstructionKind::Cnot { control, target } => state.apply_cnot(*control, *target)?,
        InstructionKind::CPhasePow {
            lambda,
            power,
            control,
            target,
        } => state.apply_controlled_phase_power(*lambda, *power, *control, *target)?,
        InstructionKind::PrepPhase { theta, qubit } => {
            state.apply_1q(&GateMatrix::prep_phase(*theta), *qubit)?
        }
        InstructionKind::Measure { qubit, cbit } => {
            let raw = state.measure(*qubit, rng)?;
            let bit = if noise.p_readout_flip > 0.0 && rng.bernoulli(noise.p_readout_flip) {
                raw ^ 1
            } else {
                raw
            };
            creg[*cbit] = bit;
            measured = Some((*cbit, bit));
        }
        InstructionKind::Reset(q) => state.reset(*q, rng)?,
        InstructionKind::Noise { kind, p, qubit } => {
            state.apply_noise_event(*qubit, *kind, *p, rng)?
        }
    }
    if instr.is_gate() && noise.p_depol_per_gate > 0.0 {
        for q in instr.qubits() {
            state.apply_noise_event(q, NoiseKind::Depolarizing, noise.p_depol_per_gate, rng)?;
        }
    }
    Ok(measured)
}
