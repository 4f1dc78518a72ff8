//! Eigenphase recovery for a diagonal unitary with a known eigenstate.
//!
//! The target value is a binary fraction 0.b1 b2 ... bm encoded as the
//! phase of a controlled diagonal unitary. The iterative construction
//! recovers one bit per round, least significant first, feeding each result
//! back into the next round's correction rotation; the parallel
//! construction gives every bit its own counting qubit and synchronizes
//! once through the inverse Fourier transform before readout.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::rc::Rc;

use crate::circuit::{build_iqft, Circuit, Instruction};
use crate::error::{Error, Result};
use crate::runtime::{
    ClassicalCtx, ClassicalFn, ClassicalOutput, CregRead, ExecMode, RunOutcome, Runtime, SessionId,
    TaskGraph, TaskId,
};

/// An exact-binary eigenphase recovery problem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhaseEstimationProblem {
    phi_bits: Vec<u8>,
    shots_per_bit: u64,
}

impl PhaseEstimationProblem {
    pub fn new(phi_bits: Vec<u8>, shots_per_bit: u64) -> Result<Self> {
        if phi_bits.is_empty() {
            return Err(Error::EmptyBits);
        }
        if phi_bits.len() > 10 {
            return Err(Error::BadPrecision(phi_bits.len()));
        }
        if phi_bits.iter().any(|&b| b > 1) {
            return Err(Error::BadBit);
        }
        if shots_per_bit == 0 {
            return Err(Error::ZeroShots);
        }
        if shots_per_bit.is_multiple_of(2) {
            return Err(Error::EvenShots(shots_per_bit));
        }
        Ok(PhaseEstimationProblem {
            phi_bits,
            shots_per_bit,
        })
    }

    /// Parse a bit string such as "101".
    pub fn from_bit_str(bits: &str, shots_per_bit: u64) -> Result<Self> {
        let parsed: Result<Vec<u8>> = bits
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => Err(Error::BadBit),
            })
            .collect();
        Self::new(parsed?, shots_per_bit)
    }

    /// Number of recovered bits, m.
    pub fn precision(&self) -> usize {
        self.phi_bits.len()
    }

    pub fn phi_bits(&self) -> &[u8] {
        &self.phi_bits
    }

    pub fn shots_per_bit(&self) -> u64 {
        self.shots_per_bit
    }

    /// The exact value 0.b1 b2 ... bm.
    pub fn phi(&self) -> f64 {
        decode_bits(&self.phi_bits).expect("constructor validated the bits")
    }
}

/// The quantum-side encoding of a phase value: a diagonal unitary
/// diag(1, e^{i lambda}) whose |1> eigenstate carries the phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseEncoding {
    pub lambda: f64,
}

impl PhaseEncoding {
    /// Preparation of the eigenstate |1> on the target qubit.
    pub fn eigenstate_prep(&self, qubit: usize) -> Instruction {
        Instruction::x(qubit)
    }

    /// Controlled application of the unitary raised to `power`.
    pub fn controlled_power(&self, power: u64, control: usize, target: usize) -> Instruction {
        Instruction::cphase_pow(self.lambda, power, control, target)
    }
}

/// Encode a bit list as lambda = 2 pi 0.b1 b2 ... bm.
pub fn encode_phase(bits: &[u8]) -> Result<PhaseEncoding> {
    Ok(PhaseEncoding {
        lambda: TAU * decode_bits(bits)?,
    })
}

/// Value of a most-significant-first bit list: sum of bits[k] 2^{-(k+1)}.
pub fn decode_bits(bits: &[u8]) -> Result<f64> {
    if bits.is_empty() {
        return Err(Error::EmptyBits);
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::BadBit);
    }
    Ok(bits
        .iter()
        .enumerate()
        .map(|(k, &b)| b as f64 / (1u64 << (k + 1)) as f64)
        .sum())
}

/// Decode a measured register index from the swap-free inverse-Fourier
/// readout: the index is bit-reversed first, then scaled by 2^{-m}.
pub fn decode_measured_index(index: usize, m: usize) -> f64 {
    let mut reversed = 0usize;
    for j in 0..m {
        if index & (1 << j) != 0 {
            reversed |= 1 << (m - 1 - j);
        }
    }
    reversed as f64 / (1u64 << m) as f64
}

/// Correction rotation removing already-recovered low bits before the
/// basis change: given the tail bits b_{k+1} ... b_m, returns
/// -2 pi sum_j b_{k+j} 2^{-(j+1)} ... concretely -2 pi 0.0 b_{k+1} ... b_m.
pub fn correction_angle(tail_bits: &[u8]) -> f64 {
    -TAU * tail_bits
        .iter()
        .enumerate()
        .map(|(i, &b)| b as f64 / (1u64 << (i + 2)) as f64)
        .sum::<f64>()
}

/// Resource usage of a recovery run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResourceSummary {
    pub qubits: usize,
    pub classical_bits: usize,
    pub per_iteration_depth: Vec<usize>,
}

/// Recovered bits and their statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct IpeResult {
    /// Most significant bit first: [b1, ..., bm].
    pub bits: Vec<u8>,
    /// decode_bits(bits), in [0, 1).
    pub estimate: f64,
    /// Outcome histogram per bit position (index k-1 holds bit k).
    pub per_bit_counts: Vec<BTreeMap<u8, u64>>,
    pub resources: ResourceSummary,
}

struct IpeAccum {
    bits_rev: Vec<u8>,
    per_bit_counts: Vec<BTreeMap<u8, u64>>,
    per_iteration_depth: Vec<usize>,
}

/// One feedback round: Hadamard on the auxiliary, controlled power of the
/// unitary, correction rotation, basis change, measurement. The auxiliary
/// is qubit 0, the eigenstate qubit 1.
fn iteration_circuit(
    encoding: PhaseEncoding,
    k: usize,
    tail_bits: &[u8],
    accum: &Rc<RefCell<IpeAccum>>,
) -> Circuit {
    let mut c = Circuit::new(2, 1);
    c.push(encoding.eigenstate_prep(1));
    c.h(0);
    c.push(encoding.controlled_power(1 << (k - 1), 0, 1));
    c.rz(correction_angle(tail_bits), 0);
    c.h(0);
    c.measure(0, 0);
    accum.borrow_mut().per_iteration_depth.push(c.depth());
    c
}

fn decide_callback(
    encoding: PhaseEncoding,
    k: usize,
    shots: u64,
    hint: Option<usize>,
    cost: f64,
    job: TaskId,
    accum: Rc<RefCell<IpeAccum>>,
) -> ClassicalFn {
    Box::new(move |ctx: &mut ClassicalCtx<'_>| {
        let counts = ctx
            .counts(job)
            .ok_or_else(|| Error::TaskFailed(job.0, "job produced no counts".into()))?
            .clone();
        let ones = counts.get("1").copied().unwrap_or(0);
        let zeros = counts.get("0").copied().unwrap_or(0);
        let bit = u8::from(ones > zeros);
        {
            let mut state = accum.borrow_mut();
            let mut hist = BTreeMap::new();
            hist.insert(0u8, zeros);
            hist.insert(1u8, ones);
            state.per_bit_counts[k - 1] = hist;
            state.bits_rev.push(bit);
        }
        if k > 1 {
            let tail: Vec<u8> = accum.borrow().bits_rev.iter().rev().copied().collect();
            let circuit = iteration_circuit(encoding, k - 1, &tail, &accum);
            let next_job = ctx.append_circuit_job(circuit, shots, hint, &[])?;
            ctx.append_classical(
                format!("decide bit {}", k - 1),
                Vec::new(),
                &[next_job],
                cost,
                decide_callback(encoding, k - 1, shots, hint, cost, next_job, accum.clone()),
            )?;
        }
        Ok(ClassicalOutput::Bit(bit))
    })
}

fn seed_ipe_chain(
    graph: &mut TaskGraph,
    problem: &PhaseEstimationProblem,
    hint: Option<usize>,
    cost: f64,
) -> Result<Rc<RefCell<IpeAccum>>> {
    let m = problem.precision();
    let encoding = encode_phase(problem.phi_bits())?;
    let accum = Rc::new(RefCell::new(IpeAccum {
        bits_rev: Vec::new(),
        per_bit_counts: vec![BTreeMap::new(); m],
        per_iteration_depth: Vec::new(),
    }));
    let circuit = iteration_circuit(encoding, m, &[], &accum);
    let job = graph.add_circuit_job(circuit, problem.shots_per_bit(), hint, &[])?;
    graph.add_classical(
        format!("decide bit {m}"),
        Vec::new(),
        &[job],
        cost,
        decide_callback(
            encoding,
            m,
            problem.shots_per_bit(),
            hint,
            cost,
            job,
            accum.clone(),
        ),
    )?;
    Ok(accum)
}

fn assemble_ipe(problem: &PhaseEstimationProblem, accum: &RefCell<IpeAccum>) -> Result<IpeResult> {
    let state = accum.borrow();
    let m = problem.precision();
    if state.bits_rev.len() != m {
        return Err(Error::TaskFailed(
            0,
            format!("recovered {} of {m} bits", state.bits_rev.len()),
        ));
    }
    let bits: Vec<u8> = state.bits_rev.iter().rev().copied().collect();
    Ok(IpeResult {
        estimate: decode_bits(&bits)?,
        bits,
        per_bit_counts: state.per_bit_counts.clone(),
        resources: ResourceSummary {
            qubits: 2,
            classical_bits: m,
            per_iteration_depth: state.per_iteration_depth.clone(),
        },
    })
}

fn ensure_run_succeeded(outcome: &RunOutcome) -> Result<()> {
    match outcome.first_failure() {
        Some((id, msg)) => Err(Error::TaskFailed(id.0, msg.to_string())),
        None => Ok(()),
    }
}

/// Iterative recovery under the synchronous engine: each round's job
/// completes, a classical task votes on the bit and appends the next round.
pub fn ipe_sync(
    problem: &PhaseEstimationProblem,
    runtime: &mut Runtime,
    device: usize,
) -> Result<IpeResult> {
    run_ipe(problem, runtime, Some(device), ExecMode::Sync, 0.0)
}

/// Iterative recovery with explicit engine choice; the dependency chain
/// serializes the rounds either way.
pub fn run_ipe(
    problem: &PhaseEstimationProblem,
    runtime: &mut Runtime,
    device_hint: Option<usize>,
    mode: ExecMode,
    classical_cost: f64,
) -> Result<IpeResult> {
    let mut graph = TaskGraph::new(true);
    let accum = seed_ipe_chain(&mut graph, problem, device_hint, classical_cost)?;
    let outcome = runtime.run(graph, mode)?;
    ensure_run_succeeded(&outcome)?;
    assemble_ipe(problem, &accum)
}

/// K independent iterative recoveries in one graph, unpinned so the
/// scheduler can spread the chains over the available devices.
pub fn run_ipe_ensemble(
    problems: &[PhaseEstimationProblem],
    runtime: &mut Runtime,
    mode: ExecMode,
    classical_cost: f64,
) -> Result<Vec<IpeResult>> {
    let mut graph = TaskGraph::new(true);
    let mut accums = Vec::new();
    for problem in problems {
        accums.push(seed_ipe_chain(&mut graph, problem, None, classical_cost)?);
    }
    let outcome = runtime.run(graph, mode)?;
    ensure_run_succeeded(&outcome)?;
    problems
        .iter()
        .zip(&accums)
        .map(|(p, a)| assemble_ipe(p, a))
        .collect()
}

struct QpeAccum {
    tallies: Vec<BTreeMap<u8, u64>>,
    composite_depth: usize,
}

struct QpeShotPlan {
    encoding: PhaseEncoding,
    m: usize,
    device: usize,
    shots: u64,
}

fn qpe_prep_fragment(plan: &QpeShotPlan) -> Circuit {
    let mut c = Circuit::new(plan.m + 1, plan.m);
    c.push(plan.encoding.eigenstate_prep(plan.m));
    c
}

fn qpe_counting_fragment(plan: &QpeShotPlan, j: usize) -> Circuit {
    let mut c = Circuit::new(plan.m + 1, plan.m);
    c.h(j);
    c.push(plan.encoding.controlled_power(1 << j, j, plan.m));
    c
}

fn qpe_barrier_fragment(plan: &QpeShotPlan) -> Result<Circuit> {
    let mut c = Circuit::new(plan.m + 1, plan.m);
    c.extend(&build_iqft(plan.m)?);
    for j in 0..plan.m {
        c.measure(j, j);
    }
    Ok(c)
}

/// The whole construction as one circuit, for depth accounting.
fn qpe_composite(plan: &QpeShotPlan) -> Result<Circuit> {
    let mut c = qpe_prep_fragment(plan);
    for j in 0..plan.m {
        c.extend(&qpe_counting_fragment(plan, j));
    }
    c.extend(&qpe_barrier_fragment(plan)?);
    Ok(c)
}

fn qpe_decode_callback(
    plan: Rc<QpeShotPlan>,
    session: SessionId,
    shot: u64,
    accum: Rc<RefCell<QpeAccum>>,
) -> ClassicalFn {
    Box::new(move |ctx: &mut ClassicalCtx<'_>| {
        let mut index = 0usize;
        for j in 0..plan.m {
            let bit = ctx.read_creg(session, j)?;
            accum.borrow_mut().tallies[j]
                .entry(bit)
                .and_modify(|n| *n += 1)
                .or_insert(1);
            index |= (bit as usize) << j;
        }
        ctx.close_session(session);
        if shot + 1 < plan.shots {
            seed_qpe_shot_ctx(ctx, &plan, shot + 1, &accum)?;
        }
        Ok(ClassicalOutput::Real(decode_measured_index(index, plan.m)))
    })
}

fn seed_qpe_shot_ctx(
    ctx: &mut ClassicalCtx<'_>,
    plan: &Rc<QpeShotPlan>,
    shot: u64,
    accum: &Rc<RefCell<QpeAccum>>,
) -> Result<()> {
    let session = ctx.append_session(plan.device, plan.m + 1, plan.m)?;
    ctx.append_fragment(session, qpe_prep_fragment(plan), &[])?;
    for j in 0..plan.m {
        ctx.append_fragment(session, qpe_counting_fragment(plan, j), &[])?;
    }
    let barrier = ctx.append_fragment(session, qpe_barrier_fragment(plan)?, &[])?;
    let reads: Vec<CregRead> = (0..plan.m).map(|bit| CregRead { session, bit }).collect();
    ctx.append_classical(
        format!("decode shot {shot}"),
        reads,
        &[barrier],
        0.0,
        qpe_decode_callback(plan.clone(), session, shot, accum.clone()),
    )?;
    Ok(())
}

/// Parallel construction under the asynchronous engine.
pub fn qpe_parallel(
    problem: &PhaseEstimationProblem,
    runtime: &mut Runtime,
    device: usize,
) -> Result<IpeResult> {
    run_qpe(problem, runtime, device, ExecMode::Async)
}

/// Parallel construction: per-bit counting fragments share the eigenstate
/// qubit only through commuting diagonal controls, so they carry no mutual
/// edges; the inverse-Fourier barrier fragment conflicts with all of them.
pub fn run_qpe(
    problem: &PhaseEstimationProblem,
    runtime: &mut Runtime,
    device: usize,
    mode: ExecMode,
) -> Result<IpeResult> {
    let m = problem.precision();
    let max_qubits = runtime
        .device(device)
        .ok_or(Error::UnknownDevice(device))?
        .max_qubits();
    if m + 1 > max_qubits {
        return Err(Error::DeviceTooSmall {
            device: runtime.device(device).expect("checked").device_id().into(),
            needed: m + 1,
            available: max_qubits,
        });
    }
    let plan = Rc::new(QpeShotPlan {
        encoding: encode_phase(problem.phi_bits())?,
        m,
        device,
        shots: problem.shots_per_bit(),
    });
    let accum = Rc::new(RefCell::new(QpeAccum {
        tallies: vec![BTreeMap::new(); m],
        composite_depth: qpe_composite(&plan)?.depth(),
    }));

    let mut graph = TaskGraph::new(true);
    let session = graph.add_session(device, m + 1, m);
    graph.add_fragment(session, qpe_prep_fragment(&plan), &[])?;
    for j in 0..m {
        graph.add_fragment(session, qpe_counting_fragment(&plan, j), &[])?;
    }
    let barrier = graph.add_fragment(session, qpe_barrier_fragment(&plan)?, &[])?;
    let reads: Vec<CregRead> = (0..m).map(|bit| CregRead { session, bit }).collect();
    graph.add_classical(
        "decode shot 0",
        reads,
        &[barrier],
        0.0,
        qpe_decode_callback(plan.clone(), session, 0, accum.clone()),
    )?;

    let outcome = runtime.run(graph, mode)?;
    ensure_run_succeeded(&outcome)?;

    let state = accum.borrow();
    // Majority vote per counting qubit; qubit j carries bit j+1.
    let bits: Vec<u8> = state
        .tallies
        .iter()
        .map(|tally| {
            let ones = tally.get(&1).copied().unwrap_or(0);
            let zeros = tally.get(&0).copied().unwrap_or(0);
            u8::from(ones > zeros)
        })
        .collect();
    Ok(IpeResult {
        estimate: decode_bits(&bits)?,
        bits,
        per_bit_counts: state.tallies.clone(),
        resources: ResourceSummary {
            qubits: m + 1,
            classical_bits: m,
            per_iteration_depth: vec![state.composite_depth],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qpu::{LatencyModel, NoiseParams, QpuDevice};
    use crate::runtime::infer_dependencies;
    use crate::statevector::StateVector;

    fn runtime(noise: NoiseParams, seed: u64) -> Runtime {
        let device = QpuDevice::new("qpu0", 12, noise, LatencyModel::tight(), seed).unwrap();
        Runtime::new(vec![device])
    }

    #[test]
    fn decode_bit_lists() {
        assert_eq!(decode_bits(&[1]).unwrap(), 0.5);
        assert_eq!(decode_bits(&[1, 0, 1]).unwrap(), 0.625);
        assert!(decode_bits(&[]).is_err());
        assert!(decode_bits(&[2]).is_err());
    }

    #[test]
    fn encode_lambda_values() {
        assert!((encode_phase(&[1]).unwrap().lambda - std::f64::consts::PI).abs() < 1e-12);
        // 0.125 encodes the T-gate phase pi/4.
        assert!(
            (encode_phase(&[0, 0, 1]).unwrap().lambda - std::f64::consts::FRAC_PI_4).abs() < 1e-12
        );
    }

    #[test]
    fn encoded_unitary_kicks_the_stated_phase() {
        // Applying the controlled unitary with the control in |1> multiplies
        // the |11> amplitude by e^{i 2 pi 0.625}.
        let encoding = encode_phase(&[1, 0, 1]).unwrap();
        let mut sv = StateVector::new(2).unwrap();
        sv.apply_1q(&crate::statevector::GateMatrix::pauli_x(), 0)
            .unwrap();
        sv.apply_1q(&crate::statevector::GateMatrix::pauli_x(), 1)
            .unwrap();
        sv.apply_controlled_phase_power(encoding.lambda, 1, 0, 1)
            .unwrap();
        let expected = crate::statevector::Amplitude::from_polar(1.0, TAU * 0.625);
        assert!((sv.amplitudes()[3] - expected).norm() < 1e-12);
    }

    #[test]
    fn correction_angle_cases() {
        assert_eq!(correction_angle(&[]), 0.0);
        assert!((correction_angle(&[1]) + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        // Tail bits b2 = 0, b3 = 1 give -2 pi / 8 = -pi/4.
        assert!((correction_angle(&[0, 1]) + std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn correction_makes_the_round_deterministic() {
        // phi = 0.101: with tail bits (0, 1) recovered, the k = 1 round's
        // auxiliary ends in a basis state, so the readout is certain.
        let encoding = encode_phase(&[1, 0, 1]).unwrap();
        let accum = Rc::new(RefCell::new(IpeAccum {
            bits_rev: Vec::new(),
            per_bit_counts: vec![BTreeMap::new(); 3],
            per_iteration_depth: Vec::new(),
        }));
        let circuit = iteration_circuit(encoding, 1, &[0, 1], &accum);
        let mut device = QpuDevice::new(
            "qpu0",
            2,
            NoiseParams::noiseless(),
            LatencyModel::tight(),
            17,
        )
        .unwrap();
        let result = device.submit(&circuit, 101).unwrap();
        assert_eq!(result.counts.get("1"), Some(&101), "{:?}", result.counts);
    }

    #[test]
    fn ipe_recovers_zero_phase() {
        let problem = PhaseEstimationProblem::new(vec![0, 0, 0], 1).unwrap();
        let mut rt = runtime(NoiseParams::noiseless(), 3);
        let result = ipe_sync(&problem, &mut rt, 0).unwrap();
        assert_eq!(result.bits, vec![0, 0, 0]);
        assert_eq!(result.estimate, 0.0);
    }

    #[test]
    fn ipe_recovers_101_deterministically() {
        let problem = PhaseEstimationProblem::new(vec![1, 0, 1], 1).unwrap();
        let mut rt = runtime(NoiseParams::noiseless(), 5);
        let result = ipe_sync(&problem, &mut rt, 0).unwrap();
        assert_eq!(result.bits, vec![1, 0, 1]);
        assert!((result.estimate - 0.625).abs() < 1e-12);
        // Every round's outcome is deterministic for exact binary phases.
        for hist in &result.per_bit_counts {
            assert_eq!(hist.values().filter(|&&n| n > 0).count(), 1);
        }
        assert_eq!(result.resources.qubits, 2);
        assert_eq!(result.resources.classical_bits, 3);
    }

    #[test]
    fn majority_vote_overcomes_readout_flips() {
        let problem = PhaseEstimationProblem::new(vec![1, 1], 101).unwrap();
        let noise = NoiseParams {
            p_depol_per_gate: 0.0,
            p_readout_flip: 0.2,
        };
        let mut rt = runtime(noise, 21);
        let result = ipe_sync(&problem, &mut rt, 0).unwrap();
        assert_eq!(result.bits, vec![1, 1]);
    }

    #[test]
    fn qpe_recovers_quarter_phase() {
        let problem = PhaseEstimationProblem::new(vec![0, 1], 1).unwrap();
        let mut rt = runtime(NoiseParams::noiseless(), 7);
        let result = qpe_parallel(&problem, &mut rt, 0).unwrap();
        assert_eq!(result.bits, vec![0, 1]);
        assert!((result.estimate - 0.25).abs() < 1e-12);
    }

    #[test]
    fn qpe_zero_phase_reads_all_zero() {
        for m in 1..=4 {
            let problem = PhaseEstimationProblem::new(vec![0; m], 1).unwrap();
            let mut rt = runtime(NoiseParams::noiseless(), 11 + m as u64);
            let result = qpe_parallel(&problem, &mut rt, 0).unwrap();
            assert_eq!(result.bits, vec![0; m], "m = {m}");
        }
    }

    #[test]
    fn qpe_majority_vote_overcomes_readout_flips() {
        // 101 shots, each its own session; per-qubit majority beats a 20%
        // readout flip with overwhelming probability.
        let problem = PhaseEstimationProblem::new(vec![1, 0], 101).unwrap();
        let noise = NoiseParams {
            p_depol_per_gate: 0.0,
            p_readout_flip: 0.2,
        };
        let mut rt = runtime(noise, 23);
        let result = qpe_parallel(&problem, &mut rt, 0).unwrap();
        assert_eq!(result.bits, vec![1, 0]);
        let total: u64 = result.per_bit_counts[0].values().sum();
        assert_eq!(total, 101, "one tally entry per shot");
    }

    #[test]
    fn qpe_needs_more_qubits_and_depth_than_ipe() {
        let problem = PhaseEstimationProblem::new(vec![1, 0, 1], 1).unwrap();
        let mut rt = runtime(NoiseParams::noiseless(), 13);
        let qpe = qpe_parallel(&problem, &mut rt, 0).unwrap();
        assert_eq!(qpe.bits, vec![1, 0, 1]);
        let mut rt = runtime(NoiseParams::noiseless(), 13);
        let ipe = ipe_sync(&problem, &mut rt, 0).unwrap();
        assert_eq!(qpe.resources.qubits, 4);
        assert!(qpe.resources.qubits > ipe.resources.qubits);
        let qpe_depth = qpe.resources.per_iteration_depth[0];
        let ipe_depth = *ipe.resources.per_iteration_depth.iter().max().unwrap();
        assert!(qpe_depth > ipe_depth, "{qpe_depth} vs {ipe_depth}");
    }

    #[test]
    fn qpe_counting_fragments_are_mutually_independent() {
        let problem = PhaseEstimationProblem::new(vec![1, 0, 1], 1).unwrap();
        let plan = QpeShotPlan {
            encoding: encode_phase(problem.phi_bits()).unwrap(),
            m: 3,
            device: 0,
            shots: 1,
        };
        let plan = Rc::new(plan);
        let mut graph = TaskGraph::new(false);
        let session = graph.add_session(0, 4, 3);
        let prep = graph
            .add_fragment(session, qpe_prep_fragment(&plan), &[])
            .unwrap();
        let mut counting = Vec::new();
        for j in 0..3 {
            counting.push(
                graph
                    .add_fragment(session, qpe_counting_fragment(&plan, j), &[])
                    .unwrap(),
            );
        }
        let barrier = graph
            .add_fragment(session, qpe_barrier_fragment(&plan).unwrap(), &[])
            .unwrap();
        let edges = infer_dependencies(&graph);
        for &c in &counting {
            assert!(edges.contains(&(prep, c)), "prep orders {c}");
            assert!(edges.contains(&(c, barrier)), "{c} orders barrier");
        }
        for &a in &counting {
            for &b in &counting {
                assert!(
                    !edges.contains(&(a, b)) || a == b,
                    "no edges among counting"
                );
            }
        }
    }

    #[test]
    fn exhaustive_small_phases_recover_exactly() {
        for m in 1..=3 {
            for value in 0..(1u32 << m) {
                let bits: Vec<u8> = (0..m).map(|k| ((value >> (m - 1 - k)) & 1) as u8).collect();
                let problem = PhaseEstimationProblem::new(bits.clone(), 1).unwrap();
                let mut rt = runtime(NoiseParams::noiseless(), 1000 + value as u64);
                let ipe = ipe_sync(&problem, &mut rt, 0).unwrap();
                assert_eq!(ipe.bits, bits, "ipe m={m} value={value}");
                let mut rt = runtime(NoiseParams::noiseless(), 2000 + value as u64);
                let qpe = qpe_parallel(&problem, &mut rt, 0).unwrap();
                assert_eq!(qpe.bits, bits, "qpe m={m} value={value}");
            }
        }
    }

    #[test]
    fn decode_round_trips_through_noiseless_recovery() {
        // All 3-bit patterns: encode, recover with a single shot per bit,
        // decode back.
        for value in 0..8u32 {
            let bits: Vec<u8> = (0..3).map(|k| ((value >> (2 - k)) & 1) as u8).collect();
            let problem = PhaseEstimationProblem::new(bits.clone(), 1).unwrap();
            let mut rt = runtime(NoiseParams::noiseless(), 300 + value as u64);
            let result = ipe_sync(&problem, &mut rt, 0).unwrap();
            assert_eq!(result.bits, bits);
            assert_eq!(result.estimate, decode_bits(&bits).unwrap());
        }
    }

    #[test]
    fn measured_index_decode_matches_bit_decode() {
        // For m = 2, phi = 0.25 the register reads (c0, c1) = (0, 1):
        // index 2 bit-reverses to 1, i.e. 0.25.
        assert_eq!(decode_measured_index(2, 2), 0.25);
        for m in 1..=4usize {
            for value in 0..(1usize << m) {
                let bits: Vec<u8> = (0..m).map(|k| ((value >> (m - 1 - k)) & 1) as u8).collect();
                // Bit k+1 sits on qubit k, so the measured index packs the
                // bits most-significant-first from the low end.
                let mut index = 0usize;
                for (k, &b) in bits.iter().enumerate() {
                    index |= (b as usize) << k;
                }
                assert_eq!(decode_measured_index(index, m), decode_bits(&bits).unwrap());
            }
        }
    }

    #[test]
    fn ensemble_spreads_over_devices_under_async() {
        let problems: Vec<PhaseEstimationProblem> = (0..4)
            .map(|_| PhaseEstimationProblem::new(vec![1, 0], 1).unwrap())
            .collect();
        let devices = |seed: u64| {
            (0..2)
                .map(|i| {
                    QpuDevice::new(
                        format!("qpu{i}"),
                        4,
                        NoiseParams::noiseless(),
                        LatencyModel::tight(),
                        seed + i as u64,
                    )
                    .unwrap()
                })
                .collect::<Vec<_>>()
        };
        let mut sync_rt = Runtime::new(devices(50));
        let sync_results = run_ipe_ensemble(&problems, &mut sync_rt, ExecMode::Sync, 0.0).unwrap();
        let mut async_rt = Runtime::new(devices(50));
        let async_results =
            run_ipe_ensemble(&problems, &mut async_rt, ExecMode::Async, 0.0).unwrap();
        for r in sync_results.iter().chain(async_results.iter()) {
            assert_eq!(r.bits, vec![1, 0]);
        }
        let sync_makespan = sync_rt.metrics().makespan;
        let async_makespan = async_rt.metrics().makespan;
        let ratio = async_makespan / sync_makespan;
        assert!((ratio - 0.5).abs() <= 0.05, "ratio {ratio}");
    }

    #[test]
    fn problem_validation() {
        assert!(PhaseEstimationProblem::new(vec![], 1).is_err());
        assert!(PhaseEstimationProblem::new(vec![1], 2).is_err());
        assert!(PhaseEstimationProblem::new(vec![2], 1).is_err());
        assert!(PhaseEstimationProblem::new(vec![0; 11], 1).is_err());
        assert!(PhaseEstimationProblem::from_bit_str("10x", 1).is_err());
        let p = PhaseEstimationProblem::from_bit_str("101", 3).unwrap();
        assert_eq!(p.phi(), 0.625);
    }

    #[test]
    fn majority_monotone_under_growing_readout_noise() {
        // Mean correct-bit count must not increase when the readout flip
        // probability grows, seeds held fixed.
        let flips = [0.0, 0.1, 0.3];
        let mut means = Vec::new();
        for &p in &flips {
            let mut total_correct = 0u64;
            for seed in 0..200u64 {
                let problem = PhaseEstimationProblem::new(vec![1, 0], 5).unwrap();
                let noise = NoiseParams {
                    p_depol_per_gate: 0.0,
                    p_readout_flip: p,
                };
                let mut rt = runtime(noise, seed);
                let result = ipe_sync(&problem, &mut rt, 0).unwrap();
                total_correct += result
                    .bits
                    .iter()
                    .zip([1u8, 0u8].iter())
                    .filter(|(a, b)| a == b)
                    .count() as u64;
            }
            means.push(total_correct as f64 / 200.0);
        }
        assert!(
            means[0] >= means[1] - 1e-9 && means[1] >= means[2] - 1e-9,
            "{means:?}"
        );
    }
}
