//! Acceptance suite: one test per criterion, each printing a pass line.
//! Every tolerance is pinned in code; seeds are fixed so reruns are
//! bit-identical.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::time::Instant;

use qtr_cli::config::{resolve, ScenarioConfig};
use qtr_cli::scenario::{compare, run_scenario, CompareAxis};
use qtr_core::algorithms::{
    ipe_sync, qpe_parallel, run_ipe_ensemble, vqe_error_detected, PhaseEstimationProblem,
    VqeProblem, VqeVariant,
};
use qtr_core::circuit::{Circuit, Instruction, InstructionKind};
use qtr_core::qpu::{estimate_exec_time, LatencyModel, NoiseParams, QpuDevice};
use qtr_core::rng::StreamRng;
use qtr_core::runtime::{
    infer_dependencies, ClassicalOutput, ExecMode, Runtime, TaskGraph, TaskId,
};
use qtr_core::statevector::{GateMatrix, StateVector};

fn noiseless_runtime(seed: u64, devices: usize) -> Runtime {
    let devices = (0..devices)
        .map(|i| {
            QpuDevice::new(
                format!("qpu{i}"),
                12,
                NoiseParams::noiseless(),
                LatencyModel::tight(),
                seed + i as u64,
            )
            .unwrap()
        })
        .collect();
    Runtime::new(devices)
}

fn bits_of(value: u32, m: usize) -> Vec<u8> {
    (0..m).map(|k| ((value >> (m - 1 - k)) & 1) as u8).collect()
}

#[test]
fn criterion_1_exhaustive_phase_recovery() {
    let start = Instant::now();
    let mut cases = 0;
    for m in 1..=4usize {
        for value in 0..(1u32 << m) {
            let bits = bits_of(value, m);
            let problem = PhaseEstimationProblem::new(bits.clone(), 1).unwrap();

            let mut rt = noiseless_runtime(9_000 + cases, 1);
            let ipe = ipe_sync(&problem, &mut rt, 0).unwrap();
            assert_eq!(ipe.bits, bits, "ipe m={m} value={value}");

            let mut rt = noiseless_runtime(19_000 + cases, 1);
            let qpe = qpe_parallel(&problem, &mut rt, 0).unwrap();
            assert_eq!(qpe.bits, bits, "qpe m={m} value={value}");
            cases += 1;
        }
    }
    assert_eq!(cases, 30, "30 phases per algorithm");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("[acceptance] criterion 1 (exhaustive phase recovery, 30 cases x 2 algorithms in {elapsed:?}): pass");
}

#[test]
fn criterion_2_resource_claims() {
    let problem = PhaseEstimationProblem::new(vec![1, 0, 1], 1).unwrap();
    let mut rt = noiseless_runtime(31, 1);
    let qpe = qpe_parallel(&problem, &mut rt, 0).unwrap();
    let mut rt = noiseless_runtime(32, 1);
    let ipe = ipe_sync(&problem, &mut rt, 0).unwrap();

    assert_eq!(qpe.resources.qubits, 4);
    assert_eq!(ipe.resources.qubits, 2);
    assert!(qpe.resources.qubits > ipe.resources.qubits);

    let qpe_depth = qpe.resources.per_iteration_depth[0];
    let ipe_max_depth = *ipe.resources.per_iteration_depth.iter().max().unwrap();
    assert!(
        qpe_depth > ipe_max_depth,
        "qpe depth {qpe_depth} vs ipe max per-iteration depth {ipe_max_depth}"
    );
    println!(
        "[acceptance] criterion 2 (resource claims: qubits {} > {}, depth {qpe_depth} > {ipe_max_depth}): pass",
        qpe.resources.qubits, ipe.resources.qubits
    );
}

fn random_latency(rng: &mut StreamRng) -> LatencyModel {
    LatencyModel {
        t_init: rng.next_f64() * 100.0,
        t_gate: rng.next_f64() * 10.0,
        t_meas: rng.next_f64() * 100.0,
        t_submit: rng.next_f64() * 1000.0,
        t_return: rng.next_f64() * 1000.0,
        jitter_frac: 0.0,
        ..LatencyModel::tight()
    }
}

fn random_circuit_for_estimate(rng: &mut StreamRng) -> Circuit {
    let qubits = 1 + rng.index(4);
    let mut c = Circuit::new(qubits, qubits);
    for _ in 0..rng.index(20) {
        match rng.index(3) {
            0 => {
                c.h(rng.index(qubits));
            }
            1 if qubits > 1 => {
                let a = rng.index(qubits);
                let b = (a + 1 + rng.index(qubits - 1)) % qubits;
                c.cnot(a, b);
            }
            _ => {
                c.measure(rng.index(qubits), rng.index(qubits));
            }
        }
    }
    c
}

#[test]
fn criterion_3_timing_model() {
    // Closed form: 100 shots of a depth-7 circuit with one measurement at
    // t_init=10, t_gate=1, t_meas=50, t_submit=t_return=200 -> 7100 us.
    let latency = LatencyModel {
        t_init: 10.0,
        t_gate: 1.0,
        t_meas: 50.0,
        t_submit: 200.0,
        t_return: 200.0,
        ..LatencyModel::tight()
    };
    let mut c = Circuit::new(1, 1);
    for _ in 0..6 {
        c.h(0);
    }
    c.measure(0, 0);
    assert_eq!(c.depth(), 7);
    assert_eq!(estimate_exec_time(&c, 100, &latency), 7100.0);

    // Monotonicity in shots, depth, and every latency field.
    let mut rng = StreamRng::new(333, 0);
    for _ in 0..100 {
        let circuit = random_circuit_for_estimate(&mut rng);
        let shots = 1 + rng.index(1000) as u64;
        let latency = random_latency(&mut rng);
        let base = estimate_exec_time(&circuit, shots, &latency);

        let more_shots = shots + 1 + rng.index(100) as u64;
        assert!(estimate_exec_time(&circuit, more_shots, &latency) >= base);

        let mut deeper = circuit.clone();
        for q in 0..circuit.num_qubits {
            deeper.h(q);
        }
        assert!(deeper.depth() > circuit.depth());
        assert!(estimate_exec_time(&deeper, shots, &latency) >= base);

        let delta = 1.0 + rng.next_f64() * 50.0;
        for field in 0..5 {
            let mut bumped = latency.clone();
            match field {
                0 => bumped.t_init += delta,
                1 => bumped.t_gate += delta,
                2 => bumped.t_meas += delta,
                3 => bumped.t_submit += delta,
                _ => bumped.t_return += delta,
            }
            assert!(
                estimate_exec_time(&circuit, shots, &bumped) >= base,
                "field {field} not monotone"
            );
        }
    }
    println!("[acceptance] criterion 3 (timing model: closed form 7100 us exact, monotone over 100 draws): pass");
}

fn random_task_graph(rng: &mut StreamRng) -> TaskGraph {
    let mut g = TaskGraph::new(false);
    let n = 3 + rng.index(15);
    let mut ids: Vec<TaskId> = Vec::new();
    for _ in 0..n {
        let mut deps = Vec::new();
        for &prev in &ids {
            if rng.bernoulli(0.2) {
                deps.push(prev);
            }
        }
        let id = if rng.bernoulli(0.7) {
            let mut c = Circuit::new(1, 1);
            c.h(0).measure(0, 0);
            let hint = rng.bernoulli(0.5).then(|| rng.index(2));
            g.add_circuit_job(c, 1 + rng.index(40) as u64, hint, &deps)
                .unwrap()
        } else {
            g.add_classical(
                "mix",
                Vec::new(),
                &deps,
                rng.index(25) as f64,
                Box::new(|_| Ok(ClassicalOutput::Unit)),
            )
            .unwrap()
        };
        ids.push(id);
    }
    g
}

#[test]
fn criterion_4_scheduling() {
    // Ensemble of four independent chains over two devices: the
    // asynchronous engine halves the synchronous makespan.
    let problems: Vec<PhaseEstimationProblem> = (0..4)
        .map(|_| PhaseEstimationProblem::new(vec![1, 0, 1], 1).unwrap())
        .collect();
    let mut sync_rt = noiseless_runtime(700, 2);
    run_ipe_ensemble(&problems, &mut sync_rt, ExecMode::Sync, 0.0).unwrap();
    let mut async_rt = noiseless_runtime(700, 2);
    run_ipe_ensemble(&problems, &mut async_rt, ExecMode::Async, 0.0).unwrap();
    let ratio = async_rt.metrics().makespan / sync_rt.metrics().makespan;
    assert!(
        (ratio - 0.5).abs() <= 0.05,
        "ensemble async/sync ratio {ratio}"
    );

    // A fully dependent chain gains nothing: ratio exactly 1.
    let single = [PhaseEstimationProblem::new(vec![1, 0, 1], 1).unwrap()];
    let mut sync_rt = noiseless_runtime(701, 2);
    run_ipe_ensemble(&single, &mut sync_rt, ExecMode::Sync, 0.0).unwrap();
    let mut async_rt = noiseless_runtime(701, 2);
    run_ipe_ensemble(&single, &mut async_rt, ExecMode::Async, 0.0).unwrap();
    assert_eq!(sync_rt.metrics().makespan, async_rt.metrics().makespan);

    // Dependency respect and device exclusivity over 500 random graphs,
    // each run under both engines; async never loses to sync.
    let mut rng = StreamRng::new(4321, 0);
    for trial in 0..500u64 {
        let mut twin_rng = rng.clone();
        let graph = random_task_graph(&mut rng);
        let twin = random_task_graph(&mut twin_rng);
        let edges = infer_dependencies(&graph);

        let mut sync_rt = noiseless_runtime(trial, 2);
        let sync_out = sync_rt.run(graph, ExecMode::Sync).unwrap();
        let mut async_rt = noiseless_runtime(trial, 2);
        let async_out = async_rt.run(twin, ExecMode::Async).unwrap();
        assert!(
            async_out.metrics.makespan <= sync_out.metrics.makespan + 1e-9,
            "trial {trial}: async beat by sync"
        );

        for outcome in [&sync_out, &async_out] {
            let by_id: BTreeMap<u64, _> = outcome.trace.iter().map(|e| (e.task_id, e)).collect();
            for (from, to) in &edges {
                if let (Some(a), Some(b)) = (by_id.get(&from.0), by_id.get(&to.0)) {
                    assert!(
                        b.t_start >= a.t_end - 1e-9,
                        "trial {trial}: dependency violated"
                    );
                }
            }
            let mut intervals: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
            for e in &outcome.trace {
                intervals
                    .entry(e.resource.as_str())
                    .or_default()
                    .push((e.t_start, e.t_end));
            }
            for (_, mut spans) in intervals {
                spans.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for w in spans.windows(2) {
                    assert!(w[1].0 >= w[0].1 - 1e-9, "trial {trial}: overlap {w:?}");
                }
            }
        }
    }
    println!("[acceptance] criterion 4 (scheduling: ensemble ratio {ratio:.3}, chain ratio 1.0, 500 random graphs clean): pass");
}

/// Exact outcome distribution by recursive branch enumeration; independent
/// of the device's sampling path.
fn exact_distribution(circuit: &Circuit) -> BTreeMap<String, f64> {
    fn walk(
        instructions: &[Instruction],
        state: StateVector,
        creg: Vec<u8>,
        prob: f64,
        out: &mut BTreeMap<String, f64>,
    ) {
        let Some((instr, rest)) = instructions.split_first() else {
            let key: String = creg
                .iter()
                .rev()
                .map(|&b| if b == 0 { '0' } else { '1' })
                .collect();
            *out.entry(key).or_insert(0.0) += prob;
            return;
        };
        if let Some(cond) = instr.condition {
            if creg[cond.cbit] != cond.value {
                walk(rest, state, creg, prob, out);
                return;
            }
        }
        match &instr.kind {
            InstructionKind::Measure { qubit, cbit } => {
                let p_one = state.probability_of_one(*qubit).unwrap();
                for outcome in [0u8, 1u8] {
                    let weight = if outcome == 1 { p_one } else { 1.0 - p_one };
                    if weight < 1e-12 {
                        continue;
                    }
                    let mut branch = state.clone();
                    branch.project(*qubit, outcome).unwrap();
                    let mut branch_creg = creg.clone();
                    branch_creg[*cbit] = outcome;
                    walk(rest, branch, branch_creg, prob * weight, out);
                }
            }
            kind => {
                let mut state = state;
                match kind {
                    InstructionKind::H(q) => state.apply_1q(&GateMatrix::hadamard(), *q).unwrap(),
                    InstructionKind::X(q) => state.apply_1q(&GateMatrix::pauli_x(), *q).unwrap(),
                    InstructionKind::SDagger(q) => {
                        state.apply_1q(&GateMatrix::s_dagger(), *q).unwrap()
                    }
                    InstructionKind::Rz { theta, qubit } => {
                        state.apply_1q(&GateMatrix::rz(*theta), *qubit).unwrap()
                    }
                    InstructionKind::Ry { theta, qubit } => {
                        state.apply_1q(&GateMatrix::ry(*theta), *qubit).unwrap()
                    }
                    InstructionKind::PrepPhase { theta, qubit } => state
                        .apply_1q(&GateMatrix::prep_phase(*theta), *qubit)
                        .unwrap(),
                    InstructionKind::Cnot { control, target } => {
                        state.apply_cnot(*control, *target).unwrap()
                    }
                    InstructionKind::CPhasePow {
                        lambda,
                        power,
                        control,
                        target,
                    } => state
                        .apply_controlled_phase_power(*lambda, *power, *control, *target)
                        .unwrap(),
                    other => panic!("generator does not emit {other:?}"),
                }
                walk(rest, state, creg, prob, out);
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(
        &circuit.instructions,
        StateVector::new(circuit.num_qubits).unwrap(),
        vec![0; circuit.num_clbits],
        1.0,
        &mut out,
    );
    out
}

fn random_born_circuit(rng: &mut StreamRng) -> Circuit {
    let qubits = 1 + rng.index(3);
    let mut c = Circuit::new(qubits, qubits + 1);
    let mut measured = false;
    for _ in 0..(4 + rng.index(10)) {
        match rng.index(7) {
            0 => {
                c.h(rng.index(qubits));
            }
            1 => {
                c.ry(rng.next_f64() * TAU, rng.index(qubits));
            }
            2 => {
                c.rz(rng.next_f64() * TAU, rng.index(qubits));
            }
            3 if qubits > 1 => {
                let a = rng.index(qubits);
                let b = (a + 1 + rng.index(qubits - 1)) % qubits;
                c.cnot(a, b);
            }
            4 if qubits > 1 => {
                let a = rng.index(qubits);
                let b = (a + 1 + rng.index(qubits - 1)) % qubits;
                c.cphase_pow(rng.next_f64() * TAU, 1 + rng.index(4) as u64, a, b);
            }
            5 => {
                c.measure(rng.index(qubits), qubits);
                measured = true;
            }
            _ if measured => {
                c.push(Instruction::h(rng.index(qubits)).when(qubits, 1));
            }
            _ => {
                c.x(rng.index(qubits));
            }
        }
    }
    for q in 0..qubits {
        c.measure(q, q);
    }
    c
}

#[test]
fn criterion_5_born_rule_oracle() {
    let shots = 10_000u64;
    let mut rng = StreamRng::new(5150, 0);
    let mut worst = 0.0f64;
    for trial in 0..50u64 {
        let circuit = random_born_circuit(&mut rng);
        let exact = exact_distribution(&circuit);
        let mut device = QpuDevice::new(
            "qpu0",
            4,
            NoiseParams::noiseless(),
            LatencyModel::tight(),
            90_000 + trial,
        )
        .unwrap();
        let counts = device.submit(&circuit, shots).unwrap().counts;
        let keys: std::collections::BTreeSet<&String> = exact.keys().chain(counts.keys()).collect();
        let mut tv = 0.0;
        for key in keys {
            let p = exact.get(key).copied().unwrap_or(0.0);
            let q = counts.get(key).copied().unwrap_or(0) as f64 / shots as f64;
            tv += (p - q).abs();
        }
        tv *= 0.5;
        assert!(tv < 0.05, "trial {trial}: tv {tv}\n{circuit}");
        worst = worst.max(tv);
    }
    println!("[acceptance] criterion 5 (Born-rule oracle: 50 circuits, worst TV {worst:.4} < 0.05): pass");
}

#[test]
fn criterion_6_vqe() {
    let step = TAU / 64.0;
    let analytic_angle = std::f64::consts::PI + 0.5f64.atan();
    let analytic_cost = -1.25f64.sqrt();

    let problem = VqeProblem {
        grid_points: 64,
        shots_per_setting: 4096,
        ..VqeProblem::new(1.0, 0.5)
    };
    let mut rt = noiseless_runtime(4, 1);
    rt.set_tracing(false);
    let two = vqe_error_detected(&problem, &mut rt, 0).unwrap();
    assert!(
        (two.best_angle - analytic_angle).abs() <= step,
        "best angle {} vs analytic {analytic_angle}",
        two.best_angle
    );
    assert!(
        (two.best_cost - analytic_cost).abs() <= 0.05,
        "best cost {} vs analytic {analytic_cost}",
        two.best_cost
    );
    assert_eq!(two.qubits_used, 3);

    let single = VqeProblem {
        variant: VqeVariant::SingleAncilla,
        ..problem
    };
    let mut rt = noiseless_runtime(104, 1);
    rt.set_tracing(false);
    let one = vqe_error_detected(&single, &mut rt, 0).unwrap();
    assert_eq!(one.qubits_used, 2);
    assert!(
        (one.best_angle - two.best_angle).abs() <= step,
        "variants disagree: {} vs {}",
        one.best_angle,
        two.best_angle
    );

    // Post-selection rate under injected preparation errors: 10^4 shots.
    let injected = VqeProblem {
        p_inject: 0.2,
        grid_points: 4,
        shots_per_setting: 2500,
        max_retries: 0,
        exact_expectation: true,
        ..VqeProblem::new(1.0, 0.5)
    };
    let mut rt = noiseless_runtime(6, 1);
    rt.set_tracing(false);
    let detected = vqe_error_detected(&injected, &mut rt, 0).unwrap();
    assert!(
        (0.77..=0.83).contains(&detected.acceptance_rate),
        "acceptance rate {}",
        detected.acceptance_rate
    );
    println!(
        "[acceptance] criterion 6 (vqe: angle {:.4}, cost {:.4}, single-ancilla {:.4} on 2 qubits, acceptance {:.3}): pass",
        two.best_angle, two.best_cost, one.best_angle, detected.acceptance_rate
    );
}

#[test]
fn criterion_7_determinism() {
    let temp = tempfile::tempdir().unwrap();
    let configs = [
        (
            "ipe",
            r#"{"scenario": "ipe", "phi": "101", "shots": 3, "seed": 11}"#,
        ),
        (
            "qpe",
            r#"{"scenario": "qpe", "phi": "110", "shots": 3, "seed": 12}"#,
        ),
        (
            "vqe",
            r#"{"scenario": "vqe", "cost": {"c_x": 1.0, "c_y": 0.5}, "grid_points": 8,
                "shots": 16, "seed": 13, "noise": {"p_inject": 0.1}}"#,
        ),
        (
            "ensemble",
            r#"{"scenario": "ensemble", "phi": "10", "devices": 2, "ensemble_k": 3,
                "mode": "async", "seed": 14}"#,
        ),
    ];
    for (name, text) in configs {
        let mut dirs = Vec::new();
        for pass in 0..2 {
            let mut config = ScenarioConfig::from_json(text).unwrap();
            let dir = temp.path().join(format!("{name}-{pass}"));
            config.output_dir = Some(dir.clone());
            let resolved = resolve(&config).unwrap();
            run_scenario(&resolved).unwrap();
            dirs.push(dir);
        }
        for file in ["trace.json", "metrics.csv", "summary.txt"] {
            let first = std::fs::read(dirs[0].join(file)).unwrap();
            let second = std::fs::read(dirs[1].join(file)).unwrap();
            assert_eq!(first, second, "{name} {file} differs across reruns");
            assert!(!first.is_empty());
        }
    }
    println!("[acceptance] criterion 7 (determinism: byte-identical trace.json for ipe/qpe/vqe/ensemble): pass");
}

#[test]
fn criterion_8_norm_preservation() {
    let mut rng = StreamRng::new(888, 0);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let qubits = 1 + rng.index(5);
        let mut sv = StateVector::new(qubits).unwrap();
        let gates = rng.index(201);
        for _ in 0..gates {
            match rng.index(6) {
                0 => sv
                    .apply_1q(&GateMatrix::hadamard(), rng.index(qubits))
                    .unwrap(),
                1 => sv
                    .apply_1q(&GateMatrix::pauli_x(), rng.index(qubits))
                    .unwrap(),
                2 => sv
                    .apply_1q(&GateMatrix::ry(rng.next_f64() * TAU), rng.index(qubits))
                    .unwrap(),
                3 => sv
                    .apply_1q(&GateMatrix::rz(rng.next_f64() * TAU), rng.index(qubits))
                    .unwrap(),
                4 if qubits > 1 => {
                    let a = rng.index(qubits);
                    let b = (a + 1 + rng.index(qubits - 1)) % qubits;
                    sv.apply_cnot(a, b).unwrap();
                }
                _ if qubits > 1 => {
                    let a = rng.index(qubits);
                    let b = (a + 1 + rng.index(qubits - 1)) % qubits;
                    sv.apply_controlled_phase_power(
                        rng.next_f64() * TAU,
                        1 + rng.index(8) as u64,
                        a,
                        b,
                    )
                    .unwrap();
                }
                _ => sv
                    .apply_1q(&GateMatrix::s_dagger(), rng.index(qubits))
                    .unwrap(),
            }
        }
        let drift = (sv.norm_sqr() - 1.0).abs();
        assert!(drift < 1e-10, "norm drift {drift}");
        worst = worst.max(drift);
    }
    println!("[acceptance] criterion 8 (norm preservation: 1000 circuits, worst drift {worst:.2e} < 1e-10): pass");
}

/// The comparison interface the criteria lean on: cloud minus tight on a
/// synchronous chain is exactly the per-iteration communication gap.
#[test]
fn compare_latency_gap_is_pure_communication() {
    let temp = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{"scenario": "ipe", "phi": "101", "seed": 5, "output_dir": {:?}}}"#,
        temp.path().join("cmp")
    );
    let config = ScenarioConfig::from_json(&text).unwrap();
    let resolved = resolve(&config).unwrap();
    let report = compare(&resolved, CompareAxis::Latency).unwrap();
    let tight = &report.arms[0];
    let cloud = &report.arms[1];
    let per_round_trip = (LatencyModel::cloud().t_submit + LatencyModel::cloud().t_return)
        - (LatencyModel::tight().t_submit + LatencyModel::tight().t_return);
    let iterations = 3.0;
    assert_eq!(cloud.makespan - tight.makespan, iterations * per_round_trip);

    // A chain-dependent scenario compared across modes keeps ratio 1.
    let text = format!(
        r#"{{"scenario": "ipe", "phi": "101", "seed": 5, "output_dir": {:?}}}"#,
        temp.path().join("cmp2")
    );
    let config = ScenarioConfig::from_json(&text).unwrap();
    let resolved = resolve(&config).unwrap();
    let report = compare(&resolved, CompareAxis::Mode).unwrap();
    assert_eq!(report.ratio, 1.0);
}
