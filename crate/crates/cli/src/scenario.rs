//! Scenario assembly: build devices and a runtime from a resolved config,
//! execute the selected workload, and emit the trace, metrics, and summary
//! artifacts.

use std::fs;
use std::path::Path;

use qtr_core::algorithms::{
    run_ipe, run_ipe_ensemble, run_qpe, run_vqe, IpeResult, PhaseEstimationProblem, VqeProblem,
    VqeResult,
};
use qtr_core::qpu::QpuDevice;
use qtr_core::rng::StreamRng;
use qtr_core::runtime::{metrics_csv, trace_json, Metrics, Runtime};

use crate::config::{Resolved, Scenario};
use crate::CliError;

/// The three files a scenario run produces.
pub struct Artifacts {
    pub trace_json: String,
    pub metrics_csv: String,
    pub summary: String,
}

pub struct ScenarioRun {
    pub artifacts: Artifacts,
    pub metrics: Metrics,
}

fn exec_err(e: impl std::fmt::Display) -> CliError {
    CliError::Execution(e.to_string())
}

/// Per-device seed derived from the scenario seed.
fn device_seed(seed: u64, index: usize) -> u64 {
    StreamRng::new(seed, 0x0DE5_0000 | index as u64).next_u64()
}

fn build_runtime(cfg: &Resolved) -> Result<Runtime, CliError> {
    let devices = (0..cfg.devices)
        .map(|i| {
            QpuDevice::new(
                format!("qpu{i}"),
                24,
                cfg.noise,
                cfg.latency.clone(),
                device_seed(cfg.seed, i),
            )
        })
        .collect::<qtr_core::Result<Vec<_>>>()
        .map_err(exec_err)?;
    Ok(Runtime::new(devices))
}

enum Output {
    Phase(IpeResult),
    Many(Vec<IpeResult>),
    Vqe(VqeResult),
}

/// Run the scenario and render its artifacts in memory.
pub fn execute(cfg: &Resolved) -> Result<ScenarioRun, CliError> {
    let mut rt = build_runtime(cfg)?;
    let output = match cfg.scenario {
        Scenario::Ipe => {
            let problem =
                PhaseEstimationProblem::from_bit_str(&cfg.phi, cfg.shots).map_err(exec_err)?;
            Output::Phase(
                run_ipe(&problem, &mut rt, None, cfg.mode, cfg.classical_cost).map_err(exec_err)?,
            )
        }
        Scenario::Qpe => {
            let problem =
                PhaseEstimationProblem::from_bit_str(&cfg.phi, cfg.shots).map_err(exec_err)?;
            Output::Phase(run_qpe(&problem, &mut rt, 0, cfg.mode).map_err(exec_err)?)
        }
        Scenario::Ensemble => {
            let problem =
                PhaseEstimationProblem::from_bit_str(&cfg.phi, cfg.shots).map_err(exec_err)?;
            let problems = vec![problem; cfg.ensemble_k];
            Output::Many(
                run_ipe_ensemble(&problems, &mut rt, cfg.mode, cfg.classical_cost)
                    .map_err(exec_err)?,
            )
        }
        Scenario::Vqe => {
            let problem = VqeProblem {
                c_x: cfg.cost.0,
                c_y: cfg.cost.1,
                p_inject: cfg.p_inject,
                grid_points: cfg.grid_points,
                shots_per_setting: cfg.shots,
                max_retries: cfg.max_retries,
                variant: cfg.variant,
                exact_expectation: cfg.exact_expectation,
            };
            Output::Vqe(run_vqe(&problem, &mut rt, 0, cfg.mode).map_err(exec_err)?)
        }
    };
    let metrics = rt.metrics();
    let artifacts = Artifacts {
        trace_json: trace_json(cfg.scenario.name(), rt.trace(), &metrics),
        metrics_csv: metrics_csv(rt.trace()),
        summary: summary_text(cfg, &output, &metrics, &rt),
    };
    Ok(ScenarioRun { artifacts, metrics })
}

/// Run the scenario and write `trace.json`, `metrics.csv`, `summary.txt`.
pub fn run_scenario(cfg: &Resolved) -> Result<(), CliError> {
    let run = execute(cfg)?;
    write_artifacts(&cfg.output_dir, &run.artifacts)
}

pub fn write_artifacts(dir: &Path, artifacts: &Artifacts) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Execution(format!("cannot create {}: {e}", dir.display())))?;
    for (name, body) in [
        ("trace.json", &artifacts.trace_json),
        ("metrics.csv", &artifacts.metrics_csv),
        ("summary.txt", &artifacts.summary),
    ] {
        let path = dir.join(name);
        fs::write(&path, body)
            .map_err(|e| CliError::Execution(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn phase_summary(lines: &mut String, result: &IpeResult) {
    let bits: String = result.bits.iter().map(|b| char::from(b'0' + b)).collect();
    lines.push_str(&format!("recovered bits: {bits}\n"));
    lines.push_str(&format!("estimate: {}\n", result.estimate));
    lines.push_str(&format!("qubits used: {}\n", result.resources.qubits));
    lines.push_str(&format!(
        "classical bits used: {}\n",
        result.resources.classical_bits
    ));
    let max_depth = result
        .resources
        .per_iteration_depth
        .iter()
        .max()
        .copied()
        .unwrap_or(0);
    lines.push_str(&format!("max circuit depth: {max_depth}\n"));
}

fn summary_text(cfg: &Resolved, output: &Output, metrics: &Metrics, rt: &Runtime) -> String {
    let mut s = String::new();
    s.push_str(&format!("scenario: {}\n", cfg.scenario.name()));
    s.push_str(&format!(
        "mode: {}\n",
        match cfg.mode {
            qtr_core::runtime::ExecMode::Sync => "sync",
            qtr_core::runtime::ExecMode::Async => "async",
        }
    ));
    s.push_str(&format!("seed: {}\n", cfg.seed));
    s.push_str(&format!("devices: {}\n", cfg.devices));
    s.push_str(&format!(
        "latency: t_init={} t_gate={} t_meas={} t_submit={} t_return={} jitter_frac={}\n",
        cfg.latency.t_init,
        cfg.latency.t_gate,
        cfg.latency.t_meas,
        cfg.latency.t_submit,
        cfg.latency.t_return,
        cfg.latency.jitter_frac
    ));
    s.push('\n');
    match output {
        Output::Phase(result) => phase_summary(&mut s, result),
        Output::Many(results) => {
            s.push_str(&format!("ensemble of {} problems\n", results.len()));
            for (i, result) in results.iter().enumerate() {
                let bits: String = result.bits.iter().map(|b| char::from(b'0' + b)).collect();
                s.push_str(&format!(
                    "problem {i}: bits {bits}, estimate {}\n",
                    result.estimate
                ));
            }
        }
        Output::Vqe(result) => {
            s.push_str(&format!("best angle: {}\n", result.best_angle));
            s.push_str(&format!("best cost: {}\n", result.best_cost));
            s.push_str(&format!("acceptance rate: {}\n", result.acceptance_rate));
            s.push_str(&format!("qubits used: {}\n", result.qubits_used));
            s.push_str(&format!(
                "angles with samples: {}/{}\n",
                result.per_angle.len(),
                cfg.grid_points
            ));
        }
    }
    s.push('\n');
    s.push_str(&format!("makespan_us: {}\n", metrics.makespan));
    for device in rt.devices() {
        let id = device.device_id();
        let busy = metrics.device_busy.get(id).copied().unwrap_or(0.0);
        let util = metrics.device_utilization.get(id).copied().unwrap_or(0.0);
        s.push_str(&format!("device {id}: busy_us={busy} utilization={util}\n"));
    }
    s.push_str(&format!("cpu busy_us: {}\n", metrics.cpu_busy));
    s
}

/// The comparison axis: execution mode or latency preset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompareAxis {
    Mode,
    Latency,
}

impl CompareAxis {
    pub fn name(&self) -> &'static str {
        match self {
            CompareAxis::Mode => "mode",
            CompareAxis::Latency => "latency",
        }
    }
}

pub struct CompareArm {
    pub name: &'static str,
    pub makespan: f64,
    pub mean_device_utilization: f64,
    pub cpu_busy: f64,
}

pub struct CompareReport {
    pub axis: CompareAxis,
    pub arms: Vec<CompareArm>,
    /// Second arm's makespan over the first's.
    pub ratio: f64,
    pub table: String,
    pub csv: String,
}

/// Run the scenario under both values of the axis with identical seeds,
/// writing per-arm artifacts into subdirectories plus a comparison CSV.
pub fn compare(cfg: &Resolved, axis: CompareAxis) -> Result<CompareReport, CliError> {
    let arm_configs: Vec<(&'static str, Resolved)> = match axis {
        CompareAxis::Mode => [
            ("sync", qtr_core::runtime::ExecMode::Sync),
            ("async", qtr_core::runtime::ExecMode::Async),
        ]
        .into_iter()
        .map(|(name, mode)| {
            let mut arm = cfg.clone();
            arm.mode = mode;
            (name, arm)
        })
        .collect(),
        CompareAxis::Latency => [
            ("tight", qtr_core::qpu::LatencyModel::tight()),
            ("cloud", qtr_core::qpu::LatencyModel::cloud()),
        ]
        .into_iter()
        .map(|(name, latency)| {
            let mut arm = cfg.clone();
            arm.latency = latency;
            (name, arm)
        })
        .collect(),
    };

    let mut arms = Vec::new();
    for (name, arm_cfg) in &arm_configs {
        let run = execute(arm_cfg)?;
        write_artifacts(&cfg.output_dir.join(name), &run.artifacts)?;
        let utils: Vec<f64> = run.metrics.device_utilization.values().copied().collect();
        let mean_util = if utils.is_empty() {
            0.0
        } else {
            utils.iter().sum::<f64>() / utils.len() as f64
        };
        arms.push(CompareArm {
            name,
            makespan: run.metrics.makespan,
            mean_device_utilization: mean_util,
            cpu_busy: run.metrics.cpu_busy,
        });
    }

    let ratio = if arms[0].makespan > 0.0 {
        arms[1].makespan / arms[0].makespan
    } else {
        0.0
    };

    let mut csv = String::from("arm,makespan,mean_device_utilization,cpu_busy\n");
    for arm in &arms {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            arm.name, arm.makespan, arm.mean_device_utilization, arm.cpu_busy
        ));
    }
    csv.push_str(&format!("ratio,{ratio},,\n"));
    fs::write(cfg.output_dir.join("compare.csv"), &csv)
        .map_err(|e| CliError::Execution(format!("cannot write compare.csv: {e}")))?;

    let mut table = format!("axis: {}\n", axis.name());
    table.push_str(&format!(
        "{:<8} {:>16} {:>18} {:>12}\n",
        "arm", "makespan_us", "mean_utilization", "cpu_busy_us"
    ));
    for arm in &arms {
        table.push_str(&format!(
            "{:<8} {:>16.3} {:>18.4} {:>12.3}\n",
            arm.name, arm.makespan, arm.mean_device_utilization, arm.cpu_busy
        ));
    }
    table.push_str(&format!(
        "ratio ({}/{}): {:.4}\n",
        arms[1].name, arms[0].name, ratio
    ));

    Ok(CompareReport {
        axis,
        arms,
        ratio,
        table,
        csv,
    })
}
