//! Error-detected variational loop.
//!
//! Each shot walks three stages inside one device session. Stage (a)
//! prepares the data qubit and checks a flag ancilla that a CNOT entangled
//! with it; a raised flag resets the stage, up to a retry budget, after
//! which the shot is discarded (post-selection). Stage (b) entangles a
//! phase ancilla carrying e^{i theta} with the data qubit; the ancilla's
//! measured bit s selects the realized rotation angle +theta (s = 0) or
//! -theta (s = 1). Stage (c) measures the data qubit in the X or Y basis
//! and accumulates +/-1 samples binned by realized angle. A classical grid
//! argmin over the binned cost estimates picks the best angle.
//!
//! The single-ancilla variant reuses the flag qubit for stage (b) after a
//! reset, trading one qubit for a strictly synchronous stage order.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::rc::Rc;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::runtime::{
    ClassicalCtx, ClassicalFn, ClassicalOutput, CregRead, ExecMode, Runtime, SessionId, TaskGraph,
};
use crate::statevector::{NoiseKind, PauliAxis};

/// Ancilla layout of the variational gadget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VqeVariant {
    /// Separate flag and rotation ancillas (3 qubits).
    TwoAncilla,
    /// The flag ancilla is reset and reused for the rotation (2 qubits).
    SingleAncilla,
}

/// Configuration of one variational run. The cost function is
/// C(alpha) = c_x <X> + c_y <Y> on the data qubit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VqeProblem {
    pub c_x: f64,
    pub c_y: f64,
    /// Bit-flip probability injected into state preparation.
    pub p_inject: f64,
    /// Nominal angles on the grid over [0, 2 pi).
    pub grid_points: usize,
    /// Shots per nominal grid angle, split over the needed measurement bases.
    pub shots_per_setting: u64,
    /// Stage (a) repetitions allowed before a shot is discarded.
    pub max_retries: u32,
    pub variant: VqeVariant,
    /// Compute stage (c) expectations exactly from the register instead of
    /// sampling (simulator diagnostic).
    pub exact_expectation: bool,
}

impl VqeProblem {
    pub fn new(c_x: f64, c_y: f64) -> Self {
        VqeProblem {
            c_x,
            c_y,
            p_inject: 0.0,
            grid_points: 64,
            shots_per_setting: 1024,
            max_retries: 1,
            variant: VqeVariant::TwoAncilla,
            exact_expectation: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 4 {
            return Err(Error::GridTooSmall(self.grid_points));
        }
        if !(0.0..=1.0).contains(&self.p_inject) {
            return Err(Error::BadProbability(self.p_inject));
        }
        if self.shots_per_setting == 0 {
            return Err(Error::ZeroShots);
        }
        Ok(())
    }

    pub fn qubits(&self) -> usize {
        match self.variant {
            VqeVariant::TwoAncilla => 3,
            VqeVariant::SingleAncilla => 2,
        }
    }

    fn rotor_qubit(&self) -> usize {
        match self.variant {
            VqeVariant::TwoAncilla => 2,
            VqeVariant::SingleAncilla => 1,
        }
    }
}

/// Binned cost estimate at one realized angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleEstimate {
    pub angle: f64,
    pub mean_cost: f64,
    pub samples: u64,
}

/// Outcome of a variational run.
#[derive(Clone, Debug, PartialEq)]
pub struct VqeResult {
    /// Realized-angle grid index to cost estimate. Angles whose shots were
    /// all discarded are absent.
    pub per_angle: BTreeMap<u32, AngleEstimate>,
    pub best_angle: f64,
    pub best_cost: f64,
    /// Accepted shots over all shots, across the whole grid.
    pub acceptance_rate: f64,
    /// Histogram of stage (a) retries consumed per shot.
    pub retries_used: BTreeMap<u32, u64>,
    pub qubits_used: usize,
}

#[derive(Clone, Copy, Debug, Default)]
struct BinStats {
    x_sum: f64,
    x_n: u64,
    y_sum: f64,
    y_n: u64,
}

#[derive(Default)]
struct VqeAccum {
    bins: BTreeMap<u32, BinStats>,
    accepted: u64,
    total: u64,
    retries_used: BTreeMap<u32, u64>,
}

#[derive(Clone, Copy)]
struct VqePlan {
    problem: VqeProblem,
    device: usize,
}

// Qubit 0 is the data qubit, qubit 1 the flag ancilla. Classical bits:
// 0 flag, 1 rotation sign, 2 estimation outcome.
const DATA: usize = 0;
const FLAG: usize = 1;
const CBIT_FLAG: usize = 0;
const CBIT_SIGN: usize = 1;
const CBIT_MEAS: usize = 2;

fn prep_fragment(plan: &VqePlan, retry: bool) -> Circuit {
    let mut c = Circuit::new(plan.problem.qubits(), 3);
    if retry {
        c.reset(DATA);
        c.reset(FLAG);
    }
    c.noise(NoiseKind::BitFlip, plan.problem.p_inject, DATA);
    c.cnot(DATA, FLAG);
    c.measure(FLAG, CBIT_FLAG);
    c
}

fn rotation_fragment(plan: &VqePlan, theta: f64) -> Circuit {
    let rotor = plan.problem.rotor_qubit();
    let mut c = Circuit::new(plan.problem.qubits(), 3);
    c.h(DATA);
    if plan.problem.variant == VqeVariant::SingleAncilla {
        c.reset(rotor);
    }
    c.prep_phase(theta, rotor);
    c.cnot(DATA, rotor);
    c.measure(rotor, CBIT_SIGN);
    c
}

fn estimation_fragment(plan: &VqePlan, axis: PauliAxis) -> Circuit {
    let mut c = Circuit::new(plan.problem.qubits(), 3);
    match axis {
        PauliAxis::X => {
            c.h(DATA);
        }
        PauliAxis::Y => {
            c.s_dagger(DATA);
            c.h(DATA);
        }
        PauliAxis::Z => {}
    }
    c.measure(DATA, CBIT_MEAS);
    c
}

/// Measurement basis for a sampled shot.
fn assigned_axis(problem: &VqeProblem, shot: u64) -> PauliAxis {
    let needs_x = problem.c_x != 0.0;
    let needs_y = problem.c_y != 0.0;
    match (needs_x, needs_y) {
        (true, true) => {
            if shot.is_multiple_of(2) {
                PauliAxis::X
            } else {
                PauliAxis::Y
            }
        }
        (false, true) => PauliAxis::Y,
        _ => PauliAxis::X,
    }
}

fn flag_callback(
    plan: VqePlan,
    grid_idx: u32,
    shot: u64,
    attempt: u32,
    session: SessionId,
    accum: Rc<RefCell<VqeAccum>>,
) -> ClassicalFn {
    Box::new(move |ctx: &mut ClassicalCtx<'_>| {
        let flag = ctx.read_creg(session, CBIT_FLAG)?;
        if flag == 1 {
            if attempt < plan.problem.max_retries {
                // Error detected: reset the stage and try again.
                let frag = ctx.append_fragment(session, prep_fragment(&plan, true), &[])?;
                ctx.append_classical(
                    "flag check",
                    vec![CregRead {
                        session,
                        bit: CBIT_FLAG,
                    }],
                    &[frag],
                    0.0,
                    flag_callback(plan, grid_idx, shot, attempt + 1, session, accum.clone()),
                )?;
            } else {
                let mut state = accum.borrow_mut();
                state.total += 1;
                *state.retries_used.entry(attempt).or_insert(0) += 1;
                drop(state);
                ctx.close_session(session);
                next_shot(ctx, plan, grid_idx, shot + 1, &accum)?;
            }
            return Ok(ClassicalOutput::Bit(1));
        }
        {
            let mut state = accum.borrow_mut();
            state.total += 1;
            state.accepted += 1;
            *state.retries_used.entry(attempt).or_insert(0) += 1;
        }
        let theta = TAU * grid_idx as f64 / plan.problem.grid_points as f64;
        let frag = ctx.append_fragment(session, rotation_fragment(&plan, theta), &[])?;
        ctx.append_classical(
            "rotation sign",
            vec![CregRead {
                session,
                bit: CBIT_SIGN,
            }],
            &[frag],
            0.0,
            sign_callback(plan, grid_idx, shot, session, accum.clone()),
        )?;
        Ok(ClassicalOutput::Bit(0))
    })
}

fn sign_callback(
    plan: VqePlan,
    grid_idx: u32,
    shot: u64,
    session: SessionId,
    accum: Rc<RefCell<VqeAccum>>,
) -> ClassicalFn {
    Box::new(move |ctx: &mut ClassicalCtx<'_>| {
        let sign = ctx.read_creg(session, CBIT_SIGN)?;
        let grid = plan.problem.grid_points as u32;
        // Realized angle: +theta on 0, -theta (mod 2 pi) on 1.
        let realized = if sign == 0 {
            grid_idx
        } else {
            (grid - grid_idx) % grid
        };
        if plan.problem.exact_expectation {
            let x = ctx.expectation(session, DATA, PauliAxis::X)?;
            let y = ctx.expectation(session, DATA, PauliAxis::Y)?;
            let mut state = accum.borrow_mut();
            let bin = state.bins.entry(realized).or_default();
            bin.x_sum += x;
            bin.x_n += 1;
            bin.y_sum += y;
            bin.y_n += 1;
            drop(state);
            ctx.close_session(session);
            next_shot(ctx, plan, grid_idx, shot + 1, &accum)?;
            return Ok(ClassicalOutput::Bit(sign));
        }
        let axis = assigned_axis(&plan.problem, shot);
        let frag = ctx.append_fragment(session, estimation_fragment(&plan, axis), &[])?;
        ctx.append_classical(
            "estimate",
            vec![CregRead {
                session,
                bit: CBIT_MEAS,
            }],
            &[frag],
            0.0,
            estimate_callback(plan, grid_idx, realized, axis, shot, session, accum.clone()),
        )?;
        Ok(ClassicalOutput::Bit(sign))
    })
}

#[allow(clippy::too_many_arguments)]
fn estimate_callback(
    plan: VqePlan,
    grid_idx: u32,
    realized: u32,
    axis: PauliAxis,
    shot: u64,
    session: SessionId,
    accum: Rc<RefCell<VqeAccum>>,
) -> ClassicalFn {
    Box::new(move |ctx: &mut ClassicalCtx<'_>| {
        let bit = ctx.read_creg(session, CBIT_MEAS)?;
        let value = 1.0 - 2.0 * bit as f64;
        {
            let mut state = accum.borrow_mut();
            let bin = state.bins.entry(realized).or_default();
            match axis {
                PauliAxis::Y => {
                    bin.y_sum += value;
                    bin.y_n += 1;
                }
                _ => {
                    bin.x_sum += value;
                    bin.x_n += 1;
                }
            }
        }
        ctx.close_session(session);
        next_shot(ctx, plan, grid_idx, shot + 1, &accum)?;
        Ok(ClassicalOutput::Bit(bit))
    })
}

fn next_shot(
    ctx: &mut ClassicalCtx<'_>,
    plan: VqePlan,
    grid_idx: u32,
    shot: u64,
    accum: &Rc<RefCell<VqeAccum>>,
) -> Result<()> {
    if shot >= plan.problem.shots_per_setting {
        return Ok(());
    }
    let session = ctx.append_session(plan.device, plan.problem.qubits(), 3)?;
    let frag = ctx.append_fragment(session, prep_fragment(&plan, false), &[])?;
    ctx.append_classical(
        "flag check",
        vec![CregRead {
            session,
            bit: CBIT_FLAG,
        }],
        &[frag],
        0.0,
        flag_callback(plan, grid_idx, shot, 0, session, accum.clone()),
    )?;
    Ok(())
}

/// The variational loop under the synchronous engine, as a chain of
/// session fragments and classical decisions.
pub fn vqe_error_detected(
    problem: &VqeProblem,
    runtime: &mut Runtime,
    device: usize,
) -> Result<VqeResult> {
    run_vqe(problem, runtime, device, ExecMode::Sync)
}

/// The variational loop with explicit engine choice; the per-shot stage
/// chain is fully dependent, so both engines execute it in order.
pub fn run_vqe(
    problem: &VqeProblem,
    runtime: &mut Runtime,
    device: usize,
    mode: ExecMode,
) -> Result<VqeResult> {
    problem.validate()?;
    let max_qubits = runtime
        .device(device)
        .ok_or(Error::UnknownDevice(device))?
        .max_qubits();
    if problem.qubits() > max_qubits {
        return Err(Error::DeviceTooSmall {
            device: runtime.device(device).expect("checked").device_id().into(),
            needed: problem.qubits(),
            available: max_qubits,
        });
    }
    let plan = VqePlan {
        problem: *problem,
        device,
    };
    let accum = Rc::new(RefCell::new(VqeAccum::default()));
    for grid_idx in 0..problem.grid_points as u32 {
        let mut graph = TaskGraph::new(true);
        let session = graph.add_session(device, problem.qubits(), 3);
        let frag = graph.add_fragment(session, prep_fragment(&plan, false), &[])?;
        graph.add_classical(
            "flag check",
            vec![CregRead {
                session,
                bit: CBIT_FLAG,
            }],
            &[frag],
            0.0,
            flag_callback(plan, grid_idx, 0, 0, session, accum.clone()),
        )?;
        let outcome = runtime.run(graph, mode)?;
        if let Some((id, msg)) = outcome.first_failure() {
            return Err(Error::TaskFailed(id.0, msg.to_string()));
        }
    }
    assemble(problem, &accum)
}

fn assemble(problem: &VqeProblem, accum: &RefCell<VqeAccum>) -> Result<VqeResult> {
    let state = accum.borrow();
    let needs_x = problem.c_x != 0.0;
    let needs_y = problem.c_y != 0.0;
    let mut per_angle = BTreeMap::new();
    for (&idx, bin) in &state.bins {
        if (needs_x && bin.x_n == 0) || (needs_y && bin.y_n == 0) {
            continue;
        }
        let x_mean = if bin.x_n > 0 {
            bin.x_sum / bin.x_n as f64
        } else {
            0.0
        };
        let y_mean = if bin.y_n > 0 {
            bin.y_sum / bin.y_n as f64
        } else {
            0.0
        };
        per_angle.insert(
            idx,
            AngleEstimate {
                angle: TAU * idx as f64 / problem.grid_points as f64,
                mean_cost: problem.c_x * x_mean + problem.c_y * y_mean,
                samples: bin.x_n + bin.y_n,
            },
        );
    }
    let best = per_angle
        .values()
        .fold(None::<AngleEstimate>, |best, est| match best {
            Some(b) if b.mean_cost <= est.mean_cost => Some(b),
            _ => Some(*est),
        })
        .ok_or(Error::NoAcceptedSamples)?;
    let acceptance_rate = if state.total > 0 {
        state.accepted as f64 / state.total as f64
    } else {
        0.0
    };
    Ok(VqeResult {
        per_angle,
        best_angle: best.angle,
        best_cost: best.mean_cost,
        acceptance_rate,
        retries_used: state.retries_used.clone(),
        qubits_used: problem.qubits(),
    })
}
