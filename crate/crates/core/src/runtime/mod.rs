//! Discrete-event hybrid task runtime.
//!
//! A [`TaskGraph`] mixes three task kinds: whole-circuit jobs that run a
//! shot loop on a device, circuit fragments that share one register through
//! a device session, and classical callbacks on a single CPU lane.
//! Dependencies are the union of explicitly declared edges and inferred
//! resource hazards; the runtime executes the graph either synchronously
//! (strict creation order) or asynchronously (event-driven list scheduling)
//! over a virtual clock, producing a trace and metrics.

mod exec;
mod trace;

pub use exec::{ExecMode, RunOutcome, Runtime, TaskHandle};
pub use trace::{compute_metrics, metrics_csv, trace_json, Metrics, TraceEvent};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::qpu::{ExecutionResult, FragmentOutcome};
use crate::statevector::PauliAxis;

/// Identifier of a task within its graph; equal to creation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub u64);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Identifier of a session declared on a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// A classical bit of a session's register, as read by a classical task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CregRead {
    pub session: SessionId,
    pub bit: usize,
}

/// Value returned by a classical callback.
#[derive(Clone, Debug, PartialEq)]
pub enum ClassicalOutput {
    Unit,
    Bit(u8),
    Bits(Vec<u8>),
    Real(f64),
}

/// Result attached to a completed task.
#[derive(Clone, Debug, PartialEq)]
pub enum TaskOutput {
    Execution(ExecutionResult),
    Fragment(FragmentOutcome),
    Classical(ClassicalOutput),
}

impl TaskOutput {
    pub fn execution(&self) -> Option<&ExecutionResult> {
        match self {
            TaskOutput::Execution(r) => Some(r),
            _ => None,
        }
    }

    pub fn fragment(&self) -> Option<&FragmentOutcome> {
        match self {
            TaskOutput::Fragment(f) => Some(f),
            _ => None,
        }
    }

    pub fn classical(&self) -> Option<&ClassicalOutput> {
        match self {
            TaskOutput::Classical(c) => Some(c),
            _ => None,
        }
    }
}

/// Callback body of a classical task; runs exactly once.
pub type ClassicalFn = Box<dyn FnOnce(&mut ClassicalCtx<'_>) -> Result<ClassicalOutput>>;

/// What a task does when dispatched.
pub enum TaskKind {
    /// Shot-loop submission of a complete circuit to a device.
    CircuitJob {
        circuit: Circuit,
        shots: u64,
        /// Pin to a device index; unhinted jobs go to the first idle device.
        device_hint: Option<usize>,
    },
    /// One circuit fragment executed against a session's live register.
    QuantumFragment {
        fragment: Circuit,
        session: SessionId,
    },
    /// Host-side computation occupying the CPU lane for `classical_cost`.
    Classical {
        label: String,
        reads: Vec<CregRead>,
        callback: Option<ClassicalFn>,
    },
}

impl TaskKind {
    pub fn label(&self) -> &'static str {
        match self {
            TaskKind::CircuitJob { .. } => "circuit_job",
            TaskKind::QuantumFragment { .. } => "fragment",
            TaskKind::Classical { .. } => "classical",
        }
    }
}

impl fmt::Debug for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::CircuitJob {
                circuit,
                shots,
                device_hint,
            } => f
                .debug_struct("CircuitJob")
                .field("instructions", &circuit.instructions.len())
                .field("shots", shots)
                .field("device_hint", device_hint)
                .finish(),
            TaskKind::QuantumFragment { fragment, session } => f
                .debug_struct("QuantumFragment")
                .field("instructions", &fragment.instructions.len())
                .field("session", session)
                .finish(),
            TaskKind::Classical { label, reads, .. } => f
                .debug_struct("Classical")
                .field("label", label)
                .field("reads", reads)
                .finish(),
        }
    }
}

/// One node of the task graph.
#[derive(Debug)]
pub struct Task {
    pub task_id: TaskId,
    pub kind: TaskKind,
    pub explicit_deps: Vec<TaskId>,
    /// CPU occupancy of classical tasks, microseconds.
    pub classical_cost: f64,
}

/// Lifecycle of a task; transitions only move forward.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TaskStatus {
    Pending,
    Running,
    Done,
    Failed(String),
}

impl TaskStatus {
    pub fn is_done(&self) -> bool {
        matches!(self, TaskStatus::Done)
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, TaskStatus::Failed(_))
    }
}

/// Declaration of a mid-shot session: a register of `num_qubits` qubits and
/// `num_clbits` classical bits held on one device across fragments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SessionSpec {
    pub device: usize,
    pub num_qubits: usize,
    pub num_clbits: usize,
}

/// An ordered collection of tasks plus the sessions they execute in.
///
/// Graphs are acyclic by construction: a task may depend only on
/// previously created tasks. When `dynamic` is set, classical tasks may
/// append further tasks upon completion under the same rule.
pub struct TaskGraph {
    pub(crate) tasks: Vec<Task>,
    pub(crate) sessions: Vec<SessionSpec>,
    dynamic: bool,
}

impl TaskGraph {
    pub fn new(dynamic: bool) -> Self {
        TaskGraph {
            tasks: Vec::new(),
            sessions: Vec::new(),
            dynamic,
        }
    }

    pub fn is_dynamic(&self) -> bool {
        self.dynamic
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn sessions(&self) -> &[SessionSpec] {
        &self.sessions
    }

    pub fn add_session(
        &mut self,
        device: usize,
        num_qubits: usize,
        num_clbits: usize,
    ) -> SessionId {
        let id = SessionId(self.sessions.len() as u64);
        self.sessions.push(SessionSpec {
            device,
            num_qubits,
            num_clbits,
        });
        id
    }

    pub fn add_circuit_job(
        &mut self,
        circuit: Circuit,
        shots: u64,
        device_hint: Option<usize>,
        deps: &[TaskId],
    ) -> Result<TaskId> {
        self.add_task(
            TaskKind::CircuitJob {
                circuit,
                shots,
                device_hint,
            },
            deps,
            0.0,
        )
    }

    pub fn add_fragment(
        &mut self,
        session: SessionId,
        fragment: Circuit,
        deps: &[TaskId],
    ) -> Result<TaskId> {
        if session.0 as usize >= self.sessions.len() {
            return Err(Error::UnknownSession(session.0));
        }
        self.add_task(TaskKind::QuantumFragment { fragment, session }, deps, 0.0)
    }

    pub fn add_classical(
        &mut self,
        label: impl Into<String>,
        reads: Vec<CregRead>,
        deps: &[TaskId],
        classical_cost: f64,
        callback: ClassicalFn,
    ) -> Result<TaskId> {
        for r in &reads {
            if r.session.0 as usize >= self.sessions.len() {
                return Err(Error::UnknownSession(r.session.0));
            }
        }
        self.add_task(
            TaskKind::Classical {
                label: label.into(),
                reads,
                callback: Some(callback),
            },
            deps,
            classical_cost,
        )
    }

    fn add_task(&mut self, kind: TaskKind, deps: &[TaskId], classical_cost: f64) -> Result<TaskId> {
        let id = TaskId(self.tasks.len() as u64);
        for dep in deps {
            if dep.0 >= id.0 {
                return Err(Error::UnknownDependency(dep.0));
            }
        }
        self.tasks.push(Task {
            task_id: id,
            kind,
            explicit_deps: deps.to_vec(),
            classical_cost,
        });
        Ok(id)
    }
}

/// Resource touch-set of a task, used for hazard inference. Keys are
/// session-scoped: tasks in different sessions never conflict implicitly.
#[derive(Clone, Debug, Default)]
pub(crate) struct ResourceUse {
    /// (session, qubit) -> whether every touch of that qubit is diagonal.
    pub qubit_diag: BTreeMap<(u64, usize), bool>,
    pub creg_reads: BTreeSet<(u64, usize)>,
    pub creg_writes: BTreeSet<(u64, usize)>,
}

impl ResourceUse {
    pub fn sessions(&self) -> BTreeSet<u64> {
        self.qubit_diag
            .keys()
            .map(|(s, _)| *s)
            .chain(self.creg_reads.iter().map(|(s, _)| *s))
            .chain(self.creg_writes.iter().map(|(s, _)| *s))
            .collect()
    }
}

pub(crate) fn resource_use(task: &Task) -> ResourceUse {
    let mut usage = ResourceUse::default();
    match &task.kind {
        // Circuit jobs run on a private fresh register; their classical
        // results flow through task outputs, not shared cregs.
        TaskKind::CircuitJob { .. } => {}
        TaskKind::QuantumFragment { fragment, session } => {
            let s = session.0;
            for instr in &fragment.instructions {
                for q in instr.qubits() {
                    let diag = instr.is_diagonal_on(q);
                    usage
                        .qubit_diag
                        .entry((s, q))
                        .and_modify(|d| *d &= diag)
                        .or_insert(diag);
                }
                if let Some(c) = instr.creg_read() {
                    usage.creg_reads.insert((s, c));
                }
                if let Some(c) = instr.creg_write() {
                    usage.creg_writes.insert((s, c));
                }
            }
        }
        TaskKind::Classical { reads, .. } => {
            for r in reads {
                usage.creg_reads.insert((r.session.0, r.bit));
            }
        }
    }
    usage
}

/// Whether two tasks must be ordered. Qubit overlap conflicts unless both
/// sides act diagonally on every shared qubit (commuting diagonal controls
/// carry no edge); classical bits conflict when one side writes a bit the
/// other reads or writes.
pub(crate) fn conflicts(a: &ResourceUse, b: &ResourceUse) -> bool {
    for (key, a_diag) in &a.qubit_diag {
        if let Some(b_diag) = b.qubit_diag.get(key) {
            if !(*a_diag && *b_diag) {
                return true;
            }
        }
    }
    let write_clash = a
        .creg_writes
        .iter()
        .any(|w| b.creg_reads.contains(w) || b.creg_writes.contains(w));
    let read_clash = b.creg_writes.iter().any(|w| a.creg_reads.contains(w));
    write_clash || read_clash
}

/// Union of explicit edges and inferred resource hazards; conflicting tasks
/// are ordered by creation order.
pub fn infer_dependencies(graph: &TaskGraph) -> Vec<(TaskId, TaskId)> {
    let uses: Vec<ResourceUse> = graph.tasks.iter().map(resource_use).collect();
    let mut edges = BTreeSet::new();
    for (i, task) in graph.tasks.iter().enumerate() {
        for dep in &task.explicit_deps {
            edges.insert((*dep, task.task_id));
        }
        for j in 0..i {
            if conflicts(&uses[j], &uses[i]) {
                edges.insert((graph.tasks[j].task_id, task.task_id));
            }
        }
    }
    edges.into_iter().collect()
}

/// Context handed to classical callbacks: completed results, session
/// registers, and (on dynamic graphs) the ability to append work.
pub struct ClassicalCtx<'a> {
    pub(crate) dynamic: bool,
    pub(crate) outputs: &'a BTreeMap<u64, TaskOutput>,
    pub(crate) reads: &'a [CregRead],
    pub(crate) sessions: &'a [SessionSpec],
    pub(crate) session_open: &'a [SessionLife],
    pub(crate) devices: &'a [crate::qpu::QpuDevice],
    pub(crate) next_task: u64,
    pub(crate) next_session: u64,
    pub(crate) appended: Vec<Task>,
    pub(crate) new_sessions: Vec<SessionSpec>,
    pub(crate) closes: Vec<SessionId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SessionLife {
    NotOpened,
    Open,
    Closed,
}

impl<'a> ClassicalCtx<'a> {
    /// Output of a completed task, if it completed.
    pub fn output(&self, task: TaskId) -> Option<&TaskOutput> {
        self.outputs.get(&task.0)
    }

    /// Counts of a completed circuit job.
    pub fn counts(&self, task: TaskId) -> Option<&BTreeMap<String, u64>> {
        self.output(task)
            .and_then(TaskOutput::execution)
            .map(|r| &r.counts)
    }

    fn session_life(&self, session: SessionId) -> Result<SessionLife> {
        let idx = session.0 as usize;
        if idx < self.session_open.len() {
            Ok(self.session_open[idx])
        } else if (idx as u64) < self.next_session {
            // Declared by this callback; not opened yet.
            Ok(SessionLife::NotOpened)
        } else {
            Err(Error::UnknownSession(session.0))
        }
    }

    /// Read a classical bit of a session register. The bit must be declared
    /// in this task's read set and already written by some fragment.
    pub fn read_creg(&self, session: SessionId, bit: usize) -> Result<u8> {
        if !self
            .reads
            .iter()
            .any(|r| r.session == session && r.bit == bit)
        {
            return Err(Error::UndeclaredRead {
                session: session.0,
                bit,
            });
        }
        match self.session_life(session)? {
            SessionLife::Open => {}
            SessionLife::NotOpened | SessionLife::Closed => {
                return Err(Error::UnwrittenBit {
                    session: session.0,
                    bit,
                })
            }
        }
        let device = self.sessions[session.0 as usize].device;
        self.devices[device]
            .session_bit(bit)?
            .ok_or(Error::UnwrittenBit {
                session: session.0,
                bit,
            })
    }

    /// Exact Pauli expectation on a live session register (simulator
    /// diagnostic; no hardware counterpart).
    pub fn expectation(&self, session: SessionId, qubit: usize, axis: PauliAxis) -> Result<f64> {
        if self.session_life(session)? != SessionLife::Open {
            return Err(Error::SessionClosed(session.0));
        }
        let device = self.sessions[session.0 as usize].device;
        self.devices[device].session_expectation(qubit, axis)
    }

    /// Declare a new session for appended fragments.
    pub fn append_session(
        &mut self,
        device: usize,
        num_qubits: usize,
        num_clbits: usize,
    ) -> Result<SessionId> {
        self.ensure_dynamic()?;
        if device >= self.devices.len() {
            return Err(Error::UnknownDevice(device));
        }
        let id = SessionId(self.next_session);
        self.next_session += 1;
        self.new_sessions.push(SessionSpec {
            device,
            num_qubits,
            num_clbits,
        });
        Ok(id)
    }

    pub fn append_circuit_job(
        &mut self,
        circuit: Circuit,
        shots: u64,
        device_hint: Option<usize>,
        deps: &[TaskId],
    ) -> Result<TaskId> {
        self.append_task(
            TaskKind::CircuitJob {
                circuit,
                shots,
                device_hint,
            },
            deps,
            0.0,
        )
    }

    pub fn append_fragment(
        &mut self,
        session: SessionId,
        fragment: Circuit,
        deps: &[TaskId],
    ) -> Result<TaskId> {
        if session.0 >= self.next_session {
            return Err(Error::UnknownSession(session.0));
        }
        self.append_task(TaskKind::QuantumFragment { fragment, session }, deps, 0.0)
    }

    pub fn append_classical(
        &mut self,
        label: impl Into<String>,
        reads: Vec<CregRead>,
        deps: &[TaskId],
        classical_cost: f64,
        callback: ClassicalFn,
    ) -> Result<TaskId> {
        for r in &reads {
            if r.session.0 >= self.next_session {
                return Err(Error::UnknownSession(r.session.0));
            }
        }
        self.append_task(
            TaskKind::Classical {
                label: label.into(),
                reads,
                callback: Some(callback),
            },
            deps,
            classical_cost,
        )
    }

    /// Request that a session be discarded when this task completes.
    pub fn close_session(&mut self, session: SessionId) {
        self.closes.push(session);
    }

    fn ensure_dynamic(&self) -> Result<()> {
        if self.dynamic {
            Ok(())
        } else {
            Err(Error::NotDynamic)
        }
    }

    fn append_task(&mut self, kind: TaskKind, deps: &[TaskId], cost: f64) -> Result<TaskId> {
        self.ensure_dynamic()?;
        let id = TaskId(self.next_task);
        for dep in deps {
            if dep.0 >= id.0 {
                return Err(Error::UnknownDependency(dep.0));
            }
        }
        self.next_task += 1;
        self.appended.push(Task {
            task_id: id,
            kind,
            explicit_deps: deps.to_vec(),
            classical_cost: cost,
        });
        Ok(id)
    }
}
