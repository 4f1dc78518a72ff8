//! Synchronous and asynchronous execution engines.
//!
//! Both engines run over a virtual clock owned by the [`Runtime`]; devices
//! are passive callees. A device is occupied for the whole offload round
//! trip (submit leg, execution, return leg), so per-device task intervals
//! never overlap. The synchronous engine runs tasks strictly in creation
//! order, each completing before the next is dispatched; the asynchronous
//! engine is an event-driven list scheduler with FIFO queues per device,
//! one global queue for unpinned jobs, and a single CPU lane.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::qpu::{estimate_fragment_time, QpuDevice};

use super::trace::{compute_metrics, Metrics, TraceEvent};
use super::{
    conflicts, resource_use, ClassicalCtx, ResourceUse, SessionLife, SessionSpec, Task, TaskGraph,
    TaskId, TaskKind, TaskOutput, TaskStatus,
};

/// Which engine executes the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sync,
    Async,
}

/// View of one task after a run.
#[derive(Debug)]
pub struct TaskHandle<'a> {
    pub task_id: TaskId,
    pub status: &'a TaskStatus,
    pub result: Option<&'a TaskOutput>,
}

/// Results, statuses, and the timeline of one graph execution.
pub struct RunOutcome {
    pub statuses: BTreeMap<TaskId, TaskStatus>,
    pub outputs: BTreeMap<TaskId, TaskOutput>,
    /// Events of this run only (empty when tracing is disabled). Event task
    /// ids are offset by `task_id_base` to stay unique across runs.
    pub trace: Vec<TraceEvent>,
    pub metrics: Metrics,
    pub task_id_base: u64,
}

impl RunOutcome {
    pub fn handle(&self, task: TaskId) -> Option<TaskHandle<'_>> {
        self.statuses.get(&task).map(|status| TaskHandle {
            task_id: task,
            status,
            result: self.outputs.get(&task),
        })
    }

    pub fn all_succeeded(&self) -> bool {
        self.statuses.values().all(TaskStatus::is_done)
    }

    pub fn first_failure(&self) -> Option<(TaskId, &str)> {
        self.statuses.iter().find_map(|(id, s)| match s {
            TaskStatus::Failed(msg) => Some((*id, msg.as_str())),
            _ => None,
        })
    }
}

/// Deterministic discrete-event runtime over a set of devices.
pub struct Runtime {
    devices: Vec<QpuDevice>,
    clock: f64,
    device_free: Vec<f64>,
    cpu_free: f64,
    trace: Vec<TraceEvent>,
    tracing: bool,
    next_task_base: u64,
}

impl Runtime {
    pub fn new(devices: Vec<QpuDevice>) -> Self {
        let n = devices.len();
        Runtime {
            devices,
            clock: 0.0,
            device_free: vec![0.0; n],
            cpu_free: 0.0,
            trace: Vec::new(),
            tracing: true,
            next_task_base: 0,
        }
    }

    pub fn devices(&self) -> &[QpuDevice] {
        &self.devices
    }

    pub fn device(&self, index: usize) -> Option<&QpuDevice> {
        self.devices.get(index)
    }

    /// Current virtual time in microseconds.
    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Disable trace collection (saves memory on shot-heavy workloads).
    pub fn set_tracing(&mut self, tracing: bool) {
        self.tracing = tracing;
    }

    /// Every event recorded since construction, across runs.
    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Metrics over the accumulated trace.
    pub fn metrics(&self) -> Metrics {
        compute_metrics(&self.trace)
    }

    /// Execute tasks strictly in creation order; each task, including its
    /// return leg, completes before the next is dispatched.
    pub fn run_sync(&mut self, graph: TaskGraph) -> Result<RunOutcome> {
        self.run(graph, ExecMode::Sync)
    }

    /// Event-driven list scheduling: tasks dispatch as their dependencies
    /// complete, queue FIFO on busy resources, and overlap across devices.
    pub fn run_async(&mut self, graph: TaskGraph) -> Result<RunOutcome> {
        self.run(graph, ExecMode::Async)
    }

    pub fn run(&mut self, graph: TaskGraph, mode: ExecMode) -> Result<RunOutcome> {
        for spec in graph.sessions() {
            if spec.device >= self.devices.len() {
                return Err(Error::UnknownDevice(spec.device));
            }
        }
        let mut engine = Engine::new(self, graph);
        match mode {
            ExecMode::Sync => engine.drive_sync(),
            ExecMode::Async => engine.drive_async(),
        }
        Ok(engine.finish())
    }
}

/// Effects of starting a task, revealed when it completes.
struct Started {
    duration: f64,
    output: TaskOutput,
    appended: Vec<Task>,
    new_sessions: Vec<SessionSpec>,
    closes: Vec<super::SessionId>,
}

struct InFlight {
    started: Started,
    t_submit: f64,
    t_start: f64,
    resource: String,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct EventKey(u64, usize);

struct Engine<'rt> {
    rt: &'rt mut Runtime,
    tasks: Vec<Task>,
    sessions: Vec<SessionSpec>,
    dynamic: bool,
    uses: Vec<ResourceUse>,
    incoming: Vec<Vec<usize>>,
    dependents: Vec<Vec<usize>>,
    session_members: Vec<Vec<usize>>,
    session_life: Vec<SessionLife>,
    session_init_charged: Vec<bool>,
    statuses: Vec<TaskStatus>,
    outputs: BTreeMap<u64, TaskOutput>,
    run_trace: Vec<TraceEvent>,
    id_base: u64,
}

impl<'rt> Engine<'rt> {
    fn new(rt: &'rt mut Runtime, graph: TaskGraph) -> Self {
        let dynamic = graph.is_dynamic();
        let session_count = graph.sessions.len();
        let id_base = rt.next_task_base;
        let mut engine = Engine {
            rt,
            tasks: Vec::new(),
            sessions: graph.sessions,
            dynamic,
            uses: Vec::new(),
            incoming: Vec::new(),
            dependents: Vec::new(),
            session_members: vec![Vec::new(); session_count],
            session_life: vec![SessionLife::NotOpened; session_count],
            session_init_charged: vec![false; session_count],
            statuses: Vec::new(),
            outputs: BTreeMap::new(),
            run_trace: Vec::new(),
            id_base,
        };
        for task in graph.tasks {
            engine.register_task(task);
        }
        engine
    }

    /// Insert a task, wiring explicit dependencies and inferred hazards
    /// against earlier tasks in the same sessions.
    fn register_task(&mut self, task: Task) -> usize {
        let idx = self.tasks.len();
        debug_assert_eq!(task.task_id.0 as usize, idx);
        let usage = resource_use(&task);
        let mut deps: Vec<usize> = task.explicit_deps.iter().map(|d| d.0 as usize).collect();
        for s in usage.sessions() {
            for &other in &self.session_members[s as usize] {
                if conflicts(&self.uses[other], &usage) {
                    deps.push(other);
                }
            }
        }
        deps.sort_unstable();
        deps.dedup();
        for &d in &deps {
            self.dependents[d].push(idx);
        }
        for s in usage.sessions() {
            self.session_members[s as usize].push(idx);
        }
        self.tasks.push(task);
        self.uses.push(usage);
        self.incoming.push(deps);
        self.dependents.push(Vec::new());
        self.statuses.push(TaskStatus::Pending);
        idx
    }

    fn is_settled(&self, idx: usize) -> bool {
        matches!(self.statuses[idx], TaskStatus::Done | TaskStatus::Failed(_))
    }

    fn fail(&mut self, idx: usize, message: String) {
        self.statuses[idx] = TaskStatus::Failed(message);
        // Fail-fast propagation along dependency edges.
        let mut frontier = vec![idx];
        while let Some(parent) = frontier.pop() {
            for child in self.dependents[parent].clone() {
                if matches!(self.statuses[child], TaskStatus::Pending) {
                    self.statuses[child] = TaskStatus::Failed(format!(
                        "dependency t{} failed",
                        self.tasks[parent].task_id.0
                    ));
                    frontier.push(child);
                }
            }
        }
    }

    /// Run the task's side effects and price its duration. For circuit jobs
    /// the caller has already resolved the device.
    fn execute(&mut self, idx: usize, job_device: Option<usize>) -> Result<Started> {
        if matches!(self.tasks[idx].kind, TaskKind::Classical { .. }) {
            return self.execute_classical(idx);
        }
        match &mut self.tasks[idx].kind {
            TaskKind::CircuitJob { circuit, shots, .. } => {
                let d = job_device.expect("engine resolves job devices");
                let result = self.rt.devices[d].submit(circuit, *shots)?;
                Ok(Started {
                    duration: result.model_exec_time,
                    output: TaskOutput::Execution(result),
                    appended: Vec::new(),
                    new_sessions: Vec::new(),
                    closes: Vec::new(),
                })
            }
            TaskKind::QuantumFragment { fragment, session } => {
                let s = session.0 as usize;
                let spec = self.sessions[s];
                match self.session_life[s] {
                    SessionLife::Closed => return Err(Error::SessionClosed(session.0)),
                    SessionLife::NotOpened => {
                        self.rt.devices[spec.device]
                            .open_session(spec.num_qubits, spec.num_clbits)?;
                        self.session_life[s] = SessionLife::Open;
                    }
                    SessionLife::Open => {}
                }
                let first = !self.session_init_charged[s];
                let device = &mut self.rt.devices[spec.device];
                let comm = device.latency().t_submit + device.latency().t_return;
                let exec_part = estimate_fragment_time(fragment, first, device.latency()) - comm;
                let jitter = device.draw_jitter_factor();
                let outcome = device.run_fragment(fragment)?;
                self.session_init_charged[s] = true;
                Ok(Started {
                    duration: exec_part * jitter + comm,
                    output: TaskOutput::Fragment(outcome),
                    appended: Vec::new(),
                    new_sessions: Vec::new(),
                    closes: Vec::new(),
                })
            }
            TaskKind::Classical { .. } => unreachable!("handled above"),
        }
    }

    fn execute_classical(&mut self, idx: usize) -> Result<Started> {
        let classical_cost = self.tasks[idx].classical_cost;
        let next_task = self.tasks.len() as u64;
        let next_session = self.sessions.len() as u64;
        let (callback, reads) = match &mut self.tasks[idx].kind {
            TaskKind::Classical {
                reads, callback, ..
            } => (
                callback.take().expect("classical tasks run once"),
                reads.clone(),
            ),
            _ => unreachable!("caller checked the kind"),
        };
        let mut ctx = ClassicalCtx {
            dynamic: self.dynamic,
            outputs: &self.outputs,
            reads: &reads,
            sessions: &self.sessions,
            session_open: &self.session_life,
            devices: &self.rt.devices,
            next_task,
            next_session,
            appended: Vec::new(),
            new_sessions: Vec::new(),
            closes: Vec::new(),
        };
        let value = callback(&mut ctx)?;
        let ClassicalCtx {
            appended,
            new_sessions,
            closes,
            ..
        } = ctx;
        Ok(Started {
            duration: classical_cost,
            output: TaskOutput::Classical(value),
            appended,
            new_sessions,
            closes,
        })
    }

    /// Reveal a completed task's effects; returns indices of appended tasks.
    fn complete(&mut self, idx: usize, flight: InFlight, t_end: f64) -> Vec<usize> {
        let InFlight {
            started,
            t_submit,
            t_start,
            resource,
        } = flight;
        self.statuses[idx] = TaskStatus::Done;
        self.outputs
            .insert(self.tasks[idx].task_id.0, started.output);
        for session in started.closes {
            let s = session.0 as usize;
            if self.session_life[s] == SessionLife::Open {
                let device = self.sessions[s].device;
                let _ = self.rt.devices[device].close_session();
            }
            self.session_life[s] = SessionLife::Closed;
        }
        for spec in started.new_sessions {
            self.sessions.push(spec);
            self.session_life.push(SessionLife::NotOpened);
            self.session_init_charged.push(false);
            self.session_members.push(Vec::new());
        }
        let mut appended = Vec::new();
        for task in started.appended {
            appended.push(self.register_task(task));
        }
        if self.rt.tracing {
            self.run_trace.push(TraceEvent {
                task_id: self.id_base + self.tasks[idx].task_id.0,
                kind: self.tasks[idx].kind.label(),
                resource,
                t_submit,
                t_start,
                t_end,
            });
        }
        appended
    }

    fn resource_name(&self, idx: usize, device: Option<usize>) -> String {
        match &self.tasks[idx].kind {
            TaskKind::Classical { .. } => "cpu".to_string(),
            _ => self.rt.devices[device.expect("quantum tasks run on a device")]
                .device_id()
                .to_string(),
        }
    }

    /// Resource an eligible task runs on: the session's device for
    /// fragments, the hint (or device 0 when unhinted) for jobs in the
    /// synchronous engine, `None` for classical tasks.
    fn sync_target(&self, idx: usize) -> Result<Option<usize>> {
        match &self.tasks[idx].kind {
            TaskKind::Classical { .. } => Ok(None),
            TaskKind::QuantumFragment { session, .. } => {
                Ok(Some(self.sessions[session.0 as usize].device))
            }
            TaskKind::CircuitJob { device_hint, .. } => {
                let d = device_hint.unwrap_or(0);
                if d >= self.rt.devices.len() {
                    Err(Error::UnknownDevice(d))
                } else {
                    Ok(Some(d))
                }
            }
        }
    }

    fn drive_sync(&mut self) {
        let mut queue: VecDeque<usize> = (0..self.tasks.len()).collect();
        while !queue.is_empty() {
            let pos = queue
                .iter()
                .position(|&i| self.incoming[i].iter().all(|&d| self.is_settled(d)))
                .expect("an acyclic graph always has an eligible task");
            let idx = queue.remove(pos).expect("position is in range");
            if self.statuses[idx].is_failed() {
                continue;
            }
            if let Some(&bad) = self.incoming[idx]
                .iter()
                .find(|&&d| self.statuses[d].is_failed())
            {
                let message = format!("dependency t{} failed", self.tasks[bad].task_id.0);
                self.statuses[idx] = TaskStatus::Failed(message);
                continue;
            }
            let device = match self.sync_target(idx) {
                Ok(d) => d,
                Err(e) => {
                    self.fail(idx, e.to_string());
                    continue;
                }
            };
            let t_submit = self.rt.clock;
            self.statuses[idx] = TaskStatus::Running;
            match self.execute(idx, device) {
                Err(e) => self.fail(idx, e.to_string()),
                Ok(started) => {
                    let t_end = t_submit + started.duration;
                    let resource = self.resource_name(idx, device);
                    match device {
                        Some(d) => self.rt.device_free[d] = t_end,
                        None => self.rt.cpu_free = t_end,
                    }
                    self.rt.clock = t_end;
                    let appended = self.complete(
                        idx,
                        InFlight {
                            started,
                            t_submit,
                            t_start: t_submit,
                            resource,
                        },
                        t_end,
                    );
                    // Dynamic appends run immediately after their creator.
                    for &new_idx in appended.iter().rev() {
                        queue.push_front(new_idx);
                    }
                }
            }
        }
    }

    fn drive_async(&mut self) {
        let n_devices = self.rt.devices.len();
        let mut sched = AsyncState {
            device_queue: vec![VecDeque::new(); n_devices],
            global_queue: VecDeque::new(),
            cpu_queue: VecDeque::new(),
            pending_deps: Vec::new(),
            submit_time: Vec::new(),
            routed: Vec::new(),
        };
        let mut heap: BinaryHeap<Reverse<EventKey>> = BinaryHeap::new();
        let mut in_flight: BTreeMap<usize, InFlight> = BTreeMap::new();

        let start_clock = self.rt.clock;
        sched.grow_to(self.tasks.len(), start_clock);
        for idx in 0..self.tasks.len() {
            sched.pending_deps[idx] = self.incoming[idx].len();
            if sched.pending_deps[idx] == 0 {
                self.route(idx, start_clock, &mut sched);
            }
        }

        loop {
            self.pump(&mut sched, &mut heap, &mut in_flight);
            let Some(Reverse(EventKey(bits, idx))) = heap.pop() else {
                break;
            };
            let t_end = f64::from_bits(bits);
            self.rt.clock = t_end;
            let flight = in_flight.remove(&idx).expect("event has a flight record");
            let pre_children = self.dependents[idx].clone();
            let appended = self.complete(idx, flight, t_end);
            sched.grow_to(self.tasks.len(), t_end);
            for child in pre_children {
                if !matches!(self.statuses[child], TaskStatus::Pending) {
                    continue;
                }
                sched.pending_deps[child] -= 1;
                if sched.pending_deps[child] == 0 {
                    self.route(child, t_end, &mut sched);
                }
            }
            for new_idx in appended {
                if !matches!(self.statuses[new_idx], TaskStatus::Pending) {
                    continue;
                }
                if let Some(&bad) = self.incoming[new_idx]
                    .iter()
                    .find(|&&d| self.statuses[d].is_failed())
                {
                    self.fail(new_idx, format!("dependency t{bad} failed"));
                    continue;
                }
                sched.pending_deps[new_idx] = self.incoming[new_idx]
                    .iter()
                    .filter(|&&d| !self.is_settled(d))
                    .count();
                if sched.pending_deps[new_idx] == 0 {
                    self.route(new_idx, t_end, &mut sched);
                }
            }
        }
    }

    /// Queue a ready task on its resource.
    fn route(&mut self, idx: usize, now: f64, sched: &mut AsyncState) {
        if sched.routed[idx] {
            return;
        }
        sched.routed[idx] = true;
        sched.submit_time[idx] = now;
        match &self.tasks[idx].kind {
            TaskKind::Classical { .. } => sched.cpu_queue.push_back(idx),
            TaskKind::QuantumFragment { session, .. } => {
                let device = self.sessions[session.0 as usize].device;
                sched.device_queue[device].push_back(idx);
            }
            TaskKind::CircuitJob { device_hint, .. } => match device_hint {
                Some(d) => {
                    let d = *d;
                    if d >= self.rt.devices.len() {
                        self.fail(idx, Error::UnknownDevice(d).to_string());
                    } else {
                        sched.device_queue[d].push_back(idx);
                    }
                }
                None => sched.global_queue.push_back(idx),
            },
        }
    }

    /// Start queued tasks on every resource that is free at the current
    /// clock. Each device serves its own queue first, then the global one.
    fn pump(
        &mut self,
        sched: &mut AsyncState,
        heap: &mut BinaryHeap<Reverse<EventKey>>,
        in_flight: &mut BTreeMap<usize, InFlight>,
    ) {
        let now = self.rt.clock;
        loop {
            let mut progressed = false;
            if self.rt.cpu_free <= now {
                if let Some(idx) = sched.cpu_queue.pop_front() {
                    progressed = true;
                    if !self.statuses[idx].is_failed() {
                        if let Some(t_end) = self.start_async(
                            idx,
                            None,
                            now,
                            sched.submit_time[idx],
                            heap,
                            in_flight,
                        ) {
                            self.rt.cpu_free = t_end;
                        }
                    }
                }
            }
            for d in 0..self.rt.devices.len() {
                if self.rt.device_free[d] > now {
                    continue;
                }
                let next = if let Some(idx) = sched.device_queue[d].pop_front() {
                    Some(idx)
                } else {
                    sched.global_queue.pop_front()
                };
                if let Some(idx) = next {
                    progressed = true;
                    if !self.statuses[idx].is_failed() {
                        if let Some(t_end) = self.start_async(
                            idx,
                            Some(d),
                            now,
                            sched.submit_time[idx],
                            heap,
                            in_flight,
                        ) {
                            self.rt.device_free[d] = t_end;
                        }
                    }
                }
            }
            if !progressed {
                break;
            }
        }
    }

    /// Start one task; returns its completion time unless it failed at start.
    fn start_async(
        &mut self,
        idx: usize,
        device: Option<usize>,
        now: f64,
        t_submit: f64,
        heap: &mut BinaryHeap<Reverse<EventKey>>,
        in_flight: &mut BTreeMap<usize, InFlight>,
    ) -> Option<f64> {
        self.statuses[idx] = TaskStatus::Running;
        match self.execute(idx, device) {
            Err(e) => {
                self.fail(idx, e.to_string());
                None
            }
            Ok(started) => {
                let t_end = now + started.duration;
                let resource = self.resource_name(idx, device);
                in_flight.insert(
                    idx,
                    InFlight {
                        started,
                        t_submit,
                        t_start: now,
                        resource,
                    },
                );
                heap.push(Reverse(EventKey(t_end.to_bits(), idx)));
                Some(t_end)
            }
        }
    }

    fn finish(mut self) -> RunOutcome {
        // Discard sessions left open so devices are reusable.
        for (s, life) in self.session_life.iter_mut().enumerate() {
            if *life == SessionLife::Open {
                let device = self.sessions[s].device;
                let _ = self.rt.devices[device].close_session();
                *life = SessionLife::Closed;
            }
        }
        let status_vec = std::mem::take(&mut self.statuses);
        let statuses = self
            .tasks
            .iter()
            .zip(status_vec)
            .map(|(t, s)| (t.task_id, s))
            .collect();
        let outputs = std::mem::take(&mut self.outputs)
            .into_iter()
            .map(|(id, out)| (TaskId(id), out))
            .collect();
        let metrics = compute_metrics(&self.run_trace);
        self.rt.next_task_base += self.tasks.len() as u64;
        if self.rt.tracing {
            self.rt.trace.extend(self.run_trace.iter().cloned());
        }
        RunOutcome {
            statuses,
            outputs,
            trace: self.run_trace,
            metrics,
            task_id_base: self.id_base,
        }
    }
}

struct AsyncState {
    device_queue: Vec<VecDeque<usize>>,
    global_queue: VecDeque<usize>,
    cpu_queue: VecDeque<usize>,
    pending_deps: Vec<usize>,
    submit_time: Vec<f64>,
    routed: Vec<bool>,
}

impl AsyncState {
    fn grow_to(&mut self, len: usize, clock: f64) {
        while self.pending_deps.len() < len {
            self.pending_deps.push(0);
            self.submit_time.push(clock);
            self.routed.push(false);
        }
    }
}
