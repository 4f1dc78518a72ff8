//! Per-task timeline records and the metrics derived from them.

use std::collections::BTreeMap;

use serde_json::json;

/// One completed task on the timeline. `t_submit` is when the runtime
/// dispatched the task, `t_start` when its resource began serving it (the
/// gap is queue waiting), and `t_end` when the result was back at the host.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceEvent {
    pub task_id: u64,
    pub kind: &'static str,
    /// Device id, or "cpu" for classical tasks.
    pub resource: String,
    pub t_submit: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl TraceEvent {
    pub fn wait(&self) -> f64 {
        self.t_start - self.t_submit
    }
}

/// Aggregate timeline statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    /// max t_end - min t_submit over the trace.
    pub makespan: f64,
    /// Occupied time per device.
    pub device_busy: BTreeMap<String, f64>,
    pub cpu_busy: f64,
    /// busy / makespan per device, in [0, 1].
    pub device_utilization: BTreeMap<String, f64>,
    /// t_start - t_submit per task.
    pub task_wait: BTreeMap<u64, f64>,
}

/// Recompute metrics from a trace; an empty trace yields zero metrics.
pub fn compute_metrics(trace: &[TraceEvent]) -> Metrics {
    if trace.is_empty() {
        return Metrics::default();
    }
    let start = trace
        .iter()
        .map(|e| e.t_submit)
        .fold(f64::INFINITY, f64::min);
    let end = trace
        .iter()
        .map(|e| e.t_end)
        .fold(f64::NEG_INFINITY, f64::max);
    let makespan = end - start;
    let mut metrics = Metrics {
        makespan,
        ..Metrics::default()
    };
    for event in trace {
        let busy = event.t_end - event.t_start;
        if event.resource == "cpu" {
            metrics.cpu_busy += busy;
        } else {
            *metrics
                .device_busy
                .entry(event.resource.clone())
                .or_insert(0.0) += busy;
        }
        metrics.task_wait.insert(event.task_id, event.wait());
    }
    for (device, busy) in &metrics.device_busy {
        let utilization = if makespan > 0.0 { busy / makespan } else { 0.0 };
        metrics
            .device_utilization
            .insert(device.clone(), utilization);
    }
    metrics
}

/// Serialize a trace document: `{scenario, events: [...], metrics: {...}}`.
pub fn trace_json(scenario: &str, trace: &[TraceEvent], metrics: &Metrics) -> String {
    let events: Vec<_> = trace
        .iter()
        .map(|e| {
            json!({
                "task_id": e.task_id,
                "resource": e.resource,
                "t_submit": e.t_submit,
                "t_start": e.t_start,
                "t_end": e.t_end,
            })
        })
        .collect();
    let waits: Vec<f64> = metrics.task_wait.values().copied().collect();
    let mean_wait = if waits.is_empty() {
        0.0
    } else {
        waits.iter().sum::<f64>() / waits.len() as f64
    };
    let max_wait = waits.iter().copied().fold(0.0, f64::max);
    let doc = json!({
        "scenario": scenario,
        "events": events,
        "metrics": {
            "makespan": metrics.makespan,
            "device_busy": metrics.device_busy,
            "cpu_busy": metrics.cpu_busy,
            "device_utilization": metrics.device_utilization,
            "mean_task_wait": mean_wait,
            "max_task_wait": max_wait,
        },
    });
    serde_json::to_string_pretty(&doc).expect("trace document serializes")
}

/// Per-task CSV with the fixed header
/// `task_id,kind,resource,t_submit,t_start,t_end,wait`.
pub fn metrics_csv(trace: &[TraceEvent]) -> String {
    let mut out = String::from("task_id,kind,resource,t_submit,t_start,t_end,wait\n");
    for e in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.task_id,
            e.kind,
            e.resource,
            e.t_submit,
            e.t_start,
            e.t_end,
            e.wait()
        ));
    }
    out
}
