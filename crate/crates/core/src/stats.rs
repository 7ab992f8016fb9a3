//! Per-task records and end-of-run aggregates.
//!
//! Aggregation is online: the engine feeds each completed task to a
//! [`StatsCollector`], so million-task runs do not need to keep every
//! record. [`finalize`] runs the same collector over a slice of records.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::model::{Server, Task};
use crate::policy::PolicyStat;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("failed to write report {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("failed to write CSV {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Timing of one completed task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub id: u64,
    pub type_name: Arc<str>,
    pub arrival_time: f64,
    pub schedule_time: f64,
    pub completion_time: f64,
    pub server_type: Arc<str>,
    pub server_id: u32,
    pub server_index: usize,
    pub waiting: f64,
    pub computation: f64,
    pub response: f64,
    /// `Some(response <= deadline)` when the task has a deadline.
    pub deadline_met: Option<bool>,
    /// Power on the assigned server times computation, when power is known.
    pub energy: Option<f64>,
}

impl TaskRecord {
    /// Builds the record for `task`, which has just completed on `server`.
    ///
    /// Computation is the task's service time on the server, so that busy
    /// time and computation time are built from the same values.
    pub fn from_completed(task: &Task, server: &Server) -> Self {
        let target = task
            .target(server.server_type)
            .expect("completed task supports its server");
        let schedule = task.schedule_time.expect("completed task was scheduled");
        let completion = task.completion_time.expect("completed task has a completion time");
        let waiting = schedule - task.arrival_time;
        let computation = target.service_time;
        let response = waiting + computation;
        Self {
            id: task.id,
            type_name: task.type_name.clone(),
            arrival_time: task.arrival_time,
            schedule_time: schedule,
            completion_time: completion,
            server_type: server.type_name.clone(),
            server_id: server.id,
            server_index: server.index,
            waiting,
            computation,
            response,
            deadline_met: task.deadline.map(|d| response <= d),
            energy: target.power.map(|p| p * computation),
        }
    }
}

/// Mean and sample standard deviation; both `None` with no samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Option<f64>,
    pub stdev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: u64,
    pub waiting: Moments,
    pub computation: Moments,
    pub response: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerStats {
    pub server_type: String,
    pub id: u32,
    pub busy_time: f64,
    pub utilization: f64,
    pub tasks_served: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerTypeStats {
    pub servers: u32,
    pub busy_time: f64,
    /// Busy time over (servers x total simulated time).
    pub utilization: f64,
    pub tasks_served: u64,
    /// Timing of the tasks served on this server type.
    pub timing: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub total_sim_time: f64,
    pub tasks_created: u64,
    pub tasks_completed: u64,
    pub deadline_misses: u64,
    pub overall: TimingStats,
    pub per_task_type: BTreeMap<String, TimingStats>,
    pub per_server_type: BTreeMap<String, ServerTypeStats>,
    pub per_server: Vec<ServerStats>,
    /// Queue length -> fraction of simulated time spent at that length.
    pub queue_size_histogram: BTreeMap<u64, f64>,
    pub mean_queue_length: f64,
    /// Time-average number of tasks queued or running.
    pub mean_tasks_in_system: f64,
    pub total_energy: Option<f64>,
    pub policy_stats: Vec<PolicyStat>,
    /// Effective configuration of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<SimConfig>,
}

impl StatsReport {
    /// Fraction of time the queue held no tasks.
    pub fn queue_empty_fraction(&self) -> f64 {
        self.queue_size_histogram.get(&0).copied().unwrap_or(0.0)
    }

    pub fn mean_response(&self) -> Option<f64> {
        self.overall.response.mean
    }

    pub fn mean_waiting(&self) -> Option<f64> {
        self.overall.waiting.mean
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    n: u64,
    sum: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn moments(&self) -> Moments {
        match self.n {
            0 => Moments { mean: None, stdev: None },
            n => Moments {
                mean: Some(self.sum / n as f64),
                stdev: Some(if n > 1 { (self.m2 / (n - 1) as f64).sqrt() } else { 0.0 }),
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
struct TimingAcc {
    waiting: Welford,
    computation: Welford,
    response: Welford,
}

impl TimingAcc {
    fn push(&mut self, r: &TaskRecord) {
        self.waiting.push(r.waiting);
        self.computation.push(r.computation);
        self.response.push(r.response);
    }

    fn stats(&self) -> TimingStats {
        TimingStats {
            count: self.response.n,
            waiting: self.waiting.moments(),
            computation: self.computation.moments(),
            response: self.response.moments(),
        }
    }
}

/// Online aggregator of task records.
#[derive(Debug, Clone, Default)]
pub struct StatsCollector {
    overall: TimingAcc,
    per_task_type: BTreeMap<Arc<str>, TimingAcc>,
    per_server_type: BTreeMap<Arc<str>, TimingAcc>,
    deadline_misses: u64,
    energy: Option<f64>,
}

impl StatsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, r: &TaskRecord) {
        self.overall.push(r);
        self.per_task_type.entry(r.type_name.clone()).or_default().push(r);
        self.per_server_type.entry(r.server_type.clone()).or_default().push(r);
        if r.deadline_met == Some(false) {
            self.deadline_misses += 1;
        }
        if let Some(e) = r.energy {
            *self.energy.get_or_insert(0.0) += e;
        }
    }

    /// Builds the report. `occupancy[n]` is the simulated time spent with
    /// exactly `n` queued tasks.
    pub fn finish(&self, occupancy: &[f64], servers: &[Server], sim_time: f64) -> StatsReport {
        let ratio = |x: f64, d: f64| if d > 0.0 { (x / d).clamp(0.0, 1.0) } else { 0.0 };

        let per_server: Vec<ServerStats> = servers
            .iter()
            .map(|s| ServerStats {
                server_type: s.type_name.to_string(),
                id: s.id,
                busy_time: s.busy_time,
                utilization: ratio(s.busy_time, sim_time),
                tasks_served: s.tasks_served,
            })
            .collect();

        let mut per_server_type: BTreeMap<String, ServerTypeStats> = BTreeMap::new();
        for s in servers {
            let entry = per_server_type
                .entry(s.type_name.to_string())
                .or_insert_with(|| ServerTypeStats {
                    servers: 0,
                    busy_time: 0.0,
                    utilization: 0.0,
                    tasks_served: 0,
                    timing: self
                        .per_server_type
                        .get(&s.type_name)
                        .cloned()
                        .unwrap_or_default()
                        .stats(),
                });
            entry.servers += 1;
            entry.busy_time += s.busy_time;
            entry.tasks_served += s.tasks_served;
        }
        for stats in per_server_type.values_mut() {
            stats.utilization = ratio(stats.busy_time, stats.servers as f64 * sim_time);
        }

        let mut histogram = BTreeMap::new();
        let mut mean_queue_length = 0.0;
        if sim_time > 0.0 {
            for (len, &t) in occupancy.iter().enumerate() {
                if t > 0.0 {
                    histogram.insert(len as u64, t / sim_time);
                    mean_queue_length += len as f64 * t / sim_time;
                }
            }
        }
        if histogram.is_empty() {
            histogram.insert(0, 1.0);
        }

        StatsReport {
            policy: String::new(),
            seed: None,
            total_sim_time: sim_time,
            tasks_created: self.overall.response.n,
            tasks_completed: self.overall.response.n,
            deadline_misses: self.deadline_misses,
            overall: self.overall.stats(),
            per_task_type: self
                .per_task_type
                .iter()
                .map(|(k, v)| (k.to_string(), v.stats()))
                .collect(),
            per_server_type,
            per_server,
            queue_size_histogram: histogram,
            mean_queue_length,
            mean_tasks_in_system: 0.0,
            total_energy: self.energy,
            policy_stats: Vec::new(),
            config: None,
        }
    }
}

/// Aggregates completed-task records into a report. Means are arithmetic
/// means over completed tasks; utilisation is busy time over `sim_time`;
/// histogram fractions are occupancy times over `sim_time`.
pub fn finalize(records: &[TaskRecord], occupancy: &[f64], servers: &[Server], sim_time: f64) -> StatsReport {
    let mut collector = StatsCollector::new();
    for r in records {
        collector.record(r);
    }
    collector.finish(occupancy, servers, sim_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Output file name: `<basename>_<stem>` or just `<stem>` for an empty
/// basename.
pub fn output_file_name(basename: &str, stem: &str) -> String {
    if basename.is_empty() {
        stem.to_string()
    } else {
        format!("{basename}_{stem}")
    }
}

/// Writes the report under `dir`. JSON produces `report.json`; CSV produces
/// `summary.csv`, `per_task_type.csv`, `per_server_type.csv`,
/// `per_server.csv` and `histogram.csv`. Every name is prefixed by
/// `basename`. Returns the written paths.
pub fn write_report(
    report: &StatsReport,
    format: ReportFormat,
    dir: &Path,
    basename: &str,
) -> Result<Vec<PathBuf>, ReportError> {
    match format {
        ReportFormat::Json => {
            let path = dir.join(output_file_name(basename, "report.json"));
            let io_err = |source| ReportError::Io { path: path.clone(), source };
            let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
            w.write_all(report.to_json_pretty().as_bytes()).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)?;
            w.flush().map_err(io_err)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => {
            let tables: [(&str, Vec<Vec<String>>); 5] = [
                ("summary.csv", summary_rows(report)),
                ("per_task_type.csv", per_task_type_rows(report)),
                ("per_server_type.csv", per_server_type_rows(report)),
                ("per_server.csv", per_server_rows(report)),
                ("histogram.csv", histogram_rows(report)),
            ];
            let mut out = Vec::new();
            for (stem, rows) in tables {
                let path = dir.join(output_file_name(basename, stem));
                write_csv(&path, &rows)?;
                out.push(path);
            }
            Ok(out)
        }
    }
}

pub(crate) fn write_csv(path: &Path, rows: &[Vec<String>]) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| ReportError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const TIMING_HEADER: [&str; 7] = [
    "count",
    "mean_waiting",
    "stdev_waiting",
    "mean_computation",
    "stdev_computation",
    "mean_response",
    "stdev_response",
];

fn timing_cells(t: &TimingStats) -> Vec<String> {
    vec![
        t.count.to_string(),
        fmt_opt(t.waiting.mean),
        fmt_opt(t.waiting.stdev),
        fmt_opt(t.computation.mean),
        fmt_opt(t.computation.stdev),
        fmt_opt(t.response.mean),
        fmt_opt(t.response.stdev),
    ]
}

fn header(first: &[&str], rest: &[&str]) -> Vec<String> {
    first.iter().chain(rest).map(|s| s.to_string()).collect()
}

pub fn summary_rows(r: &StatsReport) -> Vec<Vec<String>> {
    let mut rows = vec![vec!["metric".to_string(), "value".to_string()]];
    let mut push = |k: &str, v: String| rows.push(vec![k.to_string(), v]);
    push("policy", r.policy.clone());
    push("seed", r.seed.map(|s| s.to_string()).unwrap_or_default());
    push("total_sim_time", r.total_sim_time.to_string());
    push("tasks_created", r.tasks_created.to_string());
    push("tasks_completed", r.tasks_completed.to_string());
    push("deadline_misses", r.deadline_misses.to_string());
    let o = &r.overall;
    for (name, m) in [("waiting", o.waiting), ("computation", o.computation), ("response", o.response)] {
        push(&format!("mean_{name}"), fmt_opt(m.mean));
        push(&format!("stdev_{name}"), fmt_opt(m.stdev));
    }
    push("queue_empty_fraction", r.queue_empty_fraction().to_string());
    push("mean_queue_length", r.mean_queue_length.to_string());
    push("mean_tasks_in_system", r.mean_tasks_in_system.to_string());
    push("total_energy", fmt_opt(r.total_energy));
    for s in &r.policy_stats {
        push(&format!("policy.{}", s.label), s.value.to_string());
    }
    rows
}

pub fn per_task_type_rows(r: &StatsReport) -> Vec<Vec<String>> {
    let mut rows = vec![header(&["task_type"], &TIMING_HEADER)];
    for (name, t) in &r.per_task_type {
        let mut row = vec![name.clone()];
        row.extend(timing_cells(t));
        rows.push(row);
    }
    rows
}

pub fn per_server_type_rows(r: &StatsReport) -> Vec<Vec<String>> {
    let mut rows = vec![header(
        &["server_type", "servers", "busy_time", "utilization", "tasks_served"],
        &TIMING_HEADER,
    )];
    for (name, s) in &r.per_server_type {
        let mut row = vec![
            name.clone(),
            s.servers.to_string(),
            s.busy_time.to_string(),
            s.utilization.to_string(),
            s.tasks_served.to_string(),
        ];
        row.extend(timing_cells(&s.timing));
        rows.push(row);
    }
    rows
}

pub fn per_server_rows(r: &StatsReport) -> Vec<Vec<String>> {
    let mut rows = vec![header(&["server_type", "server_id", "busy_time", "utilization", "tasks_served"], &[])];
    for s in &r.per_server {
        rows.push(vec![
            s.server_type.clone(),
            s.id.to_string(),
            s.busy_time.to_string(),
            s.utilization.to_string(),
            s.tasks_served.to_string(),
        ]);
    }
    rows
}

pub fn histogram_rows(r: &StatsReport) -> Vec<Vec<String>> {
    let mut rows = vec![header(&["queue_length", "time_fraction"], &[])];
    for (len, frac) in &r.queue_size_histogram {
        rows.push(vec![len.to_string(), frac.to_string()]);
    }
    rows
}
