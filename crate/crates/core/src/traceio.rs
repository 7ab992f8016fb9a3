//! Line-delimited JSON task traces.
//!
//! One object per line, LF-terminated, in arrival order:
//!
//! ```text
//! {"id":0,"type":"fft","arrival_time":12.5,"service_times":{"cpu_core":497.1,"fft_accel":10.02,"gpu":99.8}}
//! ```
//!
//! `service_times` are the actual execution times charged on replay.
//! Optional `deadline` (number) and `power` (server type -> number) keys
//! carry the remaining task attributes.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{SimObserver, WorkloadSource};
use crate::model::{ServerCatalog, TargetServer, Task};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("trace line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("trace line {line}: arrival time {arrival} precedes the previous record's {previous}")]
    Unsorted { line: usize, arrival: f64, previous: f64 },
    #[error("trace line {line}: duplicate task id {id}")]
    DuplicateId { line: usize, id: u64 },
    #[error("trace line {line}: unknown server type `{server}`")]
    UnknownServer { line: usize, server: String },
    #[error("trace line {line}: task type `{task_type}` is not configured and the record has no service times")]
    UnknownTaskType { line: usize, task_type: String },
    #[error("trace line {line}: invalid value for {field}: {value}")]
    InvalidValue { line: usize, field: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub id: u64,
    #[serde(rename = "type")]
    pub type_name: String,
    pub arrival_time: f64,
    pub service_times: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<BTreeMap<String, f64>>,
}

impl TraceRecord {
    pub fn from_task(task: &Task, catalog: &ServerCatalog) -> Self {
        let service_times = task
            .targets
            .iter()
            .map(|t| (catalog.name(t.server_type).to_string(), t.service_time))
            .collect();
        let power: BTreeMap<String, f64> = task
            .targets
            .iter()
            .filter_map(|t| t.power.map(|p| (catalog.name(t.server_type).to_string(), p)))
            .collect();
        Self {
            id: task.id,
            type_name: task.type_name.to_string(),
            arrival_time: task.arrival_time,
            service_times,
            deadline: task.deadline,
            power: (!power.is_empty()).then_some(power),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams trace records to a file as tasks are created.
pub struct TraceWriter {
    path: PathBuf,
    out: BufWriter<File>,
    catalog: ServerCatalog,
}

impl TraceWriter {
    pub fn create(path: &Path, catalog: ServerCatalog) -> Result<Self, TraceError> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            catalog,
        })
    }

    pub fn write_record(&mut self, record: &TraceRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")
    }

    pub fn write_task(&mut self, task: &Task) -> io::Result<()> {
        let record = TraceRecord::from_task(task, &self.catalog);
        self.write_record(&record)
    }

    pub fn finish(mut self) -> Result<(), TraceError> {
        self.out.flush().map_err(io_err(&self.path))
    }
}

impl SimObserver for TraceWriter {
    fn task_created(&mut self, task: &Task) -> io::Result<()> {
        self.write_task(task)
    }
}

/// Writes one record per task, in the given order.
pub fn write_trace<'a>(
    tasks: impl IntoIterator<Item = &'a Task>,
    catalog: &ServerCatalog,
    path: &Path,
) -> Result<(), TraceError> {
    let mut w = TraceWriter::create(path, catalog.clone())?;
    for task in tasks {
        w.write_task(task).map_err(io_err(path))?;
    }
    w.finish()
}

pub fn write_trace_records(records: &[TraceRecord], path: &Path) -> Result<(), TraceError> {
    let mut w = TraceWriter::create(path, ServerCatalog::new(Vec::<String>::new()))?;
    for r in records {
        w.write_record(r).map_err(io_err(path))?;
    }
    w.finish()
}

/// Parses a trace file. Blank lines are skipped. Checks ordering and id
/// uniqueness; server and task types are checked by [`records_to_workload`].
pub fn read_trace_records(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out: Vec<TraceRecord> = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TraceRecord =
            serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: line_no, source })?;
        if !(record.arrival_time >= 0.0 && record.arrival_time.is_finite()) {
            return Err(TraceError::InvalidValue {
                line: line_no,
                field: "arrival_time".into(),
                value: record.arrival_time,
            });
        }
        if let Some(prev) = out.last() {
            if record.arrival_time < prev.arrival_time {
                return Err(TraceError::Unsorted {
                    line: line_no,
                    arrival: record.arrival_time,
                    previous: prev.arrival_time,
                });
            }
        }
        if !ids.insert(record.id) {
            return Err(TraceError::DuplicateId { line: line_no, id: record.id });
        }
        out.push(record);
    }
    Ok(out)
}

/// Turns trace records into tasks. Actual service times come from the
/// trace. Mean estimates come from the configured task type where it
/// defines one for that server type, otherwise from the trace value itself.
/// `deadline` and `power` fall back to the task type's values.
pub fn records_to_workload(records: &[TraceRecord], cfg: &SimConfig) -> Result<WorkloadSource, TraceError> {
    let catalog = ServerCatalog::new(cfg.simulation.servers.keys());
    let mut names: BTreeMap<&str, std::sync::Arc<str>> = BTreeMap::new();
    let mut tasks = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        let spec = cfg.simulation.tasks.get(&r.type_name);
        if r.service_times.is_empty() {
            return Err(TraceError::UnknownTaskType {
                line,
                task_type: r.type_name.clone(),
            });
        }
        let mut targets = Vec::with_capacity(r.service_times.len());
        for (server, &actual) in &r.service_times {
            let ty = catalog.id_of(server).ok_or_else(|| TraceError::UnknownServer {
                line,
                server: server.clone(),
            })?;
            if !(actual > 0.0 && actual.is_finite()) {
                return Err(TraceError::InvalidValue {
                    line,
                    field: format!("service_times.{server}"),
                    value: actual,
                });
            }
            let mean = spec
                .and_then(|s| s.mean_service_time.get(server).copied())
                .unwrap_or(actual);
            let power = r
                .power
                .as_ref()
                .and_then(|p| p.get(server).copied())
                .or_else(|| spec.and_then(|s| s.power.as_ref()).and_then(|p| p.get(server).copied()));
            targets.push(TargetServer {
                server_type: ty,
                mean_service_time: mean,
                service_time: actual,
                power,
            });
        }
        let name = names
            .entry(r.type_name.as_str())
            .or_insert_with(|| std::sync::Arc::from(r.type_name.as_str()))
            .clone();
        let deadline = r.deadline.or_else(|| spec.and_then(|s| s.deadline));
        tasks.push(Task::new(r.id, name, r.arrival_time, targets, deadline));
    }
    Ok(WorkloadSource::from_tasks(tasks))
}

pub fn read_trace(path: &Path, cfg: &SimConfig) -> Result<WorkloadSource, TraceError> {
    let records = read_trace_records(path)?;
    records_to_workload(&records, cfg)
}
