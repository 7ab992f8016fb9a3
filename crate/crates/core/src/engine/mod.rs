//! The discrete-event core.
//!
//! Continuous-time event loop over two event kinds: task arrivals and task
//! completions. Events are ordered by (time, kind, issue sequence) with
//! completions ahead of arrivals at equal times, so a freed server is
//! visible to the scheduler before a simultaneous arrival is enqueued.
//! After every event the policy is asked for assignments until it declines.
//!
//! Task creation stops at the end of the workload, and the run continues
//! until every created task has completed.

mod workload;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::config::{ConfigError, Diagnostic, SimConfig};
use crate::model::{assign_task, PolicyFault, Server, ServerCatalog, Task};
use crate::policy::{Policy, PolicyError, PolicyParams, PolicyRegistry, TaskQueue};
use crate::sampling::{SamplingError, SimRng};
use crate::stats::{StatsCollector, StatsReport, TaskRecord};
use crate::traceio::{self, TraceError, TraceWriter};

pub use workload::{generate_arrivals, ArrivalGenerator, TaskFactory, WorkloadSource};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("policy fault at t={time}: {fault}")]
    PolicyFault { time: f64, fault: PolicyFault },
    #[error("task queue exceeded max_queue_size={limit} at t={time}")]
    QueueOverflow { time: f64, limit: u64 },
    #[error("task {task} arrives at t={arrival}, before the current time t={now}")]
    ArrivalInPast { task: u64, arrival: f64, now: f64 },
    #[error("task {task} supports no configured server type")]
    NoTargets { task: u64 },
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("observer failed: {0}")]
    Observer(#[source] io::Error),
}

/// Hooks into a running simulation. All methods default to no-ops.
pub trait SimObserver {
    /// A task has been taken from the workload (before its arrival event).
    fn task_created(&mut self, _task: &Task) -> io::Result<()> {
        Ok(())
    }

    fn task_assigned(&mut self, _now: f64, _queue_index: usize, _task: &Task, _server: &Server) {}

    fn task_completed(&mut self, _record: &TaskRecord) {}

    /// Called after each event once the policy has declined.
    fn event_processed(&mut self, _now: f64, _queue: &TaskQueue, _servers: &[Server]) {}
}

#[derive(Debug, Default)]
pub struct NoopObserver;

impl SimObserver for NoopObserver {}

/// Keeps every completed-task record, in completion order.
#[derive(Debug, Default)]
pub struct RecordCollector {
    pub records: Vec<TaskRecord>,
}

impl SimObserver for RecordCollector {
    fn task_completed(&mut self, record: &TaskRecord) {
        self.records.push(record.clone());
    }
}

impl<A: SimObserver, B: SimObserver> SimObserver for (A, B) {
    fn task_created(&mut self, task: &Task) -> io::Result<()> {
        self.0.task_created(task)?;
        self.1.task_created(task)
    }
    fn task_assigned(&mut self, now: f64, queue_index: usize, task: &Task, server: &Server) {
        self.0.task_assigned(now, queue_index, task, server);
        self.1.task_assigned(now, queue_index, task, server);
    }
    fn task_completed(&mut self, record: &TaskRecord) {
        self.0.task_completed(record);
        self.1.task_completed(record);
    }
    fn event_processed(&mut self, now: f64, queue: &TaskQueue, servers: &[Server]) {
        self.0.event_processed(now, queue, servers);
        self.1.event_processed(now, queue, servers);
    }
}

impl<T: SimObserver + ?Sized> SimObserver for &mut T {
    fn task_created(&mut self, task: &Task) -> io::Result<()> {
        (**self).task_created(task)
    }
    fn task_assigned(&mut self, now: f64, queue_index: usize, task: &Task, server: &Server) {
        (**self).task_assigned(now, queue_index, task, server)
    }
    fn task_completed(&mut self, record: &TaskRecord) {
        (**self).task_completed(record)
    }
    fn event_processed(&mut self, now: f64, queue: &TaskQueue, servers: &[Server]) {
        (**self).event_processed(now, queue, servers)
    }
}

#[derive(Debug)]
enum EventKind {
    Completion { server: usize },
    Arrival(Task),
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::Completion { .. } => 0,
            EventKind::Arrival(_) => 1,
        }
    }
}

#[derive(Debug)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key_cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // BinaryHeap is a max-heap; reverse for earliest-first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key_cmp(self)
    }
}

/// Builds the server list for a configuration: ordered by server type name,
/// then by id within the type.
pub fn build_servers(cfg: &SimConfig) -> (ServerCatalog, Vec<Server>) {
    let catalog = ServerCatalog::new(cfg.simulation.servers.keys());
    let mut servers = Vec::new();
    for (ty, name) in catalog.iter() {
        let count = cfg.simulation.servers[name.as_ref()].count;
        for id in 0..count {
            servers.push(Server::new(servers.len(), ty, name.clone(), id));
        }
    }
    (catalog, servers)
}

struct Engine<'a, O: SimObserver> {
    policy: &'a mut dyn Policy,
    observer: O,
    workload: WorkloadSource,
    max_queue_size: u64,
    now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    queue: TaskQueue,
    servers: Vec<Server>,
    busy: usize,
    tasks_created: u64,
    occupancy: Vec<f64>,
    in_system_area: f64,
    stats: StatsCollector,
}

impl<O: SimObserver> Engine<'_, O> {
    fn push(&mut self, time: f64, kind: EventKind) {
        self.events.push(Event { time, seq: self.seq, kind });
        self.seq += 1;
    }

    fn schedule_next_arrival(&mut self) -> Result<(), SimError> {
        if let Some(task) = self.workload.next() {
            if task.arrival_time.is_nan() || task.arrival_time < self.now {
                return Err(SimError::ArrivalInPast {
                    task: task.id,
                    arrival: task.arrival_time,
                    now: self.now,
                });
            }
            if task.targets.is_empty() {
                return Err(SimError::NoTargets { task: task.id });
            }
            self.observer.task_created(&task).map_err(SimError::Observer)?;
            self.tasks_created += 1;
            self.push(task.arrival_time, EventKind::Arrival(task));
        }
        Ok(())
    }

    fn advance(&mut self, to: f64) {
        let dt = to - self.now;
        if dt > 0.0 {
            let len = self.queue.len();
            if self.occupancy.len() <= len {
                self.occupancy.resize(len + 1, 0.0);
            }
            self.occupancy[len] += dt;
            self.in_system_area += (len + self.busy) as f64 * dt;
            self.now = to;
        }
    }

    fn schedule(&mut self) -> Result<(), SimError> {
        let now = self.now;
        while let Some(a) = self.policy.assign_task_to_server(now, &self.queue, &self.servers) {
            let fault = |fault| SimError::PolicyFault { time: now, fault };
            if a.queue_index >= self.queue.len() {
                return Err(fault(PolicyFault::QueueIndex {
                    index: a.queue_index,
                    len: self.queue.len(),
                }));
            }
            if a.server >= self.servers.len() {
                return Err(fault(PolicyFault::ServerIndex {
                    index: a.server,
                    len: self.servers.len(),
                }));
            }
            let task = self.queue.remove(a.queue_index).expect("index checked");
            let server = &mut self.servers[a.server];
            let due = assign_task(server, task, now).map_err(fault)?;
            self.busy += 1;
            let server = &self.servers[a.server];
            self.observer.task_assigned(
                now,
                a.queue_index,
                server.current_task().expect("just assigned"),
                server,
            );
            self.push(due, EventKind::Completion { server: a.server });
        }
        self.observer.event_processed(now, &self.queue, &self.servers);
        Ok(())
    }

    fn run(mut self, cfg: &SimConfig) -> Result<StatsReport, SimError> {
        self.policy.init(
            &self.servers,
            &PolicyParams {
                scheduling_window: cfg.simulation.scheduling_window,
            },
        );
        self.schedule_next_arrival()?;
        while let Some(event) = self.events.pop() {
            self.advance(event.time);
            match event.kind {
                EventKind::Arrival(task) => {
                    self.queue.push_back(task);
                    if self.queue.len() as u64 > self.max_queue_size {
                        return Err(SimError::QueueOverflow {
                            time: self.now,
                            limit: self.max_queue_size,
                        });
                    }
                    self.schedule_next_arrival()?;
                }
                EventKind::Completion { server } => {
                    let task = self.servers[server].release(self.now).expect("completion for a busy server");
                    self.busy -= 1;
                    self.policy.remove_task_from_server(self.now, &self.servers[server]);
                    let record = TaskRecord::from_completed(&task, &self.servers[server]);
                    self.stats.record(&record);
                    self.observer.task_completed(&record);
                }
            }
            self.schedule()?;
        }

        let sim_time = self.now;
        let mut report = self.stats.finish(&self.occupancy, &self.servers, sim_time);
        report.policy = cfg.simulation.sched_policy_module.clone();
        report.seed = Some(cfg.general.random_seed);
        report.tasks_created = self.tasks_created;
        report.mean_tasks_in_system = if sim_time > 0.0 {
            self.in_system_area / sim_time
        } else {
            0.0
        };
        report.policy_stats = self.policy.output_final_stats(sim_time);
        Ok(report)
    }
}

/// Simulates `workload` under `policy` until every task has completed.
pub fn run(cfg: &SimConfig, policy: &mut dyn Policy, workload: WorkloadSource) -> Result<StatsReport, SimError> {
    run_observed(cfg, policy, workload, NoopObserver)
}

pub fn run_observed<O: SimObserver>(
    cfg: &SimConfig,
    policy: &mut dyn Policy,
    workload: WorkloadSource,
    observer: O,
) -> Result<StatsReport, SimError> {
    let (_, servers) = build_servers(cfg);
    let engine = Engine {
        policy,
        observer,
        workload,
        max_queue_size: cfg.simulation.max_queue_size,
        now: 0.0,
        seq: 0,
        events: BinaryHeap::new(),
        queue: TaskQueue::new(),
        servers,
        busy: 0,
        tasks_created: 0,
        occupancy: Vec::new(),
        in_system_area: 0.0,
        stats: StatsCollector::new(),
    };
    engine.run(cfg)
}

/// Builds the workload a configuration asks for: the seeded generator in
/// probabilistic mode, or the replayed `input_trace_file` in realistic
/// mode.
pub fn workload_for(cfg: &SimConfig) -> Result<WorkloadSource, SimError> {
    if cfg.is_realistic_mode() {
        let path = cfg.resolve_path(&cfg.general.input_trace_file);
        Ok(traceio::read_trace(&path, cfg)?)
    } else {
        Ok(generate_arrivals(cfg, SimRng::seed_from(cfg.general.random_seed))?)
    }
}

/// Output of [`simulate`].
#[derive(Debug)]
pub struct RunOutput {
    pub report: StatsReport,
    /// Trace written for the run, if `output_trace_file` was set.
    pub trace_path: Option<PathBuf>,
}

/// End-to-end run of a validated configuration: resolves the policy,
/// builds the workload, emits the output trace if configured and
/// simulates.
pub fn simulate(cfg: &SimConfig, registry: &PolicyRegistry) -> Result<RunOutput, SimError> {
    simulate_observed(cfg, registry, NoopObserver)
}

pub fn simulate_observed<O: SimObserver>(
    cfg: &SimConfig,
    registry: &PolicyRegistry,
    observer: O,
) -> Result<RunOutput, SimError> {
    let diags: Vec<Diagnostic> = crate::config::validate_config(cfg);
    if !diags.is_empty() {
        return Err(ConfigError::Invalid(diags).into());
    }
    let mut policy = registry.resolve(cfg.policy_name())?;
    let workload = workload_for(cfg)?;
    let (catalog, _) = build_servers(cfg);

    if cfg.general.output_trace_file.is_empty() {
        let report = run_observed(cfg, policy.as_mut(), workload, observer)?;
        return Ok(RunOutput { report, trace_path: None });
    }

    let path = cfg.resolve_path(&cfg.general.output_trace_file);
    let report = match workload.preloaded() {
        // Materialised workloads are written in full before the first event.
        Some(tasks) => {
            traceio::write_trace(tasks, &catalog, &path)?;
            run_observed(cfg, policy.as_mut(), workload, observer)?
        }
        None => {
            let mut writer = TraceWriter::create(&path, catalog)?;
            let report = run_observed(cfg, policy.as_mut(), workload, (&mut writer, observer))?;
            writer.finish()?;
            report
        }
    };
    Ok(RunOutput {
        report,
        trace_path: Some(path),
    })
}
