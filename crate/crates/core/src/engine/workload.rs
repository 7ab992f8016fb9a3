use std::collections::VecDeque;
use std::sync::Arc;

use crate::config::{SimConfig, TaskTypeSpec};
use crate::model::{ServerCatalog, ServerTypeId, TargetServer, Task};
use crate::sampling::{draw_exponential, draw_service_time, pick_weighted, SamplingError, SimRng};

#[derive(Debug, Clone)]
struct TaskTemplate {
    name: Arc<str>,
    spec: TaskTypeSpec,
    /// Supported server types in name order (the service-time draw order).
    servers: Vec<(ServerTypeId, String)>,
}

/// Builds tasks of the configured types, drawing actual service times.
#[derive(Debug, Clone)]
pub struct TaskFactory {
    templates: Vec<TaskTemplate>,
    weights: Vec<f64>,
}

impl TaskFactory {
    pub fn new(cfg: &SimConfig, catalog: &ServerCatalog) -> Result<Self, SamplingError> {
        let mut templates = Vec::new();
        for (name, spec) in &cfg.simulation.tasks {
            let servers = spec
                .mean_service_time
                .keys()
                .map(|s| {
                    catalog
                        .id_of(s)
                        .map(|id| (id, s.clone()))
                        .ok_or_else(|| SamplingError::UnsupportedServer(s.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            templates.push(TaskTemplate {
                name: Arc::from(name.as_str()),
                spec: spec.clone(),
                servers,
            });
        }
        if templates.is_empty() {
            return Err(SamplingError::NoTaskTypes);
        }
        let weights = templates.iter().map(|t| t.spec.weight).collect();
        Ok(Self { templates, weights })
    }

    /// Draws the task type, then one service time per supported server
    /// type.
    pub fn draw(&self, rng: &mut SimRng, id: u64, arrival_time: f64) -> Result<Task, SamplingError> {
        let idx = pick_weighted(rng, &self.weights).ok_or(SamplingError::NoTaskTypes)?;
        let tpl = &self.templates[idx];
        let mut targets = Vec::with_capacity(tpl.servers.len());
        for (ty, name) in &tpl.servers {
            let service_time = draw_service_time(rng, &tpl.spec, name)?;
            targets.push(TargetServer {
                server_type: *ty,
                mean_service_time: tpl.spec.mean_service_time[name],
                service_time,
                power: tpl.spec.power.as_ref().and_then(|p| p.get(name).copied()),
            });
        }
        Ok(Task::new(id, tpl.name.clone(), arrival_time, targets, tpl.spec.deadline))
    }
}

/// Lazily generated probabilistic-mode arrivals.
#[derive(Debug, Clone)]
pub struct ArrivalGenerator {
    factory: TaskFactory,
    rng: SimRng,
    mean_gap: f64,
    clock: f64,
    next_id: u64,
    limit: u64,
}

impl ArrivalGenerator {
    pub fn new(cfg: &SimConfig, catalog: &ServerCatalog, rng: SimRng) -> Result<Self, SamplingError> {
        let mean_gap = cfg.simulation.effective_mean_arrival_time();
        if !(mean_gap > 0.0 && mean_gap.is_finite()) {
            return Err(SamplingError::NonPositiveMean(mean_gap));
        }
        Ok(Self {
            factory: TaskFactory::new(cfg, catalog)?,
            rng,
            mean_gap,
            clock: 0.0,
            next_id: 0,
            limit: cfg.simulation.max_tasks_simulated,
        })
    }
}

impl Iterator for ArrivalGenerator {
    type Item = Task;

    fn next(&mut self) -> Option<Task> {
        if self.next_id >= self.limit {
            return None;
        }
        // Parameters were checked in `new`, so draws cannot fail.
        let gap = draw_exponential(&mut self.rng, self.mean_gap).expect("validated mean gap");
        self.clock += gap;
        let task = self
            .factory
            .draw(&mut self.rng, self.next_id, self.clock)
            .expect("validated task types");
        self.next_id += 1;
        Some(task)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.limit - self.next_id) as usize;
        (left, Some(left))
    }
}

/// Where a run's tasks come from: the probabilistic generator, or a
/// materialised list (pre-generated arrivals or a replayed trace).
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum WorkloadSource {
    Generated(ArrivalGenerator),
    Preloaded(VecDeque<Task>),
}

impl WorkloadSource {
    pub fn from_tasks(tasks: impl IntoIterator<Item = Task>) -> Self {
        WorkloadSource::Preloaded(tasks.into_iter().collect())
    }

    pub fn empty() -> Self {
        WorkloadSource::Preloaded(VecDeque::new())
    }

    /// The materialised tasks, if any.
    pub fn preloaded(&self) -> Option<&VecDeque<Task>> {
        match self {
            WorkloadSource::Preloaded(tasks) => Some(tasks),
            WorkloadSource::Generated(_) => None,
        }
    }
}

impl Iterator for WorkloadSource {
    type Item = Task;

    fn next(&mut self) -> Option<Task> {
        match self {
            WorkloadSource::Generated(g) => g.next(),
            WorkloadSource::Preloaded(tasks) => tasks.pop_front(),
        }
    }
}

/// Probabilistic-mode workload: `max_tasks_simulated` tasks with
/// exponential inter-arrival gaps of mean `mean_arrival_time x
/// arrival_time_scale`. With `pre_gen_arrivals` the whole list is drawn up
/// front; the draws are identical either way.
pub fn generate_arrivals(cfg: &SimConfig, rng: SimRng) -> Result<WorkloadSource, SamplingError> {
    let catalog = ServerCatalog::new(cfg.simulation.servers.keys());
    let generator = ArrivalGenerator::new(cfg, &catalog, rng)?;
    Ok(if cfg.general.pre_gen_arrivals {
        WorkloadSource::Preloaded(generator.collect())
    } else {
        WorkloadSource::Generated(generator)
    })
}
