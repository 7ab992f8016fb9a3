//! Domain types shared by the engine, the policies and the statistics.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Index of a server type in a [`ServerCatalog`]. Types are numbered in
/// ascending name order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ServerTypeId(pub usize);

/// The server type names of one simulated platform, sorted by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerCatalog {
    names: Vec<Arc<str>>,
}

impl ServerCatalog {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut names: Vec<Arc<str>> = names.into_iter().map(|s| Arc::from(s.as_ref())).collect();
        names.sort();
        names.dedup();
        Self { names }
    }

    pub fn id_of(&self, name: &str) -> Option<ServerTypeId> {
        self.names
            .binary_search_by(|n| n.as_ref().cmp(name))
            .ok()
            .map(ServerTypeId)
    }

    pub fn name(&self, id: ServerTypeId) -> &Arc<str> {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ServerTypeId, &Arc<str>)> {
        self.names.iter().enumerate().map(|(i, n)| (ServerTypeId(i), n))
    }
}

/// One server type a task can run on, with the policy-visible mean estimate
/// and the actual service time the engine will charge.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetServer {
    pub server_type: ServerTypeId,
    pub mean_service_time: f64,
    pub service_time: f64,
    pub power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: u64,
    pub type_name: Arc<str>,
    pub arrival_time: f64,
    /// Supported server types in preference order (fastest mean first).
    pub targets: Vec<TargetServer>,
    pub deadline: Option<f64>,
    pub schedule_time: Option<f64>,
    pub completion_time: Option<f64>,
    /// Index into the engine's server list.
    pub assigned_server: Option<usize>,
}

impl Task {
    /// Builds a task, sorting `targets` into preference order. Ties on the
    /// mean go to the lower server type id.
    pub fn new(
        id: u64,
        type_name: Arc<str>,
        arrival_time: f64,
        mut targets: Vec<TargetServer>,
        deadline: Option<f64>,
    ) -> Self {
        targets.sort_by(|a, b| {
            a.mean_service_time
                .total_cmp(&b.mean_service_time)
                .then(a.server_type.cmp(&b.server_type))
        });
        Self {
            id,
            type_name,
            arrival_time,
            targets,
            deadline,
            schedule_time: None,
            completion_time: None,
            assigned_server: None,
        }
    }

    pub fn target(&self, server_type: ServerTypeId) -> Option<&TargetServer> {
        self.targets.iter().find(|t| t.server_type == server_type)
    }

    pub fn supports(&self, server_type: ServerTypeId) -> bool {
        self.target(server_type).is_some()
    }

    pub fn mean_service_time(&self, server_type: ServerTypeId) -> Option<f64> {
        self.target(server_type).map(|t| t.mean_service_time)
    }

    pub fn service_time(&self, server_type: ServerTypeId) -> Option<f64> {
        self.target(server_type).map(|t| t.service_time)
    }

    /// Fastest supported server type.
    pub fn best_server_type(&self) -> Option<ServerTypeId> {
        self.targets.first().map(|t| t.server_type)
    }
}

/// A single-task processing element.
#[derive(Debug, Clone)]
pub struct Server {
    /// Position in the engine's server list; servers are ordered by
    /// (type, id).
    pub index: usize,
    pub server_type: ServerTypeId,
    pub type_name: Arc<str>,
    /// Unique within its type.
    pub id: u32,
    current: Option<Task>,
    pub busy_time: f64,
    pub tasks_served: u64,
}

impl Server {
    pub fn new(index: usize, server_type: ServerTypeId, type_name: Arc<str>, id: u32) -> Self {
        Self {
            index,
            server_type,
            type_name,
            id,
            current: None,
            busy_time: 0.0,
            tasks_served: 0,
        }
    }

    pub fn is_busy(&self) -> bool {
        self.current.is_some()
    }

    pub fn current_task(&self) -> Option<&Task> {
        self.current.as_ref()
    }

    pub fn assign_time(&self) -> Option<f64> {
        self.current.as_ref().and_then(|t| t.schedule_time)
    }

    /// Mean service time of the running task on this server's type.
    pub fn current_mean_estimate(&self) -> Option<f64> {
        self.current
            .as_ref()
            .and_then(|t| t.mean_service_time(self.server_type))
    }

    pub fn remaining_busy_time(&self, now: f64) -> f64 {
        remaining_busy_time(self, now)
    }

    /// Removes the running task and charges its service time to this
    /// server. Returns `None` if the server was idle.
    pub(crate) fn release(&mut self, now: f64) -> Option<Task> {
        let mut task = self.current.take()?;
        let service = task
            .service_time(self.server_type)
            .expect("running task supports its server");
        self.busy_time += service;
        self.tasks_served += 1;
        task.completion_time = Some(now);
        Some(task)
    }
}

impl fmt::Display for Server {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.type_name, self.id)
    }
}

/// Estimated time until `server` frees up, from the running task's *mean*
/// service time. Never negative; idle servers report zero.
pub fn remaining_busy_time(server: &Server, now: f64) -> f64 {
    match (server.assign_time(), server.current_mean_estimate()) {
        (Some(start), Some(mean)) => (start + mean - now).max(0.0),
        _ => 0.0,
    }
}

/// A scheduling decision the engine refused to carry out.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyFault {
    #[error("policy assigned task {task} to busy server {server}")]
    BusyServer { task: u64, server: String },
    #[error("policy assigned task {task} to server {server}, whose type the task does not support")]
    UnsupportedServer { task: u64, server: String },
    #[error("policy chose queue position {index} but the queue holds {len} tasks")]
    QueueIndex { index: usize, len: usize },
    #[error("policy chose server index {index} but only {len} servers exist")]
    ServerIndex { index: usize, len: usize },
}

/// Starts `task` on `server` at `now`. Returns the completion time the
/// engine must schedule.
pub fn assign_task(server: &mut Server, mut task: Task, now: f64) -> Result<f64, PolicyFault> {
    if server.is_busy() {
        return Err(PolicyFault::BusyServer {
            task: task.id,
            server: server.to_string(),
        });
    }
    let Some(service) = task.service_time(server.server_type) else {
        return Err(PolicyFault::UnsupportedServer {
            task: task.id,
            server: server.to_string(),
        });
    };
    task.schedule_time = Some(now);
    task.assigned_server = Some(server.index);
    server.current = Some(task);
    Ok(now + service)
}
