//! Scheduling-policy interface and the name-keyed policy registry.
//!
//! A policy is consulted after every simulation event. Each call to
//! [`Policy::assign_task_to_server`] either names one (queued task, idle
//! server) pair or declines; the engine keeps calling until it declines.
//! Policies only ever see mean service-time estimates. Actual service times
//! stay inside the engine.
//!
//! New policies implement [`Policy`] and are made available to
//! configuration files through [`PolicyRegistry::register`].

mod builtin;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DEFAULT_SCHEDULING_WINDOW;
use crate::model::{Server, ServerTypeId, Task};

pub use builtin::{FastestAvailable, FallbackChain, MinFinish, ProjectedLoadWindow, WindowedMinFinish};

/// The FIFO task queue as policies see it. Index 0 is the head.
pub type TaskQueue = VecDeque<Task>;

/// A policy's decision: start the task at `queue_index` on the server at
/// `server` (an index into the server slice).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub queue_index: usize,
    pub server: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyParams {
    /// Queue positions a non-blocking policy may inspect, head included.
    pub scheduling_window: usize,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            scheduling_window: DEFAULT_SCHEDULING_WINDOW,
        }
    }
}

/// A labelled value reported by a policy at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStat {
    pub label: String,
    pub value: f64,
}

impl PolicyStat {
    pub fn new(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            value,
        }
    }
}

pub trait Policy: Send {
    fn name(&self) -> &str;

    /// Called once before the first event with the initial (all idle)
    /// servers.
    fn init(&mut self, _servers: &[Server], _params: &PolicyParams) {}

    /// Proposes at most one assignment. Must only name idle servers whose
    /// type the chosen task supports; the engine aborts the run otherwise.
    fn assign_task_to_server(
        &mut self,
        now: f64,
        queue: &TaskQueue,
        servers: &[Server],
    ) -> Option<Assignment>;

    /// Called after `server` has finished its task and become idle.
    fn remove_task_from_server(&mut self, _now: f64, _server: &Server) {}

    fn output_final_stats(&self, _now: f64) -> Vec<PolicyStat> {
        Vec::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("unknown scheduling policy `{0}`")]
    Unknown(String),
    #[error("scheduling policy `{0}` is already registered")]
    Duplicate(String),
    #[error("policy name must not be empty")]
    EmptyName,
}

type Constructor = Box<dyn Fn(&str) -> Box<dyn Policy> + Send + Sync>;

/// Maps `sched_policy_module` strings to policy constructors.
pub struct PolicyRegistry {
    constructors: BTreeMap<String, Constructor>,
}

impl fmt::Debug for PolicyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PolicyRegistry")
            .field("names", &self.constructors.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self {
            constructors: BTreeMap::new(),
        }
    }

    /// Registry preloaded with the built-in policies under their short names
    /// (`fastest_available`, `v1`..`v5`) and their module-style aliases
    /// (`policies.simple_policy_ver1`..`ver5`).
    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register("fastest_available", |n| Box::new(FastestAvailable::new(n)))
            .expect("fresh registry");
        for (short, alias) in (1..=5).map(|v| (format!("v{v}"), format!("policies.simple_policy_ver{v}"))) {
            let ctor = builtin_constructor(&short);
            reg.register(&short, ctor).expect("fresh registry");
            reg.register(&alias, builtin_constructor(&short)).expect("fresh registry");
        }
        reg
    }

    pub fn register<F>(&mut self, name: &str, constructor: F) -> Result<(), PolicyError>
    where
        F: Fn(&str) -> Box<dyn Policy> + Send + Sync + 'static,
    {
        if name.trim().is_empty() {
            return Err(PolicyError::EmptyName);
        }
        if self.constructors.contains_key(name) {
            return Err(PolicyError::Duplicate(name.to_string()));
        }
        self.constructors.insert(name.to_string(), Box::new(constructor));
        Ok(())
    }

    /// A fresh policy instance for one run.
    pub fn resolve(&self, name: &str) -> Result<Box<dyn Policy>, PolicyError> {
        self.constructors
            .get(name)
            .map(|ctor| ctor(name))
            .ok_or_else(|| PolicyError::Unknown(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.constructors.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.constructors.keys().map(String::as_str)
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn builtin_constructor(short: &str) -> fn(&str) -> Box<dyn Policy> {
    match short {
        "v1" => |n| Box::new(FastestAvailable::new(n)),
        "v2" => |n| Box::new(FallbackChain::new(n)),
        "v3" => |n| Box::new(MinFinish::new(n)),
        "v4" => |n| Box::new(WindowedMinFinish::new(n)),
        "v5" => |n| Box::new(ProjectedLoadWindow::new(n)),
        _ => unreachable!("no built-in policy {short}"),
    }
}

/// First idle server of the given type, in server order.
pub fn first_idle_of_type(servers: &[Server], ty: ServerTypeId) -> Option<usize> {
    servers
        .iter()
        .position(|s| s.server_type == ty && !s.is_busy())
}

/// The server that minimises `load(server) + mean service of task on it`
/// over every server the task supports. Ties go to the lower mean service
/// time, then to an idle server over a busy one, then to the lower server
/// index. Returns the server index and its estimated finish.
pub fn select_min_finish(
    task: &Task,
    servers: &[Server],
    mut load: impl FnMut(&Server) -> f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64, f64, bool)> = None;
    for server in servers {
        let Some(mean) = task.mean_service_time(server.server_type) else {
            continue;
        };
        let finish = load(server) + mean;
        let better = match best {
            None => true,
            Some((_, best_finish, best_mean, best_busy)) => finish
                .total_cmp(&best_finish)
                .then(mean.total_cmp(&best_mean))
                .then(server.is_busy().cmp(&best_busy))
                .is_lt(),
        };
        if better {
            best = Some((server.index, finish, mean, server.is_busy()));
        }
    }
    best.map(|(idx, finish, _, _)| (idx, finish))
}
