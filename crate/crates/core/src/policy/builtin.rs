use super::{first_idle_of_type, select_min_finish, Assignment, Policy, PolicyParams, PolicyStat, TaskQueue};
use crate::model::Server;

#[derive(Debug, Default, Clone)]
struct Counters {
    assignments: u64,
    declined_nonempty: u64,
    past_head: u64,
}

impl Counters {
    fn note(&mut self, queue: &TaskQueue, decision: Option<Assignment>) -> Option<Assignment> {
        match decision {
            Some(a) => {
                self.assignments += 1;
                if a.queue_index > 0 {
                    self.past_head += 1;
                }
            }
            None if !queue.is_empty() => self.declined_nonempty += 1,
            None => {}
        }
        decision
    }

    fn stats(&self, windowed: bool) -> Vec<PolicyStat> {
        let mut out = vec![
            PolicyStat::new("assignments", self.assignments as f64),
            PolicyStat::new("declined_with_tasks_queued", self.declined_nonempty as f64),
        ];
        if windowed {
            out.push(PolicyStat::new("assignments_past_head", self.past_head as f64));
        }
        out
    }
}

/// Head of queue, fastest server type only. Blocks the queue when no unit
/// of that type is free.
#[derive(Debug)]
pub struct FastestAvailable {
    name: String,
    counters: Counters,
}

impl FastestAvailable {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            counters: Counters::default(),
        }
    }
}

impl Policy for FastestAvailable {
    fn name(&self) -> &str {
        &self.name
    }

    fn assign_task_to_server(&mut self, _now: f64, queue: &TaskQueue, servers: &[Server]) -> Option<Assignment> {
        let decision = queue.front().and_then(|head| {
            let ty = head.best_server_type()?;
            first_idle_of_type(servers, ty).map(|server| Assignment { queue_index: 0, server })
        });
        self.counters.note(queue, decision)
    }

    fn output_final_stats(&self, _now: f64) -> Vec<PolicyStat> {
        self.counters.stats(false)
    }
}

/// Head of queue, walking its server types from fastest to slowest and
/// taking the first free unit.
#[derive(Debug)]
pub struct FallbackChain {
    name: String,
    counters: Counters,
}

impl FallbackChain {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            counters: Counters::default(),
        }
    }
}

impl Policy for FallbackChain {
    fn name(&self) -> &str {
        &self.name
    }

    fn assign_task_to_server(&mut self, _now: f64, queue: &TaskQueue, servers: &[Server]) -> Option<Assignment> {
        let decision = queue.front().and_then(|head| {
            head.targets
                .iter()
                .find_map(|t| first_idle_of_type(servers, t.server_type))
                .map(|server| Assignment { queue_index: 0, server })
        });
        self.counters.note(queue, decision)
    }

    fn output_final_stats(&self, _now: f64) -> Vec<PolicyStat> {
        self.counters.stats(false)
    }
}

/// Head of queue onto the server with the earliest estimated finish
/// (remaining busy time plus the task's mean). Waits if that server is busy.
#[derive(Debug)]
pub struct MinFinish {
    name: String,
    counters: Counters,
}

impl MinFinish {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            counters: Counters::default(),
        }
    }
}

impl Policy for MinFinish {
    fn name(&self) -> &str {
        &self.name
    }

    fn assign_task_to_server(&mut self, now: f64, queue: &TaskQueue, servers: &[Server]) -> Option<Assignment> {
        let decision = queue.front().and_then(|head| {
            let (server, _) = select_min_finish(head, servers, |s| s.remaining_busy_time(now))?;
            (!servers[server].is_busy()).then_some(Assignment { queue_index: 0, server })
        });
        self.counters.note(queue, decision)
    }

    fn output_final_stats(&self, _now: f64) -> Vec<PolicyStat> {
        self.counters.stats(false)
    }
}

/// The earliest-finish rule applied to each of the first `window` queued
/// tasks in turn; the first task whose chosen server is idle starts.
#[derive(Debug)]
pub struct WindowedMinFinish {
    name: String,
    window: usize,
    counters: Counters,
}

impl WindowedMinFinish {
    pub fn new(name: &str) -> Self {
        Self::with_window(name, PolicyParams::default().scheduling_window)
    }

    pub fn with_window(name: &str, window: usize) -> Self {
        Self {
            name: name.to_string(),
            window,
            counters: Counters::default(),
        }
    }
}

impl Policy for WindowedMinFinish {
    fn name(&self) -> &str {
        &self.name
    }

    fn init(&mut self, _servers: &[Server], params: &PolicyParams) {
        self.window = params.scheduling_window;
    }

    fn assign_task_to_server(&mut self, now: f64, queue: &TaskQueue, servers: &[Server]) -> Option<Assignment> {
        let decision = queue.iter().take(self.window).enumerate().find_map(|(i, task)| {
            let (server, _) = select_min_finish(task, servers, |s| s.remaining_busy_time(now))?;
            (!servers[server].is_busy()).then_some(Assignment { queue_index: i, server })
        });
        self.counters.note(queue, decision)
    }

    fn output_final_stats(&self, _now: f64) -> Vec<PolicyStat> {
        self.counters.stats(true)
    }
}

/// Like [`WindowedMinFinish`], but each server's load starts at its
/// remaining busy time and grows by the mean service of every earlier
/// window task projected onto it. A task starts only on an idle server
/// that no earlier task has been projected onto.
#[derive(Debug)]
pub struct ProjectedLoadWindow {
    name: String,
    window: usize,
    load: Vec<f64>,
    counters: Counters,
}

impl ProjectedLoadWindow {
    pub fn new(name: &str) -> Self {
        Self::with_window(name, PolicyParams::default().scheduling_window)
    }

    pub fn with_window(name: &str, window: usize) -> Self {
        Self {
            name: name.to_string(),
            window,
            load: Vec::new(),
            counters: Counters::default(),
        }
    }

    fn decide(&mut self, now: f64, queue: &TaskQueue, servers: &[Server]) -> Option<Assignment> {
        self.load.clear();
        self.load.extend(servers.iter().map(|s| s.remaining_busy_time(now)));
        for (i, task) in queue.iter().take(self.window).enumerate() {
            let load = &self.load;
            let Some((server, _)) = select_min_finish(task, servers, |s| load[s.index]) else {
                continue;
            };
            if !servers[server].is_busy() && self.load[server] == 0.0 {
                return Some(Assignment { queue_index: i, server });
            }
            let mean = task
                .mean_service_time(servers[server].server_type)
                .expect("selected server supports the task");
            self.load[server] += mean;
        }
        None
    }
}

impl Policy for ProjectedLoadWindow {
    fn name(&self) -> &str {
        &self.name
    }

    fn init(&mut self, servers: &[Server], params: &PolicyParams) {
        self.window = params.scheduling_window;
        self.load = Vec::with_capacity(servers.len());
    }

    fn assign_task_to_server(&mut self, now: f64, queue: &TaskQueue, servers: &[Server]) -> Option<Assignment> {
        let decision = self.decide(now, queue, servers);
        self.counters.note(queue, decision)
    }

    fn output_final_stats(&self, _now: f64) -> Vec<PolicyStat> {
        self.counters.stats(true)
    }
}
