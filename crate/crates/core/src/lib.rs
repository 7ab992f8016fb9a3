//! Discrete-event simulation of task scheduling on heterogeneous
//! multiprocessors.
//!
//! A run takes a [`SimConfig`], a [`Policy`] and a workload (generated from
//! the configured distributions, or replayed from a trace) and produces a
//! [`StatsReport`]. [`analytic`] holds the M/M/k closed forms used to
//! validate the engine, and [`harness`] drives validation and parameter
//! sweeps.
//!
//! ```
//! use hetsched::{harness, simulate, PolicyRegistry};
//!
//! let mut cfg = harness::reference_soc_config();
//! cfg.simulation.max_tasks_simulated = 1_000;
//! let out = simulate(&cfg, &PolicyRegistry::with_builtins()).unwrap();
//! assert_eq!(out.report.tasks_completed, 1_000);
//! ```

pub mod analytic;
pub mod config;
pub mod engine;
pub mod harness;
pub mod model;
pub mod policy;
pub mod sampling;
pub mod stats;
pub mod traceio;

pub use analytic::{erlang_c, mmk_mean_wait, relative_error, AnalyticError, ErrorSample, MmkParams};
pub use config::{parse_config, validate_config, ConfigError, Diagnostic, SimConfig};
pub use engine::{run, run_observed, simulate, simulate_observed, RunOutput, SimError, SimObserver, WorkloadSource};
pub use model::{Server, ServerCatalog, ServerTypeId, Task};
pub use policy::{Assignment, Policy, PolicyParams, PolicyRegistry, PolicyStat, TaskQueue};
pub use sampling::SimRng;
pub use stats::{write_report, ReportFormat, StatsReport, TaskRecord};
pub use traceio::{read_trace, write_trace, TraceError, TraceRecord};
