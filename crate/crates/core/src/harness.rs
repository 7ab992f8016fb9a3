//! Experiment drivers built on the engine: M/M/k validation sweeps and
//! parameter sweeps over a base configuration.
//!
//! Runs are independent and executed in parallel. Every run's seed is
//! derived from the base seed and the index of its sweep value with
//! [`derive_seed`], so results do not depend on scheduling order, and all
//! policies compared at one sweep value see the same workload.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{mmk_mean_wait, AnalyticError, ErrorSample, MmkParams};
use crate::config::{
    parse_config, GeneralConfig, ServerSpec, ServiceDistribution, SimConfig, SimulationConfig, TaskTypeSpec,
    DEFAULT_SCHEDULING_WINDOW,
};
use crate::engine::{simulate, SimError};
use crate::policy::PolicyRegistry;
use crate::stats::{fmt_opt, write_csv, ReportError, StatsReport};

/// The eight-core, two-GPU, one-FFT-accelerator platform with FFT and
/// decoder tasks at 1% service-time dispersion.
pub const REFERENCE_SOC: &str = r#"{
  "general" : {
      "logging_level":       "INFO",
      "random_seed":         0,
      "working_dir":         ".",
      "basename":            "",
      "pre_gen_arrivals":    false,
      "input_trace_file":    "",
      "output_trace_file":   ""
  },

  "simulation" : {
      "sched_policy_module": "policies.simple_policy_ver3",
      "max_tasks_simulated": 100000,
      "mean_arrival_time":   50,
      "power_mgmt_enabled":  false,
      "max_queue_size":      1000000,
      "arrival_time_scale":  1.0,

      "servers": {
          "cpu_core" : { "count" : 8 },
          "gpu" : { "count" : 2 },
          "fft_accel" : { "count" : 1 }
      },

      "tasks": {
          "fft" : {
              "mean_service_time" : { "cpu_core" : 500, "gpu" : 100, "fft_accel" : 10 },
              "stdev_service_time" : { "cpu_core" : 5.0, "gpu" : 1.0, "fft_accel" : 0.1 }
          },
          "decoder" : {
              "mean_service_time" : { "cpu_core" : 200, "gpu" : 150 },
              "stdev_service_time" : { "cpu_core" : 2.0, "gpu" : 1.5 }
          }
      }
  }
}
"#;

pub fn reference_soc_config() -> SimConfig {
    parse_config(REFERENCE_SOC).expect("reference configuration is valid")
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("unknown sweep parameter `{0}`")]
    UnknownParam(String),
    #[error("invalid value `{value}` for sweep parameter {param}")]
    InvalidValue { param: SweepParam, value: String },
    #[error("{0}")]
    Usage(String),
}

/// SplitMix64 finaliser applied to `base + index * golden`. Distinct
/// indices give well-separated seeds for any base.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single exponential task type on `k` identical servers, arrival rate set
/// for per-server utilization `rho`, served by `v1`.
pub fn mmk_config(k: u32, rho: f64, tasks: u64, seed: u64, mean_service: f64) -> SimConfig {
    let server = "core".to_string();
    let spec = TaskTypeSpec {
        mean_service_time: BTreeMap::from([(server.clone(), mean_service)]),
        stdev_service_time: BTreeMap::from([(server.clone(), 0.0)]),
        power: None,
        deadline: None,
        service_distribution: ServiceDistribution::Exponential,
        weight: 1.0,
    };
    SimConfig {
        general: GeneralConfig {
            random_seed: seed,
            ..GeneralConfig::default()
        },
        simulation: SimulationConfig {
            sched_policy_module: "v1".to_string(),
            max_tasks_simulated: tasks,
            mean_arrival_time: mean_service / (rho * k as f64),
            arrival_time_scale: 1.0,
            power_mgmt_enabled: false,
            max_queue_size: u64::MAX,
            scheduling_window: DEFAULT_SCHEDULING_WINDOW,
            servers: BTreeMap::from([(server.clone(), ServerSpec { count: k })]),
            tasks: BTreeMap::from([("job".to_string(), spec)]),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub servers: u32,
    pub utilization: f64,
    pub tasks: u64,
    pub seed: u64,
    pub w_sim: f64,
    pub w_mmk: f64,
    pub relative_error: f64,
    /// Time-average tasks in system over the configured arrival rate.
    pub mean_tasks_in_system: f64,
    pub mean_response: f64,
}

/// Simulates one M/M/k point and compares its mean waiting time with the
/// closed form.
pub fn run_mmk_point(
    k: u32,
    rho: f64,
    tasks: u64,
    seed: u64,
    mean_service: f64,
) -> Result<ValidationPoint, HarnessError> {
    let params = MmkParams::from_utilization(k, rho, mean_service)?;
    let w_mmk = mmk_mean_wait(&params)?;
    let cfg = mmk_config(k, rho, tasks, seed, mean_service);
    let report = simulate(&cfg, &PolicyRegistry::with_builtins())?.report;
    let w_sim = report.mean_waiting().unwrap_or(0.0);
    let sample = ErrorSample::new(w_sim, w_mmk)?;
    Ok(ValidationPoint {
        servers: k,
        utilization: rho,
        tasks,
        seed,
        w_sim,
        w_mmk,
        relative_error: sample.relative_error,
        mean_tasks_in_system: report.mean_tasks_in_system,
        mean_response: report.mean_response().unwrap_or(0.0),
    })
}

/// One point per utilization; point `i` uses `derive_seed(base_seed, i)`.
pub fn validation_sweep(
    k: u32,
    utilizations: &[f64],
    tasks: u64,
    base_seed: u64,
    mean_service: f64,
) -> Result<Vec<ValidationPoint>, HarnessError> {
    for &rho in utilizations {
        MmkParams::from_utilization(k, rho, mean_service)?;
    }
    utilizations
        .par_iter()
        .enumerate()
        .map(|(i, &rho)| run_mmk_point(k, rho, tasks, derive_seed(base_seed, i as u64), mean_service))
        .collect()
}

pub fn mean_relative_error(points: &[ValidationPoint]) -> f64 {
    points.iter().map(|p| p.relative_error).sum::<f64>() / points.len() as f64
}

pub fn write_validation_csv(points: &[ValidationPoint], path: &Path) -> Result<(), HarnessError> {
    let mut rows = vec![[
        "servers",
        "utilization",
        "tasks",
        "seed",
        "w_sim",
        "w_mmk",
        "relative_error",
    ]
    .map(String::from)
    .to_vec()];
    for p in points {
        rows.push(vec![
            p.servers.to_string(),
            p.utilization.to_string(),
            p.tasks.to_string(),
            p.seed.to_string(),
            p.w_sim.to_string(),
            p.w_mmk.to_string(),
            p.relative_error.to_string(),
        ]);
    }
    write_csv(path, &rows)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    MeanArrivalTime,
    ArrivalTimeScale,
    /// Every configured stdev becomes `factor x mean` for its server type.
    StdevFactor,
    /// Each value is a policy name.
    SchedPolicyModule,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [
        SweepParam::MeanArrivalTime,
        SweepParam::ArrivalTimeScale,
        SweepParam::StdevFactor,
        SweepParam::SchedPolicyModule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::MeanArrivalTime => "mean_arrival_time",
            SweepParam::ArrivalTimeScale => "arrival_time_scale",
            SweepParam::StdevFactor => "stdev_factor",
            SweepParam::SchedPolicyModule => "sched_policy_module",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| HarnessError::UnknownParam(s.to_string()))
    }
}

/// Sets `stdev = factor x mean` for every task type and server type.
pub fn apply_stdev_factor(cfg: &mut SimConfig, factor: f64) {
    for spec in cfg.simulation.tasks.values_mut() {
        spec.stdev_service_time = spec
            .mean_service_time
            .iter()
            .map(|(k, m)| (k.clone(), factor * m))
            .collect();
    }
}

/// `base` with `param` set to `value`.
pub fn apply_param(base: &SimConfig, param: SweepParam, value: &str) -> Result<SimConfig, HarnessError> {
    let mut cfg = base.clone();
    let number = || -> Result<f64, HarnessError> {
        value
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite() && *v >= 0.0)
            .ok_or_else(|| HarnessError::InvalidValue {
                param,
                value: value.to_string(),
            })
    };
    match param {
        SweepParam::MeanArrivalTime => cfg.simulation.mean_arrival_time = number()?,
        SweepParam::ArrivalTimeScale => cfg.simulation.arrival_time_scale = number()?,
        SweepParam::StdevFactor => apply_stdev_factor(&mut cfg, number()?),
        SweepParam::SchedPolicyModule => cfg.simulation.sched_policy_module = value.trim().to_string(),
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub param: SweepParam,
    pub value: String,
    pub policy: String,
    pub seed: u64,
    pub report: StatsReport,
}

/// Runs every (value, policy) pair. With an empty `policies` list the base
/// configuration's policy is used; for a policy sweep the values are the
/// policies and `policies` must be empty. Results are ordered by value,
/// then policy.
pub fn run_sweep(
    base: &SimConfig,
    param: SweepParam,
    values: &[String],
    policies: &[String],
    base_seed: u64,
    registry: &PolicyRegistry,
) -> Result<Vec<SweepRun>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Usage("sweep needs at least one value".into()));
    }
    if param == SweepParam::SchedPolicyModule && !policies.is_empty() {
        return Err(HarnessError::Usage(
            "a policy list cannot be combined with a sched_policy_module sweep".into(),
        ));
    }
    let mut jobs = Vec::new();
    for (i, value) in values.iter().enumerate() {
        let mut cfg = apply_param(base, param, value)?;
        cfg.general.random_seed = derive_seed(base_seed, i as u64);
        if policies.is_empty() {
            jobs.push((value.clone(), cfg));
        } else {
            for p in policies {
                let mut c = cfg.clone();
                c.simulation.sched_policy_module = p.clone();
                jobs.push((value.clone(), c));
            }
        }
    }
    for (_, cfg) in &jobs {
        registry
            .resolve(cfg.policy_name())
            .map_err(|e| HarnessError::Sim(e.into()))?;
    }
    jobs.into_par_iter()
        .map(|(value, mut cfg)| {
            // A sweep never overwrites one trace file from many runs.
            cfg.general.output_trace_file.clear();
            let report = simulate(&cfg, registry)?.report;
            Ok(SweepRun {
                param,
                value,
                policy: cfg.simulation.sched_policy_module.clone(),
                seed: cfg.general.random_seed,
                report,
            })
        })
        .collect()
}

const SWEEP_KEYS: [&str; 4] = ["param", "value", "policy", "seed"];

fn key_cells(r: &SweepRun) -> Vec<String> {
    vec![
        r.param.to_string(),
        r.value.clone(),
        r.policy.clone(),
        r.seed.to_string(),
    ]
}

fn with_keys(extra: &[&str]) -> Vec<String> {
    SWEEP_KEYS.iter().chain(extra).map(|s| s.to_string()).collect()
}

pub fn sweep_summary_rows(runs: &[SweepRun]) -> Vec<Vec<String>> {
    let mut rows = vec![with_keys(&[
        "tasks_completed",
        "mean_waiting",
        "mean_computation",
        "mean_response",
        "queue_empty_fraction",
        "mean_queue_length",
        "deadline_misses",
        "total_sim_time",
    ])];
    for r in runs {
        let rep = &r.report;
        let mut row = key_cells(r);
        row.extend([
            rep.tasks_completed.to_string(),
            fmt_opt(rep.overall.waiting.mean),
            fmt_opt(rep.overall.computation.mean),
            fmt_opt(rep.overall.response.mean),
            rep.queue_empty_fraction().to_string(),
            rep.mean_queue_length.to_string(),
            rep.deadline_misses.to_string(),
            rep.total_sim_time.to_string(),
        ]);
        rows.push(row);
    }
    rows
}

pub fn sweep_task_type_rows(runs: &[SweepRun]) -> Vec<Vec<String>> {
    let mut rows = vec![with_keys(&["task_type", "count", "mean_waiting", "mean_response"])];
    for r in runs {
        for (name, t) in &r.report.per_task_type {
            let mut row = key_cells(r);
            row.extend([
                name.clone(),
                t.count.to_string(),
                fmt_opt(t.waiting.mean),
                fmt_opt(t.response.mean),
            ]);
            rows.push(row);
        }
    }
    rows
}

pub fn sweep_histogram_rows(runs: &[SweepRun]) -> Vec<Vec<String>> {
    let mut rows = vec![with_keys(&["queue_length", "fraction"])];
    for r in runs {
        for (len, frac) in &r.report.queue_size_histogram {
            let mut row = key_cells(r);
            row.extend([len.to_string(), frac.to_string()]);
            rows.push(row);
        }
    }
    rows
}

/// Writes `sweep_summary.csv`, `sweep_task_types.csv` and
/// `sweep_histogram.csv` (each prefixed by `basename`) under `dir`.
pub fn write_sweep(runs: &[SweepRun], dir: &Path, basename: &str) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    let tables = [
        ("sweep_summary.csv", sweep_summary_rows(runs)),
        ("sweep_task_types.csv", sweep_task_type_rows(runs)),
        ("sweep_histogram.csv", sweep_histogram_rows(runs)),
    ];
    let mut out = Vec::new();
    for (stem, rows) in tables {
        let path = dir.join(crate::stats::output_file_name(basename, stem));
        write_csv(&path, &rows)?;
        out.push(path);
    }
    Ok(out)
}
