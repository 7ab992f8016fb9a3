//! JSON configuration: parsing, default filling and validation.
//!
//! The file has two top-level blocks, `general` and `simulation`. A handful
//! of optional keys extend it (`scheduling_window`, per-task `service_distribution`, `power`,
//! `deadline` and `weight`). Unknown keys are reported through `log::warn!`
//! and otherwise ignored.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed configuration JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration:\n{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| format!("  {d}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One configuration problem, keyed by the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LoggingLevel {
    Debug,
    #[default]
    Info,
    Warning,
    Error,
}

impl LoggingLevel {
    pub fn to_level_filter(self) -> log::LevelFilter {
        match self {
            LoggingLevel::Debug => log::LevelFilter::Debug,
            LoggingLevel::Info => log::LevelFilter::Info,
            LoggingLevel::Warning => log::LevelFilter::Warn,
            LoggingLevel::Error => log::LevelFilter::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneralConfig {
    pub logging_level: LoggingLevel,
    pub random_seed: u64,
    pub working_dir: String,
    /// Prefix prepended to every output file name.
    pub basename: String,
    pub pre_gen_arrivals: bool,
    /// Empty selects probabilistic mode; otherwise the trace to replay.
    pub input_trace_file: String,
    /// Empty disables trace emission.
    pub output_trace_file: String,
}

impl Default for GeneralConfig {
    fn default() -> Self {
        Self {
            logging_level: LoggingLevel::Info,
            random_seed: 0,
            working_dir: ".".to_string(),
            basename: String::new(),
            pre_gen_arrivals: false,
            input_trace_file: String::new(),
            output_trace_file: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceDistribution {
    #[default]
    Normal,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTypeSpec {
    pub mean_service_time: BTreeMap<String, f64>,
    pub stdev_service_time: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<BTreeMap<String, f64>>,
    /// Relative deadline, measured from the task's arrival.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<f64>,
    #[serde(default)]
    pub service_distribution: ServiceDistribution,
    /// Relative frequency in the generated task mix.
    #[serde(default = "default_weight")]
    pub weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

impl TaskTypeSpec {
    /// Supported server types, fastest mean first. Equal means fall back to
    /// name order.
    pub fn preference_order(&self) -> Vec<&str> {
        let mut order: Vec<(&str, f64)> = self
            .mean_service_time
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        order.into_iter().map(|(k, _)| k).collect()
    }

    pub fn supports(&self, server_type: &str) -> bool {
        self.mean_service_time.contains_key(server_type)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub sched_policy_module: String,
    #[serde(default = "default_max_tasks")]
    pub max_tasks_simulated: u64,
    #[serde(default = "default_mean_arrival_time")]
    pub mean_arrival_time: f64,
    #[serde(default = "default_arrival_time_scale")]
    pub arrival_time_scale: f64,
    /// Parsed and carried; has no effect on the simulation.
    #[serde(default)]
    pub power_mgmt_enabled: bool,
    #[serde(default = "default_max_queue_size")]
    pub max_queue_size: u64,
    #[serde(default = "default_scheduling_window")]
    pub scheduling_window: usize,
    pub servers: BTreeMap<String, ServerSpec>,
    #[serde(default)]
    pub tasks: BTreeMap<String, TaskTypeSpec>,
}

fn default_max_tasks() -> u64 {
    100_000
}
fn default_mean_arrival_time() -> f64 {
    50.0
}
fn default_arrival_time_scale() -> f64 {
    1.0
}
fn default_max_queue_size() -> u64 {
    1_000_000
}
pub const DEFAULT_SCHEDULING_WINDOW: usize = 10;
fn default_scheduling_window() -> usize {
    DEFAULT_SCHEDULING_WINDOW
}

impl SimulationConfig {
    /// Mean inter-arrival gap after applying `arrival_time_scale`.
    pub fn effective_mean_arrival_time(&self) -> f64 {
        self.mean_arrival_time * self.arrival_time_scale
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(default)]
    pub general: GeneralConfig,
    pub simulation: SimulationConfig,
}

impl SimConfig {
    pub fn is_realistic_mode(&self) -> bool {
        !self.general.input_trace_file.is_empty()
    }

    pub fn policy_name(&self) -> &str {
        &self.simulation.sched_policy_module
    }

    /// Resolves a path from the config against `working_dir`.
    pub fn resolve_path(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            Path::new(&self.general.working_dir).join(p)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SimConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_config(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }
}

/// Parses, default-fills and validates a configuration document.
pub fn parse_config(json_text: &str) -> Result<SimConfig, ConfigError> {
    let (cfg, ignored) = parse_config_lenient(json_text)?;
    for key in &ignored {
        log::warn!("ignoring unknown configuration key `{key}`");
    }
    let diags = validate_config(&cfg);
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Invalid(diags))
    }
}

/// Parses without validating. Also returns the paths of keys that were
/// ignored as unknown.
pub fn parse_config_lenient(json_text: &str) -> Result<(SimConfig, Vec<String>), ConfigError> {
    let mut ignored = Vec::new();
    let de = &mut serde_json::Deserializer::from_str(json_text);
    let cfg: SimConfig = serde_ignored::deserialize(de, |path| ignored.push(path.to_string()))?;
    Ok((cfg, ignored))
}

/// Checks every structural invariant. Returns one diagnostic per violation;
/// an empty list means the configuration is usable.
pub fn validate_config(cfg: &SimConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let sim = &cfg.simulation;

    if sim.sched_policy_module.trim().is_empty() {
        out.push(Diagnostic::new(
            "simulation.sched_policy_module",
            "policy name must not be empty",
        ));
    }
    if sim.max_tasks_simulated == 0 {
        out.push(Diagnostic::new(
            "simulation.max_tasks_simulated",
            "must be a positive integer",
        ));
    }
    if !(sim.mean_arrival_time > 0.0 && sim.mean_arrival_time.is_finite()) {
        out.push(Diagnostic::new(
            "simulation.mean_arrival_time",
            format!("must be positive, got {}", sim.mean_arrival_time),
        ));
    }
    if !(sim.arrival_time_scale > 0.0 && sim.arrival_time_scale.is_finite()) {
        out.push(Diagnostic::new(
            "simulation.arrival_time_scale",
            format!("must be positive, got {}", sim.arrival_time_scale),
        ));
    }
    if sim.max_queue_size == 0 {
        out.push(Diagnostic::new(
            "simulation.max_queue_size",
            "must be a positive integer",
        ));
    }
    if sim.scheduling_window == 0 {
        out.push(Diagnostic::new(
            "simulation.scheduling_window",
            "must be a positive integer",
        ));
    }

    if sim.servers.is_empty() {
        out.push(Diagnostic::new(
            "simulation.servers",
            "at least one server type is required",
        ));
    }
    for (name, spec) in &sim.servers {
        if spec.count == 0 {
            out.push(Diagnostic::new(
                format!("simulation.servers.{name}.count"),
                "must be at least 1",
            ));
        }
    }

    if sim.tasks.is_empty() && !cfg.is_realistic_mode() {
        out.push(Diagnostic::new(
            "simulation.tasks",
            "at least one task type is required in probabilistic mode",
        ));
    }
    for (task, spec) in &sim.tasks {
        let base = format!("simulation.tasks.{task}");
        if spec.mean_service_time.is_empty() {
            out.push(Diagnostic::new(
                format!("{base}.mean_service_time"),
                "task type supports no server type",
            ));
        }
        for (server, mean) in &spec.mean_service_time {
            let path = format!("{base}.mean_service_time.{server}");
            if !sim.servers.contains_key(server) {
                out.push(Diagnostic::new(path.clone(), "undeclared server type"));
            }
            if !(*mean > 0.0 && mean.is_finite()) {
                out.push(Diagnostic::new(path.clone(), format!("must be positive, got {mean}")));
            }
            if !spec.stdev_service_time.contains_key(server) {
                out.push(Diagnostic::new(
                    format!("{base}.stdev_service_time.{server}"),
                    "missing standard deviation for a server type with a mean",
                ));
            }
        }
        for (server, stdev) in &spec.stdev_service_time {
            let path = format!("{base}.stdev_service_time.{server}");
            if !spec.mean_service_time.contains_key(server) {
                out.push(Diagnostic::new(
                    path.clone(),
                    "standard deviation given for a server type without a mean",
                ));
            }
            if !(*stdev >= 0.0 && stdev.is_finite()) {
                out.push(Diagnostic::new(path, format!("must be non-negative, got {stdev}")));
            }
        }
        if let Some(power) = &spec.power {
            for (server, p) in power {
                let path = format!("{base}.power.{server}");
                if !spec.mean_service_time.contains_key(server) {
                    out.push(Diagnostic::new(path.clone(), "power given for an unsupported server type"));
                }
                if !(*p >= 0.0 && p.is_finite()) {
                    out.push(Diagnostic::new(path, format!("must be non-negative, got {p}")));
                }
            }
        }
        if let Some(deadline) = spec.deadline {
            if !(deadline > 0.0 && deadline.is_finite()) {
                out.push(Diagnostic::new(
                    format!("{base}.deadline"),
                    format!("must be positive, got {deadline}"),
                ));
            }
        }
        if !(spec.weight > 0.0 && spec.weight.is_finite()) {
            out.push(Diagnostic::new(
                format!("{base}.weight"),
                format!("must be positive, got {}", spec.weight),
            ));
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const SAMPLE_CONFIG: &str = r#"
    {
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
    }"#;

    #[test]
    fn parses_reference_file() {
        let cfg = parse_config(SAMPLE_CONFIG).unwrap();
        let sim = &cfg.simulation;
        assert_eq!(sim.servers["cpu_core"].count, 8);
        assert_eq!(sim.servers["gpu"].count, 2);
        assert_eq!(sim.servers["fft_accel"].count, 1);
        assert_eq!(sim.tasks.keys().collect::<Vec<_>>(), vec!["decoder", "fft"]);
        assert_eq!(sim.mean_arrival_time, 50.0);
        assert_eq!(sim.max_tasks_simulated, 100_000);
        assert_eq!(sim.sched_policy_module, "policies.simple_policy_ver3");
        assert_eq!(sim.scheduling_window, DEFAULT_SCHEDULING_WINDOW);
        assert_eq!(sim.tasks["fft"].service_distribution, ServiceDistribution::Normal);
        assert!(!cfg.is_realistic_mode());
        assert!(validate_config(&cfg).is_empty());
    }

    #[test]
    fn unit_scale_keeps_mean_arrival() {
        let cfg = parse_config(SAMPLE_CONFIG).unwrap();
        assert_eq!(cfg.simulation.effective_mean_arrival_time(), 50.0);
        let mut half = cfg.clone();
        half.simulation.arrival_time_scale = 0.5;
        assert_eq!(half.simulation.effective_mean_arrival_time(), 25.0);
    }

    #[test]
    fn preference_order_is_fastest_first() {
        let cfg = parse_config(SAMPLE_CONFIG).unwrap();
        assert_eq!(
            cfg.simulation.tasks["fft"].preference_order(),
            vec!["fft_accel", "gpu", "cpu_core"]
        );
        assert_eq!(
            cfg.simulation.tasks["decoder"].preference_order(),
            vec!["gpu", "cpu_core"]
        );
    }

    #[test]
    fn minimal_file_is_default_filled() {
        let text = r#"{"simulation": {
            "sched_policy_module": "v1",
            "servers": {"cpu": {"count": 1}},
            "tasks": {"t": {"mean_service_time": {"cpu": 5}, "stdev_service_time": {"cpu": 0}}}
        }}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.general, GeneralConfig::default());
        assert_eq!(cfg.simulation.max_queue_size, 1_000_000);
        assert_eq!(cfg.simulation.arrival_time_scale, 1.0);
        assert_eq!(cfg.simulation.tasks["t"].weight, 1.0);
        assert_eq!(cfg.simulation.tasks["t"].power, None);
    }

    #[test]
    fn unknown_keys_are_reported_not_fatal() {
        let text = SAMPLE_CONFIG.replacen(
            "\"random_seed\":         0,",
            "\"random_seed\": 0, \"colour\": \"blue\",",
            1,
        );
        let (_, ignored) = parse_config_lenient(&text).unwrap();
        assert_eq!(ignored, vec!["general.colour".to_string()]);
        assert!(parse_config(&text).is_ok());
    }

    #[test]
    fn undeclared_server_is_one_diagnostic() {
        let mut cfg = parse_config(SAMPLE_CONFIG).unwrap();
        let fft = cfg.simulation.tasks.get_mut("fft").unwrap();
        fft.mean_service_time.insert("dsp".into(), 20.0);
        fft.stdev_service_time.insert("dsp".into(), 0.2);
        let diags = validate_config(&cfg);
        assert_eq!(diags.len(), 1, "{diags:?}");
        assert_eq!(diags[0].path, "simulation.tasks.fft.mean_service_time.dsp");
    }

    #[test]
    fn decoder_may_name_a_declared_accelerator() {
        let mut cfg = parse_config(SAMPLE_CONFIG).unwrap();
        let dec = cfg.simulation.tasks.get_mut("decoder").unwrap();
        dec.mean_service_time.insert("fft_accel".into(), 75.0);
        dec.stdev_service_time.insert("fft_accel".into(), 0.75);
        assert!(validate_config(&cfg).is_empty());
    }

    #[test]
    fn required_keys_and_bad_values_are_errors() {
        assert!(matches!(parse_config("{not json"), Err(ConfigError::Json(_))));
        let no_servers = r#"{"simulation": {"sched_policy_module": "v1", "tasks": {}}}"#;
        assert!(matches!(parse_config(no_servers), Err(ConfigError::Json(_))));
        let no_policy = r#"{"simulation": {"servers": {"cpu": {"count": 1}}}}"#;
        assert!(matches!(parse_config(no_policy), Err(ConfigError::Json(_))));

        let no_tasks = r#"{"simulation": {"sched_policy_module": "v1", "servers": {"cpu": {"count": 1}}}}"#;
        match parse_config(no_tasks) {
            Err(ConfigError::Invalid(d)) => assert_eq!(d[0].path, "simulation.tasks"),
            other => panic!("unexpected {other:?}"),
        }
        // Trace mode does not need task definitions.
        let trace_mode = r#"{"general": {"input_trace_file": "t.jsonl"},
            "simulation": {"sched_policy_module": "v1", "servers": {"cpu": {"count": 1}}}}"#;
        assert!(parse_config(trace_mode).unwrap().is_realistic_mode());

        let zero_count = SAMPLE_CONFIG.replace("\"count\" : 2", "\"count\" : 0");
        match parse_config(&zero_count) {
            Err(ConfigError::Invalid(d)) => assert_eq!(d[0].path, "simulation.servers.gpu.count"),
            other => panic!("unexpected {other:?}"),
        }
        let neg_mean = SAMPLE_CONFIG.replace("\"gpu\" : 150", "\"gpu\" : -150");
        match parse_config(&neg_mean) {
            Err(ConfigError::Invalid(d)) => {
                assert_eq!(d[0].path, "simulation.tasks.decoder.mean_service_time.gpu")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn mismatched_stdev_keys_are_flagged() {
        let mut cfg = parse_config(SAMPLE_CONFIG).unwrap();
        cfg.simulation
            .tasks
            .get_mut("decoder")
            .unwrap()
            .stdev_service_time
            .remove("gpu");
        let diags = validate_config(&cfg);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].path, "simulation.tasks.decoder.stdev_service_time.gpu");
    }

    #[test]
    fn serialization_round_trips() {
        let cfg = parse_config(SAMPLE_CONFIG).unwrap();
        let again = parse_config(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
    }
}
