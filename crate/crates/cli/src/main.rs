//! `hetsched` command-line driver.
//!
//! Exit codes: 0 success, 1 bad input (flags, configuration, policy name,
//! trace file), 2 failure while running or writing results.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};

use hetsched::config::ConfigError;
use hetsched::harness::{self, HarnessError, SweepParam};
use hetsched::stats::output_file_name;
use hetsched::{simulate, write_report, PolicyRegistry, ReportFormat, SimConfig, SimError};

#[derive(Debug, Parser)]
#[command(name = "hetsched", version, about = "Discrete-event simulator for scheduling on heterogeneous multiprocessors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one simulation from a configuration file.
    Run(RunArgs),
    /// Compare simulated M/M/k waiting times with the closed form.
    Validate(ValidateArgs),
    /// Run a configuration over a list of parameter values and policies.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides general.random_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides simulation.sched_policy_module.
    #[arg(long)]
    policy: Option<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Server counts k; one sweep per value.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    servers: Vec<u32>,
    /// Per-server utilizations, each in (0, 1).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    utilizations: Vec<f64>,
    /// Tasks simulated per point.
    #[arg(long, default_value_t = 1_000_000)]
    tasks: u64,
    /// Base seed; point i of a sweep uses a seed derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean service time of the exponential task.
    #[arg(long, default_value_t = 50.0)]
    mean_service: f64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Base configuration file.
    #[arg(long)]
    config: PathBuf,
    /// mean_arrival_time, arrival_time_scale, stdev_factor or sched_policy_module.
    #[arg(long)]
    param: String,
    /// Values of the parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Policies to run at every value.
    #[arg(long, value_delimiter = ',')]
    policies: Vec<String>,
    /// Base seed; defaults to general.random_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Policy(_) | SimError::Trace(_) | SimError::Sampling(_) => Self::input(e),
            _ => Self::runtime(e),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Sim(s) => s.into(),
            HarnessError::Report(_) => Self::runtime(e),
            _ => Self::input(e),
        }
    }
}

fn init_logging(level: LevelFilter) {
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

fn load_config(path: &Path) -> Result<SimConfig, Failure> {
    let cfg = SimConfig::load(path).map_err(|e| match e {
        ConfigError::Invalid(diags) => {
            let lines: Vec<String> = diags.iter().map(|d| format!("  {d}")).collect();
            Failure::input(format!("invalid configuration {}:\n{}", path.display(), lines.join("\n")))
        }
        other => Failure::input(other),
    })?;
    init_logging(cfg.general.logging_level.to_level_filter());
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", dir.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.general.random_seed = seed;
    }
    if let Some(policy) = args.policy {
        cfg.simulation.sched_policy_module = policy;
    }
    let registry = PolicyRegistry::with_builtins();
    info!(
        "simulating {} tasks under {}",
        cfg.simulation.max_tasks_simulated,
        cfg.policy_name()
    );
    let out = simulate(&cfg, &registry)?;
    let mut report = out.report;
    report.config = Some(cfg.clone());

    create_out(&args.out)?;
    let formats: &[ReportFormat] = match args.format {
        Format::Json => &[ReportFormat::Json],
        Format::Csv => &[ReportFormat::Csv],
        Format::Both => &[ReportFormat::Json, ReportFormat::Csv],
    };
    for &f in formats {
        for path in write_report(&report, f, &args.out, &cfg.general.basename).map_err(Failure::runtime)? {
            info!("wrote {}", path.display());
        }
    }
    if let Some(trace) = out.trace_path {
        info!("wrote {}", trace.display());
    }
    println!(
        "policy {}: {} tasks, mean response {}, queue empty {:.2}% of the time",
        report.policy,
        report.tasks_completed,
        report.mean_response().map_or("n/a".to_string(), |m| format!("{m:.3}")),
        100.0 * report.queue_empty_fraction()
    );
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<(), Failure> {
    init_logging(LevelFilter::Info);
    if let Some(rho) = args.utilizations.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Failure::input(format!("utilization {rho} is outside (0, 1)")));
    }
    if args.servers.contains(&0) {
        return Err(Failure::input("server count must be at least 1"));
    }
    if args.tasks == 0 {
        return Err(Failure::input("--tasks must be positive"));
    }
    if !(args.mean_service > 0.0 && args.mean_service.is_finite()) {
        return Err(Failure::input("--mean-service must be positive"));
    }
    let mut points = Vec::new();
    println!("servers,utilization,w_sim,w_mmk,relative_error");
    for &k in &args.servers {
        info!("M/M/{k}: {} points of {} tasks", args.utilizations.len(), args.tasks);
        let pts = harness::validation_sweep(k, &args.utilizations, args.tasks, args.seed, args.mean_service)?;
        for p in &pts {
            println!("{},{},{},{},{}", p.servers, p.utilization, p.w_sim, p.w_mmk, p.relative_error);
        }
        info!("M/M/{k}: average relative error {:.4}", harness::mean_relative_error(&pts));
        points.extend(pts);
    }
    create_out(&args.out)?;
    let path = args.out.join("validation.csv");
    harness::write_validation_csv(&points, &path)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config)?;
    let param: SweepParam = args.param.parse()?;
    let seed = args.seed.unwrap_or(cfg.general.random_seed);
    let registry = PolicyRegistry::with_builtins();
    let runs = harness::run_sweep(&cfg, param, &args.values, &args.policies, seed, &registry)?;
    create_out(&args.out)?;
    for r in &runs {
        let mut report = r.report.clone();
        let mut effective = harness::apply_param(&cfg, param, &r.value)?;
        effective.simulation.sched_policy_module = r.policy.clone();
        effective.general.random_seed = r.seed;
        effective.general.output_trace_file.clear();
        report.config = Some(effective);
        let stem = format!("{}-{}_{}", param, r.value, r.policy);
        let base = output_file_name(&cfg.general.basename, &stem);
        write_report(&report, ReportFormat::Json, &args.out, &base).map_err(Failure::runtime)?;
    }
    for path in harness::write_sweep(&runs, &args.out, &cfg.general.basename)? {
        info!("wrote {}", path.display());
    }
    println!("param,value,policy,mean_response,queue_empty_fraction");
    for r in &runs {
        println!(
            "{},{},{},{},{}",
            r.param,
            r.value,
            r.policy,
            r.report.mean_response().map_or(String::new(), |m| m.to_string()),
            r.report.queue_empty_fraction()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
