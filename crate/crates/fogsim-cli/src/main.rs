//! Experiment command line: generate scenario files, run single
//! simulations, and sweep theta, emitting one metrics CSV row per run.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Data goes to
//! stdout, diagnostics and the human summary to stderr.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use fogsim::metrics::{RunMetrics, CSV_HEADER};
use fogsim::scenario::{self, Scenario, ScenarioSpec, TopologyModel, ValueRange};
use fogsim::sim::{run_experiment, RunReport, Scheduler, SimParams};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fogsim", version, about = "Fog-computing task scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file from seeded parameter ranges.
    Generate(GenerateArgs),
    /// Run one simulation and append a metrics CSV row.
    Run(RunArgs),
    /// Run the same scenario once per theta in a range.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output scenario file.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    devices: u32,
    #[arg(long, default_value_t = 48)]
    fogs: u32,
    #[arg(long, default_value_t = 2)]
    clouds: u32,
    /// Generation seed (falls back to FOGSIM_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Side length of the square grid nodes and devices are placed on.
    #[arg(long, default_value_t = 500.0)]
    grid: f64,
    /// Connection radius of the random-geometric fog mesh.
    #[arg(long, default_value_t = 150.0)]
    radius: f64,
    /// Nearest fogs each cloud uplinks to (0 = all).
    #[arg(long, default_value_t = 3)]
    cloud_uplinks: u32,
    /// Use a ring of this many fully-connected fog clusters instead of
    /// the random-geometric mesh.
    #[arg(long)]
    clusters: Option<u32>,
    /// Per-task / per-node probability of one uncertain event.
    #[arg(long, default_value_t = 0.5)]
    event_probability: f64,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file produced by `generate` (or written by hand).
    #[arg(short, long)]
    scenario: PathBuf,
    #[arg(long, default_value = "agent")]
    scheduler: Scheduler,
    /// Node agents contacted per negotiation round.
    #[arg(long, default_value_t = 20)]
    theta: u32,
    /// Pairwise load-variance migration threshold.
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Load-balance period in simulated seconds.
    #[arg(long, default_value_t = 10.0)]
    period: f64,
    /// Enable or disable periodic balancing (agent scheduler only).
    #[arg(long, default_value = "on")]
    balance: OnOff,
    /// Simulated control-message latency in seconds.
    #[arg(long, default_value_t = 0.0)]
    control_latency: f64,
    /// Inject the scenario's uncertain events.
    #[arg(long, default_value = "off")]
    events: OnOff,
    /// Count cancelled tasks in the success-rate denominator.
    #[arg(long)]
    include_cancelled: bool,
    /// Append the CSV row to this file (header written when new).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the event trace (time, agent, kind, detail) to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Regenerate the scenario from its embedded spec with this seed
    /// (falls back to FOGSIM_SEED when the flag is absent).
    #[arg(long)]
    seed: Option<u64>,
    /// Write a machine-readable JSON summary of the run here.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Theta range as start:end:step, inclusive (e.g. 10:50:10).
    #[arg(long, default_value = "10:50:10")]
    theta_range: String,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn is_on(self) -> bool {
        self == OnOff::On
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes, everything else is usage.
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn env_seed() -> Option<u64> {
    std::env::var("FOGSIM_SEED").ok()?.parse().ok()
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let seed = args.seed.or_else(env_seed).unwrap_or(0);
    let mut spec = ScenarioSpec::paper_default().with_seed(seed);
    spec.device_count = args.devices;
    spec.fog_count = args.fogs;
    spec.cloud_count = args.clouds;
    spec.fog_gl = ValueRange::new(0.0, args.grid);
    spec.device_gl = ValueRange::new(0.0, args.grid);
    spec.event_probability = args.event_probability;
    spec.topology_model = match args.clusters {
        Some(clusters) => TopologyModel::RingOfClusters { clusters },
        None => TopologyModel::RandomGeometric {
            radius: args.radius,
            cloud_uplinks: args.cloud_uplinks,
        },
    };
    let scenario = scenario::generate(&spec)
        .map_err(|e| CliError::Usage(anyhow!(e).context("invalid generation parameters")))?;
    scenario::save(&scenario, &args.out)
        .map_err(|e| CliError::Runtime(anyhow!(e).context("writing scenario")))?;
    eprintln!(
        "wrote {} ({} nodes, {} devices, {} tasks, {} events)",
        args.out.display(),
        scenario.nodes.len(),
        scenario.devices.len(),
        scenario.total_tasks(),
        scenario.events.len()
    );
    Ok(())
}

fn load_scenario(args: &RunArgs) -> Result<Scenario, CliError> {
    let mut scenario = scenario::load(&args.scenario)
        .map_err(|e| CliError::Runtime(anyhow!(e).context("loading scenario")))?;
    if let Some(seed) = args.seed.or_else(env_seed) {
        let spec = scenario.meta.clone().with_seed(seed);
        scenario = scenario::generate(&spec)
            .map_err(|e| CliError::Runtime(anyhow!(e).context("regenerating with seed")))?;
    }
    Ok(scenario)
}

fn params_of(args: &RunArgs, theta: u32) -> Result<SimParams, CliError> {
    if theta < 1 {
        return Err(CliError::Usage(anyhow!("theta must be >= 1")));
    }
    if args.period <= 0.0 {
        return Err(CliError::Usage(anyhow!("period must be > 0")));
    }
    if args.delta < 0.0 {
        return Err(CliError::Usage(anyhow!("delta must be >= 0")));
    }
    Ok(SimParams {
        scheduler: args.scheduler,
        theta,
        delta: args.delta,
        balance_period: args.period,
        balancing: args.balance.is_on(),
        control_latency: args.control_latency,
        events_on: args.events.is_on(),
        include_cancelled: args.include_cancelled,
        record_decisions: false,
        node_horizon: None,
    })
}

fn execute(args: &RunArgs, scenario: &Scenario, theta: u32) -> Result<RunReport, CliError> {
    let params = params_of(args, theta)?;
    let trace: Option<Box<dyn Write>> = match &args.trace {
        Some(path) => {
            let file = std::fs::File::create(path)
                .with_context(|| format!("creating trace file {}", path.display()))
                .map_err(CliError::Runtime)?;
            Some(Box::new(std::io::BufWriter::new(file)))
        }
        None => None,
    };
    run_experiment(scenario, &params, trace)
        .map_err(|e| CliError::Runtime(anyhow!(e).context("simulation failed")))
}

fn append_csv(path: &Path, row: &str) -> Result<(), CliError> {
    let need_header = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(CliError::Runtime)?;
    if need_header {
        writeln!(file, "{CSV_HEADER}").map_err(|e| CliError::Runtime(e.into()))?;
    }
    writeln!(file, "{row}").map_err(|e| CliError::Runtime(e.into()))?;
    Ok(())
}

fn emit(
    args: &RunArgs,
    scenario: &Scenario,
    theta: u32,
    report: &RunReport,
    header: bool,
) -> Result<(), CliError> {
    let name = args
        .scenario
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| args.scenario.display().to_string());
    let row = report.metrics.csv_row(
        &name,
        scenario.meta.seed,
        args.scheduler.as_str(),
        theta,
        args.delta,
    );
    if header {
        println!("{CSV_HEADER}");
    }
    println!("{row}");
    if let Some(path) = &args.out {
        append_csv(path, &row)?;
    }
    human_summary(report, theta);
    Ok(())
}

fn human_summary(report: &RunReport, theta: u32) {
    let m = &report.metrics;
    eprintln!(
        "theta={theta}: makespan {:.1} s, fog load variance {:.3e}, network {:.1} GB, \
         success rate {:.4}, mean response {:.3} s ({} dead letters, {} messages)",
        m.makespan,
        m.fog_load_variance,
        m.network_usage_gb,
        m.success_rate,
        m.mean_response_time,
        report.dead_letters,
        report.messages_sent
    );
}

#[derive(serde::Serialize)]
struct RunSummary<'a> {
    scenario: String,
    seed: u64,
    scheduler: &'a str,
    theta: u32,
    delta: f64,
    metrics: &'a RunMetrics,
    failed_devices: usize,
    dead_letters: u64,
    rescheduling_records: usize,
}

fn write_summary(
    args: &RunArgs,
    scenario: &Scenario,
    theta: u32,
    report: &RunReport,
) -> Result<(), CliError> {
    let Some(path) = &args.summary else {
        return Ok(());
    };
    let summary = RunSummary {
        scenario: args.scenario.display().to_string(),
        seed: scenario.meta.seed,
        scheduler: args.scheduler.as_str(),
        theta,
        delta: args.delta,
        metrics: &report.metrics,
        failed_devices: report.world.devices.values().filter(|d| d.failed).count(),
        dead_letters: report.dead_letters,
        rescheduling_records: report.world.records.len(),
    };
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(path, text)
        .with_context(|| format!("writing summary {}", path.display()))
        .map_err(CliError::Runtime)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let scenario = load_scenario(&args)?;
    let report = execute(&args, &scenario, args.theta)?;
    emit(&args, &scenario, args.theta, &report, true)?;
    write_summary(&args, &scenario, args.theta, &report)?;
    Ok(())
}

fn parse_theta_range(text: &str) -> Result<Vec<u32>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let [start, end, step] = parts.as_slice() else {
        return Err(CliError::Usage(anyhow!(
            "theta range must be start:end:step, got '{text}'"
        )));
    };
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| CliError::Usage(anyhow!("bad number '{s}' in theta range")))
    };
    let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
    if step == 0 || start == 0 {
        return Err(CliError::Usage(anyhow!(
            "theta range needs start >= 1 and step >= 1"
        )));
    }
    let thetas: Vec<u32> = (start..=end).step_by(step as usize).collect();
    if thetas.is_empty() {
        return Err(CliError::Usage(anyhow!("theta range '{text}' is empty")));
    }
    Ok(thetas)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let thetas = parse_theta_range(&args.theta_range)?;
    let scenario = load_scenario(&args.run)?;
    println!("{CSV_HEADER}");
    for (i, &theta) in thetas.iter().enumerate() {
        let mut run = args.run.clone();
        if let Some(path) = &run.trace {
            // One trace file per theta, suffixed.
            run.trace = Some(path.with_extension(format!("theta{theta}.log")));
        }
        let report = execute(&run, &scenario, theta)?;
        emit(&run, &scenario, theta, &report, false)?;
        if i == thetas.len() - 1 {
            write_summary(&run, &scenario, theta, &report)?;
        }
    }
    Ok(())
}
