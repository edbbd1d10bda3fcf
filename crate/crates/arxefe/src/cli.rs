//! Command-line front end: resolve configuration (defaults, then config
//! file, then flags), run trials or Monte Carlo comparisons, and emit
//! machine-readable logs.
//!
//! Exit codes: 0 success, 2 usage (unknown flag, bad subcommand), 3 invalid
//! value, 4 missing or malformed file, 5 output i/o failure, 6 runtime
//! failure inside a trial.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    compare, run_monte_carlo, run_trial, AgentSummary, ComparisonReport, ExperimentConfig,
    MonteCarloAggregate, TrialLog,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INVALID_VALUE: u8 = 3;
pub const EXIT_BAD_FILE: u8 = 4;
pub const EXIT_IO: u8 = 5;
pub const EXIT_RUNTIME: u8 = 6;

/// Active-inference control of a double mass-spring-damper.
#[derive(Debug, Parser)]
#[command(name = "arxefe", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a single trial and write per-step logs
    Run(RunArgs),
    /// Run Monte Carlo repetitions over seeds (both coupling modes by
    /// default) and compare them
    Mc(McArgs),
    /// Compare two saved single-mode Monte Carlo aggregates
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Number of Monte Carlo seeds (consecutive, starting at --seed) [default: 20]
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    /// Which coupling modes to run [default: both]
    #[arg(long, value_enum, default_value_t = McMode::Both)]
    pub mode: McMode,
    /// Worker threads for parallel trials (0 = one per core) [default: 0]
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// summary.json produced by `mc --mode coupled`
    #[arg(long)]
    pub coupled: PathBuf,
    /// summary.json produced by `mc --mode uncoupled`
    #[arg(long)]
    pub uncoupled: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum McMode {
    Coupled,
    Uncoupled,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory (flag beats the ARXEFE_OUT environment variable)
    #[arg(long, env = "ARXEFE_OUT", default_value = "results")]
    pub out: PathBuf,
    /// Which files to write [default: both]
    #[arg(long, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
}

/// Overrides for every experiment configuration field. Flags beat config
/// file values, which beat the built-in defaults.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML config file with [plant], [agent], [ensemble], [experiment] sections
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Mass of block 1 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub m1: Option<f64>,
    /// Mass of block 2 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub m2: Option<f64>,
    /// Damping coefficient of block 1 [default: 0.1]
    #[arg(long, allow_negative_numbers = true)]
    pub c1: Option<f64>,
    /// Damping coefficient of block 2 [default: 0.1]
    #[arg(long, allow_negative_numbers = true)]
    pub c2: Option<f64>,
    /// Spring stiffness of block 1 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub k1: Option<f64>,
    /// Spring stiffness of block 2 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub k2: Option<f64>,
    /// Integration substep size [default: 0.01]
    #[arg(long, allow_negative_numbers = true)]
    pub dt: Option<f64>,
    /// Integration substeps per decision step [default: 120]
    #[arg(long)]
    pub n_iter: Option<usize>,
    /// Measurement noise variance [default: 0.00001]
    #[arg(long, allow_negative_numbers = true)]
    pub noise_var: Option<f64>,
    /// Initial displacement of block 1 [default: 0.0]
    #[arg(long, allow_negative_numbers = true)]
    pub init_z1: Option<f64>,
    /// Initial displacement of block 2 [default: 0.0]
    #[arg(long, allow_negative_numbers = true)]
    pub init_z2: Option<f64>,
    /// Initial velocity of block 1 [default: 0.0]
    #[arg(long, allow_negative_numbers = true)]
    pub init_v1: Option<f64>,
    /// Initial velocity of block 2 [default: 0.0]
    #[arg(long, allow_negative_numbers = true)]
    pub init_v2: Option<f64>,

    /// Prior coefficient mean (broadcast) [default: 0.0]
    #[arg(long, allow_negative_numbers = true)]
    pub mu0: Option<f64>,
    /// Prior precision scale (Lambda0 = lambda0 * I) [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub lambda0: Option<f64>,
    /// Prior Gamma shape [default: 2.0]
    #[arg(long, allow_negative_numbers = true)]
    pub alpha0: Option<f64>,
    /// Prior Gamma rate [default: 3.0]
    #[arg(long, allow_negative_numbers = true)]
    pub beta0: Option<f64>,
    /// Control-prior precision [default: 0.001]
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Output-buffer length per agent [default: 2]
    #[arg(long)]
    pub m_y: Option<usize>,
    /// Input-buffer length per agent [default: 2]
    #[arg(long)]
    pub m_u: Option<usize>,
    /// Lower control bound [default: -1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub u_min: Option<f64>,
    /// Upper control bound [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub u_max: Option<f64>,
    /// Number of control grid points [default: 999]
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Goal mean for agent 1 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub goal_mean_1: Option<f64>,
    /// Goal variance for agent 1 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub goal_var_1: Option<f64>,
    /// Goal mean for agent 2 [default: 2.0]
    #[arg(long, allow_negative_numbers = true)]
    pub goal_mean_2: Option<f64>,
    /// Goal variance for agent 2 [default: 1.0]
    #[arg(long, allow_negative_numbers = true)]
    pub goal_var_2: Option<f64>,

    /// Share output buffers between the two agents [default]
    #[arg(long, conflicts_with = "uncoupled")]
    pub coupled: bool,
    /// Keep the two agents' buffers private
    #[arg(long)]
    pub uncoupled: bool,

    /// Number of decision steps [default: 100]
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Base random seed [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A CLI failure carrying its process exit code.
#[derive(Debug)]
pub struct CliFailure {
    pub code: u8,
    pub message: String,
}

impl CliFailure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for CliFailure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidParameter { .. } => EXIT_INVALID_VALUE,
            Error::MalformedFile { .. } => EXIT_BAD_FILE,
            Error::Io { .. } => EXIT_IO,
            _ => EXIT_RUNTIME,
        };
        Self::new(code, e.to_string())
    }
}

impl ConfigArgs {
    /// Resolves defaults, then the config file, then flags, and validates.
    pub fn resolve(&self) -> std::result::Result<ExperimentConfig, CliFailure> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = &self.config {
            config = load_config_file(path, config)?;
        }
        self.apply(&mut config);
        config
            .validate()
            .map_err(|e| CliFailure::new(EXIT_INVALID_VALUE, e.to_string()))?;
        Ok(config)
    }

    fn apply(&self, config: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident => $slot:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $slot = v; })*
            };
        }
        set! {
            m1 => config.plant.m1,
            m2 => config.plant.m2,
            c1 => config.plant.c1,
            c2 => config.plant.c2,
            k1 => config.plant.k1,
            k2 => config.plant.k2,
            dt => config.plant.dt,
            n_iter => config.plant.n_iter,
            noise_var => config.plant.noise_var,
            init_z1 => config.plant.init_z1,
            init_z2 => config.plant.init_z2,
            init_v1 => config.plant.init_v1,
            init_v2 => config.plant.init_v2,
            mu0 => config.agent.mu0,
            lambda0 => config.agent.lambda0,
            alpha0 => config.agent.alpha0,
            beta0 => config.agent.beta0,
            eta => config.agent.eta,
            m_y => config.agent.m_y,
            m_u => config.agent.m_u,
            u_min => config.agent.u_min,
            u_max => config.agent.u_max,
            grid_n => config.agent.grid_n,
            goal_mean_1 => config.agent.goal_mean_1,
            goal_var_1 => config.agent.goal_var_1,
            goal_mean_2 => config.agent.goal_mean_2,
            goal_var_2 => config.agent.goal_var_2,
            horizon => config.experiment.horizon,
            seed => config.experiment.seed,
        }
        if self.coupled {
            config.ensemble.coupled = true;
        }
        if self.uncoupled {
            config.ensemble.coupled = false;
        }
    }
}

/// Reads a TOML config file and overlays it onto `base`. Unknown keys are
/// rejected so typos surface instead of silently using defaults.
pub fn load_config_file(
    path: &Path,
    base: ExperimentConfig,
) -> std::result::Result<ExperimentConfig, CliFailure> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliFailure::new(
            EXIT_BAD_FILE,
            format!("cannot read config file {}: {e}", path.display()),
        )
    })?;
    let overlay: toml::Value = text.parse().map_err(|e| {
        CliFailure::new(
            EXIT_BAD_FILE,
            format!("malformed config file {}: {e}", path.display()),
        )
    })?;
    let mut merged = toml::Value::try_from(base).expect("config serializes to TOML");
    merge_toml(&mut merged, overlay);
    merged.try_into().map_err(|e| {
        CliFailure::new(
            EXIT_BAD_FILE,
            format!("malformed config file {}: {e}", path.display()),
        )
    })
}

fn merge_toml(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(base_table), toml::Value::Table(overlay_table)) => {
            for (key, value) in overlay_table {
                match base_table.get_mut(&key) {
                    Some(slot) => merge_toml(slot, value),
                    None => {
                        base_table.insert(key, value);
                    }
                }
            }
        }
        (slot, value) => *slot = value,
    }
}

/// summary.json payload for a single trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummaryFile {
    pub config: ExperimentConfig,
    pub agents: Vec<AgentSummary>,
}

/// summary.json payload for a two-mode Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummaryFile {
    pub coupled: MonteCarloAggregate,
    pub uncoupled: MonteCarloAggregate,
    pub comparison: ComparisonReport,
}

#[derive(Debug, Serialize, Deserialize)]
struct StepRow {
    step: usize,
    agent: usize,
    control: f64,
    observation: f64,
    pred_mean: f64,
    pred_std: f64,
    surprise: f64,
    goal_alignment: f64,
}

#[derive(Debug, Serialize)]
struct SeedRow<'a> {
    mode: &'a str,
    seed: u64,
    agent: usize,
    cumulative_surprise: f64,
    cumulative_goal_cost: f64,
    final_alpha: f64,
}

fn io_error(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable summary");
    text.push('\n');
    fs::write(path, text).map_err(io_error(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(io_error(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(writer: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    writer
        .into_inner()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e.into_error(),
        })?
        .sync_all()
        .map_err(io_error(path))
}

/// Writes steps.csv (one row per step and agent) and/or summary.json for a
/// trial. Returns the paths written.
pub fn emit_trial(log: &TrialLog, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join("steps.csv");
        let mut writer = csv_writer(&path)?;
        for step in &log.steps {
            for (agent, m) in step.agents.iter().enumerate() {
                writer
                    .serialize(StepRow {
                        step: step.step,
                        agent,
                        control: m.control,
                        observation: m.observation,
                        pred_mean: m.pred_mean,
                        pred_std: m.pred_std,
                        surprise: m.surprise,
                        goal_alignment: m.goal_alignment,
                    })
                    .map_err(|e| Error::MalformedFile {
                        path: path.clone(),
                        reason: e.to_string(),
                    })?;
            }
        }
        finish_csv(writer, &path)?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join("summary.json");
        write_json(
            &TrialSummaryFile {
                config: log.config,
                agents: log.summary.clone(),
            },
            &path,
        )?;
        written.push(path);
    }
    Ok(written)
}

fn write_seed_rows(
    writer: &mut csv::Writer<fs::File>,
    path: &Path,
    mode: &str,
    aggregate: &MonteCarloAggregate,
) -> Result<()> {
    for seed_summary in &aggregate.per_seed {
        for (agent, summary) in seed_summary.agents.iter().enumerate() {
            writer
                .serialize(SeedRow {
                    mode,
                    seed: seed_summary.seed,
                    agent,
                    cumulative_surprise: summary.cumulative_surprise,
                    cumulative_goal_cost: summary.cumulative_goal_cost,
                    final_alpha: summary.final_alpha,
                })
                .map_err(|e| Error::MalformedFile {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })?;
        }
    }
    Ok(())
}

/// Writes seeds.csv and/or summary.json for a single-mode Monte Carlo run.
pub fn emit_monte_carlo(
    aggregate: &MonteCarloAggregate,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join("seeds.csv");
        let mut writer = csv_writer(&path)?;
        let mode = if aggregate.config.ensemble.coupled {
            "coupled"
        } else {
            "uncoupled"
        };
        write_seed_rows(&mut writer, &path, mode, aggregate)?;
        finish_csv(writer, &path)?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join("summary.json");
        write_json(aggregate, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes seeds.csv and/or summary.json for a coupled-versus-uncoupled
/// comparison.
pub fn emit_comparison(
    file: &ComparisonSummaryFile,
    format: OutputFormat,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join("seeds.csv");
        let mut writer = csv_writer(&path)?;
        write_seed_rows(&mut writer, &path, "coupled", &file.coupled)?;
        write_seed_rows(&mut writer, &path, "uncoupled", &file.uncoupled)?;
        finish_csv(writer, &path)?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join("summary.json");
        write_json(file, &path)?;
        written.push(path);
    }
    Ok(written)
}

fn load_aggregate(path: &Path) -> std::result::Result<MonteCarloAggregate, CliFailure> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliFailure::new(
            EXIT_BAD_FILE,
            format!("cannot read aggregate file {}: {e}", path.display()),
        )
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliFailure::new(
            EXIT_BAD_FILE,
            format!(
                "malformed aggregate file {} (expected single-mode mc output): {e}",
                path.display()
            ),
        )
    })
}

fn run_command(args: &RunArgs) -> std::result::Result<(), CliFailure> {
    let config = args.config.resolve()?;
    let log = run_trial(&config)?;
    let written = emit_trial(&log, args.output.format, &args.output.out)?;
    let mode = if config.ensemble.coupled {
        "coupled"
    } else {
        "uncoupled"
    };
    println!(
        "trial complete: mode={mode} horizon={} seed={}",
        config.experiment.horizon, config.experiment.seed
    );
    for (i, agent) in log.summary.iter().enumerate() {
        println!(
            "  agent {i}: cumulative surprise {:.4}, cumulative goal cost {:.4}",
            agent.cumulative_surprise, agent.cumulative_goal_cost
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn mc_command(args: &McArgs) -> std::result::Result<(), CliFailure> {
    if args.seeds == 0 {
        return Err(CliFailure::new(
            EXIT_INVALID_VALUE,
            "invalid value for --seeds: must be at least 1",
        ));
    }
    let config = args.config.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliFailure::new(EXIT_RUNTIME, format!("cannot build thread pool: {e}")))?;

    let written = match args.mode {
        McMode::Coupled | McMode::Uncoupled => {
            let single = config.with_coupling(args.mode == McMode::Coupled);
            let aggregate = pool.install(|| run_monte_carlo(&single, args.seeds))?;
            report_aggregate(&aggregate);
            emit_monte_carlo(&aggregate, args.output.format, &args.output.out)?
        }
        McMode::Both => {
            let coupled =
                pool.install(|| run_monte_carlo(&config.with_coupling(true), args.seeds))?;
            let uncoupled =
                pool.install(|| run_monte_carlo(&config.with_coupling(false), args.seeds))?;
            let comparison = compare(&coupled, &uncoupled)?;
            report_aggregate(&coupled);
            report_aggregate(&uncoupled);
            report_comparison(&comparison);
            let file = ComparisonSummaryFile {
                coupled,
                uncoupled,
                comparison,
            };
            emit_comparison(&file, args.output.format, &args.output.out)?
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn compare_command(args: &CompareArgs) -> std::result::Result<(), CliFailure> {
    let coupled = load_aggregate(&args.coupled)?;
    let uncoupled = load_aggregate(&args.uncoupled)?;
    if !coupled.config.ensemble.coupled || uncoupled.config.ensemble.coupled {
        return Err(CliFailure::new(
            EXIT_INVALID_VALUE,
            "--coupled must point at a coupled aggregate and --uncoupled at an uncoupled one",
        ));
    }
    let comparison = compare(&coupled, &uncoupled)?;
    report_comparison(&comparison);
    let file = ComparisonSummaryFile {
        coupled,
        uncoupled,
        comparison,
    };
    let written = emit_comparison(&file, args.output.format, &args.output.out)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn report_aggregate(aggregate: &MonteCarloAggregate) {
    let mode = if aggregate.config.ensemble.coupled {
        "coupled"
    } else {
        "uncoupled"
    };
    println!(
        "{mode}: {} seeds ({} failed)",
        aggregate.n_seeds,
        aggregate.failures.len()
    );
    for (i, agent) in aggregate.agents.iter().enumerate() {
        println!(
            "  agent {i}: median surprise {:.4} (iqr {:.4}), median goal cost {:.4} (iqr {:.4})",
            agent.median_surprise, agent.iqr_surprise, agent.median_goal_cost, agent.iqr_goal_cost
        );
    }
}

fn report_comparison(report: &ComparisonReport) {
    for (i, agent) in report.agents.iter().enumerate() {
        println!(
            "  agent {i}: delta median surprise {:.4}, delta median goal cost {:.4}, wins {}/{} (surprise) {}/{} (goal)",
            agent.delta_median_surprise,
            agent.delta_median_goal_cost,
            agent.surprise_wins,
            agent.seeds_compared,
            agent.goal_wins,
            agent.seeds_compared
        );
    }
    println!(
        "coupled dominates: {}",
        if report.coupled_dominates {
            "yes"
        } else {
            "no"
        }
    );
}

/// Parses argv and runs the selected subcommand, returning the process exit
/// code.
pub fn main_entry() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let code = match e.kind() {
                DisplayHelp | DisplayVersion => {
                    let _ = e.print();
                    return EXIT_OK;
                }
                InvalidValue | ValueValidation | InvalidUtf8 | TooFewValues | TooManyValues
                | WrongNumberOfValues => EXIT_INVALID_VALUE,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run_command(args),
        Command::Mc(args) => mc_command(args),
        Command::Compare(args) => compare_command(args),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}
