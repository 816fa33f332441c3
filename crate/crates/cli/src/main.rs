//! `ratemig` — rating-migration matrices and method-consistency
//! diagnostics from rating event files.

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{Days, NaiveDate};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ratemig_core::ingest::{GradeScale, ReratingPolicy};
use ratemig_core::simulate::{InitialStates, SimMode, SimulationConfig};
use ratemig_core::statespace::MergeLeftover;

mod commands;
mod error;
mod manifest;
mod output;

use error::CliError;
use manifest::{
    CommandParams, CompareParams, DataParams, EstimateParams, Manifest, MethodKind, SimulateParams,
};

#[derive(Parser)]
#[command(name = "ratemig", version)]
#[command(about = "Rating transition matrices: cohort, generator and Chapman-Kolmogorov \
estimation with likelihood-loss diagnostics across state counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate transition matrices over one window and write them as
    /// JSON and CSV.
    Estimate(EstimateArgs),
    /// Rolling method-comparison series (distances, deltas, increment
    /// moments) over a date grid.
    Compare(CompareArgs),
    /// Delta series of the likelihood distances across state counts,
    /// relative to the baseline scale.
    SweepStates(CompareArgs),
    /// Generate a synthetic rating sample with known ground truth.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    All,
    Cohort,
    Generator,
    ChapmanKolmogorov,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LeftoverArg {
    /// Highest-rated state stays unmerged on odd splits.
    Top,
    /// Lowest-rated state stays unmerged.
    Bottom,
}

impl From<LeftoverArg> for MergeLeftover {
    fn from(arg: LeftoverArg) -> Self {
        match arg {
            LeftoverArg::Top => MergeLeftover::Top,
            LeftoverArg::Bottom => MergeLeftover::Bottom,
        }
    }
}

/// Flags shared by every command that reads an event file.
#[derive(Args)]
struct DataArgs {
    /// Rating-event CSV (`entity_id,date,grade`); `.gz` accepted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// First day of the study interval.
    #[arg(long, default_value = "2007-01-01")]
    study_start: NaiveDate,
    /// Last day of the study interval.
    #[arg(long, default_value = "2013-01-01")]
    study_end: NaiveDate,
    /// Grade alphabet: `15symbols` or `numeric:N`.
    #[arg(long, default_value = "15symbols")]
    scale: GradeScale,
    /// Start a fresh entity spell when a withdrawn entity is re-rated
    /// instead of rejecting the file.
    #[arg(long)]
    split_spells: bool,
    /// Grade token marking a withdrawal.
    #[arg(long, default_value = "WR")]
    withdrawal_marker: String,
}

impl DataArgs {
    fn resolve(&self) -> Result<DataParams, CliError> {
        let input = self
            .input
            .clone()
            .ok_or_else(|| CliError::Input("--input is required (or use --config)".into()))?;
        Ok(DataParams {
            input,
            study_start: self.study_start,
            study_end: self.study_end,
            scale: self.scale,
            rerating: if self.split_spells {
                ReratingPolicy::SplitSpells
            } else {
                ReratingPolicy::Reject
            },
            withdrawal_marker: self.withdrawal_marker.clone(),
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Window end date t; the window is [t - tau, t].
    #[arg(long)]
    at: Option<NaiveDate>,
    /// Window length: days (`365d`) or years (`1y`).
    #[arg(long, default_value = "1y")]
    tau: String,
    /// Sub-window count for the Chapman-Kolmogorov product; must
    /// divide the window length in days (365 splits by 5 or 73).
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// State count to estimate on, reached by pairwise merging from
    /// the scale (15 allows 15, 8, 4, 2). Defaults to the full scale.
    #[arg(long)]
    states: Option<usize>,
    #[arg(long, value_enum, default_value_t = MethodArg::All)]
    method: MethodArg,
    /// Days per year (occupancy units and duration suffixes).
    #[arg(long, default_value_t = 365.0)]
    year_days: f64,
    #[arg(long, value_enum, default_value_t = LeftoverArg::Top)]
    merge_leftover: LeftoverArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Manifest/config file; its values replace all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "1y")]
    tau: String,
    /// Sub-window count for the Chapman-Kolmogorov product; must
    /// divide the window length in days.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// State counts to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,15")]
    states: Vec<usize>,
    /// State count the delta series are measured against.
    #[arg(long, default_value_t = 15)]
    baseline: usize,
    /// Grid step: `weekly`, `daily` or `Nd`.
    #[arg(long, default_value = "weekly")]
    grid: String,
    /// First grid date (default: study start + tau).
    #[arg(long)]
    from: Option<NaiveDate>,
    /// Last grid date (default: study end).
    #[arg(long)]
    to: Option<NaiveDate>,
    #[arg(long, default_value_t = 365.0)]
    year_days: f64,
    #[arg(long, value_enum, default_value_t = LeftoverArg::Top)]
    merge_leftover: LeftoverArg,
    /// Evaluate the grid sequentially instead of on the thread pool;
    /// the outputs are identical either way.
    #[arg(long)]
    serial: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Manifest/config file; its values replace all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Homogeneous,
    RegimeSwitching,
    SecondOrder,
    DiscreteExact,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Homogeneous)]
    mode: ModeArg,
    /// Number of rating states.
    #[arg(long, default_value_t = 15)]
    states: usize,
    #[arg(long, default_value_t = 100)]
    entities: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "2007-01-01")]
    start: NaiveDate,
    /// Simulated span: days (`2190d`) or years (`6y`).
    #[arg(long, default_value = "6y")]
    horizon: String,
    /// Total exit rate per year of the built-in generator.
    #[arg(long, default_value_t = 0.5)]
    rate: f64,
    /// Regime switch date; repeat to alternate calm/stressed regimes.
    #[arg(long)]
    switch_date: Vec<NaiveDate>,
    /// Stress multiplier for the regime-switching mode.
    #[arg(long, default_value_t = 4.0)]
    stress: f64,
    /// Momentum probability for the second-order mode.
    #[arg(long, default_value_t = 0.5)]
    p_mem: f64,
    /// Step length for the discrete-exact mode.
    #[arg(long, default_value = "30d")]
    step: String,
    #[arg(long, default_value_t = 365.0)]
    year_days: f64,
    /// Full simulation config (JSON or TOML), replacing the mode flags.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Output CSV path; a manifest lands next to it.
    #[arg(long)]
    out: PathBuf,
    /// Manifest/config file; its values replace all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// `365d`, `6y` or plain days. Years scale by the configured year
/// length and round to whole days.
fn parse_duration(text: &str, year_days: f64) -> Result<u32, CliError> {
    let text = text.trim();
    let parse_number = |digits: &str| -> Result<f64, CliError> {
        digits
            .parse::<f64>()
            .map_err(|_| CliError::Input(format!("bad duration `{text}`")))
    };
    let days = if let Some(days) = text.strip_suffix('d') {
        parse_number(days)?
    } else if let Some(years) = text.strip_suffix('y') {
        (parse_number(years)? * year_days).round()
    } else {
        parse_number(text)?
    };
    if !(days >= 1.0 && days <= u32::MAX as f64) {
        return Err(CliError::Input(format!(
            "duration `{text}` must cover at least one day"
        )));
    }
    Ok(days as u32)
}

fn parse_grid_step(text: &str) -> Result<u32, CliError> {
    match text.trim() {
        "weekly" => Ok(7),
        "daily" => Ok(1),
        other => parse_duration(other, 365.0),
    }
}

fn load_config(path: &PathBuf, expected: &str) -> Result<CommandParams, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))?;
    if manifest.params.name() != expected {
        return Err(CliError::Input(format!(
            "config {} belongs to the `{}` command, not `{expected}`",
            path.display(),
            manifest.params.name()
        )));
    }
    Ok(manifest.params)
}

fn resolve_estimate(args: &EstimateArgs) -> Result<EstimateParams, CliError> {
    if let Some(path) = &args.config {
        match load_config(path, "estimate")? {
            CommandParams::Estimate(params) => return Ok(params),
            _ => unreachable!("load_config checks the command"),
        }
    }
    let data = args.data.resolve()?;
    let at = args
        .at
        .ok_or_else(|| CliError::Input("--at is required (or use --config)".into()))?;
    let methods = match args.method {
        MethodArg::All => vec![
            MethodKind::Cohort,
            MethodKind::Generator,
            MethodKind::ChapmanKolmogorov,
        ],
        MethodArg::Cohort => vec![MethodKind::Cohort],
        MethodArg::Generator => vec![MethodKind::Generator],
        MethodArg::ChapmanKolmogorov => vec![MethodKind::ChapmanKolmogorov],
    };
    let states = args.states.unwrap_or_else(|| data.scale.n());
    Ok(EstimateParams {
        at,
        tau_days: parse_duration(&args.tau, args.year_days)?,
        k: args.k,
        states,
        year_days: args.year_days,
        merge_leftover: args.merge_leftover.into(),
        methods,
        data,
    })
}

fn resolve_compare(args: &CompareArgs, command: &str) -> Result<CompareParams, CliError> {
    if let Some(path) = &args.config {
        match load_config(path, command)? {
            CommandParams::Compare(params) | CommandParams::SweepStates(params) => {
                return Ok(params)
            }
            _ => unreachable!("load_config checks the command"),
        }
    }
    let data = args.data.resolve()?;
    let tau_days = parse_duration(&args.tau, args.year_days)?;
    let grid_start = args
        .from
        .unwrap_or_else(|| data.study_start + Days::new(u64::from(tau_days)));
    let grid_end = args.to.unwrap_or(data.study_end);
    Ok(CompareParams {
        tau_days,
        k: args.k,
        state_counts: args.states.clone(),
        baseline_n: args.baseline,
        grid_start,
        grid_end,
        grid_step_days: parse_grid_step(&args.grid)?,
        year_days: args.year_days,
        merge_leftover: args.merge_leftover.into(),
        serial: args.serial,
        data,
    })
}

fn resolve_simulate(args: &SimulateArgs) -> Result<SimulateParams, CliError> {
    if let Some(path) = &args.config {
        match load_config(path, "simulate")? {
            CommandParams::Simulate(params) => return Ok(params),
            _ => unreachable!("load_config checks the command"),
        }
    }
    if let Some(path) = &args.params {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read params {}: {e}", path.display())))?;
        let config: SimulationConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text)
                .map_err(|e| CliError::Input(format!("bad params {}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("bad params {}: {e}", path.display())))?
        };
        let scale = scale_for(config.n);
        return Ok(SimulateParams { scale, config });
    }

    let n = args.states;
    let horizon_days = parse_duration(&args.horizon, args.year_days)?;
    let mode = match args.mode {
        ModeArg::Homogeneous => SimMode::Homogeneous {
            generator: commands::default_generator(n, args.rate)?,
        },
        ModeArg::RegimeSwitching => {
            if args.switch_date.is_empty() {
                return Err(CliError::Input(
                    "--switch-date is required for the regime-switching mode".into(),
                ));
            }
            let calm = commands::default_generator(n, args.rate)?;
            let stressed = commands::stressed_generator(n, args.rate, args.stress)?;
            let generators = (0..=args.switch_date.len())
                .map(|i| if i % 2 == 0 { calm.clone() } else { stressed.clone() })
                .collect();
            SimMode::RegimeSwitching {
                generators,
                switch_dates: args.switch_date.clone(),
            }
        }
        ModeArg::SecondOrder => SimMode::SecondOrder {
            generator: commands::default_generator(n, args.rate)?,
            p_mem: args.p_mem,
        },
        ModeArg::DiscreteExact => {
            let step_days = parse_duration(&args.step, args.year_days)?;
            SimMode::DiscreteExact {
                matrix: commands::default_step_matrix(n, args.rate, step_days, args.year_days)?,
                step_days,
            }
        }
    };
    Ok(SimulateParams {
        scale: scale_for(n),
        config: SimulationConfig {
            n,
            entities: args.entities,
            start: args.start,
            horizon_days,
            seed: args.seed,
            year_days: args.year_days,
            initial: InitialStates::Uniform,
            mode,
        },
    })
}

fn scale_for(n: usize) -> GradeScale {
    if n == 15 {
        GradeScale::Standard15
    } else {
        GradeScale::Numeric { n }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Estimate(args) => commands::run_estimate(resolve_estimate(args)?, &args.out),
        Command::Compare(args) => {
            commands::run_compare(resolve_compare(args, "compare")?, &args.out)
        }
        Command::SweepStates(args) => {
            commands::run_sweep_states(resolve_compare(args, "sweep-states")?, &args.out)
        }
        Command::Simulate(args) => commands::run_simulate(resolve_simulate(args)?, &args.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({ "kind": err.kind(), "error": err.message() })
            );
            ExitCode::from(err.exit_code())
        }
    }
}
