//! `forge`: generate datasets, serve episodes, evaluate agents, replay
//! trajectories and build results tables.
//!
//! Exit codes: 0 ok, 1 I/O or runtime failure, 2 target shortfall or
//! nothing to report, 3 replay mismatch, 64 bad usage or config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "forge",
    version,
    about = "Polycube stacking puzzles: generate, serve, evaluate, replay, report"
)]
pub struct Cli {
    /// TOML config file with optional [gen], [serve], [eval], [replay] and
    /// [report] tables; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate verified puzzles into a dataset directory.
    Gen(GenArgs),
    /// Serve a dataset over HTTP.
    Serve(ServeArgs),
    /// Run an agent over a suite and store trajectories.
    Eval(EvalArgs),
    /// Re-execute stored trajectories and compare final states.
    Replay(ReplayArgs),
    /// Build the results table from stored runs.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenArgs {
    /// Box size AxBxC; repeat or comma-separate for several.
    #[arg(long = "box", value_name = "AxBxC", value_delimiter = ',')]
    pub boxes: Vec<String>,
    /// easy, mid or hard; repeat or comma-separate for several.
    #[arg(long = "mode", value_delimiter = ',')]
    pub modes: Vec<String>,
    /// Target puzzles per (box, mode).
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Only accept puzzles with a linear assembly order.
    #[arg(long)]
    pub require_assembly: bool,
    /// full-slide or one-step.
    #[arg(long)]
    pub removability: Option<String>,
    /// Parallel generation calls.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Descending minimum piece sizes tried in turn, e.g. 4,3.
    #[arg(long, value_delimiter = ',')]
    pub min_piece: Vec<usize>,
    /// Largest piece (default 8 for easy, 6 otherwise).
    #[arg(long)]
    pub max_piece: Option<usize>,
    #[arg(long)]
    pub max_pieces: Option<usize>,
    /// Sampling attempts per min-piece stage.
    #[arg(long)]
    pub attempts: Option<usize>,
    /// Minimum solver visited nodes for hard puzzles.
    #[arg(long)]
    pub hard_threshold: Option<u64>,
    /// Solver node budget per candidate.
    #[arg(long)]
    pub node_budget: Option<u64>,
    /// Give up on a (box, mode) after count * this many calls.
    #[arg(long)]
    pub max_calls_factor: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct ServeArgs {
    /// Dataset directory (else FORGE_DATA_DIR, else ./data).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Episode logs and calibration records (default <data>/.service).
    #[arg(long, value_name = "DIR")]
    pub state_dir: Option<PathBuf>,
    #[arg(long)]
    pub host: Option<String>,
    /// Port (else FORGE_PORT, else 8080).
    #[arg(long)]
    pub port: Option<u16>,
    /// Shared token (else FORGE_TOKEN); unset means no auth.
    #[arg(long)]
    pub token: Option<String>,
    /// Seed for default episode budgets.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    /// Dataset directory to evaluate on.
    #[arg(long, value_name = "DIR")]
    pub suite: Option<PathBuf>,
    /// `oracle`, `random`, or a TOML agent config file.
    #[arg(long, value_name = "CFG")]
    pub agent: Option<String>,
    /// interactive or oneshot.
    #[arg(long)]
    pub mode: Option<String>,
    /// Samples per task.
    #[arg(long)]
    pub k: Option<u32>,
    /// Fixed step budget; default draws one per episode from 30..=60.
    #[arg(long)]
    pub budget: Option<u32>,
    /// History turns shown to the agent (default from the agent config).
    #[arg(long)]
    pub history_window: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory (default runs/<agent>-<mode>-s<seed>).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Episodes in flight.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Drive episodes through a running service at this URL.
    #[arg(long, value_name = "URL")]
    pub service: Option<String>,
    /// Token for --service.
    #[arg(long)]
    pub token: Option<String>,
    /// Start an in-process service over the suite and drive episodes
    /// through it over HTTP.
    #[arg(long)]
    pub via_service: bool,
}

#[derive(Args, Debug, Default)]
pub struct ReplayArgs {
    /// trajectories.jsonl, or a run directory holding one.
    #[arg(long, value_name = "FILE")]
    pub trajectory: Option<PathBuf>,
    /// Dataset the trajectories were recorded on.
    #[arg(long, value_name = "DIR")]
    pub suite: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ReportArgs {
    /// A run directory or a directory of run directories.
    #[arg(long, value_name = "DIR")]
    pub runs: Option<PathBuf>,
    /// CSV output path (default <runs>/report.csv).
    #[arg(long, value_name = "FILE")]
    pub csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Usage errors get their own code; clap's default of 2 would collide
    // with the shortfall code.
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                commands::EXIT_USAGE.into()
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let file = match config::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return commands::EXIT_USAGE.into();
        }
    };
    let code = match cli.command {
        Command::Gen(a) => commands::gen(a, file.gen),
        Command::Serve(a) => commands::serve(a, file.serve),
        Command::Eval(a) => commands::eval(a, file.eval),
        Command::Replay(a) => commands::replay(a, file.replay),
        Command::Report(a) => commands::report(a, file.report),
    };
    ExitCode::from(code)
}
