//! `gape`: validation, one-shot valuation metrics, backtests, and synthetic
//! data generation.
//!
//! Exit codes: 0 success, 1 validation diagnostics, 2 hard error, 3 bad
//! usage.

mod commands;
mod config;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use commands::{CmdError, MetricRequest, EXIT_HARD, EXIT_USAGE};
use config::{HoldingArg, PartialConfig, ReturnsMode, YearRange};

#[derive(Parser)]
#[command(
    name = "gape",
    version,
    about = "Growth-adjusted price-earnings valuation and sorted-portfolio backtesting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the CSV datasets in a data directory.
    Validate {
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Evaluate the payback measures for a single security.
    Metric(MetricArgs),
    /// Run the formation-and-tracking backtest and write report artifacts.
    Backtest(BacktestArgs),
    /// Generate seeded synthetic datasets from a spec file.
    Synth {
        /// JSON generator spec.
        #[arg(long)]
        spec_file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output_dir: PathBuf,
    },
}

#[derive(Args)]
struct MetricArgs {
    /// Share price at the valuation date.
    #[arg(long)]
    price: f64,
    /// Trailing annual earnings per share (with --growth).
    #[arg(long)]
    eps: Option<f64>,
    /// Annual earnings growth rate, fractional (with --eps).
    #[arg(long, allow_hyphen_values = true)]
    growth: Option<f64>,
    /// Annual EPS history, oldest first, as an alternative to
    /// --eps/--growth; the growth rate is estimated over --window years.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eps_history: Option<Vec<f64>>,
    /// Growth-estimation window in years when --eps-history is given.
    #[arg(long, default_value_t = 1)]
    window: u32,
}

#[derive(Args)]
struct BacktestArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Inclusive formation-year range, e.g. 1990..2014.
    #[arg(long)]
    formation_years: Option<YearRange>,
    /// Growth windows in years, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    windows: Option<Vec<u32>>,
    #[arg(long)]
    quantiles: Option<usize>,
    #[arg(long)]
    formation_month: Option<u32>,
    #[arg(long, value_enum)]
    returns_mode: Option<ReturnsMode>,
    #[arg(long, value_enum)]
    holding: Option<HoldingArg>,
    /// Market-cap percentiles for the sweep artifact, e.g. 100,50,25.
    #[arg(long, value_delimiter = ',')]
    cap_sweep: Option<Vec<f64>>,
}

impl BacktestArgs {
    fn resolve(self) -> Result<config::RunConfig, CmdError> {
        let mut base = PartialConfig::default();
        if let Some(path) = &self.config {
            let contents = std::fs::read_to_string(path)
                .map_err(|e| CmdError::Hard(format!("cannot read {}: {e}", path.display())))?;
            base = PartialConfig::from_file_contents(&contents, &path.display().to_string())
                .map_err(CmdError::Usage)?;
        }
        let flags = PartialConfig {
            data_dir: self.data_dir,
            output_dir: self.output_dir,
            formation_years: self.formation_years,
            windows: self.windows,
            quantiles: self.quantiles,
            formation_month: self.formation_month,
            returns_mode: self.returns_mode,
            holding: self.holding,
            cap_sweep: self.cap_sweep,
            seed: None,
        };
        base.overridden_by(flags)
            .finalize()
            .map_err(CmdError::Usage)
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Validate { data_dir } => commands::cmd_validate(&data_dir),
        Command::Metric(args) => commands::cmd_metric(&MetricRequest {
            price: args.price,
            eps: args.eps,
            growth: args.growth,
            eps_history: args.eps_history,
            window: args.window,
        }),
        Command::Backtest(args) => match args.resolve() {
            Ok(config) => commands::cmd_backtest(&config),
            Err(err) => Err(err),
        },
        Command::Synth {
            spec_file,
            seed,
            output_dir,
        } => commands::cmd_synth(&spec_file, seed, &output_dir),
    };
    match outcome {
        Ok(code) => code,
        Err(CmdError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            EXIT_USAGE
        }
        Err(CmdError::Hard(msg)) => {
            eprintln!("error: {msg}");
            EXIT_HARD
        }
    }
}
