mod commands;
mod config;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Daily gold/bitcoin portfolio backtester with ARIMA forecasts, a Monte
/// Carlo mean-variance optimizer and laziness blending.
#[derive(Debug, Parser)]
#[command(name = "lazyfolio", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the full pipeline and write ledger, report, manifest and plot data.
    Backtest(BacktestArgs),
    /// Fit an ARIMA model to a price series and forecast the next value.
    Forecast(ForecastArgs),
    /// Evaluate one day's Monte Carlo cloud and efficient frontier.
    Frontier(FrontierArgs),
    /// Compute moving-average trend lines and their signals.
    Trend(TrendArgs),
    /// Run the lazy strategy and the ideal-only control on the same data.
    Compare(CompareArgs),
    /// Write a seeded synthetic gold/bitcoin dataset.
    Synth(SynthArgs),
}

/// Options shared by commands that load the two price files.
#[derive(Debug, Args)]
struct MarketArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Gold price CSV (overrides the config).
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Bitcoin price CSV (overrides the config).
    #[arg(long)]
    btc: Option<PathBuf>,
    /// Random seed. Falls back to the config, then LAZYFOLIO_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo samples per day.
    #[arg(long = "n")]
    monte_carlo_n: Option<usize>,
    /// Cost rate on traded gold notional.
    #[arg(long)]
    alpha_gold: Option<f64>,
    /// Cost rate on traded bitcoin notional.
    #[arg(long)]
    alpha_btc: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Lazy,
    Control,
    Equal,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Re-run a previous run from its manifest.json.
    #[arg(long, conflicts_with_all = ["config", "gold", "btc", "seed", "monte_carlo_n", "alpha_gold", "alpha_btc", "delta", "strategy"])]
    manifest: Option<PathBuf>,
    /// Fixed delta1 in [0, 1], or "daily" to derive it from indicators.
    #[arg(long)]
    delta: Option<String>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Skip the control run and the delta sweep.
    #[arg(long)]
    no_extras: bool,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    /// Price CSV.
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "Date")]
    date_column: String,
    /// Price column; defaults to "Value", or "USD (PM)" when that is the header.
    #[arg(long)]
    column: Option<String>,
    /// Training observations.
    #[arg(long, default_value_t = 90)]
    window: usize,
    /// Use only observations dated before this day and report the error
    /// against its price when present.
    #[arg(long)]
    before: Option<chrono::NaiveDate>,
    #[arg(long, default_value_t = 4)]
    max_p: usize,
    #[arg(long, default_value_t = 4)]
    max_q: usize,
    /// Print the model and diagnostics as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FrontierArgs {
    #[command(flatten)]
    market: MarketArgs,
    /// Decision day.
    #[arg(long)]
    date: chrono::NaiveDate,
    /// Output CSV, one row per sample.
    #[arg(long, default_value = "frontier.csv")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrendKindArg {
    Ema,
    Ma,
}

#[derive(Debug, Args)]
struct TrendArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long, default_value = "Date")]
    date_column: String,
    #[arg(long)]
    column: Option<String>,
    /// Comma-separated windows; crossovers use the shortest and longest.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 20, 60])]
    windows: Vec<usize>,
    #[arg(long, value_enum, default_value = "ema")]
    kind: TrendKindArg,
    #[arg(long, default_value = "trend")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    market: MarketArgs,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value = "data")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Data(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Other(_) => "runtime",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Other(m) => m,
        }
    }
}

impl From<lazyfolio::Error> for CliError {
    fn from(e: lazyfolio::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e.to_string())
        } else {
            CliError::Other(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Backtest(a) => commands::backtest(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Frontier(a) => commands::frontier(a),
        Command::Trend(a) => commands::trend(a),
        Command::Compare(a) => commands::compare(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({ "error": e.kind(), "message": e.message() });
            eprintln!("{body}");
            ExitCode::from(e.exit_code())
        }
    }
}
