//! Plain CSV series for external plotting, one file per figure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use lazyfolio::backtest::{Attribution, BacktestReport, Comparison};
use lazyfolio::optimizer::FrontierCloud;

use crate::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

/// Cumulative return contributed by each asset, relative to initial wealth.
pub fn cumulative_returns(
    dir: &Path,
    attribution: &Attribution,
    initial_wealth: f64,
) -> Result<(), CliError> {
    let mut w = create(dir, "cumulative_returns.csv")?;
    writeln!(w, "date,cash,gold,bitcoin").map_err(io)?;
    for i in 0..attribution.dates.len() {
        writeln!(
            w,
            "{},{},{},{}",
            attribution.dates[i],
            attribution.cash[i] / initial_wealth,
            attribution.gold[i] / initial_wealth,
            attribution.btc[i] / initial_wealth
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Cumulative dollar gains per asset.
pub fn attribution(dir: &Path, attribution: &Attribution) -> Result<(), CliError> {
    let mut w = create(dir, "attribution.csv")?;
    writeln!(w, "date,cash_pnl,gold_pnl,bitcoin_pnl").map_err(io)?;
    for i in 0..attribution.dates.len() {
        writeln!(
            w,
            "{},{},{},{}",
            attribution.dates[i], attribution.cash[i], attribution.gold[i], attribution.btc[i]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn wealth(dir: &Path, report: &BacktestReport) -> Result<(), CliError> {
    let mut w = create(dir, "wealth.csv")?;
    writeln!(w, "date,total_wealth,cost_paid").map_err(io)?;
    for r in &report.ledger {
        writeln!(w, "{},{},{}", r.date, r.total_wealth, r.cost_paid).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn comparison(
    dir: &Path,
    lazy: &BacktestReport,
    control: &BacktestReport,
    cmp: &Comparison,
) -> Result<(), CliError> {
    let mut w = create(dir, "comparison.csv")?;
    writeln!(w, "date,lazy_wealth,control_wealth,ratio").map_err(io)?;
    for (i, date) in cmp.dates.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            date, lazy.ledger[i].total_wealth, control.ledger[i].total_wealth, cmp.wealth_ratio[i]
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn delta_sweep(dir: &Path, sweep: &[(f64, f64)]) -> Result<(), CliError> {
    let mut w = create(dir, "delta_sweep.csv")?;
    writeln!(w, "delta1,final_wealth").map_err(io)?;
    for (d, wealth) in sweep {
        writeln!(w, "{d},{wealth}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn frontier(path: &Path, cloud: &FrontierCloud) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))?;
    cloud.write_csv(BufWriter::new(file)).map_err(io)
}
