use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use lazyfolio::arima::{diagnose, forecast_one_step};
use lazyfolio::backtest::{
    compare as compare_reports, default_delta_grid, delta_sweep, first_trading_day, fit_window,
    forecast_next, BacktestConfig, BacktestReport, Backtester, DeltaMode, ForecastSettings,
    ForecastTable, Strategy,
};
use lazyfolio::market_data::{align, load_csv, AlignedMarket, Asset, CsvSchema, PriceSeries};
use lazyfolio::optimizer::{
    day_seed, estimate_covariance, estimate_returns, optimize_day, DayInputs, Holdings,
    PriceForecasts, WealthState,
};
use lazyfolio::synthetic::{generate, SyntheticSpec};
use lazyfolio::trend::{
    detect_crossovers, detect_inflections, exponential_ma, moving_average, write_signals_csv,
    write_trend_csv, TrendLine, DEFAULT_INFLECTION_THRESHOLD,
};
use serde_json::json;

use crate::config::{self, RunConfig};
use crate::manifest::RunManifest;
use crate::{
    plots, BacktestArgs, CliError, CompareArgs, ForecastArgs, FrontierArgs, MarketArgs,
    StrategyArg, SynthArgs, TrendArgs, TrendKindArg,
};

fn other(e: impl std::fmt::Display) -> CliError {
    CliError::Other(e.to_string())
}

fn resolve(market: &MarketArgs) -> Result<RunConfig, CliError> {
    let loaded = config::load(market.config.as_deref())?;
    let seed = config::resolve_seed(market.seed, &loaded)?;
    let mut cfg = loaded.config;
    cfg.backtest.seed = seed;
    if let Some(p) = &market.gold {
        cfg.data.gold = p.clone();
    }
    if let Some(p) = &market.btc {
        cfg.data.btc = p.clone();
    }
    if let Some(n) = market.monte_carlo_n {
        cfg.backtest.monte_carlo_n = n;
    }
    if let Some(a) = market.alpha_gold {
        cfg.backtest.costs.gold = a;
    }
    if let Some(a) = market.alpha_btc {
        cfg.backtest.costs.btc = a;
    }
    Ok(cfg)
}

fn validate(cfg: &BacktestConfig) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))
}

fn load_market(cfg: &RunConfig) -> Result<AlignedMarket, CliError> {
    let load = |path: &Path, asset, schema: CsvSchema| {
        load_csv(path, asset, &schema)
            .map(|l| l.series)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    };
    let gold = load(&cfg.data.gold, Asset::Gold, cfg.data.gold_schema())?;
    let btc = load(&cfg.data.btc, Asset::Bitcoin, cfg.data.btc_schema())?;
    align(&gold, &btc).map_err(|e| CliError::Data(e.to_string()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Other(format!("cannot create {}: {e}", dir.display())))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(other)?;
    writeln!(w).map_err(other)?;
    w.flush().map_err(other)
}

fn run_with(
    cfg: &BacktestConfig,
    market: &AlignedMarket,
    table: &ForecastTable,
) -> Result<BacktestReport, CliError> {
    Ok(Backtester::new(cfg, market, table)?.run()?)
}

pub fn backtest(args: BacktestArgs) -> Result<(), CliError> {
    let cfg = match &args.manifest {
        Some(path) => {
            let manifest = RunManifest::load(path)?;
            manifest.verify_inputs()?;
            manifest.config
        }
        None => {
            let mut cfg = resolve(&args.market)?;
            if let Some(raw) = &args.delta {
                cfg.backtest.delta = if raw == "daily" {
                    DeltaMode::Daily
                } else {
                    let delta1 = raw.parse().map_err(|_| {
                        CliError::Config(format!(
                            "--delta {raw:?} is neither a number nor \"daily\""
                        ))
                    })?;
                    DeltaMode::Fixed { delta1 }
                };
            }
            if let Some(s) = args.strategy {
                cfg.backtest.strategy = match s {
                    StrategyArg::Lazy => Strategy::Lazy,
                    StrategyArg::Control => Strategy::ControlIdealOnly,
                    StrategyArg::Equal => Strategy::EqualOnly,
                };
            }
            cfg
        }
    };
    validate(&cfg.backtest)?;
    let manifest = RunManifest::new(&cfg)?;
    let market = load_market(&cfg)?;
    let bt = &cfg.backtest;
    let start = first_trading_day(bt, &market)?;
    let table = ForecastTable::build(&market, bt.forecast, start);
    let report = run_with(bt, &market, &table)?;

    let out = &args.out;
    let plot_dir = out.join("plots");
    create_dir(&plot_dir)?;
    report.write_ledger_csv(create_file(&out.join("ledger.csv"))?)?;
    table.write_log(create_file(&out.join("forecasts.csv"))?, &market)?;

    let attribution = report.attribution(&market)?;
    plots::cumulative_returns(&plot_dir, &attribution, bt.initial_wealth)?;
    plots::attribution(&plot_dir, &attribution)?;
    plots::wealth(&plot_dir, &report)?;
    let last = report.ledger.len() - 1;
    if last >= start && bt.strategy != Strategy::EqualOnly {
        let cloud = Backtester::new(bt, &market, &table)?.cloud(&report.ledger[last - 1], last)?;
        plots::frontier(&plot_dir.join("frontier.csv"), &cloud)?;
    }

    let mut summary = json!({
        "config": cfg,
        "start_date": report.ledger[0].date,
        "first_trading_date": report.ledger[start].date,
        "end_date": report.ledger[last].date,
        "metrics": report.metrics,
        "attribution": {
            "cash": attribution.cash[last],
            "gold": attribution.gold[last],
            "bitcoin": attribution.btc[last],
        },
        "forecast_fallbacks": table.gold.iter().chain(&table.btc).flatten().filter(|f| f.order.is_none()).count(),
    });
    if !args.no_extras {
        let control_cfg = BacktestConfig {
            strategy: Strategy::ControlIdealOnly,
            ..bt.clone()
        };
        let control = run_with(&control_cfg, &market, &table)?;
        let cmp = compare_reports(&report, &control)?;
        plots::comparison(&plot_dir, &report, &control, &cmp)?;
        let sweep = delta_sweep(bt, &market, &table, &default_delta_grid())?;
        plots::delta_sweep(&plot_dir, &sweep)?;
        let best = sweep
            .iter()
            .copied()
            .fold(
                (f64::NAN, f64::NEG_INFINITY),
                |b, s| if s.1 > b.1 { s } else { b },
            );
        summary["comparison"] = json!({
            "control_metrics": control.metrics,
            "uplift": cmp.uplift,
        });
        summary["delta_sweep"] = json!({
            "points": sweep,
            "best_delta1": best.0,
            "best_final_wealth": best.1,
        });
    }
    write_json(&out.join("report.json"), &summary)?;
    write_json(&out.join("manifest.json"), &manifest)?;

    let m = &report.metrics;
    println!("final wealth      {:.2}", m.final_wealth);
    println!("profitability     {:.4}%", 100.0 * m.profitability_rate);
    println!("annualized return {:.4}%", 100.0 * m.annualized_return);
    println!("max drawdown      {:.4}%", 100.0 * m.max_drawdown);
    if let Some(u) = summary.get("comparison").and_then(|c| c["uplift"].as_f64()) {
        println!("uplift vs control {:.2}%", 100.0 * u);
    }
    println!("outputs written to {}", out.display());
    Ok(())
}

/// Uses `column` when given, otherwise the gold layout's price header if the
/// file has it, otherwise "Value".
fn schema_for(path: &Path, date_column: &str, column: Option<&str>) -> Result<CsvSchema, CliError> {
    if let Some(c) = column {
        return Ok(CsvSchema::new(date_column, c));
    }
    let file = File::open(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut header = String::new();
    BufReader::new(file)
        .read_line(&mut header)
        .map_err(|e| CliError::Data(e.to_string()))?;
    let price = if header.contains("USD (PM)") {
        "USD (PM)"
    } else {
        "Value"
    };
    Ok(CsvSchema::new(date_column, price))
}

fn load_series(
    path: &Path,
    date_column: &str,
    column: Option<&str>,
) -> Result<PriceSeries, CliError> {
    let schema = schema_for(path, date_column, column)?;
    load_csv(path, Asset::Gold, &schema)
        .map(|l| l.series)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn forecast(args: ForecastArgs) -> Result<(), CliError> {
    let series = load_series(&args.series, &args.date_column, args.column.as_deref())?;
    let points = match args.before {
        Some(day) => &series.points()[..series.points().partition_point(|p| p.date < day)],
        None => series.points(),
    };
    if points.len() < args.window {
        return Err(CliError::Data(format!(
            "need {} observations before the cut-off, found {}",
            args.window,
            points.len()
        )));
    }
    let window: Vec<f64> = points[points.len() - args.window..]
        .iter()
        .map(|p| p.price)
        .collect();
    let settings = ForecastSettings {
        window: args.window,
        max_p: args.max_p,
        max_q: args.max_q,
        ..ForecastSettings::default()
    };
    let model = fit_window(&window, &settings).map_err(|e| match e {
        lazyfolio::Error::Contract(m) => CliError::Config(m),
        other => other.into(),
    })?;
    let f = forecast_one_step(&model, &window)?;
    let actual = args
        .before
        .and_then(|d| series.points().iter().find(|p| p.date == d))
        .map(|p| p.price);

    if args.json {
        let diagnostics = diagnose(&model, &window)?;
        let model_json: serde_json::Value =
            serde_json::from_str(&model.to_json(Some(&diagnostics))?).map_err(other)?;
        let body = json!({
            "forecast": f.level,
            "std_dev": f.std_dev,
            "band": [f.level - f.std_dev, f.level + f.std_dev],
            "actual": actual,
            "relative_error": actual.map(|a| (f.level - a).abs() / a),
            "model": model_json,
        });
        println!("{}", serde_json::to_string_pretty(&body).map_err(other)?);
    } else {
        println!("order    {}", f.order);
        println!("forecast {:.4}", f.level);
        println!(
            "band     {:.4} .. {:.4} (one residual sd)",
            f.level - f.std_dev,
            f.level + f.std_dev
        );
        if let Some(a) = actual {
            println!("actual   {a:.4}");
            println!("error    {:.4}%", 100.0 * (f.level - a).abs() / a);
        }
    }
    Ok(())
}

pub fn frontier(args: FrontierArgs) -> Result<(), CliError> {
    let cfg = resolve(&args.market)?;
    validate(&cfg.backtest)?;
    let bt = &cfg.backtest;
    let market = load_market(&cfg)?;
    let day = market.index_of(args.date).ok_or_else(|| {
        CliError::Data(format!("{} is not a date in the aligned market", args.date))
    })?;
    let forecasts = PriceForecasts {
        gold: market.gold_tradable[day]
            .then(|| forecast_next(&market.gold_history(day), &bt.forecast).level),
        btc: Some(forecast_next(market.btc_history(day), &bt.forecast).level),
    };
    let window = bt.covariance_window.min(day);
    if window < bt.min_covariance_history {
        return Err(CliError::Data(format!(
            "{} has {day} days of history; the covariance needs {}",
            args.date, bt.min_covariance_history
        )));
    }
    let inputs = DayInputs {
        returns: estimate_returns(&market, &forecasts, day, bt.risk_free)?,
        covariance: estimate_covariance(&market, day, window, bt.cash_sigma)?,
        prev: WealthState {
            wealth: bt.initial_wealth,
            holdings: Holdings::all_cash(bt.initial_wealth),
        },
        prices: (market.gold_price[day], market.btc_price[day]),
        costs: bt.costs,
        risk_free: bt.risk_free,
    };
    let cloud = optimize_day(
        &inputs,
        market.gold_tradable[day],
        bt.monte_carlo_n,
        day_seed(bt.seed, day),
    )?;
    plots::frontier(&args.out, &cloud)?;
    let t = cloud.tangency().expect("tangency is set");
    println!("samples   {}", cloud.n());
    println!("frontier  {}", cloud.frontier_indices.len());
    println!(
        "tangency  cash {:.4} gold {:.4} bitcoin {:.4} (risk {:.6}, return {:.6})",
        t.weights.cash, t.weights.gold, t.weights.btc, t.risk, t.net_return
    );
    Ok(())
}

pub fn trend(args: TrendArgs) -> Result<(), CliError> {
    let series = load_series(&args.series, &args.date_column, args.column.as_deref())?;
    let prices = series.prices();
    let dates = series.dates();
    let mut windows = args.windows.clone();
    windows.sort_unstable();
    windows.dedup();
    if windows.is_empty() {
        return Err(CliError::Config("no trend windows given".into()));
    }
    create_dir(&args.out)?;
    let (tag, build): (&str, fn(&[f64], usize) -> lazyfolio::Result<TrendLine>) = match args.kind {
        TrendKindArg::Ema => ("ema", exponential_ma),
        TrendKindArg::Ma => ("ma", moving_average),
    };
    let mut lines = Vec::new();
    for &n in &windows {
        let line = build(&prices, n).map_err(|e| CliError::Config(e.to_string()))?;
        write_trend_csv(
            create_file(&args.out.join(format!("{tag}_{n}.csv")))?,
            &dates,
            &line,
        )?;
        lines.push(line);
    }
    let short = &lines[0];
    let long = lines.last().unwrap();
    let inflections = detect_inflections(short, DEFAULT_INFLECTION_THRESHOLD);
    let crossovers = if lines.len() > 1 {
        detect_crossovers(short, long)?
    } else {
        Vec::new()
    };
    write_signals_csv(
        create_file(&args.out.join("signals.csv"))?,
        &dates,
        short,
        &inflections,
        &crossovers,
    )?;
    println!(
        "trend lines  {}",
        windows
            .iter()
            .map(|n| format!("{tag}_{n}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("inflections  {}", inflections.len());
    println!("crossovers   {}", crossovers.len());
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<(), CliError> {
    let cfg = resolve(&args.market)?;
    validate(&cfg.backtest)?;
    let market = load_market(&cfg)?;
    let lazy_cfg = BacktestConfig {
        strategy: Strategy::Lazy,
        ..cfg.backtest.clone()
    };
    let control_cfg = BacktestConfig {
        strategy: Strategy::ControlIdealOnly,
        ..cfg.backtest.clone()
    };
    let start = first_trading_day(&lazy_cfg, &market)?;
    let table = ForecastTable::build(&market, lazy_cfg.forecast, start);
    let lazy = run_with(&lazy_cfg, &market, &table)?;
    let control = run_with(&control_cfg, &market, &table)?;
    let cmp = compare_reports(&lazy, &control)?;
    create_dir(&args.out)?;
    plots::comparison(&args.out, &lazy, &control, &cmp)?;
    println!("lazy final     {:.2}", lazy.metrics.final_wealth);
    println!("control final  {:.2}", control.metrics.final_wealth);
    println!("uplift         {:.2}%", 100.0 * cmp.uplift);
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let defaults = SyntheticSpec::default();
    let spec = SyntheticSpec {
        seed: args.seed.unwrap_or(defaults.seed),
        days: args.days.unwrap_or(defaults.days),
        ..defaults
    };
    let data = generate(&spec)?;
    create_dir(&args.out)?;
    data.write_gold_csv(create_file(&args.out.join("gold.csv"))?)?;
    data.write_btc_csv(create_file(&args.out.join("btc.csv"))?)?;
    println!(
        "wrote {} gold rows and {} bitcoin rows to {}",
        data.gold.len(),
        data.btc.len(),
        args.out.display()
    );
    Ok(())
}
