mod common;

use common::{day, market, random_market};
use lazyfolio::backtest::{
    compare, default_delta_grid, delta_sweep, first_trading_day, max_drawdown, metrics_from_wealth,
    run, BacktestConfig, BacktestReport, Backtester, DailyRecord, DeltaMode, ForecastEntry,
    ForecastSettings, ForecastTable, Strategy,
};
use lazyfolio::error::Error;
use lazyfolio::market_data::align;
use lazyfolio::market_data::AlignedMarket;
use lazyfolio::optimizer::{CostRates, Holdings, PriceForecasts, WeightVector};
use lazyfolio::synthetic::{generate, SyntheticSpec};

/// Forecasts equal to the day's close.
fn naive_table(m: &AlignedMarket, start: usize) -> ForecastTable {
    let entry = |level: f64| ForecastEntry {
        level,
        std_dev: 0.0,
        order: None,
    };
    ForecastTable {
        settings: ForecastSettings::default(),
        start,
        gold: (0..m.len())
            .map(|t| (t >= start && m.gold_tradable[t]).then(|| entry(m.gold_price[t])))
            .collect(),
        btc: (0..m.len())
            .map(|t| (t >= start).then(|| entry(m.btc_price[t])))
            .collect(),
    }
}

/// Forecasts equal to the next day's close.
fn foresight_table(m: &AlignedMarket, start: usize) -> ForecastTable {
    let mut table = naive_table(m, start);
    for t in start..m.len() - 1 {
        if let Some(g) = table.gold[t].as_mut() {
            g.level = m.gold_price[t + 1];
        }
        table.btc[t].as_mut().unwrap().level = m.btc_price[t + 1];
    }
    table
}

fn quick_config() -> BacktestConfig {
    BacktestConfig {
        monte_carlo_n: 400,
        ..BacktestConfig::default()
    }
}

fn run_with(config: &BacktestConfig, m: &AlignedMarket, table: &ForecastTable) -> BacktestReport {
    Backtester::new(config, m, table).unwrap().run().unwrap()
}

/// Self-financing: yesterday's holdings at today's closes, less today's
/// cost, equal today's wealth; today's holdings are worth today's wealth.
fn check_accounting(report: &BacktestReport, m: &AlignedMarket) {
    let ledger = &report.ledger;
    assert_eq!(ledger.len(), m.len());
    for t in 1..ledger.len() {
        let (gp, bp) = (m.gold_price[t], m.btc_price[t]);
        let r = &ledger[t];
        let value = r.holdings.value(gp, bp);
        assert!(
            (value - r.total_wealth).abs() <= 1e-6 * r.total_wealth,
            "day {t}"
        );
        let carried = ledger[t - 1].holdings.value(gp, bp);
        assert!(
            (carried - r.cost_paid - r.total_wealth).abs() <= 1e-6 * r.total_wealth,
            "day {t}: {carried} - {} != {}",
            r.cost_paid,
            r.total_wealth
        );
        assert!(r.cost_paid >= 0.0);
        assert!(
            r.holdings.cash >= -1e-9 * r.total_wealth
                && r.holdings.gold >= 0.0
                && r.holdings.btc >= 0.0
        );
        let prev = &ledger[t - 1].holdings;
        if r.holdings.gold == prev.gold && r.holdings.btc == prev.btc {
            assert_eq!(r.cost_paid, 0.0, "day {t} traded nothing but paid");
        }
        if !m.gold_tradable[t] {
            assert_eq!(
                r.holdings.gold.to_bits(),
                prev.gold.to_bits(),
                "gold moved on closed day {t}"
            );
        }
    }
}

#[test]
fn constant_prices_without_costs_hold_wealth() {
    let m = market(day(2016, 9, 11), vec![1300.0; 1031], vec![600.0; 1031]);
    let config = BacktestConfig {
        costs: CostRates::ZERO,
        ..quick_config()
    };
    let start = first_trading_day(&config, &m).unwrap();
    assert!(m.len() - start >= 1000);
    let report = run_with(&config, &m, &naive_table(&m, start));
    for r in &report.ledger {
        assert!(
            (r.total_wealth - 1000.0).abs() <= 1e-9,
            "{}: {}",
            r.date,
            r.total_wealth
        );
    }
    check_accounting(&report, &m);
}

#[test]
fn equal_weights_on_flat_prices_pay_once() {
    let m = market(day(2016, 9, 11), vec![1300.0; 120], vec![600.0; 120]);
    let config = BacktestConfig {
        strategy: Strategy::EqualOnly,
        ..quick_config()
    };
    let start = first_trading_day(&config, &m).unwrap();
    let report = run_with(&config, &m, &naive_table(&m, start));
    // first trading day that can buy gold
    let first_buy = (start..m.len()).find(|&t| m.gold_tradable[t]).unwrap();
    for (t, r) in report.ledger.iter().enumerate() {
        let paid = r.cost_paid > 0.0;
        if t < start {
            assert!(!paid);
        } else if t == start || t == first_buy {
            assert!(paid, "day {t} should trade");
        } else {
            assert!(!paid, "day {t} paid {}", r.cost_paid);
        }
    }
    let w = report.ledger.last().unwrap().total_wealth;
    assert!(w < 1000.0 && w > 980.0);
    check_accounting(&report, &m);
}

#[test]
fn accounting_closes_on_random_markets() {
    for seed in 0..3 {
        let m = random_market(seed, 400, 0.01, 0.05);
        let start = first_trading_day(&quick_config(), &m).unwrap();
        for strategy in [
            Strategy::Lazy,
            Strategy::ControlIdealOnly,
            Strategy::EqualOnly,
        ] {
            for delta in [DeltaMode::Fixed { delta1: 0.7 }, DeltaMode::Daily] {
                let config = BacktestConfig {
                    strategy,
                    delta,
                    ..quick_config()
                };
                let report = run_with(&config, &m, &foresight_table(&m, start));
                check_accounting(&report, &m);
            }
        }
    }
}

#[test]
fn costs_are_the_only_leak() {
    let m = random_market(7, 500, 0.01, 0.05);
    let config = BacktestConfig {
        costs: CostRates::ZERO,
        ..quick_config()
    };
    let start = first_trading_day(&config, &m).unwrap();
    let report = run_with(&config, &m, &naive_table(&m, start));
    let ledger = &report.ledger;
    let mut wealth_sum = 0.0;
    let mut realized_sum = 0.0;
    for t in 1..ledger.len() {
        wealth_sum += (ledger[t].total_wealth / ledger[t - 1].total_wealth).ln();
        let carried = ledger[t - 1]
            .holdings
            .value(m.gold_price[t], m.btc_price[t]);
        realized_sum += (carried / ledger[t - 1].total_wealth).ln();
        assert_eq!(ledger[t].cost_paid, 0.0);
    }
    assert!(
        (wealth_sum - realized_sum).abs() <= 1e-9,
        "{wealth_sum} vs {realized_sum}"
    );
}

#[test]
fn gold_is_frozen_on_weekends() {
    let data = generate(&SyntheticSpec {
        days: 730,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let m = align(&data.gold_series().unwrap(), &data.btc_series().unwrap()).unwrap();
    let start = first_trading_day(&quick_config(), &m).unwrap();
    let report = run_with(&quick_config(), &m, &foresight_table(&m, start));
    let mut closed = 0;
    for t in 1..m.len() {
        if !m.gold_tradable[t] {
            closed += 1;
            let (a, b) = (
                report.ledger[t - 1].holdings.gold,
                report.ledger[t].holdings.gold,
            );
            assert_eq!(a.to_bits(), b.to_bits(), "{}", m.dates[t]);
        }
    }
    assert!(closed > 200);
}

#[test]
fn runs_are_bit_identical() {
    let m = random_market(3, 300, 0.01, 0.05);
    let config = BacktestConfig {
        delta: DeltaMode::Daily,
        ..quick_config()
    };
    let start = first_trading_day(&config, &m).unwrap();
    let table = foresight_table(&m, start);
    let a = run_with(&config, &m, &table);
    let b = run_with(&config, &m, &table);
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_ledger_csv(&mut ca).unwrap();
    b.write_ledger_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn full_pipeline_completes_for_every_strategy() {
    let m = random_market(11, 150, 0.01, 0.04);
    let mut finals = Vec::new();
    for strategy in [
        Strategy::Lazy,
        Strategy::ControlIdealOnly,
        Strategy::EqualOnly,
    ] {
        let config = BacktestConfig {
            strategy,
            monte_carlo_n: 300,
            forecast: ForecastSettings {
                window: 60,
                max_p: 2,
                max_q: 2,
                max_d: 2,
            },
            ..BacktestConfig::default()
        };
        let report = run(&config, &m).unwrap();
        check_accounting(&report, &m);
        assert!(report.metrics.max_drawdown >= 0.0 && report.metrics.max_drawdown <= 1.0);
        finals.push(report.metrics.final_wealth);
    }
    assert!(finals.iter().all(|w| w.is_finite() && *w > 0.0));
}

#[test]
fn full_delta_means_equal_weights() {
    let m = random_market(5, 120, 0.01, 0.04);
    let config = BacktestConfig {
        delta: DeltaMode::Fixed { delta1: 1.0 },
        ..quick_config()
    };
    let start = first_trading_day(&config, &m).unwrap();
    let report = run_with(&config, &m, &naive_table(&m, start));
    for (t, r) in report.ledger.iter().enumerate().skip(start) {
        if m.gold_tradable[t] {
            assert!(
                r.weights.max_abs_diff(&WeightVector::EQUAL) < 1e-15,
                "{}",
                r.date
            );
        }
    }
}

#[test]
fn bitcoin_forecast_tilts_toward_bitcoin() {
    let m = market(day(2021, 3, 1), vec![1300.0; 60], vec![600.0; 60]);
    let config = BacktestConfig {
        costs: CostRates::ZERO,
        strategy: Strategy::ControlIdealOnly,
        monte_carlo_n: 10_000,
        ..BacktestConfig::default()
    };
    let start = first_trading_day(&config, &m).unwrap();
    let mut table = naive_table(&m, start);
    let t = start + 5;
    table.btc[t].as_mut().unwrap().level = 660.0;
    let bt = Backtester::new(&config, &m, &table).unwrap();
    let prev = DailyRecord {
        date: m.dates[t - 1],
        weights: WeightVector::ALL_CASH,
        ideal: None,
        holdings: Holdings::all_cash(1000.0),
        total_wealth: 1000.0,
        cost_paid: 0.0,
        forecasts: PriceForecasts::default(),
        delta: None,
        gold_tradable: true,
    };
    let rec = bt.step(&prev, t).unwrap();
    assert!(rec.weights.btc > 0.9, "{:?}", rec.weights);
    assert_eq!(rec.forecasts.btc, Some(660.0));
}

#[test]
fn failing_day_returns_partial_ledger() {
    let m = random_market(2, 90, 0.01, 0.04);
    let config = quick_config();
    let start = first_trading_day(&config, &m).unwrap();
    let mut table = naive_table(&m, start);
    let bad = start + 10;
    table.btc[bad] = None;
    match Backtester::new(&config, &m, &table).unwrap().run() {
        Err(Error::Aborted { partial, source }) => {
            assert_eq!(partial.len(), bad);
            assert!(matches!(*source, Error::Dated { date, .. } if date == m.dates[bad]));
        }
        other => panic!("expected an aborted run, got {other:?}"),
    }
}

#[test]
fn zero_delta_sweep_point_matches_control() {
    let m = random_market(9, 200, 0.01, 0.05);
    let config = quick_config();
    let start = first_trading_day(&config, &m).unwrap();
    let table = foresight_table(&m, start);
    let grid = default_delta_grid();
    assert_eq!(grid.len(), 11);
    let sweep = delta_sweep(&config, &m, &table, &grid).unwrap();
    assert_eq!(sweep.len(), 11);
    let control = run_with(
        &BacktestConfig {
            strategy: Strategy::ControlIdealOnly,
            ..config.clone()
        },
        &m,
        &table,
    );
    assert_eq!(sweep[0].1, control.metrics.final_wealth);
    let lazy = run_with(&config, &m, &table);
    assert_eq!(sweep[7].1, lazy.metrics.final_wealth);
    let cmp = compare(&lazy, &control).unwrap();
    assert!(
        (cmp.uplift - (lazy.metrics.final_wealth / control.metrics.final_wealth - 1.0)).abs()
            < 1e-15
    );
    assert_eq!(cmp.dates.len(), m.len());
}

#[test]
fn metric_examples() {
    let m = metrics_from_wealth(&[1000.0, 2000.0], 365.25).unwrap();
    assert!((m.annualized_return - 1.0).abs() < 1e-12);
    assert!((m.profitability_rate - 1.0).abs() < 1e-12);
    assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]), 0.0);
    assert!((max_drawdown(&[1000.0, 1100.0, 990.0, 1200.0]) - 0.1).abs() < 1e-12);
}

#[test]
fn ledger_csv_has_constant_width() {
    let m = random_market(4, 80, 0.01, 0.04);
    let config = quick_config();
    let start = first_trading_day(&config, &m).unwrap();
    let report = run_with(&config, &m, &naive_table(&m, start));
    let mut buf = Vec::new();
    report.write_ledger_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let width = lines.next().unwrap().split(',').count();
    assert!(width >= 10);
    let mut rows = 0;
    for line in lines {
        assert_eq!(line.split(',').count(), width);
        rows += 1;
    }
    assert_eq!(rows, m.len());
}
