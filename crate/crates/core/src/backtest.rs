//! Daily backtest loop and evaluation metrics.
//!
//! Holdings are kept in native units (dollars, ounces, coins). Each day the
//! portfolio is first marked to that day's closes, then a target allocation
//! is chosen from the forecasts and traded into. Trades are self-financing:
//! the post-trade wealth `W` solves `W = V - cost(W)`, where `V` is the
//! marked value and the cost is charged on the traded notional.

use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arima::{
    adf_test, forecast_one_step, recommended_difference, select_order_warm, ArimaModel, ArimaOrder,
    FitOptions, OrderSelection,
};
use crate::blend::{
    blend_weights, combine_delta, compute_beta, compute_gamma, compute_rsi, Indicators,
    LazinessCoefficients, DEFAULT_DELTA1, DEFAULT_GAMMA_SCALE, DEFAULT_INDICATOR_WINDOW,
};
use crate::error::{Error, Result};
use crate::market_data::AlignedMarket;
use crate::optimizer::{
    day_seed, estimate_covariance, estimate_returns, optimize_day, CostRates, CovarianceMatrix,
    DayInputs, FrontierCloud, Holdings, PriceForecasts, WealthState, WeightVector,
};
use crate::trend::exponential_ma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DeltaMode {
    Fixed { delta1: f64 },
    Daily,
}

impl Default for DeltaMode {
    fn default() -> Self {
        DeltaMode::Fixed {
            delta1: DEFAULT_DELTA1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Lazy,
    ControlIdealOnly,
    EqualOnly,
}

/// How next-day prices are forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSettings {
    /// Trailing observations per fit.
    pub window: usize,
    pub max_p: usize,
    pub max_q: usize,
    /// Highest difference order tried by the unit-root test.
    pub max_d: usize,
}

impl Default for ForecastSettings {
    fn default() -> Self {
        Self {
            window: 90,
            max_p: 4,
            max_q: 4,
            max_d: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub initial_wealth: f64,
    /// Calendar days without trading at the start.
    pub warmup_days: i64,
    pub costs: CostRates,
    pub monte_carlo_n: usize,
    pub seed: u64,
    pub delta: DeltaMode,
    pub strategy: Strategy,
    pub forecast: ForecastSettings,
    pub covariance_window: usize,
    /// Fewest daily returns accepted for the covariance estimate.
    pub min_covariance_history: usize,
    pub risk_free: f64,
    pub cash_sigma: f64,
    pub indicator_window: usize,
    pub gamma_window: usize,
    pub gamma_scale: f64,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            initial_wealth: 1000.0,
            warmup_days: 30,
            costs: CostRates::default(),
            monte_carlo_n: 10_000,
            seed: 42,
            delta: DeltaMode::default(),
            strategy: Strategy::Lazy,
            forecast: ForecastSettings::default(),
            covariance_window: 60,
            min_covariance_history: 20,
            risk_free: 0.0,
            cash_sigma: 0.0,
            indicator_window: DEFAULT_INDICATOR_WINDOW,
            gamma_window: 20,
            gamma_scale: DEFAULT_GAMMA_SCALE,
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if !(self.initial_wealth > 0.0) || !self.initial_wealth.is_finite() {
            return bad(format!(
                "initial wealth {} must be positive",
                self.initial_wealth
            ));
        }
        if self.warmup_days < 0 {
            return bad("warmup must be non-negative".into());
        }
        self.costs.validate()?;
        if self.monte_carlo_n == 0 {
            return bad("Monte Carlo size must be at least 1".into());
        }
        if let DeltaMode::Fixed { delta1 } = self.delta {
            LazinessCoefficients::new(delta1)?;
        }
        if self.forecast.window < 3 {
            return bad("forecast window must be at least 3".into());
        }
        if self.forecast.window > crate::arima::MAX_TRAINING_WINDOW {
            return bad(format!(
                "forecast window {} exceeds the {}-observation cap",
                self.forecast.window,
                crate::arima::MAX_TRAINING_WINDOW
            ));
        }
        if self.min_covariance_history < 2 || self.covariance_window < self.min_covariance_history {
            return bad(
                "covariance window must be at least the minimum history, which must be at least 2"
                    .into(),
            );
        }
        if self.indicator_window < 2 || self.gamma_window < 1 || !(self.gamma_scale > 0.0) {
            return bad("indicator settings out of range".into());
        }
        if self.cash_sigma < 0.0 {
            return bad("cash volatility must be non-negative".into());
        }
        Ok(())
    }
}

/// One next-day forecast.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastEntry {
    pub level: f64,
    pub std_dev: f64,
    /// `None` when no model could be fitted and the last price was used.
    pub order: Option<ArimaOrder>,
}

/// Next-day forecasts for every trading day, computed once per market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTable {
    pub settings: ForecastSettings,
    pub start: usize,
    pub gold: Vec<Option<ForecastEntry>>,
    pub btc: Vec<Option<ForecastEntry>>,
}

/// Shrinks the ARMA grid until every cell keeps at least four observations
/// per parameter.
fn grid_bounds(n_obs: usize, d: usize, mut max_p: usize, mut max_q: usize) -> (usize, usize) {
    loop {
        let n_eff = n_obs.saturating_sub(d + max_p);
        if n_eff >= 4 * (max_p + max_q + 2) || (max_p == 0 && max_q == 0) {
            return (max_p, max_q);
        }
        if max_p >= max_q && max_p > 0 {
            max_p -= 1;
        } else {
            max_q -= 1;
        }
    }
}

/// Difference order from the unit-root test (1 when the window is too short
/// to test) and the minimum-AIC model on that order.
pub fn fit_window(window: &[f64], settings: &ForecastSettings) -> Result<ArimaModel> {
    Ok(select_window(window, settings, None)?.best)
}

/// The full order selection behind [`fit_window`], optionally warm-started
/// from the selection on the previous window.
pub fn select_window(
    window: &[f64],
    settings: &ForecastSettings,
    previous: Option<&OrderSelection>,
) -> Result<OrderSelection> {
    let d = adf_test(window, settings.max_d)
        .ok()
        .map(|r| recommended_difference(&r).unwrap_or(settings.max_d))
        .unwrap_or(1);
    let (max_p, max_q) = grid_bounds(window.len(), d, settings.max_p, settings.max_q);
    select_order_warm(window, d, max_p, max_q, &FitOptions::default(), previous)
}

/// Fits the trailing window of `history` and forecasts the next value. Falls
/// back to the last observation when nothing can be fitted or the forecast
/// is unusable.
pub fn forecast_next(history: &[f64], settings: &ForecastSettings) -> ForecastEntry {
    forecast_warm(history, settings, &mut None)
}

/// [`forecast_next`] that warm-starts from, and then replaces, the selection
/// kept in `memory`.
fn forecast_warm(
    history: &[f64],
    settings: &ForecastSettings,
    memory: &mut Option<OrderSelection>,
) -> ForecastEntry {
    let last = *history.last().expect("forecast history is never empty");
    let naive = ForecastEntry {
        level: last,
        std_dev: 0.0,
        order: None,
    };
    let window = &history[history.len().saturating_sub(settings.window)..];
    if window.len() < 3 {
        return naive;
    }
    let Ok(selection) = select_window(window, settings, memory.as_ref()) else {
        *memory = None;
        return naive;
    };
    let forecast = forecast_one_step(&selection.best, window);
    *memory = Some(selection);
    match forecast {
        Ok(f) if f.level.is_finite() && f.level > 0.0 => ForecastEntry {
            level: f.level,
            std_dev: f.std_dev,
            order: Some(f.order),
        },
        _ => naive,
    }
}

impl ForecastTable {
    /// Forecasts for each day from `start` on. Gold is forecast only on days
    /// its market trades, from tradable-day observations. Each asset's days
    /// are processed in order so that every fit can start from the previous
    /// day's estimates.
    pub fn build(market: &AlignedMarket, settings: ForecastSettings, start: usize) -> Self {
        let n = market.len();
        let (gold, btc) = rayon::join(
            || {
                let mut memory = None;
                (0..n)
                    .map(|t| {
                        (t >= start && market.gold_tradable[t])
                            .then(|| forecast_warm(&market.gold_history(t), &settings, &mut memory))
                    })
                    .collect()
            },
            || {
                let mut memory = None;
                (0..n)
                    .map(|t| {
                        (t >= start)
                            .then(|| forecast_warm(market.btc_history(t), &settings, &mut memory))
                    })
                    .collect()
            },
        );
        Self {
            settings,
            start,
            gold,
            btc,
        }
    }

    pub fn forecasts(&self, day: usize) -> PriceForecasts {
        PriceForecasts {
            gold: self.gold[day].map(|f| f.level),
            btc: self.btc[day].map(|f| f.level),
        }
    }

    /// Writes `date,asset,forecast,actual,error`; `actual` is the next
    /// day's close, blank on the last day.
    pub fn write_log<W: Write>(&self, writer: W, market: &AlignedMarket) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "asset", "forecast", "actual", "error"])?;
        for t in self.start..market.len() {
            for (name, entry, prices) in [
                ("gold", self.gold[t], &market.gold_price),
                ("bitcoin", self.btc[t], &market.btc_price),
            ] {
                let Some(f) = entry else { continue };
                let (actual, error) = match prices.get(t + 1) {
                    Some(a) => (a.to_string(), (f.level - a).to_string()),
                    None => (String::new(), String::new()),
                };
                w.write_record([
                    market.dates[t].to_string(),
                    name.to_string(),
                    f.level.to_string(),
                    actual,
                    error,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// Target allocation traded into.
    pub weights: WeightVector,
    /// Optimizer's ideal allocation before blending.
    pub ideal: Option<WeightVector>,
    pub holdings: Holdings,
    /// Holdings value at the day's closes after trading.
    pub total_wealth: f64,
    pub cost_paid: f64,
    pub forecasts: PriceForecasts,
    pub delta: Option<LazinessCoefficients>,
    pub gold_tradable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub final_wealth: f64,
    pub annualized_return: f64,
    pub profitability_rate: f64,
    pub max_drawdown: f64,
}

/// Largest peak-to-trough decline relative to the peak.
pub fn max_drawdown(wealth: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst: f64 = 0.0;
    for &w in wealth {
        peak = peak.max(w);
        if peak > 0.0 {
            worst = worst.max((peak - w) / peak);
        }
    }
    worst
}

/// Metrics of a wealth path spanning `days` calendar days.
pub fn metrics_from_wealth(wealth: &[f64], days: f64) -> Result<Metrics> {
    if wealth.len() < 2 {
        return Err(Error::insufficient(2, wealth.len(), "metrics"));
    }
    let (w0, wf) = (wealth[0], *wealth.last().unwrap());
    let growth = wf / w0;
    Ok(Metrics {
        final_wealth: wf,
        annualized_return: if days > 0.0 {
            growth.powf(365.25 / days) - 1.0
        } else {
            0.0
        },
        profitability_rate: growth - 1.0,
        max_drawdown: max_drawdown(wealth),
    })
}

pub fn metrics(ledger: &[DailyRecord]) -> Result<Metrics> {
    if ledger.len() < 2 {
        return Err(Error::insufficient(2, ledger.len(), "metrics"));
    }
    let wealth: Vec<f64> = ledger.iter().map(|r| r.total_wealth).collect();
    let days = (ledger.last().unwrap().date - ledger[0].date).num_days() as f64;
    metrics_from_wealth(&wealth, days)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub dates: Vec<NaiveDate>,
    /// Lazy wealth over control wealth, per day.
    pub wealth_ratio: Vec<f64>,
    /// `lazy_final / control_final - 1`.
    pub uplift: f64,
}

pub fn compare(lazy: &BacktestReport, control: &BacktestReport) -> Result<Comparison> {
    let dates: Vec<NaiveDate> = lazy.ledger.iter().map(|r| r.date).collect();
    if lazy.ledger.len() != control.ledger.len()
        || lazy
            .ledger
            .iter()
            .zip(&control.ledger)
            .any(|(a, b)| a.date != b.date)
    {
        return Err(Error::Contract(
            "compared reports cover different dates".into(),
        ));
    }
    if dates.is_empty() {
        return Err(Error::Contract("compared reports are empty".into()));
    }
    let wealth_ratio = lazy
        .ledger
        .iter()
        .zip(&control.ledger)
        .map(|(a, b)| a.total_wealth / b.total_wealth)
        .collect();
    Ok(Comparison {
        dates,
        wealth_ratio,
        uplift: lazy.metrics.final_wealth / control.metrics.final_wealth - 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub config: BacktestConfig,
    pub ledger: Vec<DailyRecord>,
    pub metrics: Metrics,
    pub comparison: Option<Comparison>,
}

/// Per-asset cumulative profit and loss in dollars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub dates: Vec<NaiveDate>,
    pub cash: Vec<f64>,
    pub gold: Vec<f64>,
    pub btc: Vec<f64>,
}

impl BacktestReport {
    /// Dollar gains from price moves on the holdings carried into each day.
    pub fn attribution(&self, market: &AlignedMarket) -> Result<Attribution> {
        let first = self
            .ledger
            .first()
            .and_then(|r| market.index_of(r.date))
            .ok_or_else(|| Error::Contract("ledger does not start on a market date".into()))?;
        let n = self.ledger.len();
        let mut out = Attribution {
            dates: self.ledger.iter().map(|r| r.date).collect(),
            cash: vec![0.0; n],
            gold: vec![0.0; n],
            btc: vec![0.0; n],
        };
        for i in 1..n {
            let (t, prev) = (first + i, &self.ledger[i - 1].holdings);
            out.gold[i] =
                out.gold[i - 1] + prev.gold * (market.gold_price[t] - market.gold_price[t - 1]);
            out.btc[i] =
                out.btc[i - 1] + prev.btc * (market.btc_price[t] - market.btc_price[t - 1]);
        }
        Ok(out)
    }

    /// Ledger in the order date, cash, gold ounces, bitcoin coins, total
    /// wealth, followed by the allocation detail.
    pub fn write_ledger_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "date",
            "cash",
            "gold",
            "bitcoin",
            "total_wealth",
            "w_cash",
            "w_gold",
            "w_btc",
            "cost_paid",
            "delta1",
            "gold_tradable",
            "gold_forecast",
            "btc_forecast",
        ])?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.ledger {
            w.write_record([
                r.date.to_string(),
                r.holdings.cash.to_string(),
                r.holdings.gold.to_string(),
                r.holdings.btc.to_string(),
                r.total_wealth.to_string(),
                r.weights.cash.to_string(),
                r.weights.gold.to_string(),
                r.weights.btc.to_string(),
                r.cost_paid.to_string(),
                opt(r.delta.map(|d| d.delta1)),
                r.gold_tradable.to_string(),
                opt(r.forecasts.gold),
                opt(r.forecasts.btc),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Outcome of executing a trade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Execution {
    pub holdings: Holdings,
    pub cost_paid: f64,
}

/// A risky leg whose target dollar value is `slope * W + offset`.
#[derive(Debug, Clone, Copy)]
struct Leg {
    rate: f64,
    price: f64,
    units: f64,
    slope: f64,
    offset: f64,
}

impl Leg {
    fn held(&self) -> f64 {
        self.units * self.price
    }

    fn cost(&self, wealth: f64) -> f64 {
        self.rate * (self.held() - (self.slope * wealth + self.offset)).abs()
    }
}

/// Solves `W + sum cost_i(W) = value` for the post-trade wealth. The left
/// side is piecewise linear and strictly increasing, so the root is exact
/// within the segment that brackets it.
fn solve_wealth(value: f64, legs: &[Leg]) -> f64 {
    let g = |w: f64| w + legs.iter().map(|l| l.cost(w)).sum::<f64>();
    let mut kinks: Vec<f64> = legs
        .iter()
        .filter(|l| l.slope > 0.0)
        .map(|l| (l.held() - l.offset) / l.slope)
        .filter(|k| *k > 0.0 && k.is_finite())
        .collect();
    kinks.sort_by(f64::total_cmp);
    let mut lo = 0.0;
    for hi in kinks.into_iter().chain(std::iter::once(f64::INFINITY)) {
        if hi <= lo {
            continue;
        }
        let g_lo = g(lo);
        let bracketed = hi.is_infinite() || g(hi) >= value;
        if bracketed {
            let probe = if hi.is_infinite() { lo + 1.0 } else { hi };
            let slope = (g(probe) - g_lo) / (probe - lo);
            return lo + (value - g_lo) / slope;
        }
        lo = hi;
    }
    unreachable!("the last segment is unbounded")
}

/// Trades `holdings` (valued at `prices`) into `target`, paying proportional
/// costs. When gold is closed its units are kept and the remaining wealth is
/// split between cash and bitcoin in the target's cash:bitcoin ratio.
pub fn execute(
    holdings: &Holdings,
    target: &WeightVector,
    prices: (f64, f64),
    costs: &CostRates,
    gold_tradable: bool,
) -> Result<Execution> {
    let (gp, bp) = prices;
    let value = holdings.value(gp, bp);
    if !(value > 0.0) {
        return Err(Error::Domain(format!(
            "portfolio value {value} is not positive"
        )));
    }
    let mut gold = Leg {
        rate: costs.gold,
        price: gp,
        units: holdings.gold,
        slope: target.gold,
        offset: 0.0,
    };
    let mut btc = Leg {
        rate: costs.btc,
        price: bp,
        units: holdings.btc,
        slope: target.btc,
        offset: 0.0,
    };
    if !gold_tradable {
        let rest = target.cash + target.btc;
        let share = if rest > 0.0 { target.btc / rest } else { 0.0 };
        btc.slope = share;
        btc.offset = -share * gold.held();
    }
    let legs: Vec<Leg> = if gold_tradable {
        vec![gold, btc]
    } else {
        vec![btc]
    };
    let wealth = solve_wealth(value, &legs);

    let snap = |leg: &Leg| {
        let new = ((leg.slope * wealth + leg.offset) / leg.price).max(0.0);
        if (new - leg.units).abs() <= 1e-12 * new.abs().max(leg.units.abs()) {
            leg.units
        } else {
            new
        }
    };
    if gold_tradable {
        gold.units = snap(&gold);
    }
    let new_btc = snap(&btc);
    let gold_cost = if gold_tradable {
        costs.gold * gp * (gold.units - holdings.gold).abs()
    } else {
        0.0
    };
    let btc_cost = costs.btc * bp * (new_btc - holdings.btc).abs();
    let cost_paid = gold_cost + btc_cost;
    let cash = holdings.cash + gp * (holdings.gold - gold.units) + bp * (holdings.btc - new_btc)
        - cost_paid;
    Ok(Execution {
        holdings: Holdings {
            cash,
            gold: gold.units,
            btc: new_btc,
        },
        cost_paid,
    })
}

/// Pins gold at its current fraction of wealth and splits the rest between
/// cash and bitcoin in the target's cash:bitcoin ratio.
pub fn freeze_gold(
    target: &WeightVector,
    holdings: &Holdings,
    prices: (f64, f64),
) -> Result<WeightVector> {
    let current = holdings.weights(prices.0, prices.1)?;
    let rest = target.cash + target.btc;
    let share = if rest > 0.0 { target.btc / rest } else { 0.0 };
    let btc = share * (1.0 - current.gold);
    Ok(WeightVector {
        cash: 1.0 - current.gold - btc,
        gold: current.gold,
        btc,
    })
}

/// Runs the daily loop over a market with precomputed forecasts.
pub struct Backtester<'a> {
    config: &'a BacktestConfig,
    market: &'a AlignedMarket,
    forecasts: &'a ForecastTable,
}

impl<'a> Backtester<'a> {
    pub fn new(
        config: &'a BacktestConfig,
        market: &'a AlignedMarket,
        forecasts: &'a ForecastTable,
    ) -> Result<Self> {
        config.validate()?;
        if forecasts.gold.len() != market.len()
            || forecasts.start > first_trading_day(config, market)?
        {
            return Err(Error::Contract(
                "forecast table does not cover the trading period".into(),
            ));
        }
        Ok(Self {
            config,
            market,
            forecasts,
        })
    }

    fn covariance(&self, day: usize) -> Result<CovarianceMatrix> {
        let window = self.config.covariance_window.min(day);
        if window < self.config.min_covariance_history {
            return Err(Error::insufficient(
                self.config.min_covariance_history,
                day,
                "covariance history",
            ));
        }
        estimate_covariance(self.market, day, window, self.config.cash_sigma)
    }

    /// Averages the gold and bitcoin indicators on histories up to `day`.
    fn daily_delta(&self, day: usize) -> Result<LazinessCoefficients> {
        let c = self.config;
        let mut sets = Vec::with_capacity(2);
        for history in [
            self.market.gold_history(day),
            self.market.btc_history(day).to_vec(),
        ] {
            let trend = exponential_ma(&history, c.gamma_window)?;
            sets.push(Indicators {
                rsi: compute_rsi(&history, c.indicator_window)?,
                beta: compute_beta(&history, c.indicator_window)?,
                gamma: compute_gamma(&trend, history.len() - 1, c.gamma_scale)?,
                window: c.indicator_window,
            });
        }
        match combine_delta(&Indicators::mean(&sets)?) {
            Err(Error::DegenerateIndicators { fallback }) => LazinessCoefficients::new(fallback),
            other => other,
        }
    }

    /// The optimizer's evaluated sample cloud for day `day`, starting from
    /// the holdings in `prev`.
    pub fn cloud(&self, prev: &DailyRecord, day: usize) -> Result<FrontierCloud> {
        let m = self.market;
        let c = self.config;
        let prices = (m.gold_price[day], m.btc_price[day]);
        let inputs = DayInputs {
            returns: estimate_returns(m, &self.forecasts.forecasts(day), day, c.risk_free)?,
            covariance: self.covariance(day)?,
            prev: WealthState {
                wealth: prev.holdings.value(prices.0, prices.1),
                holdings: prev.holdings,
            },
            prices,
            costs: c.costs,
            risk_free: c.risk_free,
        };
        optimize_day(
            &inputs,
            m.gold_tradable[day],
            c.monte_carlo_n,
            day_seed(c.seed, day),
        )
    }

    /// Trades day `day` starting from `prev`, the record of day `day - 1`.
    pub fn step(&self, prev: &DailyRecord, day: usize) -> Result<DailyRecord> {
        let m = self.market;
        let c = self.config;
        let prices = (m.gold_price[day], m.btc_price[day]);
        let tradable = m.gold_tradable[day];
        let forecasts = self.forecasts.forecasts(day);

        let (ideal, delta, target) = match c.strategy {
            Strategy::EqualOnly => (None, None, WeightVector::EQUAL),
            Strategy::Lazy | Strategy::ControlIdealOnly => {
                let cloud = self.cloud(prev, day)?;
                let ideal = cloud
                    .tangency()
                    .expect("optimize_day sets the tangency")
                    .weights;
                if c.strategy == Strategy::ControlIdealOnly {
                    (Some(ideal), None, ideal)
                } else {
                    let delta = match c.delta {
                        DeltaMode::Fixed { delta1 } => LazinessCoefficients::new(delta1)?,
                        DeltaMode::Daily => self.daily_delta(day)?,
                    };
                    (Some(ideal), Some(delta), blend_weights(&ideal, &delta))
                }
            }
        };

        let target = if tradable {
            target
        } else {
            freeze_gold(&target, &prev.holdings, prices)?
        };
        let exec = execute(&prev.holdings, &target, prices, &c.costs, tradable)?;
        Ok(DailyRecord {
            date: m.dates[day],
            weights: target,
            ideal,
            holdings: exec.holdings,
            total_wealth: exec.holdings.value(prices.0, prices.1),
            cost_paid: exec.cost_paid,
            forecasts,
            delta,
            gold_tradable: tradable,
        })
    }

    /// Warm-up records followed by one traded record per remaining day.
    /// A failing day aborts the run; the records so far travel with the error.
    pub fn run(&self) -> Result<BacktestReport> {
        let c = self.config;
        let m = self.market;
        let start = first_trading_day(c, m)?;
        let mut ledger = Vec::with_capacity(m.len());
        for t in 0..start {
            ledger.push(DailyRecord {
                date: m.dates[t],
                weights: WeightVector::ALL_CASH,
                ideal: None,
                holdings: Holdings::all_cash(c.initial_wealth),
                total_wealth: c.initial_wealth,
                cost_paid: 0.0,
                forecasts: PriceForecasts::default(),
                delta: None,
                gold_tradable: m.gold_tradable[t],
            });
        }
        for t in start..m.len() {
            let rec = match self.step(&ledger[t - 1], t) {
                Ok(r) => r,
                Err(e) => {
                    return Err(Error::Aborted {
                        partial: Box::new(ledger),
                        source: Box::new(Error::Dated {
                            date: m.dates[t],
                            source: Box::new(e),
                        }),
                    })
                }
            };
            ledger.push(rec);
        }
        let metrics = metrics(&ledger)?;
        Ok(BacktestReport {
            config: c.clone(),
            ledger,
            metrics,
            comparison: None,
        })
    }
}

/// Index of the first day after the warm-up.
pub fn first_trading_day(config: &BacktestConfig, market: &AlignedMarket) -> Result<usize> {
    if market.is_empty() {
        return Err(Error::EmptySeries("aligned market".into()));
    }
    let start = market.index_after_days(config.warmup_days).max(1);
    if start >= market.len() {
        return Err(Error::insufficient(
            start + 1,
            market.len(),
            "days beyond the warm-up",
        ));
    }
    Ok(start)
}

/// Builds the forecast table and runs one backtest.
pub fn run(config: &BacktestConfig, market: &AlignedMarket) -> Result<BacktestReport> {
    config.validate()?;
    let start = first_trading_day(config, market)?;
    let table = ForecastTable::build(market, config.forecast, start);
    Backtester::new(config, market, &table)?.run()
}

/// Final wealth for each fixed `delta1` in `grid`, reusing one forecast table.
pub fn delta_sweep(
    config: &BacktestConfig,
    market: &AlignedMarket,
    table: &ForecastTable,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    grid.par_iter()
        .map(|&d1| {
            let cfg = BacktestConfig {
                delta: DeltaMode::Fixed { delta1: d1 },
                strategy: Strategy::Lazy,
                ..config.clone()
            };
            let report = Backtester::new(&cfg, market, table)?.run()?;
            Ok((d1, report.metrics.final_wealth))
        })
        .collect()
}

/// `0.0, 0.1, ..., 1.0`.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}
