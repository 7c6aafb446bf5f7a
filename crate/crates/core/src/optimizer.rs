//! Transaction-cost mean-variance optimizer.
//!
//! Each day the feasible set is approximated by Monte Carlo samples of the
//! weight simplex. Every sample is evaluated for risk (`sqrt(w' S w)`) and for
//! the wealth left after trading into it under proportional costs. The
//! non-dominated samples form the efficient frontier, and the day's ideal
//! allocation is the frontier point with the best Sharpe ratio.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{log_return, log_returns, AlignedMarket};

/// Portfolio weights over (cash, gold, bitcoin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub cash: f64,
    pub gold: f64,
    pub btc: f64,
}

const SIMPLEX_TOL: f64 = 1e-12;

impl WeightVector {
    pub const ALL_CASH: WeightVector = WeightVector {
        cash: 1.0,
        gold: 0.0,
        btc: 0.0,
    };
    pub const EQUAL: WeightVector = WeightVector {
        cash: 1.0 / 3.0,
        gold: 1.0 / 3.0,
        btc: 1.0 / 3.0,
    };

    /// Validates simplex membership.
    pub fn new(cash: f64, gold: f64, btc: f64) -> Result<Self> {
        let w = Self { cash, gold, btc };
        if w.as_array()
            .iter()
            .any(|x| !(-SIMPLEX_TOL..=1.0 + SIMPLEX_TOL).contains(x))
            || (w.sum() - 1.0).abs() > SIMPLEX_TOL
        {
            return Err(Error::Contract(format!(
                "weights ({cash}, {gold}, {btc}) are not on the simplex"
            )));
        }
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.cash, self.gold, self.btc]
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }

    pub fn sum(&self) -> f64 {
        self.cash + self.gold + self.btc
    }

    pub fn max_abs_diff(&self, other: &WeightVector) -> f64 {
        self.as_array()
            .iter()
            .zip(other.as_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnSource {
    Forecast,
    Historical,
}

/// Expected one-day log returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub cash: f64,
    pub gold: f64,
    pub btc: f64,
    pub source: ReturnSource,
}

impl ReturnEstimate {
    pub fn as_array(&self) -> [f64; 3] {
        [self.cash, self.gold, self.btc]
    }

    /// Weighted portfolio return.
    pub fn portfolio(&self, w: &WeightVector) -> f64 {
        self.cash * w.cash + self.gold * w.gold + self.btc * w.btc
    }
}

/// Next-day price forecasts for the risky assets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceForecasts {
    pub gold: Option<f64>,
    pub btc: Option<f64>,
}

/// Log returns implied by the forecasts against day-`day` closes. Gold may be
/// missing on days its market is closed; its expected return is then zero.
pub fn estimate_returns(
    market: &AlignedMarket,
    forecasts: &PriceForecasts,
    day: usize,
    risk_free: f64,
) -> Result<ReturnEstimate> {
    let gold = match (forecasts.gold, market.gold_tradable[day]) {
        (Some(y), _) => log_return(market.gold_price[day], y)?,
        (None, false) => 0.0,
        (None, true) => {
            return Err(Error::Contract(format!(
                "no gold forecast on tradable day {}",
                market.dates[day]
            )))
        }
    };
    let btc = match forecasts.btc {
        Some(y) => log_return(market.btc_price[day], y)?,
        None => {
            return Err(Error::Contract(format!(
                "no bitcoin forecast on {}",
                market.dates[day]
            )))
        }
    };
    Ok(ReturnEstimate {
        cash: risk_free,
        gold,
        btc,
        source: ReturnSource::Forecast,
    })
}

/// 3x3 covariance over (cash, gold, bitcoin) daily log returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix {
    pub values: [[f64; 3]; 3],
    pub estimation_window: usize,
}

impl CovarianceMatrix {
    pub fn zero() -> Self {
        Self {
            values: [[0.0; 3]; 3],
            estimation_window: 0,
        }
    }

    /// Builds a matrix from volatilities and the gold/bitcoin correlation.
    pub fn from_parts(sigma_cash: f64, sigma_gold: f64, sigma_btc: f64, rho_gold_btc: f64) -> Self {
        let cov_gb = rho_gold_btc * sigma_gold * sigma_btc;
        Self {
            values: [
                [sigma_cash * sigma_cash, 0.0, 0.0],
                [0.0, sigma_gold * sigma_gold, cov_gb],
                [0.0, cov_gb, sigma_btc * sigma_btc],
            ],
            estimation_window: 0,
        }
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let denom = (self.values[i][i] * self.values[j][j]).sqrt();
        if denom > 0.0 {
            self.values[i][j] / denom
        } else {
            0.0
        }
    }

    fn quadratic_form(&self, w: &[f64; 3]) -> f64 {
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                acc += w[i] * w[j] * self.values[i][j];
            }
        }
        acc
    }
}

/// Sample covariance of the `window` daily log returns ending at `day`.
/// Cash gets variance `cash_sigma^2` and no covariance with the risky assets.
pub fn estimate_covariance(
    market: &AlignedMarket,
    day: usize,
    window: usize,
    cash_sigma: f64,
) -> Result<CovarianceMatrix> {
    if window < 2 || day < window {
        return Err(Error::insufficient(window.max(2), day, "covariance window"));
    }
    let range = day - window..=day;
    let gold = log_returns(&market.gold_price[range.clone()]);
    let btc = log_returns(&market.btc_price[range]);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mg, mb) = (mean(&gold), mean(&btc));
    let denom = (window - 1) as f64;
    let cov = |a: &[f64], ma: f64, b: &[f64], mb: f64| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - ma) * (y - mb))
            .sum::<f64>()
            / denom
    };
    let gg = cov(&gold, mg, &gold, mg);
    let bb = cov(&btc, mb, &btc, mb);
    let gb = cov(&gold, mg, &btc, mb);
    Ok(CovarianceMatrix {
        values: [
            [cash_sigma * cash_sigma, 0.0, 0.0],
            [0.0, gg, gb],
            [0.0, gb, bb],
        ],
        estimation_window: window,
    })
}

/// `sqrt(w' S w)`. Round-off negatives down to -1e-12 clamp to zero.
pub fn portfolio_risk(weights: &WeightVector, cov: &CovarianceMatrix) -> Result<f64> {
    let q = cov.quadratic_form(&weights.as_array());
    if q < -1e-12 {
        return Err(Error::NotPsd(q));
    }
    Ok(q.max(0.0).sqrt())
}

/// Proportional cost rates on traded notional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRates {
    pub gold: f64,
    pub btc: f64,
}

impl Default for CostRates {
    fn default() -> Self {
        Self {
            gold: 0.01,
            btc: 0.02,
        }
    }
}

impl CostRates {
    pub const ZERO: CostRates = CostRates {
        gold: 0.0,
        btc: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for r in [self.gold, self.btc] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Contract(format!("cost rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Holdings in native units: dollars, troy ounces, coins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Holdings {
    pub cash: f64,
    pub gold: f64,
    pub btc: f64,
}

impl Holdings {
    pub fn all_cash(wealth: f64) -> Self {
        Self {
            cash: wealth,
            gold: 0.0,
            btc: 0.0,
        }
    }

    pub fn value(&self, gold_price: f64, btc_price: f64) -> f64 {
        self.cash + self.gold * gold_price + self.btc * btc_price
    }

    /// Dollar fractions at the given prices.
    pub fn weights(&self, gold_price: f64, btc_price: f64) -> Result<WeightVector> {
        let total = self.value(gold_price, btc_price);
        if !(total > 0.0) {
            return Err(Error::Domain(format!("holdings are worth {total}")));
        }
        let g = self.gold * gold_price / total;
        let b = self.btc * btc_price / total;
        let c = 1.0 - g - b;
        WeightVector::new(c.max(0.0), g, b)
    }
}

/// Wealth and positions entering a rebalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WealthState {
    pub wealth: f64,
    pub holdings: Holdings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioEvaluation {
    pub weights: WeightVector,
    /// Portfolio standard deviation of daily log returns.
    pub risk: f64,
    /// Expected gross return `R_t`.
    pub expected_return: f64,
    /// Expected wealth after growth and trading costs.
    pub post_cost_wealth: f64,
    pub cost_paid: f64,
    /// `post_cost_wealth / prev_wealth - 1`.
    pub net_return: f64,
}

/// Whether each risky asset can be traded today.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tradable {
    pub gold: bool,
    pub btc: bool,
}

impl Tradable {
    pub const ALL: Tradable = Tradable {
        gold: true,
        btc: true,
    };
}

/// Grows the prior wealth by the portfolio's expected return and charges
/// `rate * price * |old units - new units|` for each tradable risky asset,
/// where the new units are `prev_wealth * (1 + R_t) * w_i / price_i`.
pub fn wealth_after_rebalance(
    prev: &WealthState,
    new_weights: &WeightVector,
    prices: (f64, f64),
    returns: &ReturnEstimate,
    costs: &CostRates,
    tradable: Tradable,
) -> Result<PortfolioEvaluation> {
    let (gold_price, btc_price) = prices;
    if !(prev.wealth > 0.0) {
        return Err(Error::Contract(format!(
            "prior wealth {} is not positive",
            prev.wealth
        )));
    }
    if new_weights.as_array().iter().any(|w| *w < 0.0) {
        return Err(Error::Contract("short positions are not allowed".into()));
    }
    let r = returns.portfolio(new_weights);
    let grown = prev.wealth * (1.0 + r);
    let leg = |rate: f64, price: f64, old_units: f64, weight: f64| {
        rate * price * (old_units - grown * weight / price).abs()
    };
    let mut cost = 0.0;
    if tradable.gold {
        cost += leg(costs.gold, gold_price, prev.holdings.gold, new_weights.gold);
    }
    if tradable.btc {
        cost += leg(costs.btc, btc_price, prev.holdings.btc, new_weights.btc);
    }
    let post = grown - cost;
    Ok(PortfolioEvaluation {
        weights: *new_weights,
        risk: 0.0,
        expected_return: r,
        post_cost_wealth: post,
        cost_paid: cost,
        net_return: post / prev.wealth - 1.0,
    })
}

fn chacha(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform on the 2-simplex (flat Dirichlet), from sorted
/// uniform gaps. The stream is sequential, so a smaller `n` under the same
/// seed yields a prefix of a larger draw.
pub fn sample_simplex(n: usize, seed: u64) -> Vec<WeightVector> {
    let mut rng = chacha(seed);
    (0..n)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            WeightVector {
                cash: lo,
                gold: hi - lo,
                btc: 1.0 - hi,
            }
        })
        .collect()
}

/// `n` points with gold pinned at `gold` and the rest split uniformly
/// between cash and bitcoin.
pub fn sample_edge(n: usize, seed: u64, gold: f64) -> Vec<WeightVector> {
    let mut rng = chacha(seed);
    let free = 1.0 - gold;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let btc = u * free;
            WeightVector {
                cash: free - btc,
                gold,
                btc,
            }
        })
        .collect()
}

/// Monte Carlo evaluations with frontier annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCloud {
    pub samples: Vec<PortfolioEvaluation>,
    /// Non-dominated samples in increasing risk.
    pub frontier_indices: Vec<usize>,
    pub min_risk_index: usize,
    pub tangency_index: Option<usize>,
}

impl FrontierCloud {
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn tangency(&self) -> Option<&PortfolioEvaluation> {
        self.tangency_index.map(|i| &self.samples[i])
    }

    pub fn on_frontier(&self) -> Vec<bool> {
        let mut flags = vec![false; self.samples.len()];
        for &i in &self.frontier_indices {
            flags[i] = true;
        }
        flags
    }

    /// Writes one row per sample:
    /// `risk,return,wealth,w_cash,w_gold,w_btc,on_frontier,is_tangency`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let flags = self.on_frontier();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "risk",
            "return",
            "wealth",
            "w_cash",
            "w_gold",
            "w_btc",
            "on_frontier",
            "is_tangency",
        ])?;
        for (i, s) in self.samples.iter().enumerate() {
            w.write_record([
                s.risk.to_string(),
                s.net_return.to_string(),
                s.post_cost_wealth.to_string(),
                s.weights.cash.to_string(),
                s.weights.gold.to_string(),
                s.weights.btc.to_string(),
                flags[i].to_string(),
                (self.tangency_index == Some(i)).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Marks the samples no other sample dominates in (lower risk, higher net
/// return), and the global minimum-risk sample.
pub fn efficient_frontier(samples: Vec<PortfolioEvaluation>) -> Result<FrontierCloud> {
    if samples.is_empty() {
        return Err(Error::Contract(
            "cannot build a frontier from no samples".into(),
        ));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&samples[a], &samples[b]);
        sa.risk
            .total_cmp(&sb.risk)
            .then(sb.net_return.total_cmp(&sa.net_return))
            .then(a.cmp(&b))
    });
    let mut frontier = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &i in &order {
        let s = &samples[i];
        let keep = match best {
            None => true,
            Some((best_ret, best_risk)) => {
                s.net_return > best_ret || (s.net_return == best_ret && s.risk == best_risk)
            }
        };
        if keep {
            frontier.push(i);
        }
        if best.is_none_or(|(r, _)| s.net_return > r) {
            best = Some((s.net_return, s.risk));
        }
    }
    let min_risk_index = order[0];
    Ok(FrontierCloud {
        samples,
        frontier_indices: frontier,
        min_risk_index,
        tangency_index: None,
    })
}

/// Sharpe ratio on net return; `None` for riskless samples.
pub fn sharpe(e: &PortfolioEvaluation, risk_free: f64) -> Option<f64> {
    (e.risk > 0.0).then(|| (e.net_return - risk_free) / e.risk)
}

/// Index of the frontier sample with the highest Sharpe ratio; ties go to
/// the lower-risk sample.
pub fn max_sharpe(cloud: &FrontierCloud, risk_free: f64) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in &cloud.frontier_indices {
        let Some(s) = sharpe(&cloud.samples[i], risk_free) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((bs, bi)) => s > bs || (s == bs && cloud.samples[i].risk < cloud.samples[bi].risk),
        };
        if better {
            best = Some((s, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::DegenerateFrontier)
}

/// Inputs to one day's optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayInputs {
    pub returns: ReturnEstimate,
    pub covariance: CovarianceMatrix,
    pub prev: WealthState,
    /// Day-t closes (gold, bitcoin).
    pub prices: (f64, f64),
    pub costs: CostRates,
    pub risk_free: f64,
}

/// Samples the feasible set, evaluates every sample and picks the day's ideal
/// portfolio.
///
/// When gold is closed, gold is pinned at its current holding fraction and
/// only the cash/bitcoin split is sampled. The ideal is the max-Sharpe
/// frontier point when that Sharpe ratio is positive; otherwise no sample
/// beats the risk-free rate and the frontier point with the highest net
/// return is taken.
pub fn optimize_day(
    inputs: &DayInputs,
    gold_tradable: bool,
    n: usize,
    seed: u64,
) -> Result<FrontierCloud> {
    if n == 0 {
        return Err(Error::Contract(
            "Monte Carlo size must be at least 1".into(),
        ));
    }
    inputs.costs.validate()?;
    let (weights, tradable) = if gold_tradable {
        (sample_simplex(n, seed), Tradable::ALL)
    } else {
        let (gp, _) = inputs.prices;
        let frac = (inputs.prev.holdings.gold * gp / inputs.prev.wealth).clamp(0.0, 1.0);
        (
            sample_edge(n, seed, frac),
            Tradable {
                gold: false,
                btc: true,
            },
        )
    };

    let samples = weights
        .iter()
        .map(|w| {
            let mut e = wealth_after_rebalance(
                &inputs.prev,
                w,
                inputs.prices,
                &inputs.returns,
                &inputs.costs,
                tradable,
            )?;
            e.risk = portfolio_risk(w, &inputs.covariance)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cloud = efficient_frontier(samples)?;
    let tangency = match max_sharpe(&cloud, inputs.risk_free) {
        Ok(i) if sharpe(&cloud.samples[i], inputs.risk_free).is_some_and(|s| s > 0.0) => i,
        _ => best_net_return(&cloud),
    };
    cloud.tangency_index = Some(tangency);
    Ok(cloud)
}

fn best_net_return(cloud: &FrontierCloud) -> usize {
    // frontier indices are sorted by risk with strictly rising return, so the
    // last one has the highest net return
    *cloud.frontier_indices.last().unwrap()
}

/// Mixes a global seed with a day index (splitmix64 finalizer).
pub fn day_seed(global: u64, day: usize) -> u64 {
    let mut z = global ^ (day as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
