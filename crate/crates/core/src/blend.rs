//! Laziness blending: indicators, delta coefficients and the convex mix of
//! equal weights with the optimizer's ideal weights.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::WeightVector;
use crate::trend::{tangent_slope, TrendLine};

pub const DEFAULT_INDICATOR_WINDOW: usize = 14;
pub const DEFAULT_GAMMA_SCALE: f64 = 0.005;
pub const DEFAULT_DELTA1: f64 = 0.7;
/// Upper bound of `delta1` produced by the combination rule.
pub const DELTA1_CAP: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Indicators {
    pub rsi: f64,
    pub beta: f64,
    pub gamma: f64,
    pub window: usize,
}

impl Indicators {
    /// Component-wise mean of several indicator sets.
    pub fn mean(sets: &[Indicators]) -> Result<Indicators> {
        if sets.is_empty() {
            return Err(Error::Contract("no indicator sets to average".into()));
        }
        let n = sets.len() as f64;
        Ok(Indicators {
            rsi: sets.iter().map(|s| s.rsi).sum::<f64>() / n,
            beta: sets.iter().map(|s| s.beta).sum::<f64>() / n,
            gamma: sets.iter().map(|s| s.gamma).sum::<f64>() / n,
            window: sets[0].window,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LazinessCoefficients {
    pub delta1: f64,
    pub delta2: f64,
}

impl LazinessCoefficients {
    pub fn new(delta1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta1) {
            return Err(Error::Contract(format!(
                "delta1 = {delta1} is outside [0, 1]"
            )));
        }
        Ok(Self {
            delta1,
            delta2: 1.0 - delta1,
        })
    }
}

fn trailing<'a>(prices: &'a [f64], window: usize, context: &'static str) -> Result<&'a [f64]> {
    if window < 1 {
        return Err(Error::Contract(format!(
            "{context} window must be positive"
        )));
    }
    if prices.len() < window + 1 {
        return Err(Error::insufficient(window + 1, prices.len(), context));
    }
    Ok(&prices[prices.len() - window - 1..])
}

/// Relative strength: `100 * avg_gain / (avg_gain + avg_loss)` over the last
/// `window` price changes, with simple averages. A flat window scores 50.
pub fn compute_rsi(prices: &[f64], window: usize) -> Result<f64> {
    if window < 2 {
        return Err(Error::Contract("RSI window must be at least 2".into()));
    }
    let tail = trailing(prices, window, "RSI")?;
    let (mut gain, mut loss) = (0.0, 0.0);
    for w in tail.windows(2) {
        let change = w[1] - w[0];
        if change > 0.0 {
            gain += change;
        } else {
            loss -= change;
        }
    }
    let (gain, loss) = (gain / window as f64, loss / window as f64);
    Ok(if gain + loss > 0.0 {
        100.0 * gain / (gain + loss)
    } else {
        50.0
    })
}

/// Share of up days among days that moved, in percent.
pub fn compute_beta(prices: &[f64], window: usize) -> Result<f64> {
    let tail = trailing(prices, window, "up-day ratio")?;
    let up = tail.windows(2).filter(|w| w[1] > w[0]).count();
    let down = tail.windows(2).filter(|w| w[1] < w[0]).count();
    Ok(if up + down > 0 {
        100.0 * up as f64 / (up + down) as f64
    } else {
        50.0
    })
}

/// Trend slope mapped to `[0, 100]` by `50 (1 + tanh(K / (value * scale)))`.
pub fn compute_gamma(trend: &TrendLine, index: usize, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Contract(format!(
            "gamma scale {scale} must be positive"
        )));
    }
    let k = tangent_slope(trend, index)?;
    let value = trend.get(index).ok_or(Error::UndefinedSlope(index))?;
    if value == 0.0 {
        return Err(Error::Domain(
            "trend value is zero; relative slope undefined".into(),
        ));
    }
    Ok(gamma_from_relative_slope(k / value, scale))
}

/// The bounded map used by [`compute_gamma`].
pub fn gamma_from_relative_slope(relative_slope: f64, scale: f64) -> f64 {
    50.0 * (1.0 + (relative_slope / scale).tanh())
}

/// `delta1 = 0.8 RSI / (RSI + beta + gamma)`, clamped into `[0, 0.8]`.
///
/// A zero denominator is reported as [`Error::DegenerateIndicators`] carrying
/// the fixed-mode fallback.
pub fn combine_delta(ind: &Indicators) -> Result<LazinessCoefficients> {
    let total = ind.rsi + ind.beta + ind.gamma;
    if !(total > 0.0) {
        return Err(Error::DegenerateIndicators {
            fallback: DEFAULT_DELTA1,
        });
    }
    let delta1 = (DELTA1_CAP * ind.rsi / total).clamp(0.0, DELTA1_CAP);
    LazinessCoefficients::new(delta1)
}

/// `delta1 * (1/3, 1/3, 1/3) + delta2 * ideal`.
pub fn blend_weights(ideal: &WeightVector, delta: &LazinessCoefficients) -> WeightVector {
    let third = 1.0 / 3.0;
    let mix = |x: f64| delta.delta1 * third + delta.delta2 * x;
    let gold = mix(ideal.gold);
    let btc = mix(ideal.btc);
    WeightVector {
        cash: 1.0 - gold - btc,
        gold,
        btc,
    }
}

/// One row of the indicator log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorRecord {
    pub date: NaiveDate,
    pub indicators: Indicators,
    pub delta: LazinessCoefficients,
}

pub fn write_indicator_csv<W: Write>(writer: W, rows: &[IndicatorRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "rsi", "beta", "gamma", "delta1", "delta2"])?;
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.indicators.rsi.to_string(),
            r.indicators.beta.to_string(),
            r.indicators.gamma.to_string(),
            r.delta.delta1.to_string(),
            r.delta.delta2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
