//! Moving-average trend lines and the signals read off them.

use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default short, medium and long windows in days.
pub const DEFAULT_WINDOWS: [usize; 3] = [5, 20, 60];

/// Default |K'| cutoff for reporting an inflection.
pub const DEFAULT_INFLECTION_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendKind {
    Ma,
    Ema,
}

/// A trend line on the same day axis as its input. Days before `start` are
/// undefined (simple MA warm-up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    pub window: usize,
    pub kind: TrendKind,
    start: usize,
    values: Vec<f64>,
}

impl TrendLine {
    /// First defined index.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Length of the underlying day axis.
    pub fn len(&self) -> usize {
        self.start + self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Option<f64> {
        index
            .checked_sub(self.start)
            .and_then(|i| self.values.get(i).copied())
    }

    /// Values from `start` onward.
    pub fn defined(&self) -> &[f64] {
        &self.values
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// Simple N-day moving average.
pub fn moving_average(series: &[f64], window: usize) -> Result<TrendLine> {
    if window == 0 {
        return Err(Error::Contract(
            "moving average window must be at least 1".into(),
        ));
    }
    if series.len() < window {
        return Err(Error::insufficient(window, series.len(), "moving average"));
    }
    let n = window as f64;
    let values = series
        .windows(window)
        .map(|w| w.iter().sum::<f64>() / n)
        .collect();
    Ok(TrendLine {
        window,
        kind: TrendKind::Ma,
        start: window - 1,
        values,
    })
}

/// Smoothing factor `2 / (N + 1)`.
pub fn ema_factor(window: usize) -> f64 {
    2.0 / (window as f64 + 1.0)
}

/// EXPMA seeded with the first price.
pub fn exponential_ma(series: &[f64], window: usize) -> Result<TrendLine> {
    if window == 0 {
        return Err(Error::Contract("EMA window must be at least 1".into()));
    }
    let Some(&first) = series.first() else {
        return Err(Error::insufficient(1, 0, "exponential moving average"));
    };
    let eta = ema_factor(window);
    let mut values = Vec::with_capacity(series.len());
    let mut ema = first;
    values.push(ema);
    for &x in &series[1..] {
        ema = eta * x + (1.0 - eta) * ema;
        values.push(ema);
    }
    Ok(TrendLine {
        window,
        kind: TrendKind::Ema,
        start: 0,
        values,
    })
}

/// Tangent slope K at `index`, discretized as a first difference.
pub fn tangent_slope(trend: &TrendLine, index: usize) -> Result<f64> {
    match (
        index.checked_sub(1).and_then(|i| trend.get(i)),
        trend.get(index),
    ) {
        (Some(prev), Some(cur)) => Ok(cur - prev),
        _ => Err(Error::UndefinedSlope(index)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    /// K' < 0: slope turning down, price expected to fall.
    Convex,
    /// K' > 0: slope turning up, price expected to rise.
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflectionPoint {
    pub index: usize,
    pub slope_k: f64,
    pub slope_rate_k_prime: f64,
    pub shape: Shape,
}

/// Reports each index where K' = K(t) - K(t-1) exceeds `threshold` in
/// magnitude with a sign opposite to the previous report. Shapes therefore
/// alternate along the timeline.
pub fn detect_inflections(trend: &TrendLine, threshold: f64) -> Vec<InflectionPoint> {
    let mut out: Vec<InflectionPoint> = Vec::new();
    let first = trend.start() + 2;
    for t in first..trend.len() {
        let (Ok(k), Ok(k_prev)) = (tangent_slope(trend, t), tangent_slope(trend, t - 1)) else {
            continue;
        };
        let k_prime = k - k_prev;
        if k_prime.abs() <= threshold {
            continue;
        }
        let shape = if k_prime < 0.0 {
            Shape::Convex
        } else {
            Shape::Concave
        };
        if out.last().is_some_and(|p| p.shape == shape) {
            continue;
        }
        out.push(InflectionPoint {
            index: t,
            slope_k: k,
            slope_rate_k_prime: k_prime,
            shape,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossDirection {
    GoldenCross,
    DeathCross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossoverEvent {
    pub index: usize,
    pub direction: CrossDirection,
    pub short_window: usize,
    pub long_window: usize,
}

/// Short-over-long crossings. Exact equality never fires an event; the event
/// is reported on the first strict inequality that flips the side.
pub fn detect_crossovers(short: &TrendLine, long: &TrendLine) -> Result<Vec<CrossoverEvent>> {
    if short.len() != long.len() {
        return Err(Error::Alignment(format!(
            "trend lines cover {} and {} days",
            short.len(),
            long.len()
        )));
    }
    let mut events = Vec::new();
    let mut above: Option<bool> = None;
    for t in short.start().max(long.start())..short.len() {
        let (s, l) = (short.get(t).unwrap(), long.get(t).unwrap());
        let side = if s > l {
            true
        } else if s < l {
            false
        } else {
            continue;
        };
        if let Some(prev) = above {
            if prev != side {
                events.push(CrossoverEvent {
                    index: t,
                    direction: if side {
                        CrossDirection::GoldenCross
                    } else {
                        CrossDirection::DeathCross
                    },
                    short_window: short.window,
                    long_window: long.window,
                });
            }
        }
        above = Some(side);
    }
    Ok(events)
}

/// Writes `date,value` rows for the defined part of a trend line.
pub fn write_trend_csv<W: Write>(writer: W, dates: &[NaiveDate], trend: &TrendLine) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "value"])?;
    for (i, v) in trend.defined().iter().enumerate() {
        w.write_record([dates[trend.start() + i].to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `date,kind,K,K'` rows. Crossovers carry the slope of the short line.
pub fn write_signals_csv<W: Write>(
    writer: W,
    dates: &[NaiveDate],
    short: &TrendLine,
    inflections: &[InflectionPoint],
    crossovers: &[CrossoverEvent],
) -> Result<()> {
    let mut rows: Vec<(usize, String, f64, f64)> = inflections
        .iter()
        .map(|p| {
            let kind = match p.shape {
                Shape::Convex => "convex",
                Shape::Concave => "concave",
            };
            (p.index, kind.to_string(), p.slope_k, p.slope_rate_k_prime)
        })
        .collect();
    for c in crossovers {
        let kind = match c.direction {
            CrossDirection::GoldenCross => "golden_cross",
            CrossDirection::DeathCross => "death_cross",
        };
        let k = tangent_slope(short, c.index).unwrap_or(f64::NAN);
        let k_prime = tangent_slope(short, c.index - 1)
            .map(|prev| k - prev)
            .unwrap_or(f64::NAN);
        rows.push((c.index, kind.to_string(), k, k_prime));
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "kind", "k", "k_prime"])?;
    for (i, kind, k, kp) in rows {
        w.write_record([dates[i].to_string(), kind, k.to_string(), kp.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
