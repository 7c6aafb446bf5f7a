//! Seeded synthetic gold and bitcoin price histories.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{Asset, PricePoint, PriceSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    pub gold_start: f64,
    pub gold_end: f64,
    pub gold_vol: f64,
    pub btc_start: f64,
    pub btc_end: f64,
    pub btc_vol: f64,
    /// Chance that a weekday is a gold market holiday.
    pub gold_holiday_rate: f64,
    /// Chance that a gold trading day has a blank price in the file.
    pub gold_blank_rate: f64,
}

impl Default for SyntheticSpec {
    /// Five years from 2016-09-11, bitcoin from 608 to about 46,000 and gold
    /// from 1324.6 to about 1794.
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2016, 9, 11).unwrap(),
            days: 1826,
            seed: 20160911,
            gold_start: 1324.6,
            gold_end: 1794.0,
            gold_vol: 0.009,
            btc_start: 608.0,
            btc_end: 46_000.0,
            btc_vol: 0.04,
            gold_holiday_rate: 0.03,
            gold_blank_rate: 0.005,
        }
    }
}

/// Raw synthetic rows as they would appear in the source files; gold rows
/// with `None` are blanks.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub gold: Vec<(NaiveDate, Option<f64>)>,
    pub btc: Vec<(NaiveDate, f64)>,
}

pub fn is_weekend(date: NaiveDate) -> bool {
    matches!(date.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Gaussian random walks in log price, bridged so each path ends at its
/// configured end price. Bitcoin moves every calendar day; gold moves only on
/// weekdays that are not holidays.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.days == 0
        || [spec.gold_start, spec.gold_end, spec.btc_start, spec.btc_end]
            .iter()
            .any(|p| !(*p > 0.0))
    {
        return Err(Error::Contract(
            "synthetic market needs days and positive prices".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gold_shock = Normal::new(0.0, spec.gold_vol).map_err(|e| Error::Contract(e.to_string()))?;
    let btc_shock = Normal::new(0.0, spec.btc_vol).map_err(|e| Error::Contract(e.to_string()))?;

    let dates: Vec<NaiveDate> = (0..spec.days)
        .map(|i| spec.start + Duration::days(i as i64))
        .collect();
    let mut btc_steps = Vec::with_capacity(spec.days);
    let mut gold_days = Vec::new();
    let mut gold_steps = Vec::new();
    let mut blanks = Vec::new();
    for (i, &date) in dates.iter().enumerate() {
        btc_steps.push(if i == 0 {
            0.0
        } else {
            btc_shock.sample(&mut rng)
        });
        let holiday = rng.random::<f64>() < spec.gold_holiday_rate;
        let blank = rng.random::<f64>() < spec.gold_blank_rate;
        let step = gold_shock.sample(&mut rng);
        let first = gold_days.is_empty();
        if is_weekend(date) || (holiday && !first) {
            continue;
        }
        gold_days.push(date);
        gold_steps.push(if first { 0.0 } else { step });
        blanks.push(blank && !first);
    }
    if let Some(last) = blanks.last_mut() {
        *last = false;
    }

    let btc = bridge(spec.btc_start, spec.btc_end, &btc_steps);
    let gold = bridge(spec.gold_start, spec.gold_end, &gold_steps);
    Ok(SyntheticData {
        gold: gold_days
            .into_iter()
            .zip(gold)
            .zip(blanks)
            .map(|((d, p), blank)| (d, (!blank).then_some(p)))
            .collect(),
        btc: dates.into_iter().zip(btc).collect(),
    })
}

/// Cumulates `steps` from `start` and adds a constant drift per step so the
/// path finishes at `end`. Prices are rounded to cents.
fn bridge(start: f64, end: f64, steps: &[f64]) -> Vec<f64> {
    let moves = steps.len().saturating_sub(1).max(1) as f64;
    let raw_end: f64 = steps.iter().sum();
    let drift = ((end / start).ln() - raw_end) / moves;
    let mut level = start.ln();
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i > 0 {
                level += s + drift;
            }
            round_to(level.exp(), 2)
        })
        .collect()
}

fn round_to(x: f64, digits: i32) -> f64 {
    let f = 10f64.powi(digits);
    (x * f).round() / f
}

impl SyntheticData {
    pub fn gold_series(&self) -> Result<PriceSeries> {
        let pts = self
            .gold
            .iter()
            .filter_map(|(date, p)| p.map(|price| PricePoint { date: *date, price }))
            .collect();
        PriceSeries::new(Asset::Gold, pts)
    }

    pub fn btc_series(&self) -> Result<PriceSeries> {
        let pts = self
            .btc
            .iter()
            .map(|&(date, price)| PricePoint { date, price })
            .collect();
        PriceSeries::new(Asset::Bitcoin, pts)
    }

    /// Gold file layout: `Date,USD (PM)` with `M/D/YYYY` dates.
    pub fn write_gold_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["Date", "USD (PM)"])?;
        for (date, price) in &self.gold {
            w.write_record([
                format!("{}/{}/{}", date.month(), date.day(), date.year()),
                price.map(|p| format!("{p:.2}")).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Bitcoin file layout: `Date,Value` with ISO dates.
    pub fn write_btc_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["Date", "Value"])?;
        for (date, price) in &self.btc {
            w.write_record([date.to_string(), format!("{price:.2}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_calendar_correct() {
        let spec = SyntheticSpec {
            days: 400,
            ..SyntheticSpec::default()
        };
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_eq!(a.btc.len(), 400);
        assert!(a.gold.iter().all(|(d, _)| !is_weekend(*d)));
        assert!(a.gold.len() < 400 * 5 / 7 + 2);
        assert!(a.btc.iter().all(|(_, p)| *p > 0.0));
        assert_eq!(a.btc.last().unwrap().1, 46_000.0);
        assert_eq!(a.gold.last().unwrap().1, Some(1794.0));
    }
}
