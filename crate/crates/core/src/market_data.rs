//! Price ingestion, calendar alignment and log returns.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Asset {
    Cash,
    Gold,
    Bitcoin,
}

impl fmt::Display for Asset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Asset::Cash => "cash",
            Asset::Gold => "gold",
            Asset::Bitcoin => "bitcoin",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub price: f64,
}

/// Daily closes for one asset, strictly increasing in date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    asset: Asset,
    points: Vec<PricePoint>,
}

impl PriceSeries {
    /// Sorts the points by date and validates them.
    pub fn new(asset: Asset, mut points: Vec<PricePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySeries(asset.to_string()));
        }
        points.sort_by_key(|p| p.date);
        for (i, p) in points.iter().enumerate() {
            if !(p.price.is_finite() && p.price > 0.0) {
                return Err(Error::Domain(format!(
                    "{asset} price {} on {} is not positive",
                    p.price, p.date
                )));
            }
            if i > 0 && points[i - 1].date == p.date {
                return Err(Error::Domain(format!(
                    "{asset} has duplicate date {}",
                    p.date
                )));
            }
        }
        Ok(Self { asset, points })
    }

    pub fn asset(&self) -> Asset {
        self.asset
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn prices(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.price).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    pub fn first_date(&self) -> NaiveDate {
        self.points[0].date
    }

    pub fn last_date(&self) -> NaiveDate {
        self.points[self.points.len() - 1].date
    }

    /// Points dated on or before `date`.
    pub fn up_to(&self, date: NaiveDate) -> &[PricePoint] {
        let end = self.points.partition_point(|p| p.date <= date);
        &self.points[..end]
    }
}

/// Column mapping for a price CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub date_column: String,
    pub price_column: String,
}

impl CsvSchema {
    pub fn new(date_column: impl Into<String>, price_column: impl Into<String>) -> Self {
        Self {
            date_column: date_column.into(),
            price_column: price_column.into(),
        }
    }
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self::new("Date", "Value")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSeries {
    pub series: PriceSeries,
    /// Rows skipped because the price cell was empty.
    pub dropped: usize,
}

pub fn load_csv(path: impl AsRef<Path>, asset: Asset, schema: &CsvSchema) -> Result<LoadedSeries> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, asset, schema)
}

pub fn read_csv<R: Read>(reader: R, asset: Asset, schema: &CsvSchema) -> Result<LoadedSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingest {
                row: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let date_idx = column(&schema.date_column)?;
    let price_idx = column(&schema.price_column)?;

    let mut points = Vec::new();
    let mut dropped = 0;
    for (i, record) in rdr.records().enumerate() {
        // header is row 1
        let row = i + 2;
        let record = record?;
        let raw_date = record.get(date_idx).unwrap_or("");
        let raw_price = record.get(price_idx).unwrap_or("");
        if raw_price.is_empty() {
            dropped += 1;
            continue;
        }
        let date = parse_date(raw_date).map_err(|message| Error::Ingest { row, message })?;
        let price: f64 = raw_price.parse().map_err(|_| Error::Ingest {
            row,
            message: format!("unparsable price {raw_price:?}"),
        })?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Ingest {
                row,
                message: format!("non-positive price {price}"),
            });
        }
        points.push(PricePoint { date, price });
    }
    if points.is_empty() {
        return Err(Error::EmptySeries(asset.to_string()));
    }
    points.sort_by_key(|p| p.date);
    if let Some(w) = points.windows(2).find(|w| w[0].date == w[1].date) {
        return Err(Error::Ingest {
            row: 0,
            message: format!("duplicate date {}", w[0].date),
        });
    }
    Ok(LoadedSeries {
        series: PriceSeries { asset, points },
        dropped,
    })
}

/// Accepts `YYYY-MM-DD`, `YYYY/M/D` and `M/D/YYYY`. Two-digit years are rejected.
pub fn parse_date(raw: &str) -> std::result::Result<NaiveDate, String> {
    let raw = raw.trim();
    let bad = || format!("unparsable date {raw:?}");
    let sep = if raw.contains('-') { '-' } else { '/' };
    let parts: Vec<&str> = raw.split(sep).collect();
    if parts.len() != 3
        || parts
            .iter()
            .any(|p| p.is_empty() || !p.bytes().all(|b| b.is_ascii_digit()))
    {
        return Err(bad());
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
    let (y, m, d) = if parts[0].len() == 4 {
        (parts[0], parts[1], parts[2])
    } else if parts[2].len() == 4 && sep == '/' {
        (parts[2], parts[0], parts[1])
    } else {
        return Err(format!("ambiguous or two-digit year in date {raw:?}"));
    };
    let year = num(y)? as i32;
    NaiveDate::from_ymd_opt(year, num(m)?, num(d)?).ok_or_else(bad)
}

/// Both assets on the bitcoin calendar. Gold is carried forward on days
/// the gold market is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedMarket {
    pub dates: Vec<NaiveDate>,
    pub gold_price: Vec<f64>,
    pub btc_price: Vec<f64>,
    pub gold_tradable: Vec<bool>,
}

/// Restricts bitcoin to the common date range and carries gold forward.
///
/// The aligned range starts on the first day both markets trade and runs to
/// the last bitcoin observation.
pub fn align(gold: &PriceSeries, btc: &PriceSeries) -> Result<AlignedMarket> {
    let gold_pts = gold.points();
    let btc_pts = btc.points();
    let end = btc.last_date();
    let start = btc_pts
        .iter()
        .map(|p| p.date)
        .filter(|d| *d <= end)
        .find(|d| gold_pts.binary_search_by_key(d, |p| p.date).is_ok())
        .ok_or_else(|| {
            Error::Alignment(format!(
                "gold [{}, {}] and bitcoin [{}, {}] share no trading day",
                gold.first_date(),
                gold.last_date(),
                btc.first_date(),
                btc.last_date()
            ))
        })?;

    let mut market = AlignedMarket {
        dates: Vec::new(),
        gold_price: Vec::new(),
        btc_price: Vec::new(),
        gold_tradable: Vec::new(),
    };
    let mut g = gold_pts.partition_point(|p| p.date < start);
    let mut carried = gold_pts[g].price;
    for p in btc_pts.iter().filter(|p| p.date >= start && p.date <= end) {
        while g < gold_pts.len() && gold_pts[g].date < p.date {
            carried = gold_pts[g].price;
            g += 1;
        }
        let tradable = g < gold_pts.len() && gold_pts[g].date == p.date;
        if tradable {
            carried = gold_pts[g].price;
        }
        market.dates.push(p.date);
        market.gold_price.push(carried);
        market.btc_price.push(p.price);
        market.gold_tradable.push(tradable);
    }
    Ok(market)
}

impl AlignedMarket {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn price(&self, asset: Asset, day: usize) -> f64 {
        match asset {
            Asset::Cash => 1.0,
            Asset::Gold => self.gold_price[day],
            Asset::Bitcoin => self.btc_price[day],
        }
    }

    /// Native gold observations (tradable days only).
    pub fn gold_series(&self) -> Result<PriceSeries> {
        let points = self
            .dates
            .iter()
            .zip(&self.gold_price)
            .zip(&self.gold_tradable)
            .filter(|(_, t)| **t)
            .map(|((&date, &price), _)| PricePoint { date, price })
            .collect();
        PriceSeries::new(Asset::Gold, points)
    }

    pub fn btc_series(&self) -> Result<PriceSeries> {
        let points = self
            .dates
            .iter()
            .zip(&self.btc_price)
            .map(|(&date, &price)| PricePoint { date, price })
            .collect();
        PriceSeries::new(Asset::Bitcoin, points)
    }

    /// Gold closes observed on tradable days up to and including `day`.
    pub fn gold_history(&self, day: usize) -> Vec<f64> {
        self.gold_price[..=day]
            .iter()
            .zip(&self.gold_tradable[..=day])
            .filter(|(_, t)| **t)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn btc_history(&self, day: usize) -> &[f64] {
        &self.btc_price[..=day]
    }

    /// First index whose date is at least `days` calendar days after the first date.
    pub fn index_after_days(&self, days: i64) -> usize {
        let cutoff = self.dates[0] + chrono::Duration::days(days);
        self.dates.partition_point(|d| *d < cutoff)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Returns a copy restricted to `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> AlignedMarket {
        AlignedMarket {
            dates: self.dates[range.clone()].to_vec(),
            gold_price: self.gold_price[range.clone()].to_vec(),
            btc_price: self.btc_price[range.clone()].to_vec(),
            gold_tradable: self.gold_tradable[range].to_vec(),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "gold_price", "btc_price", "gold_tradable"])?;
        for i in 0..self.len() {
            w.write_record([
                self.dates[i].to_string(),
                self.gold_price[i].to_string(),
                self.btc_price[i].to_string(),
                self.gold_tradable[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut market = AlignedMarket {
            dates: Vec::new(),
            gold_price: Vec::new(),
            btc_price: Vec::new(),
            gold_tradable: Vec::new(),
        };
        for (i, record) in rdr.records().enumerate() {
            let row = i + 2;
            let record = record?;
            let field = |k: usize| record.get(k).unwrap_or("");
            let err = |message: String| Error::Ingest { row, message };
            market.dates.push(parse_date(field(0)).map_err(err)?);
            for (k, out) in [(1, &mut market.gold_price), (2, &mut market.btc_price)] {
                out.push(
                    field(k)
                        .parse()
                        .map_err(|_| err(format!("bad price {:?}", field(k))))?,
                );
            }
            market.gold_tradable.push(
                field(3)
                    .parse()
                    .map_err(|_| err(format!("bad flag {:?}", field(3))))?,
            );
        }
        if market.is_empty() {
            return Err(Error::EmptySeries("aligned market".into()));
        }
        Ok(market)
    }
}

/// `ln(next / current)`.
pub fn log_return(current: f64, next: f64) -> Result<f64> {
    if !(current > 0.0 && next > 0.0) {
        return Err(Error::Domain(format!(
            "log return needs positive prices, got {current} -> {next}"
        )));
    }
    Ok((next / current).ln())
}

/// Trailing daily log returns of `prices`.
pub fn log_returns(prices: &[f64]) -> Vec<f64> {
    prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn series(asset: Asset, pts: &[(NaiveDate, f64)]) -> PriceSeries {
        PriceSeries::new(
            asset,
            pts.iter()
                .map(|&(date, price)| PricePoint { date, price })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_two_rows() {
        let csv = "Date,Value\n2016-09-11,1324.6\n2016-09-12,1327.0\n";
        let loaded = read_csv(csv.as_bytes(), Asset::Gold, &CsvSchema::default()).unwrap();
        assert_eq!(loaded.series.len(), 2);
        assert_eq!(loaded.series.points()[0].price, 1324.6);
        assert_eq!(loaded.series.first_date(), d(2016, 9, 11));
        assert_eq!(loaded.dropped, 0);
    }

    #[test]
    fn sorts_out_of_order_rows() {
        let csv = "Date,Value\n2016-09-13,3\n2016-09-11,1\n2016-09-12,2\n";
        let loaded = read_csv(csv.as_bytes(), Asset::Gold, &CsvSchema::default()).unwrap();
        assert_eq!(loaded.series.prices(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn drops_blank_price_cells() {
        let mut csv = String::from("Date,USD (PM)\n");
        for i in 1..=10 {
            if i == 4 {
                csv.push_str(&format!("9/{i}/2016,\n"));
            } else {
                csv.push_str(&format!("9/{i}/2016,{}\n", 1300 + i));
            }
        }
        let schema = CsvSchema::new("Date", "USD (PM)");
        let loaded = read_csv(csv.as_bytes(), Asset::Gold, &schema).unwrap();
        assert_eq!(loaded.series.len(), 9);
        assert_eq!(loaded.dropped, 1);
    }

    #[test]
    fn ingest_errors() {
        let schema = CsvSchema::default();
        let bad_date = "Date,Value\n2016-09-11,1\nnot-a-date,2\n";
        match read_csv(bad_date.as_bytes(), Asset::Gold, &schema) {
            Err(Error::Ingest { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        let neg = "Date,Value\n2016-09-11,-1\n";
        assert!(matches!(
            read_csv(neg.as_bytes(), Asset::Gold, &schema),
            Err(Error::Ingest { row: 2, .. })
        ));
        let empty = "Date,Value\n2016-09-11,\n";
        assert!(matches!(
            read_csv(empty.as_bytes(), Asset::Gold, &schema),
            Err(Error::EmptySeries(_))
        ));
        let missing = "When,Value\n2016-09-11,1\n";
        assert!(read_csv(missing.as_bytes(), Asset::Gold, &schema).is_err());
    }

    #[test]
    fn date_formats() {
        assert_eq!(parse_date("2016-09-11"), Ok(d(2016, 9, 11)));
        assert_eq!(parse_date("2016/9/11"), Ok(d(2016, 9, 11)));
        assert_eq!(parse_date("9/11/2016"), Ok(d(2016, 9, 11)));
        assert!(parse_date("9/11/16").is_err());
        assert!(parse_date("16-09-11").is_err());
        assert!(parse_date("2016-02-30").is_err());
        assert!(parse_date("").is_err());
    }

    #[test]
    fn weekend_rows_carry_gold_forward() {
        // 2016-09-12 is a Monday
        let gold = series(
            Asset::Gold,
            &[(d(2016, 9, 12), 10.0), (d(2016, 9, 13), 11.0)],
        );
        let btc = series(
            Asset::Bitcoin,
            &[
                (d(2016, 9, 12), 1.0),
                (d(2016, 9, 13), 2.0),
                (d(2016, 9, 17), 3.0),
            ],
        );
        let m = align(&gold, &btc).unwrap();
        assert_eq!(
            m.dates,
            vec![d(2016, 9, 12), d(2016, 9, 13), d(2016, 9, 17)]
        );
        assert_eq!(m.gold_price[2], 11.0);
        assert_eq!(m.gold_tradable, vec![true, true, false]);
    }

    #[test]
    fn identical_calendars_are_all_tradable() {
        let pts: Vec<_> = (1..=5).map(|i| (d(2020, 1, i), i as f64)).collect();
        let m = align(&series(Asset::Gold, &pts), &series(Asset::Bitcoin, &pts)).unwrap();
        assert_eq!(m.len(), 5);
        assert!(m.gold_tradable.iter().all(|t| *t));
    }

    #[test]
    fn leading_btc_days_excluded() {
        let btc: Vec<_> = (1..=10).map(|i| (d(2020, 1, i), i as f64)).collect();
        let gold: Vec<_> = (4..=10)
            .map(|i| (d(2020, 1, i), 100.0 + i as f64))
            .collect();
        let m = align(&series(Asset::Gold, &gold), &series(Asset::Bitcoin, &btc)).unwrap();
        assert_eq!(m.len(), 7);
        assert_eq!(m.dates[0], d(2020, 1, 4));
    }

    #[test]
    fn disjoint_ranges_fail() {
        let gold = series(Asset::Gold, &[(d(2020, 1, 1), 1.0)]);
        let btc = series(Asset::Bitcoin, &[(d(2021, 1, 1), 1.0)]);
        assert!(matches!(align(&gold, &btc), Err(Error::Alignment(_))));
    }

    #[test]
    fn log_return_values() {
        assert!((log_return(100.0, 110.0).unwrap() - 0.0953101798043249).abs() < 1e-12);
        assert_eq!(log_return(42.0, 42.0).unwrap(), 0.0);
        let r = log_return(1318.7, 1322.966).unwrap();
        assert!((r - 0.003230).abs() < 5e-7, "{r}");
        assert!(log_return(0.0, 1.0).is_err());
        assert!(log_return(1.0, -1.0).is_err());
    }
}
