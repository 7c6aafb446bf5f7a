#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use lazyfolio::market_data::AlignedMarket;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normals(seed: u64, n: usize) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
}

pub fn random_walk(seed: u64, n: usize) -> Vec<f64> {
    let mut level = 100.0;
    normals(seed, n)
        .into_iter()
        .map(|e| {
            level += e;
            level
        })
        .collect()
}

/// Stationary AR(1) with zero mean, after a burn-in.
pub fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let burn = 200;
    let mut x = 0.0;
    normals(seed, n + burn)
        .into_iter()
        .map(|e| {
            x = phi * x + e;
            x
        })
        .skip(burn)
        .collect()
}

/// Levels of an ARIMA(p,1,q) process with unit innovations:
/// `w_t = c + sum ar_i w_{t-i} + e_t + sum ma_j e_{t-j}`, cumulated from 100.
pub fn arima_levels(seed: u64, n: usize, c: f64, ar: &[f64], ma: &[f64]) -> Vec<f64> {
    let burn = 300;
    let e = normals(seed, n + burn);
    let mut w = vec![0.0; n + burn];
    for t in 0..n + burn {
        let mut v = c + e[t];
        for (i, a) in ar.iter().enumerate() {
            if t > i {
                v += a * w[t - i - 1];
            }
        }
        for (j, b) in ma.iter().enumerate() {
            if t > j {
                v += b * e[t - j - 1];
            }
        }
        w[t] = v;
    }
    let mut level = 100.0;
    w[burn..]
        .iter()
        .map(|d| {
            level += d;
            level
        })
        .collect()
}

pub fn day(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// A market on consecutive calendar days with gold closed on weekends.
pub fn market(start: NaiveDate, gold: Vec<f64>, btc: Vec<f64>) -> AlignedMarket {
    use chrono::Datelike;
    let dates: Vec<NaiveDate> = (0..btc.len())
        .map(|i| start + Duration::days(i as i64))
        .collect();
    let tradable: Vec<bool> = dates
        .iter()
        .map(|d| d.weekday().number_from_monday() <= 5)
        .collect();
    let mut gold_price = Vec::with_capacity(gold.len());
    for i in 0..gold.len() {
        if i > 0 && !tradable[i] {
            gold_price.push(gold_price[i - 1]);
        } else {
            gold_price.push(gold[i]);
        }
    }
    let mut tradable = tradable;
    tradable[0] = true;
    AlignedMarket {
        dates,
        gold_price,
        btc_price: btc,
        gold_tradable: tradable,
    }
}

/// Geometric random walks for both assets.
pub fn random_market(seed: u64, days: usize, gold_vol: f64, btc_vol: f64) -> AlignedMarket {
    let z = normals(seed, 2 * days);
    let mut g = 1300.0;
    let mut b = 600.0;
    let mut gold = Vec::with_capacity(days);
    let mut btc = Vec::with_capacity(days);
    for i in 0..days {
        if i > 0 {
            g *= (gold_vol * z[2 * i] + 0.0002).exp();
            b *= (btc_vol * z[2 * i + 1] + 0.002).exp();
        }
        gold.push(g);
        btc.push(b);
    }
    market(day(2016, 9, 11), gold, btc)
}
