use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{difference, ArimaModel};
use crate::error::{Error, Result};

/// Portmanteau lags reported by default.
pub const DEFAULT_LB_LAGS: [usize; 5] = [6, 12, 18, 24, 30];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBoxLag {
    pub q: f64,
    pub p_value: f64,
    pub df: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub ljung_box: BTreeMap<usize, LjungBoxLag>,
    pub r_squared: Option<f64>,
}

/// Upper tail of the chi-square distribution.
pub fn chi_squared_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map_or(f64::NAN, |d| d.sf(x))
}

/// Ljung-Box Q at each lag. Degrees of freedom are `lag - fitted_params`,
/// floored at one.
pub fn ljung_box(
    residuals: &[f64],
    lags: &[usize],
    fitted_params: usize,
) -> Result<DiagnosticsReport> {
    let n = residuals.len();
    if let Some(&bad) = lags.iter().find(|&&h| h == 0 || h >= n) {
        return Err(Error::Contract(format!(
            "Ljung-Box lag {bad} needs 1 <= lag < {n}"
        )));
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = residuals.iter().map(|e| e - mean).collect();
    let denom: f64 = centered.iter().map(|e| e * e).sum();
    let max_lag = lags.iter().copied().max().unwrap_or(0);

    let mut acc = Vec::with_capacity(max_lag + 1);
    acc.push(0.0);
    let mut running = 0.0;
    for k in 1..=max_lag {
        if denom > 0.0 {
            let r: f64 = centered[k..]
                .iter()
                .zip(&centered)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / denom;
            running += r * r / (n - k) as f64;
        }
        acc.push(running);
    }

    let nf = n as f64;
    let ljung_box = lags
        .iter()
        .map(|&h| {
            let q = nf * (nf + 2.0) * acc[h];
            let df = h.saturating_sub(fitted_params).max(1);
            (
                h,
                LjungBoxLag {
                    q,
                    p_value: chi_squared_sf(q, df),
                    df,
                },
            )
        })
        .collect();
    Ok(DiagnosticsReport {
        ljung_box,
        r_squared: None,
    })
}

/// Ljung-Box on the model residuals at every default lag the sample allows,
/// plus R-squared of the one-step fitted levels against `series` (the
/// training levels).
pub fn diagnose(model: &ArimaModel, series: &[f64]) -> Result<DiagnosticsReport> {
    let n = model.residuals.len();
    let lags: Vec<usize> = DEFAULT_LB_LAGS.iter().copied().filter(|&h| h < n).collect();
    let mut report = ljung_box(&model.residuals, &lags, model.order.p + model.order.q)?;
    report.r_squared = Some(r_squared(model, series)?);
    Ok(report)
}

/// `1 - SSE/SST` on levels. A level's one-step fitted value differs from
/// the observation by exactly the model residual for that day.
fn r_squared(model: &ArimaModel, series: &[f64]) -> Result<f64> {
    let w = difference(series, model.order.d)?;
    if w.len() != model.residuals.len() {
        return Err(Error::Contract(
            "series does not match the model's training sample".into(),
        ));
    }
    let levels = &series[model.order.d..];
    let mean = levels.iter().sum::<f64>() / levels.len() as f64;
    let sst: f64 = levels.iter().map(|y| (y - mean).powi(2)).sum();
    let sse: f64 = model.residuals.iter().map(|e| e * e).sum();
    Ok(if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        f64::NEG_INFINITY
    })
}
