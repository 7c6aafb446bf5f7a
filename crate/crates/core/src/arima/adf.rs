use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::difference;
use super::ols::ols;
use crate::error::{Error, Result};

/// Minimum series length at every tested difference order.
pub const MIN_ADF_LENGTH: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub difference_order: usize,
    pub t_stat: f64,
    pub p_value: f64,
    /// AIC of the best augmented regression in the lag search.
    pub aic: f64,
    pub used_lags: usize,
    pub nobs: usize,
    /// Critical values keyed by level in percent (1, 5, 10).
    pub thresholds: BTreeMap<u8, f64>,
}

/// Runs the constant-only ADF regression on the series differenced
/// `0..=max_d` times. Lag order is chosen by AIC up to `12 (n/100)^(1/4)`.
pub fn adf_test(series: &[f64], max_d: usize) -> Result<Vec<AdfResult>> {
    if series.len() < MIN_ADF_LENGTH + max_d {
        return Err(Error::insufficient(
            MIN_ADF_LENGTH + max_d,
            series.len(),
            "ADF test",
        ));
    }
    (0..=max_d)
        .map(|d| {
            let x = difference(series, d)?;
            let mut r = adf_single(&x)?;
            r.difference_order = d;
            Ok(r)
        })
        .collect()
}

/// Smallest tested order whose p-value is below 5%.
pub fn recommended_difference(results: &[AdfResult]) -> Option<usize> {
    results
        .iter()
        .find(|r| r.p_value < 0.05)
        .map(|r| r.difference_order)
}

fn adf_single(x: &[f64]) -> Result<AdfResult> {
    let n = x.len();
    let dx: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let schwert = (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize;
    // keep enough rows for the largest regression
    let maxlag = schwert.min(dx.len().saturating_sub(4) / 2);

    let design = |lags: usize, first: usize| -> (Vec<Vec<f64>>, Vec<f64>) {
        let rows = (first..dx.len())
            .map(|s| {
                let mut row = Vec::with_capacity(lags + 2);
                row.push(1.0);
                row.push(x[s]);
                row.extend((1..=lags).map(|j| dx[s - j]));
                row
            })
            .collect();
        (rows, dx[first..].to_vec())
    };

    // Lag search on a common sample starting at maxlag.
    let mut best: Option<(f64, usize)> = None;
    for lags in 0..=maxlag {
        let (rows, y) = design(lags, maxlag);
        let Ok(fit) = ols(&rows, &y) else { continue };
        let aic = fit.aic();
        if best.is_none_or(|(b, _)| aic < b) {
            best = Some((aic, lags));
        }
    }
    let (aic, used_lags) =
        best.ok_or_else(|| Error::Conditioning("no ADF regression could be fitted".into()))?;

    let (rows, y) = design(used_lags, used_lags);
    let fit = ols(&rows, &y)?;
    let t_stat = if fit.std_errors[1] > 0.0 {
        fit.coeffs[1] / fit.std_errors[1]
    } else {
        // exact fit: the level coefficient is determined without error
        -f64::INFINITY * fit.coeffs[1].signum()
    };
    let nobs = fit.nobs;
    Ok(AdfResult {
        difference_order: 0,
        t_stat,
        p_value: mackinnon_p_value(t_stat),
        aic,
        used_lags,
        nobs,
        thresholds: adf_critical_values(nobs),
    })
}

/// Response-surface critical values for the constant-only regression with
/// one integrated variable, evaluated at `nobs`.
pub fn adf_critical_values(nobs: usize) -> BTreeMap<u8, f64> {
    const TABLE: [(u8, [f64; 4]); 3] = [
        (1, [-3.43035, -6.5393, -16.786, -79.433]),
        (5, [-2.86154, -2.8903, -4.234, -40.04]),
        (10, [-2.56677, -1.5384, -2.809, 0.0]),
    ];
    let inv = 1.0 / nobs as f64;
    TABLE
        .iter()
        .map(|(level, b)| {
            (
                *level,
                b[0] + b[1] * inv + b[2] * inv * inv + b[3] * inv * inv * inv,
            )
        })
        .collect()
}

/// Approximate asymptotic p-value of the constant-only ADF statistic.
pub fn mackinnon_p_value(t_stat: f64) -> f64 {
    const TAU_MAX: f64 = 2.74;
    const TAU_MIN: f64 = -18.83;
    const TAU_STAR: f64 = -1.61;
    const SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
    const LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];
    if t_stat.is_nan() {
        return f64::NAN;
    }
    if t_stat > TAU_MAX {
        return 1.0;
    }
    if t_stat < TAU_MIN {
        return 0.0;
    }
    let coeffs: &[f64] = if t_stat <= TAU_STAR {
        &SMALL_P
    } else {
        &LARGE_P
    };
    let z = coeffs.iter().rev().fold(0.0, |acc, c| acc * t_stat + c);
    Normal::standard().cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values_match_reference_table() {
        // The reference ADF table lists -3.507 / -2.895 / -2.585 for a
        // 93-observation window, which corresponds to 88 regression rows.
        let cv = adf_critical_values(88);
        assert!((cv[&1] - -3.507).abs() < 1e-3, "{cv:?}");
        assert!((cv[&5] - -2.895).abs() < 1e-3, "{cv:?}");
        assert!((cv[&10] - -2.585).abs() < 1e-3, "{cv:?}");
        assert!(cv[&1] < cv[&5] && cv[&5] < cv[&10]);
    }

    #[test]
    fn p_values_match_reference_table() {
        assert!((mackinnon_p_value(0.321) - 0.978).abs() < 1e-3);
        assert!(mackinnon_p_value(-5.988) < 0.001);
        assert!(mackinnon_p_value(-7.477) < 0.001);
        assert_eq!(mackinnon_p_value(3.0), 1.0);
        assert_eq!(mackinnon_p_value(-20.0), 0.0);
        // continuity at the switch point is approximate
        let lo = mackinnon_p_value(-1.61 - 1e-9);
        let hi = mackinnon_p_value(-1.61 + 1e-9);
        assert!((lo - hi).abs() < 0.01);
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            adf_test(&[1.0; 20], 1),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn reports_one_result_per_order() {
        let x: Vec<f64> = (0..120)
            .map(|t| (t as f64 * 0.7).sin() + 0.01 * t as f64)
            .collect();
        let res = adf_test(&x, 2).unwrap();
        assert_eq!(res.len(), 3);
        for (d, r) in res.iter().enumerate() {
            assert_eq!(r.difference_order, d);
            assert!((0.0..=1.0).contains(&r.p_value));
        }
    }
}
