//! Short-horizon price forecasting: unit-root testing, differencing,
//! conditional-sum-of-squares ARIMA estimation, AIC order search, residual
//! diagnostics and one-step forecasts.

mod adf;
mod diagnostics;
mod fit;
mod ols;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adf::{
    adf_critical_values, adf_test, mackinnon_p_value, recommended_difference, AdfResult,
};
pub use diagnostics::{
    chi_squared_sf, diagnose, ljung_box, DiagnosticsReport, LjungBoxLag, DEFAULT_LB_LAGS,
};
pub use fit::{
    fit, forecast_one_step, select_order, select_order_warm, CellOutcome, FitOptions, Forecast,
    OrderSelection,
};

/// Default cap on the training window.
pub const MAX_TRAINING_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }

    /// Number of mean-equation parameters: intercept, AR and MA terms.
    pub fn n_coeffs(&self) -> usize {
        1 + self.p + self.q
    }
}

impl fmt::Display for ArimaOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.p, self.d, self.q)
    }
}

/// A fitted ARIMA(p,d,q) on the d-times differenced series `w`:
/// `w_t = c + sum(ar_i * w_{t-i}) + e_t + sum(ma_j * e_{t-j})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub intercept: f64,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    pub residual_variance: f64,
    /// Number of level observations the model was trained on.
    pub training_window: usize,
    /// One-step prediction errors over the differenced training sample.
    pub residuals: Vec<f64>,
    pub sse: f64,
    pub aic: f64,
    pub iterations: usize,
    pub ar_stationary: bool,
    pub ma_invertible: bool,
}

impl ArimaModel {
    /// A model with given coefficients and no training history.
    pub fn with_coefficients(
        order: ArimaOrder,
        intercept: f64,
        ar_coeffs: Vec<f64>,
        ma_coeffs: Vec<f64>,
        residual_variance: f64,
    ) -> Result<Self> {
        if ar_coeffs.len() != order.p || ma_coeffs.len() != order.q {
            return Err(Error::Contract(format!(
                "order {order} needs {} AR and {} MA coefficients",
                order.p, order.q
            )));
        }
        let ar_stationary = fit::roots_inside_unit_disk(&ar_coeffs);
        let ma_invertible =
            fit::roots_inside_unit_disk(&ma_coeffs.iter().map(|b| -b).collect::<Vec<_>>());
        Ok(Self {
            order,
            intercept,
            ar_coeffs,
            ma_coeffs,
            residual_variance,
            training_window: 0,
            residuals: Vec::new(),
            sse: 0.0,
            aic: f64::NAN,
            iterations: 0,
            ar_stationary,
            ma_invertible,
        })
    }

    pub fn residual_std(&self) -> f64 {
        self.residual_variance.max(0.0).sqrt()
    }

    pub fn to_json(&self, diagnostics: Option<&DiagnosticsReport>) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            order: ArimaOrder,
            intercept: f64,
            ar_coeffs: &'a [f64],
            ma_coeffs: &'a [f64],
            residual_variance: f64,
            training_window: usize,
            aic: f64,
            ar_stationary: bool,
            ma_invertible: bool,
            diagnostics: Option<&'a DiagnosticsReport>,
        }
        Ok(serde_json::to_string_pretty(&Export {
            order: self.order,
            intercept: self.intercept,
            ar_coeffs: &self.ar_coeffs,
            ma_coeffs: &self.ma_coeffs,
            residual_variance: self.residual_variance,
            training_window: self.training_window,
            aic: self.aic,
            ar_stationary: self.ar_stationary,
            ma_invertible: self.ma_invertible,
            diagnostics,
        })?)
    }
}

/// Applies `d` first-difference passes.
pub fn difference(series: &[f64], d: usize) -> Result<Vec<f64>> {
    if d > 0 && d >= series.len() {
        return Err(Error::insufficient(d + 1, series.len(), "differencing"));
    }
    let mut out = series.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    Ok(out)
}

/// Inverts [`difference`]: given the `d` original values preceding the
/// differenced segment, returns those anchors followed by the reconstructed
/// levels.
pub fn integrate(differenced: &[f64], d: usize, anchors: &[f64]) -> Result<Vec<f64>> {
    if anchors.len() != d {
        return Err(Error::Contract(format!(
            "integrating {d} times needs {d} anchors, got {}",
            anchors.len()
        )));
    }
    if d == 0 {
        return Ok(differenced.to_vec());
    }
    // The last value of each lower-order difference of the anchors seeds one
    // cumulative-sum pass.
    let mut seeds = Vec::with_capacity(d);
    let mut level = anchors.to_vec();
    for _ in 0..d {
        seeds.push(*level.last().unwrap());
        level = level.windows(2).map(|w| w[1] - w[0]).collect();
    }
    let mut current = differenced.to_vec();
    for seed in seeds.into_iter().rev() {
        let mut acc = seed;
        current = current
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
    }
    let mut out = anchors.to_vec();
    out.extend(current);
    Ok(out)
}
