use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) struct OlsFit {
    pub coeffs: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ssr: f64,
    pub nobs: usize,
}

impl OlsFit {
    /// Gaussian log-likelihood based AIC, counting every regressor.
    pub fn aic(&self) -> f64 {
        let n = self.nobs as f64;
        let llf = -n / 2.0 * ((2.0 * std::f64::consts::PI).ln() + (self.ssr / n).ln() + 1.0);
        -2.0 * llf + 2.0 * self.coeffs.len() as f64
    }
}

/// Least squares on a row-major design matrix.
pub(crate) fn ols(rows: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if n <= k {
        return Err(Error::insufficient(k + 1, n, "least squares"));
    }
    let x = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &yv;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Conditioning("design matrix is rank deficient".into()))?;
    let beta = chol.solve(&xty);
    let resid = &yv - &x * &beta;
    let ssr = resid.norm_squared();
    let sigma2 = ssr / (n - k) as f64;
    let inv = chol.inverse();
    let std_errors = (0..k)
        .map(|j| (sigma2 * inv[(j, j)]).max(0.0).sqrt())
        .collect();
    Ok(OlsFit {
        coeffs: beta.iter().copied().collect(),
        std_errors,
        ssr,
        nobs: n,
    })
}
