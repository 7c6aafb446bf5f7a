use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ols::ols;
use super::{difference, integrate, ArimaModel, ArimaOrder, MAX_TRAINING_WINDOW};
use crate::error::{Error, Result};

/// Largest AR or MA order the estimator accepts.
pub const MAX_ARMA_LAG: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Longest accepted training series; `None` lifts the cap.
    pub window_cap: Option<usize>,
    pub max_iter: usize,
    /// Convergence threshold on the scaled parameter step.
    pub step_tol: f64,
    /// Convergence threshold on the relative decrease of the objective over
    /// an accepted step.
    pub sse_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window_cap: Some(MAX_TRAINING_WINDOW),
            max_iter: 200,
            step_tol: 1e-8,
            sse_tol: 1e-8,
        }
    }
}

impl FitOptions {
    pub fn uncapped() -> Self {
        Self {
            window_cap: None,
            ..Self::default()
        }
    }
}

/// Fits `order` to the level series by exact Gaussian maximum likelihood on
/// the differenced series.
///
/// The likelihood is evaluated with a Kalman filter whose state starts at
/// its stationary distribution, and the innovation variance is concentrated
/// out. Conditional least squares and a Hannan-Rissanen regression supply
/// candidate starting points; the optimizer runs from the best of them.
pub fn fit(series: &[f64], order: ArimaOrder, options: &FitOptions) -> Result<ArimaModel> {
    fit_from(series, order, options, &[])
}

/// [`fit`] with additional candidate starting points, each laid out as
/// `[mean, ar.., ma..]`.
fn fit_from(
    series: &[f64],
    order: ArimaOrder,
    options: &FitOptions,
    extra: &[Vec<f64>],
) -> Result<ArimaModel> {
    if let Some(cap) = options.window_cap {
        if series.len() > cap {
            return Err(Error::Contract(format!(
                "training window of {} exceeds the cap of {cap}",
                series.len()
            )));
        }
    }
    if order.d > 2 {
        return Err(Error::Contract(format!("difference order {} > 2", order.d)));
    }
    if order.p > MAX_ARMA_LAG || order.q > MAX_ARMA_LAG {
        return Err(Error::Contract(format!(
            "orders above {MAX_ARMA_LAG} are not supported"
        )));
    }
    let w = difference(series, order.d)?;
    let needed = 5 * order.n_coeffs();
    if w.len() < needed {
        return Err(Error::insufficient(
            needed + order.d,
            series.len(),
            "ARIMA fit",
        ));
    }

    let exact = Exact {
        w: &w,
        p: order.p,
        q: order.q,
    };
    let start = exact.best_start(options, extra)?;
    match exact.minimize(start, options) {
        Ok((theta, _, iterations)) => Ok(exact.model(order, series.len(), &theta, iterations)),
        Err(Halt::Unconverged { theta }) => Err(Error::Convergence {
            iterations: options.max_iter,
            best: Box::new(exact.model(order, series.len(), &theta, options.max_iter)),
        }),
        Err(Halt::Failed(e)) => Err(e),
    }
}

/// Parameters of a fitted model laid out as `[mean, ar.., ma..]`, padded
/// with zeros up to `order`.
fn padded_start(model: &ArimaModel, order: ArimaOrder) -> Vec<f64> {
    let mean = model.intercept / (1.0 - model.ar_coeffs.iter().sum::<f64>());
    let mut theta = vec![mean];
    theta.extend(&model.ar_coeffs);
    theta.resize(1 + order.p, 0.0);
    theta.extend(&model.ma_coeffs);
    theta.resize(order.n_coeffs(), 0.0);
    theta
}

enum Halt {
    Unconverged { theta: Vec<f64> },
    Failed(Error),
}

fn split(theta: &[f64], p: usize) -> (f64, &[f64], &[f64]) {
    (theta[0], &theta[1..1 + p], &theta[1 + p..])
}

/// Largest state dimension of the ARMA state space.
const MAX_STATE: usize = MAX_ARMA_LAG + 1;

/// Stationary state covariance of the companion-form ARMA state space, the
/// solution of `P = T P T' + g g'`, written row-major into `cov`. Only the
/// upper triangle is solved for; each equation couples at most five
/// unknowns because `T` is a companion matrix.
fn stationary_covariance(phi: &[f64], g: &[f64], cov: &mut [f64]) -> Option<()> {
    let r = phi.len();
    let idx = |i: usize, j: usize| {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        i * r - i * (i + 1) / 2 + j
    };
    let dim = r * (r + 1) / 2;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    let mut b = DVector::<f64>::zeros(dim);
    for i in 0..r {
        for j in i..r {
            let row = idx(i, j);
            a[(row, row)] += 1.0;
            a[(row, idx(0, 0))] -= phi[i] * phi[j];
            if j + 1 < r {
                a[(row, idx(0, j + 1))] -= phi[i];
            }
            if i + 1 < r {
                a[(row, idx(i + 1, 0))] -= phi[j];
            }
            if i + 1 < r && j + 1 < r {
                a[(row, idx(i + 1, j + 1))] -= 1.0;
            }
            b[row] = g[i] * g[j];
        }
    }
    let x = a.lu().solve(&b)?;
    for i in 0..r {
        for j in 0..r {
            cov[i * r + j] = x[idx(i, j)];
        }
    }
    let sane = x.iter().all(|v| v.is_finite()) && (0..r).all(|i| cov[i * r + i] >= 0.0);
    sane.then_some(())
}

/// Kalman filter for the zero-mean ARMA with coefficients `ar` and `ma` over
/// `n` observations `z(t)`. Calls `visit(t, v, f)` with each one-step
/// prediction error and its variance (in units of the innovation variance)
/// and returns the prediction of the value after the last observation.
/// Returns `None` when the AR part has no stationary distribution.
fn kalman(
    n: usize,
    z: impl Fn(usize) -> f64,
    ar: &[f64],
    ma: &[f64],
    mut visit: impl FnMut(usize, f64, f64),
) -> Option<f64> {
    if !roots_inside_unit_disk(ar) {
        return None;
    }
    let r = ar.len().max(ma.len() + 1);
    let mut phi = [0.0; MAX_STATE];
    phi[..ar.len()].copy_from_slice(ar);
    let mut g = [0.0; MAX_STATE];
    g[0] = 1.0;
    g[1..=ma.len()].copy_from_slice(ma);
    let (phi, g) = (&phi[..r], &g[..r]);

    let mut cov_a = [0.0; MAX_STATE * MAX_STATE];
    let mut cov_b = [0.0; MAX_STATE * MAX_STATE];
    let (mut cov, mut next_cov) = (&mut cov_a, &mut cov_b);
    let mut tp = [0.0; MAX_STATE * MAX_STATE];
    stationary_covariance(phi, g, &mut cov[..r * r])?;
    let mut gain = [0.0; MAX_STATE];
    let mut state = [0.0; MAX_STATE];
    let mut steady = false;
    for t in 0..n {
        let err = z(t) - state[0];
        let var = cov[0];
        if !(var > 0.0 && var.is_finite()) {
            return None;
        }
        if !steady {
            // T P, then the symmetric update P <- T P T' + g g' - K K' f
            for i in 0..r {
                let below = if i + 1 < r {
                    &cov[(i + 1) * r..(i + 2) * r]
                } else {
                    &[][..]
                };
                for j in 0..r {
                    tp[i * r + j] = phi[i] * cov[j] + below.get(j).copied().unwrap_or(0.0);
                }
                gain[i] = tp[i * r] / var;
            }
            let mut change = 0.0f64;
            let mut size = 0.0f64;
            for i in 0..r {
                for j in i..r {
                    let right = if j + 1 < r { tp[i * r + j + 1] } else { 0.0 };
                    let value = tp[i * r] * phi[j] + right + g[i] * g[j] - gain[i] * gain[j] * var;
                    change = change.max((value - cov[i * r + j]).abs());
                    size = size.max(value.abs());
                    next_cov[i * r + j] = value;
                    next_cov[j * r + i] = value;
                }
            }
            std::mem::swap(&mut cov, &mut next_cov);
            steady = change <= 1e-14 * size.max(1.0);
        }
        let lead = state[0];
        for i in 0..r {
            let below = if i + 1 < r { state[i + 1] } else { 0.0 };
            state[i] = phi[i] * lead + below + gain[i] * err;
        }
        visit(t, err, var);
    }
    Some(state[0])
}

/// Iterations over which [`STALL_TOL`] is measured.
const STALL_WINDOW: usize = 10;
/// The exact fit stops once `-2 log L` has improved by less than this over
/// the last [`STALL_WINDOW`] iterations; slow progress along a likelihood
/// ridge otherwise runs into the iteration cap.
const STALL_TOL: f64 = 1e-2;

/// Concentrated exact likelihood of an ARMA(p, q) with mean on one sample.
/// Parameters are `[mean, ar.., ma..]`.
struct Exact<'a> {
    w: &'a [f64],
    p: usize,
    q: usize,
}

impl Exact<'_> {
    fn k(&self) -> usize {
        1 + self.p + self.q
    }

    /// Runs the filter at `theta`, visiting each prediction error and its
    /// relative variance.
    fn filter(&self, theta: &[f64], visit: impl FnMut(usize, f64, f64)) -> Option<f64> {
        let (mu, ar, ma) = split(theta, self.p);
        kalman(self.w.len(), |t| self.w[t] - mu, ar, ma, visit)
    }

    /// Writes residuals whose sum of squares, `sum(v^2/f) * gm(f)` with `gm`
    /// the geometric mean, is minimised exactly where the likelihood is
    /// maximised. Returns that sum.
    fn objective(&self, theta: &[f64], out: &mut [f64]) -> Option<f64> {
        let mut log_f = 0.0;
        self.filter(theta, |t, v, f| {
            out[t] = v / f.sqrt();
            log_f += f.ln();
        })?;
        let scale = (0.5 * log_f / self.w.len() as f64).exp();
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o *= scale;
            total += *o * *o;
        }
        total.is_finite().then_some(total)
    }

    /// The best starting point by likelihood among the sample mean with
    /// zero coefficients, a conditional least squares fit, a Hannan-Rissanen
    /// regression and `extra`. AR parts are shrunk until stationary.
    fn best_start(
        &self,
        options: &FitOptions,
        extra: &[Vec<f64>],
    ) -> std::result::Result<Vec<f64>, Error> {
        let mean = self.w.iter().sum::<f64>() / self.w.len() as f64;
        let mut naive = vec![0.0; self.k()];
        naive[0] = mean;
        let mut candidates = vec![naive];
        let css = Css {
            w: self.w,
            p: self.p,
            q: self.q,
        };
        if self.p + self.q > 0 {
            let quick = FitOptions {
                max_iter: options.max_iter.min(50),
                ..*options
            };
            match css.minimize(&quick) {
                Ok((mut theta, _, _)) | Err(Halt::Unconverged { mut theta }) => {
                    theta[0] = mean;
                    candidates.push(theta);
                }
                Err(Halt::Failed(_)) => {}
            }
            if let Some(mut hr) = css.hannan_rissanen() {
                hr[0] = mean;
                candidates.push(hr);
            }
        }
        candidates.extend(
            extra
                .iter()
                .filter(|t| t.len() == self.k() && t[0].is_finite())
                .cloned(),
        );
        let mut scratch = vec![0.0; self.w.len()];
        candidates
            .into_iter()
            .filter_map(|mut theta| {
                let ar = &mut theta[1..1 + self.p];
                for _ in 0..60 {
                    if roots_inside_unit_disk(ar) {
                        break;
                    }
                    ar.iter_mut().for_each(|a| *a *= 0.9);
                }
                if !roots_inside_unit_disk(ar) {
                    ar.fill(0.0);
                }
                self.objective(&theta, &mut scratch).map(|obj| (obj, theta))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, theta)| theta)
            .ok_or_else(|| Error::Conditioning("no starting point has a finite likelihood".into()))
    }

    /// Forward-difference Jacobian of the objective residuals, column-major.
    /// Steps back instead of forward when the forward point leaves the
    /// stationary region.
    fn jacobian(
        &self,
        theta: &[f64],
        base: &[f64],
        jac: &mut [f64],
        scratch: &mut [f64],
    ) -> Option<()> {
        let n = self.w.len();
        let mut probe = theta.to_vec();
        for c in 0..self.k() {
            let h = 1.5e-8 * (1.0 + theta[c].abs());
            probe[c] = theta[c] + h;
            let sign = if self.objective(&probe, scratch).is_some() {
                1.0
            } else {
                probe[c] = theta[c] - h;
                self.objective(&probe, scratch)?;
                -1.0
            };
            let col = &mut jac[c * n..][..n];
            for ((j, s), b) in col.iter_mut().zip(scratch.iter()).zip(base) {
                *j = sign * (s - b) / h;
            }
            probe[c] = theta[c];
        }
        Some(())
    }

    /// Levenberg-Marquardt on the objective residuals.
    fn minimize(
        &self,
        mut theta: Vec<f64>,
        options: &FitOptions,
    ) -> std::result::Result<(Vec<f64>, f64, usize), Halt> {
        let (n, k) = (self.w.len(), self.k());
        let mut res = vec![0.0; n];
        let mut trial_res = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut obj = self.objective(&theta, &mut res).ok_or_else(|| {
            Halt::Failed(Error::Conditioning(
                "starting point has no stationary distribution".into(),
            ))
        })?;
        if obj == 0.0 {
            return Ok((theta, obj, 0));
        }
        let mut jac = vec![0.0; n * k];
        let mut jtj = vec![0.0; k * k];
        let mut jtr = vec![0.0; k];
        let mut trial = vec![0.0; k];
        let mut lambda = 1e-3;
        let mut nu = 2.0;
        // objective at the start of each of the last STALL_WINDOW iterations
        let mut history = [f64::INFINITY; STALL_WINDOW];
        for iter in 1..=options.max_iter {
            let slot = iter % STALL_WINDOW;
            if iter > STALL_WINDOW && n as f64 * (history[slot] / obj).ln() < STALL_TOL {
                return Ok((theta, obj, iter - 1));
            }
            history[slot] = obj;
            self.jacobian(&theta, &res, &mut jac, &mut scratch)
                .ok_or_else(|| {
                    Halt::Failed(Error::Conditioning(
                        "no stationary neighbourhood around the estimate".into(),
                    ))
                })?;
            for r in 0..k {
                let cr = &jac[r * n..][..n];
                jtr[r] = cr.iter().zip(&res).map(|(a, b)| a * b).sum();
                for c in r..k {
                    let v: f64 = cr.iter().zip(&jac[c * n..][..n]).map(|(a, b)| a * b).sum();
                    jtj[r * k + c] = v;
                    jtj[c * k + r] = v;
                }
            }
            if (0..k).any(|i| jtj[i * k + i] == 0.0) {
                return Err(Halt::Failed(Error::Conditioning(
                    "a parameter has no influence on the likelihood".into(),
                )));
            }
            let rhs = DVector::from_iterator(k, jtr.iter().map(|g| -g));
            loop {
                let a = DMatrix::from_fn(k, k, |r, c| {
                    let v = jtj[r * k + c];
                    if r == c {
                        v * (1.0 + lambda)
                    } else {
                        v
                    }
                });
                let step = a
                    .cholesky()
                    .ok_or_else(|| {
                        Halt::Failed(Error::Conditioning(
                            "damped normal equations are not positive definite".into(),
                        ))
                    })?
                    .solve(&rhs);
                let small = step
                    .iter()
                    .zip(&theta)
                    .all(|(s, th)| s.abs() <= options.step_tol * (1.0 + th.abs()));
                for ((tr, th), st) in trial.iter_mut().zip(&theta).zip(step.iter()) {
                    *tr = th + st;
                }
                match self.objective(&trial, &mut trial_res) {
                    Some(trial_obj) if trial_obj <= obj => {
                        // gain ratio against the linearised model steers the damping
                        let predicted: f64 = (0..k)
                            .map(|i| step[i] * (rhs[i] + lambda * jtj[i * k + i] * step[i]))
                            .sum();
                        let rho = if predicted > 0.0 {
                            (obj - trial_obj) / predicted
                        } else {
                            0.0
                        };
                        let flat = obj - trial_obj <= options.sse_tol * obj;
                        std::mem::swap(&mut theta, &mut trial);
                        std::mem::swap(&mut res, &mut trial_res);
                        obj = trial_obj;
                        lambda =
                            (lambda * (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0)).max(1e-12);
                        nu = 2.0;
                        if small || flat {
                            return Ok((theta, obj, iter));
                        }
                        break;
                    }
                    _ => {}
                }
                if small {
                    // no descent left at the tolerance scale
                    return Ok((theta, obj, iter));
                }
                lambda *= nu;
                nu *= 2.0;
                if lambda > 1e16 {
                    return Ok((theta, obj, iter));
                }
            }
        }
        Err(Halt::Unconverged { theta })
    }

    fn model(
        &self,
        order: ArimaOrder,
        window: usize,
        theta: &[f64],
        iterations: usize,
    ) -> ArimaModel {
        let (mu, ar, ma) = split(theta, self.p);
        let mut residuals = vec![0.0; self.w.len()];
        let (mut sse, mut log_f) = (0.0, 0.0);
        self.filter(theta, |t, v, f| {
            residuals[t] = v;
            sse += v * v / f;
            log_f += f.ln();
        })
        .expect("accepted parameters always have a stationary distribution");
        let n = self.w.len() as f64;
        let variance = sse / n;
        let k = (order.n_coeffs() + 1) as f64;
        let aic = n * ((2.0 * std::f64::consts::PI * variance).ln() + 1.0) + log_f + 2.0 * k;
        ArimaModel {
            order,
            intercept: mu * (1.0 - ar.iter().sum::<f64>()),
            ar_coeffs: ar.to_vec(),
            ma_coeffs: ma.to_vec(),
            residual_variance: variance,
            training_window: window,
            residuals,
            sse,
            aic,
            iterations,
            ar_stationary: roots_inside_unit_disk(ar),
            ma_invertible: roots_inside_unit_disk(&ma.iter().map(|b| -b).collect::<Vec<_>>()),
        }
    }
}

/// Conditional-sum-of-squares objective with zero presample innovations,
/// used for starting values. Parameters are `[intercept, ar.., ma..]`.
struct Css<'a> {
    w: &'a [f64],
    p: usize,
    q: usize,
}

impl Css<'_> {
    fn k(&self) -> usize {
        1 + self.p + self.q
    }

    /// Writes residuals into `e` (same length as the sample) and returns
    /// their sum of squares from index `p` on.
    fn residuals_into(&self, theta: &[f64], e: &mut [f64]) -> f64 {
        let (c, ar, ma) = split(theta, self.p);
        let n = self.w.len();
        e[..self.p].fill(0.0);
        let mut sse = 0.0;
        for t in self.p..n {
            let mut v = self.w[t] - c;
            for (i, a) in ar.iter().enumerate() {
                v -= a * self.w[t - 1 - i];
            }
            for (j, b) in ma.iter().enumerate() {
                if t > j {
                    v -= b * e[t - 1 - j];
                }
            }
            e[t] = v;
            sse += v * v;
        }
        sse
    }

    /// Accumulates `J'J` (row-major, k x k) and `J'e` from the analytic
    /// residual derivatives. The MA terms make each derivative row depend on
    /// the previous `q` rows, which are kept in a ring buffer.
    fn normal_equations(
        &self,
        theta: &[f64],
        e: &[f64],
        jtj: &mut [f64],
        jte: &mut [f64],
        ring: &mut [f64],
    ) {
        let (_, _, ma) = split(theta, self.p);
        let (p, q, k) = (self.p, self.q, self.k());
        jtj.fill(0.0);
        jte.fill(0.0);
        ring.fill(0.0);
        let mut g = [0.0; 1 + 2 * MAX_ARMA_LAG];
        let g = &mut g[..k];
        for t in p..self.w.len() {
            g[0] = -1.0;
            for i in 0..p {
                g[1 + i] = -self.w[t - 1 - i];
            }
            for j in 0..q {
                g[1 + p + j] = if t > j { -e[t - 1 - j] } else { 0.0 };
            }
            for (j, b) in ma.iter().enumerate() {
                if t > j {
                    let prev = &ring[((t - 1 - j) % q) * k..][..k];
                    for (gi, pi) in g.iter_mut().zip(prev) {
                        *gi -= b * pi;
                    }
                }
            }
            for r in 0..k {
                let gr = g[r];
                jte[r] += gr * e[t];
                for c in r..k {
                    jtj[r * k + c] += gr * g[c];
                }
            }
            if q > 0 {
                ring[(t % q) * k..][..k].copy_from_slice(g);
            }
        }
        for r in 0..k {
            for c in 0..r {
                jtj[r * k + c] = jtj[c * k + r];
            }
        }
    }

    /// Long-AR residual proxies followed by one linear regression.
    fn hannan_rissanen(&self) -> Option<Vec<f64>> {
        let n = self.w.len();
        let (p, q) = (self.p, self.q);
        let mut resid = vec![0.0; n];
        let mut lead = 0;
        if q > 0 {
            let long = (2 * (p + q)).max(6).min(n / 4);
            if long == 0 || n <= long + 2 {
                return None;
            }
            let rows: Vec<Vec<f64>> = (long..n)
                .map(|t| {
                    let mut r = vec![1.0];
                    r.extend((1..=long).map(|i| self.w[t - i]));
                    r
                })
                .collect();
            let fit = ols(&rows, &self.w[long..]).ok()?;
            for t in long..n {
                let pred: f64 = rows[t - long]
                    .iter()
                    .zip(&fit.coeffs)
                    .map(|(x, b)| x * b)
                    .sum();
                resid[t] = self.w[t] - pred;
            }
            lead = long;
        }
        let first = (lead + q).max(p);
        if n <= first + self.k() {
            return None;
        }
        let rows: Vec<Vec<f64>> = (first..n)
            .map(|t| {
                let mut r = vec![1.0];
                r.extend((1..=p).map(|i| self.w[t - i]));
                r.extend((1..=q).map(|j| resid[t - j]));
                r
            })
            .collect();
        ols(&rows, &self.w[first..]).ok().map(|f| f.coeffs)
    }

    /// Damped Gauss-Newton from the Hannan-Rissanen point (or the mean).
    fn minimize(&self, options: &FitOptions) -> std::result::Result<(Vec<f64>, f64, usize), Halt> {
        let k = self.k();
        let n = self.w.len();
        let mut theta = self.hannan_rissanen().unwrap_or_else(|| {
            let mut th = vec![0.0; k];
            th[0] = self.w.iter().sum::<f64>() / n as f64;
            th
        });
        let mut e = vec![0.0; n];
        let mut trial_e = vec![0.0; n];
        let mut sse = self.residuals_into(&theta, &mut e);
        if sse == 0.0 || !sse.is_finite() {
            return Ok((theta, sse, 0));
        }
        let mut jtj = vec![0.0; k * k];
        let mut jte = vec![0.0; k];
        let mut ring = vec![0.0; self.q.max(1) * k];
        let mut trial = vec![0.0; k];
        let mut lambda = 1e-3;
        for iter in 1..=options.max_iter {
            self.normal_equations(&theta, &e, &mut jtj, &mut jte, &mut ring);
            if (0..k).any(|i| jtj[i * k + i] == 0.0) {
                return Err(Halt::Failed(Error::Conditioning(
                    "a parameter has no influence on the residuals".into(),
                )));
            }
            let rhs = DVector::from_iterator(k, jte.iter().map(|g| -g));
            loop {
                let a = DMatrix::from_fn(k, k, |r, c| {
                    let v = jtj[r * k + c];
                    if r == c {
                        v * (1.0 + lambda)
                    } else {
                        v
                    }
                });
                let Some(chol) = a.cholesky() else {
                    return Err(Halt::Unconverged { theta });
                };
                let step = chol.solve(&rhs);
                let small = step
                    .iter()
                    .zip(&theta)
                    .all(|(s, th)| s.abs() <= options.step_tol * (1.0 + th.abs()));
                for ((tr, th), st) in trial.iter_mut().zip(&theta).zip(step.iter()) {
                    *tr = th + st;
                }
                let trial_sse = self.residuals_into(&trial, &mut trial_e);
                if trial_sse.is_finite() && trial_sse <= sse {
                    let flat = sse - trial_sse <= options.sse_tol * sse;
                    std::mem::swap(&mut theta, &mut trial);
                    std::mem::swap(&mut e, &mut trial_e);
                    sse = trial_sse;
                    lambda = (lambda / 10.0).max(1e-12);
                    if small || flat {
                        return Ok((theta, sse, iter));
                    }
                    break;
                }
                if small {
                    return Ok((theta, sse, iter));
                }
                lambda *= 10.0;
                if lambda > 1e16 {
                    return Ok((theta, sse, iter));
                }
            }
        }
        Err(Halt::Unconverged { theta })
    }
}

/// True when `x^n - a_1 x^(n-1) - ... - a_n` has every root strictly inside
/// the unit circle, i.e. the lag polynomial `1 - sum(a_i L^i)` is stable.
/// Uses the step-down recursion: stable iff every reflection coefficient
/// has magnitude below one.
pub(crate) fn roots_inside_unit_disk(coeffs: &[f64]) -> bool {
    let mut phi = coeffs.to_vec();
    while let Some(&k) = phi.last() {
        if !(k.abs() < 1.0) {
            return false;
        }
        let m = phi.len();
        let denom = 1.0 - k * k;
        phi = (0..m - 1)
            .map(|i| (phi[i] + k * phi[m - 2 - i]) / denom)
            .collect();
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub order: ArimaOrder,
    pub aic: Option<f64>,
    pub error: Option<String>,
    /// Estimated `[mean, ar.., ma..]` when the cell converged.
    pub estimate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub best: ArimaModel,
    /// Every grid cell in (p, q) order.
    pub cells: Vec<CellOutcome>,
}

impl OrderSelection {
    pub fn order(&self) -> ArimaOrder {
        self.best.order
    }
}

/// Fits every `(p, q)` up to the bounds at difference order `d` and keeps the
/// minimum-AIC model. Cells that fail are recorded and skipped.
pub fn select_order(
    series: &[f64],
    d: usize,
    max_p: usize,
    max_q: usize,
    options: &FitOptions,
) -> Result<OrderSelection> {
    select_order_warm(series, d, max_p, max_q, options, None)
}

/// [`select_order`] that also tries each cell's estimate from `previous`
/// (typically the selection on the preceding, overlapping window) as a
/// starting point.
pub fn select_order_warm(
    series: &[f64],
    d: usize,
    max_p: usize,
    max_q: usize,
    options: &FitOptions,
    previous: Option<&OrderSelection>,
) -> Result<OrderSelection> {
    let grid: Vec<ArimaOrder> = (0..=max_p)
        .flat_map(|p| (0..=max_q).map(move |q| ArimaOrder::new(p, d, q)))
        .collect();
    // Cells are fitted in order of p + q so that each can also start from
    // its smaller neighbours' optima.
    let mut fits: Vec<Option<Result<ArimaModel>>> = grid.iter().map(|_| None).collect();
    let at = |p: usize, q: usize| p * (max_q + 1) + q;
    for total in 0..=max_p + max_q {
        let cells: Vec<usize> = (0..grid.len())
            .filter(|&i| grid[i].p + grid[i].q == total)
            .collect();
        let done = &fits;
        let fitted: Vec<(usize, Result<ArimaModel>)> = cells
            .par_iter()
            .map(|&i| {
                let order = grid[i];
                let mut extra = Vec::new();
                let neighbours = [
                    (order.p > 0).then(|| at(order.p - 1, order.q)),
                    (order.q > 0).then(|| at(order.p, order.q - 1)),
                ];
                for j in neighbours.into_iter().flatten() {
                    if let Some(Ok(model)) = &done[j] {
                        extra.push(padded_start(model, order));
                    }
                }
                let warm = previous.and_then(|sel| sel.cells.iter().find(|c| c.order == order));
                if let Some(estimate) = warm.and_then(|c| c.estimate.as_ref()) {
                    extra.push(estimate.clone());
                }
                (i, fit_from(series, order, options, &extra))
            })
            .collect();
        for (i, f) in fitted {
            fits[i] = Some(f);
        }
    }
    let fits = fits.into_iter().map(|f| f.expect("every cell is fitted"));

    let mut best: Option<ArimaModel> = None;
    let mut cells = Vec::with_capacity(grid.len());
    for (order, fitted) in grid.iter().zip(fits) {
        match fitted {
            Ok(model) => {
                cells.push(CellOutcome {
                    order: *order,
                    aic: Some(model.aic),
                    error: None,
                    estimate: Some(padded_start(&model, *order)),
                });
                if best.as_ref().is_none_or(|b| model.aic < b.aic) {
                    best = Some(model);
                }
            }
            Err(e) => cells.push(CellOutcome {
                order: *order,
                aic: None,
                error: Some(e.to_string()),
                estimate: None,
            }),
        }
    }
    match best {
        Some(best) => Ok(OrderSelection { best, cells }),
        None => Err(Error::Selection(
            cells
                .into_iter()
                .map(|c| (c.order, c.error.unwrap_or_default()))
                .collect(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    /// Point forecast of the next level.
    pub level: f64,
    /// Residual standard deviation, used as a one-sigma band.
    pub std_dev: f64,
    pub order: ArimaOrder,
}

/// One-step-ahead level forecast from the latest observations.
///
/// The differenced `recent` values are filtered through the model, so the
/// forecast is the exact conditional mean given that history. Models whose
/// AR part is not stationary fall back to a conditional recursion with zero
/// presample innovations.
pub fn forecast_one_step(model: &ArimaModel, recent: &[f64]) -> Result<Forecast> {
    let ArimaOrder { p, d, q } = model.order;
    let needed = p.max(q) + d;
    if recent.len() < needed.max(d + 1) {
        return Err(Error::Contract(format!(
            "forecast from {} needs at least {} observations, got {}",
            model.order,
            needed.max(d + 1),
            recent.len()
        )));
    }
    let w = difference(recent, d)?;
    let ar_sum: f64 = model.ar_coeffs.iter().sum();
    let mu = model.intercept / (1.0 - ar_sum);
    let filtered = kalman(
        w.len(),
        |t| w[t] - mu,
        &model.ar_coeffs,
        &model.ma_coeffs,
        |_, _, _| {},
    );
    let next = match filtered {
        Some(next) if mu.is_finite() => mu + next,
        _ => {
            let mut theta = vec![model.intercept];
            theta.extend(&model.ar_coeffs);
            theta.extend(&model.ma_coeffs);
            let mut e = vec![0.0; w.len()];
            Css { w: &w, p, q }.residuals_into(&theta, &mut e);
            let n = w.len();
            let mut next = model.intercept;
            for (i, a) in model.ar_coeffs.iter().enumerate() {
                next += a * w[n - 1 - i];
            }
            for (j, b) in model.ma_coeffs.iter().enumerate() {
                if n > j {
                    next += b * e[n - 1 - j];
                }
            }
            next
        }
    };
    let levels = integrate(&[next], d, &recent[recent.len() - d..])?;
    Ok(Forecast {
        level: *levels.last().unwrap(),
        std_dev: model.residual_std(),
        order: model.order,
    })
}
