use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::stats::expit;

/// Iteration limits for [`fit_logistic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iterations: usize,
    /// Convergence threshold on the sup-norm of the score.
    pub tolerance: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 25,
            tolerance: 1e-8,
        }
    }
}

/// Weighted logistic regression fit.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    /// `sum_i w_i p_i (1 - p_i) x_i x_i^T` at `coef`.
    pub info: Matrix,
    pub sum_weights: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn validate(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::InvalidInput("outcome length differs from design rows".into()));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic outcome must be 0/1".into()));
    }
    if let Some(w) = w {
        if w.len() != x.rows() {
            return Err(Error::InvalidInput("weight length differs from design rows".into()));
        }
        if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
    }
    if x.rows() < x.cols() {
        return Err(Error::InvalidInput("fewer rows than coefficients".into()));
    }
    Ok(())
}

/// Weighted log-likelihood `sum_i w_i [y_i eta_i - log(1 + exp(eta_i))]`.
pub fn log_likelihood(x: &Matrix, y: &[f64], w: Option<&[f64]>, coef: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let eta = dot(x.row(i), coef);
            // log(1 + e^eta) without overflow
            let softplus = if eta > 0.0 {
                eta + libm::log1p(libm::exp(-eta))
            } else {
                libm::log1p(libm::exp(eta))
            };
            w.map_or(1.0, |w| w[i]) * (y[i] * eta - softplus)
        })
        .sum()
}

/// Weighted score `sum_i w_i x_i (y_i - p_i)`.
pub fn score(x: &Matrix, y: &[f64], w: Option<&[f64]>, coef: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        let row = x.row(i);
        let r = w.map_or(1.0, |w| w[i]) * (y[i] - expit(dot(row, coef)));
        g.iter_mut().zip(row).for_each(|(g, xv)| *g += r * xv);
    }
    g
}

fn score_and_info(x: &Matrix, y: &[f64], w: Option<&[f64]>, coef: &[f64]) -> (Vec<f64>, Matrix) {
    let d = x.cols();
    let mut g = vec![0.0; d];
    let mut info = Matrix::zeros(d, d);
    for i in 0..x.rows() {
        let row = x.row(i);
        let wi = w.map_or(1.0, |w| w[i]);
        let p = expit(dot(row, coef));
        let r = wi * (y[i] - p);
        let v = wi * p * (1.0 - p);
        for a in 0..d {
            g[a] += r * row[a];
            let va = v * row[a];
            for b in 0..=a {
                info[(a, b)] += va * row[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            info[(b, a)] = info[(a, b)];
        }
    }
    (g, info)
}

/// Fits a weighted logistic regression by iteratively reweighted least
/// squares (Newton-Raphson with step halving).
///
/// `x` must already contain the intercept column if one is wanted. Fails
/// with [`Error::NotConverged`] on separation or slow convergence and with
/// [`Error::Singular`] on a rank-deficient design.
pub fn fit_logistic(x: &Matrix, y: &[f64], w: Option<&[f64]>) -> Result<LogisticFit> {
    fit_logistic_with(x, y, w, IrlsOptions::default())
}

pub fn fit_logistic_with(x: &Matrix, y: &[f64], w: Option<&[f64]>, opts: IrlsOptions) -> Result<LogisticFit> {
    validate(x, y, w)?;
    let sum_weights: f64 = w.map_or(x.rows() as f64, |w| w.iter().sum());
    if !(sum_weights > 0.0) {
        return Err(Error::InvalidInput("weights sum to zero".into()));
    }
    let mut coef = vec![0.0; x.cols()];
    let mut ll = log_likelihood(x, y, w, &coef);
    for iteration in 0..=opts.max_iterations {
        let (g, info) = score_and_info(x, y, w, &coef);
        let sup = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if sup <= opts.tolerance {
            Cholesky::new(&info)?;
            let mean_var = (0..x.rows())
                .map(|i| {
                    let p = expit(dot(x.row(i), &coef));
                    w.map_or(1.0, |w| w[i]) * p * (1.0 - p)
                })
                .sum::<f64>()
                / sum_weights;
            if mean_var < 1e-8 {
                // fitted probabilities all at 0 or 1: the data are separated
                break;
            }
            return Ok(LogisticFit {
                coef,
                info,
                sum_weights,
                log_likelihood: ll,
                converged: true,
                iterations: iteration,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        let step = Cholesky::new(&info)?.solve(&g);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = coef.iter().zip(&step).map(|(c, s)| c + t * s).collect();
            let trial_ll = log_likelihood(x, y, w, &trial);
            if trial_ll >= ll - 1e-12 * ll.abs() || t < 1e-8 {
                coef = trial;
                ll = trial_ll;
                break;
            }
            t *= 0.5;
        }
        if coef.iter().any(|c| !c.is_finite() || c.abs() > 1e6) {
            break;
        }
    }
    Err(Error::NotConverged {
        what: "logistic regression",
        iterations: opts.max_iterations,
    })
}
