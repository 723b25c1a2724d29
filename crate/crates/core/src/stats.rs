//! Descriptive statistics helpers.

use alloc::vec::Vec;

use crate::linalg::Matrix;

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample variance with denominator n-1 (two-pass).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_sd(values: &[f64]) -> f64 {
    libm::sqrt(sample_variance(values))
}

/// Sample covariance (denominator n-1) of the columns of `values` over the
/// selected rows.
pub fn sample_covariance(values: &Matrix, rows: &[usize]) -> Matrix {
    let p = values.cols();
    let n = rows.len();
    let mut means = alloc::vec![0.0; p];
    for &i in rows {
        for (m, v) in means.iter_mut().zip(values.row(i)) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = Matrix::zeros(p, p);
    for &i in rows {
        let r = values.row(i);
        for a in 0..p {
            let da = r[a] - means[a];
            for b in 0..=a {
                cov[(a, b)] += da * (r[b] - means[b]);
            }
        }
    }
    let denom = (n as f64 - 1.0).max(1.0);
    for a in 0..p {
        for b in 0..=a {
            cov[(a, b)] /= denom;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    cov
}

/// Linearly interpolated sample quantile (the usual "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
