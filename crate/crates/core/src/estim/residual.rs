use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::frame::{summarize_strata, SamplingFrame, StratumSummary};
use crate::linalg::{weighted_least_squares, Matrix};

use super::InfluenceMatrix;

/// Which phase-1 influence columns enter the residual regression of
/// parameter `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResidualRegressors {
    /// Intercept and `h*` of parameter `p` only.
    #[default]
    Own,
    /// Intercept and `h*` of every tracked parameter.
    All,
}

/// Least-squares regression of phase-2 influence functions on their phase-1
/// estimates and the resulting within-stratum residual standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualFit {
    pub intercepts: Vec<f64>,
    /// Slopes per parameter, one per `hstar` column; columns not used in a
    /// regression (or dropped as collinear) have slope 0.
    pub slopes: Vec<Vec<f64>>,
    /// `(parameter, hstar column)` pairs dropped for collinearity.
    pub dropped: Vec<(usize, usize)>,
    pub residuals: InfluenceMatrix,
    pub summaries: Vec<StratumSummary>,
}

/// Regresses each column of `h2` on an intercept and columns of `hstar`
/// (matched by unit), optionally weighted, and summarises the residuals by
/// stratum.
pub fn residual_sds(
    frame: &SamplingFrame,
    h2: &InfluenceMatrix,
    hstar: &InfluenceMatrix,
    weights: Option<&[f64]>,
    regressors: ResidualRegressors,
) -> Result<ResidualFit> {
    let p = h2.n_params();
    if hstar.n_params() != p {
        return Err(Error::InvalidInput("h and h* track different numbers of parameters".into()));
    }
    if weights.is_some_and(|w| w.len() != h2.n_rows()) {
        return Err(Error::InvalidInput("one weight per influence row is required".into()));
    }
    let n = h2.n_rows();
    if n < p + 2 {
        return Err(Error::InvalidInput("too few sampled units for the residual regression".into()));
    }
    let hs = hstar.rows_for_units(h2.units())?;
    let mut intercepts = vec![0.0; p];
    let mut slopes = vec![vec![0.0; p]; p];
    let mut dropped = Vec::new();
    let mut residuals = Matrix::zeros(n, p);

    for param in 0..p {
        let y = h2.values().column(param);
        let candidates: Vec<usize> = match regressors {
            ResidualRegressors::Own => vec![param],
            ResidualRegressors::All => (0..p).collect(),
        };
        // drop regressors that are constant in the sample, then any that make
        // the cross-product singular, last candidate first
        let mut cols: Vec<usize> = Vec::new();
        for &c in &candidates {
            let first = hs[(0, c)];
            let spread = (0..n).map(|i| (hs[(i, c)] - first).abs()).fold(0.0, f64::max);
            if spread > 1e-12 * (1.0 + first.abs()) {
                cols.push(c);
            } else {
                dropped.push((param, c));
            }
        }
        let beta = loop {
            let mut x = Matrix::zeros(n, cols.len() + 1);
            for i in 0..n {
                x[(i, 0)] = 1.0;
                for (jj, &c) in cols.iter().enumerate() {
                    x[(i, jj + 1)] = hs[(i, c)];
                }
            }
            match weighted_least_squares(&x, &y, weights) {
                Ok(b) => break b,
                Err(Error::Singular) if !cols.is_empty() => {
                    let c = cols.pop().expect("nonempty");
                    dropped.push((param, c));
                }
                Err(e) => return Err(e),
            }
        };
        intercepts[param] = beta[0];
        for (jj, &c) in cols.iter().enumerate() {
            slopes[param][c] = beta[jj + 1];
        }
        for i in 0..n {
            let fitted = beta[0] + cols.iter().enumerate().map(|(jj, &c)| beta[jj + 1] * hs[(i, c)]).sum::<f64>();
            residuals[(i, param)] = y[i] - fitted;
        }
    }
    let residuals = InfluenceMatrix::new(h2.units().to_vec(), residuals)?;
    let summaries = summarize_strata(frame, &residuals)?;
    Ok(ResidualFit {
        intercepts,
        slopes,
        dropped,
        residuals,
        summaries,
    })
}
