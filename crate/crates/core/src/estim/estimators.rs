use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::frame::SamplingFrame;
use crate::linalg::Matrix;

use super::{fit_logistic, influence, rake, CalibratedWeights, InfluenceMatrix, LogisticFit};

/// A logistic target model: `outcome ~ 1 + covariates`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub outcome: String,
    pub covariates: Vec<String>,
}

impl ModelSpec {
    pub fn new(outcome: impl Into<String>, covariates: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            covariates: covariates.iter().map(|c| String::from(*c)).collect(),
        }
    }

    /// Number of coefficients including the intercept.
    pub fn n_coef(&self) -> usize {
        self.covariates.len() + 1
    }

    /// Design matrix (with a leading intercept column) and outcome for the
    /// listed units.
    pub fn design(&self, frame: &SamplingFrame, units: &[usize]) -> Result<(Matrix, Vec<f64>)> {
        let y_all = frame.column(&self.outcome)?;
        let covs = self
            .covariates
            .iter()
            .map(|c| frame.column(c))
            .collect::<Result<Vec<_>>>()?;
        let d = self.n_coef();
        let mut x = Matrix::zeros(units.len(), d);
        let mut y = Vec::with_capacity(units.len());
        for (r, &u) in units.iter().enumerate() {
            let row = x.row_mut(r);
            row[0] = 1.0;
            for (slot, col) in row[1..].iter_mut().zip(&covs) {
                *slot = col[u];
            }
            y.push(y_all[u]);
        }
        Ok((x, y))
    }
}

/// Weighted fit on the phase-2 sample plus its per-unit influence functions
/// (all coefficients).
#[derive(Debug, Clone, PartialEq)]
pub struct IpwEstimate {
    pub fit: LogisticFit,
    pub influence: InfluenceMatrix,
}

/// Inverse-probability-weighted estimate: the logistic model fitted to the
/// sampled `units` with weights `1 / pi_i`.
pub fn ipw_estimate(frame: &SamplingFrame, model: &ModelSpec, units: &[usize], weights: &[f64]) -> Result<IpwEstimate> {
    if weights.len() != units.len() {
        return Err(Error::InvalidInput("one design weight per sampled unit is required".into()));
    }
    if weights.iter().any(|w| !(*w >= 1.0 - 1e-12 && w.is_finite())) {
        return Err(Error::InvalidInput("design weights must be inverse probabilities (>= 1)".into()));
    }
    let (x, y) = model.design(frame, units)?;
    let fit = fit_logistic(&x, &y, Some(weights))?;
    let influence = influence(&fit, &x, &y, units.to_vec())?;
    Ok(IpwEstimate { fit, influence })
}

/// Generalized raking estimate: raking weights plus one fit per model.
#[derive(Debug, Clone, PartialEq)]
pub struct GrEstimate {
    pub calibration: CalibratedWeights,
    /// Auxiliary columns of `hstar` left out because they carry no
    /// information in the sample (constant there).
    pub dropped_aux: Vec<usize>,
    pub fits: Vec<LogisticFit>,
}

/// Rakes the design weights to the phase-1 totals of `(1, hstar)` and fits
/// every model with the calibrated weights.
///
/// `hstar` holds phase-1 influence-function estimates and must cover every
/// frame unit.
pub fn gr_estimate(
    frame: &SamplingFrame,
    models: &[ModelSpec],
    units: &[usize],
    weights: &[f64],
    hstar: &InfluenceMatrix,
) -> Result<GrEstimate> {
    if weights.len() != units.len() {
        return Err(Error::InvalidInput("one design weight per sampled unit is required".into()));
    }
    if hstar.n_rows() != frame.n_units() {
        return Err(Error::InvalidInput(format!(
            "raking auxiliaries cover {} of {} units",
            hstar.n_rows(),
            frame.n_units()
        )));
    }
    let sample_aux = hstar.rows_for_units(units)?;
    let population_totals = hstar.totals();
    let mut keep = Vec::new();
    let mut dropped_aux = Vec::new();
    for j in 0..hstar.n_params() {
        let first = sample_aux[(0, j)];
        let spread = (0..sample_aux.rows()).map(|i| (sample_aux[(i, j)] - first).abs()).fold(0.0, f64::max);
        if spread > 1e-12 * (1.0 + first.abs()) {
            keep.push(j);
        } else {
            dropped_aux.push(j);
        }
    }
    let mut aux = Matrix::zeros(units.len(), keep.len() + 1);
    for i in 0..units.len() {
        aux[(i, 0)] = 1.0;
        for (jj, &j) in keep.iter().enumerate() {
            aux[(i, jj + 1)] = sample_aux[(i, j)];
        }
    }
    let mut targets = vec![frame.n_units() as f64];
    targets.extend(keep.iter().map(|&j| population_totals[j]));
    let calibration = rake(weights, &aux, &targets)?;
    let fits = models
        .iter()
        .map(|m| {
            let (x, y) = m.design(frame, units)?;
            fit_logistic(&x, &y, Some(&calibration.calibrated))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrEstimate {
        calibration,
        dropped_aux,
        fits,
    })
}
