use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};
use crate::stats::expit;

use super::LogisticFit;

/// Influence-function values: one row per unit, one column per tracked
/// coefficient. `units[i]` is the frame unit of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMatrix {
    units: Vec<usize>,
    values: Matrix,
}

impl InfluenceMatrix {
    pub fn new(units: Vec<usize>, values: Matrix) -> Result<Self> {
        if units.len() != values.rows() {
            return Err(Error::InvalidInput(format!(
                "{} unit indices for {} influence rows",
                units.len(),
                values.rows()
            )));
        }
        Ok(Self { units, values })
    }

    pub fn units(&self) -> &[usize] {
        &self.units
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_params(&self) -> usize {
        self.values.cols()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self {
            units: self.units.clone(),
            values: self.values.select_columns(cols),
        }
    }

    /// Places the columns of `parts` side by side; all parts must cover the
    /// same units in the same order.
    pub fn hstack(parts: &[InfluenceMatrix]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::InvalidInput("nothing to stack".into()))?;
        if parts.iter().any(|p| p.units != first.units) {
            return Err(Error::InvalidInput("influence blocks cover different units".into()));
        }
        let cols: usize = parts.iter().map(|p| p.n_params()).sum();
        let mut values = Matrix::zeros(first.n_rows(), cols);
        for i in 0..first.n_rows() {
            let mut j = 0;
            for part in parts {
                for v in part.values.row(i) {
                    values[(i, j)] = *v;
                    j += 1;
                }
            }
        }
        Ok(Self {
            units: first.units.clone(),
            values,
        })
    }

    /// Rows for the requested units, in the requested order.
    pub fn rows_for_units(&self, units: &[usize]) -> Result<Matrix> {
        let max_unit = self.units.iter().copied().max().unwrap_or(0);
        let mut index = vec![usize::MAX; max_unit + 1];
        for (row, &u) in self.units.iter().enumerate() {
            index[u] = row;
        }
        let rows = units
            .iter()
            .map(|&u| match index.get(u) {
                Some(&r) if r != usize::MAX => Ok(r),
                _ => Err(Error::InvalidInput(format!("no influence row for unit {u}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.values.select_rows(&rows))
    }

    /// Column sums.
    pub fn totals(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.n_params()];
        for i in 0..self.n_rows() {
            t.iter_mut().zip(self.values.row(i)).for_each(|(t, v)| *t += v);
        }
        t
    }
}

/// Per-unit influence functions of a logistic fit,
/// `h_i = M^{-1} x_i (y_i - p_i)` with `M` the information per unit of
/// weight, so that the weighted mean of `h` is the one-step change in the
/// coefficients. Row `i` belongs to `units[i]`.
pub fn influence(fit: &LogisticFit, x: &Matrix, y: &[f64], units: Vec<usize>) -> Result<InfluenceMatrix> {
    if x.cols() != fit.coef.len() || y.len() != x.rows() {
        return Err(Error::InvalidInput("design does not match the fit".into()));
    }
    let d = x.cols();
    let mut m = fit.info.clone();
    for a in 0..d {
        for b in 0..d {
            m[(a, b)] /= fit.sum_weights;
        }
    }
    let m_inv = Cholesky::new(&m)?.inverse();
    let mut values = Matrix::zeros(x.rows(), d);
    for i in 0..x.rows() {
        let row = x.row(i);
        let r = y[i] - expit(dot(row, &fit.coef));
        for a in 0..d {
            values[(i, a)] = r * dot(m_inv.row(a), row);
        }
    }
    InfluenceMatrix::new(units, values)
}
