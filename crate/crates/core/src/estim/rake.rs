use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RakeOptions {
    pub max_iterations: usize,
    /// Largest accepted `|achieved - target| / max(1, |target|)`.
    pub tolerance: f64,
}

impl Default for RakeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-10,
        }
    }
}

/// Raking-calibrated weights `w*_i = g_i w_i` with `g_i = exp(a_i . lambda)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedWeights {
    pub base: Vec<f64>,
    pub g: Vec<f64>,
    pub calibrated: Vec<f64>,
    pub lambda: Vec<f64>,
    pub achieved: Vec<f64>,
    pub targets: Vec<f64>,
    pub iterations: usize,
}

impl CalibratedWeights {
    /// Largest relative constraint violation.
    pub fn max_violation(&self) -> f64 {
        relative_violation(&self.achieved, &self.targets)
    }
}

fn relative_violation(achieved: &[f64], targets: &[f64]) -> f64 {
    achieved
        .iter()
        .zip(targets)
        .map(|(a, t)| (a - t).abs() / t.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Calibrates `base` weights so that the weighted column totals of `aux`
/// equal `targets`, minimising the raking distance
/// `sum_i d(g_i w_i, w_i)` with `d(a, b) = a log(a/b) - a + b`.
pub fn rake(base: &[f64], aux: &Matrix, targets: &[f64]) -> Result<CalibratedWeights> {
    rake_with(base, aux, targets, RakeOptions::default())
}

pub fn rake_with(base: &[f64], aux: &Matrix, targets: &[f64], opts: RakeOptions) -> Result<CalibratedWeights> {
    let (n, q) = (aux.rows(), aux.cols());
    if base.len() != n || targets.len() != q {
        return Err(Error::InvalidInput(format!(
            "raking shapes disagree: {} weights, {}x{} auxiliaries, {} targets",
            base.len(),
            n,
            q,
            targets.len()
        )));
    }
    if base.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidInput("raking needs strictly positive base weights".into()));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("raking targets must be finite".into()));
    }

    // Newton's method on the convex dual D(l) = sum_i w_i exp(a_i l) - l.T,
    // whose gradient is the constraint residual.
    let dual = |lambda: &[f64]| -> Option<(f64, Vec<f64>)> {
        let mut value = -dot(lambda, targets);
        let mut g = vec![0.0; n];
        for i in 0..n {
            let e = libm::exp(dot(aux.row(i), lambda));
            if !e.is_finite() {
                return None;
            }
            g[i] = e;
            value += base[i] * e;
        }
        Some((value, g))
    };

    let mut lambda = vec![0.0; q];
    let (mut value, mut g) = dual(&lambda).expect("exp(0) is finite");
    for iteration in 0..=opts.max_iterations {
        let mut achieved = vec![0.0; q];
        let mut hess = Matrix::zeros(q, q);
        for i in 0..n {
            let row = aux.row(i);
            let wg = base[i] * g[i];
            for a in 0..q {
                achieved[a] += wg * row[a];
                for b in 0..=a {
                    hess[(a, b)] += wg * row[a] * row[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        if relative_violation(&achieved, targets) <= opts.tolerance {
            let calibrated = base.iter().zip(&g).map(|(w, g)| w * g).collect();
            return Ok(CalibratedWeights {
                base: base.to_vec(),
                g,
                calibrated,
                lambda,
                achieved,
                targets: targets.to_vec(),
                iterations: iteration,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        let resid: Vec<f64> = achieved.iter().zip(targets).map(|(a, t)| a - t).collect();
        let step = Cholesky::new(&hess)?.solve(&resid);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, s)| l - t * s).collect();
            if let Some((v, gt)) = dual(&trial) {
                if v <= value + 1e-14 * value.abs() || t < 1e-10 {
                    lambda = trial;
                    value = v;
                    g = gt;
                    break;
                }
            } else if t < 1e-10 {
                return Err(Error::NotConverged {
                    what: "raking",
                    iterations: iteration,
                });
            }
            t *= 0.5;
        }
    }
    Err(Error::NotConverged {
        what: "raking",
        iterations: opts.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn satisfied_constraints_leave_weights_alone() {
        let base = vec![2.5; 4];
        let aux = Matrix::from_row_major(4, 1, vec![1.0; 4]).unwrap();
        let cal = rake(&base, &aux, &[10.0]).unwrap();
        assert!(cal.g.iter().all(|g| *g == 1.0));
        assert_eq!(cal.iterations, 0);
    }

    #[test]
    fn census_sample_needs_no_adjustment() {
        let x = [0.3, -1.2, 2.0, 0.7, -0.1];
        let base = vec![1.0; 5];
        let aux = Matrix::from_columns(&[&[1.0; 5], &x]).unwrap();
        let cal = rake(&base, &aux, &[5.0, x.iter().sum()]).unwrap();
        assert!(cal.g.iter().all(|g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn hits_targets_and_keeps_g_positive() {
        let x = [0.3, -1.2, 2.0, 0.7, -0.1, 1.5, -0.8, 0.2];
        let base = [3.0, 3.0, 2.0, 2.0, 4.0, 4.0, 1.0, 1.0];
        let aux = Matrix::from_columns(&[&[1.0; 8], &x]).unwrap();
        let targets = [22.0, 5.0];
        let cal = rake(&base, &aux, &targets).unwrap();
        assert!(cal.max_violation() <= 1e-10);
        assert!(cal.g.iter().all(|g| *g > 0.0));
    }

    #[test]
    fn rejects_nonpositive_base_weights() {
        let aux = Matrix::from_row_major(2, 1, vec![1.0, 1.0]).unwrap();
        assert!(rake(&[1.0, 0.0], &aux, &[2.0]).is_err());
    }

    #[test]
    fn unreachable_targets_do_not_converge() {
        // all auxiliaries positive but a negative total is demanded
        let aux = Matrix::from_row_major(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(rake(&[1.0; 3], &aux, &[-1.0]).is_err());
    }
}
