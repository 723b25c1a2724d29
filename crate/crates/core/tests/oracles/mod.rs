//! Independent reference implementations used by the integration and
//! acceptance tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Smallest `sum_k N_k^2 s_k^2 / n_k` over every integer allocation with
/// `min <= n_k <= N_k` and `sum n_k = n`, by exhaustive enumeration.
pub fn brute_force_optimum(pop: &[usize], var: &[f64], n: usize, min: usize) -> Option<f64> {
    fn go(k: usize, left: usize, pop: &[usize], var: &[f64], min: usize, acc: f64, best: &mut Option<f64>) {
        if k == pop.len() {
            if left == 0 && best.map_or(true, |b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for nk in min..=pop[k].min(left) {
            let num = (pop[k] * pop[k]) as f64 * var[k];
            let term = if num == 0.0 {
                0.0
            } else if nk == 0 {
                f64::INFINITY
            } else {
                num / nk as f64
            };
            go(k + 1, left - nk, pop, var, min, acc + term, best);
        }
    }
    let mut best = None;
    go(0, n, pop, var, min, 0.0, &mut best);
    best
}

/// Plain Newton-Raphson logistic regression on nalgebra types.
pub fn irls(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let mut beta = DVector::zeros(x.ncols());
    for _ in 0..100 {
        let eta = x * &beta;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let r = (y - &p).component_mul(w);
        let grad = x.transpose() * r;
        let v = p.zip_map(w, |pi, wi| wi * pi * (1.0 - pi));
        let xv = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * v[i]);
        let info = x.transpose() * xv;
        let step = info.lu().solve(&grad).expect("nonsingular information");
        beta += &step;
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta
}

/// Raking by BFGS with backtracking on the dual
/// `sum_i w_i exp(a_i l) - l.t`, returning the calibrated weights.
pub fn rake_gradient(base: &[f64], aux: &DMatrix<f64>, targets: &[f64]) -> Vec<f64> {
    let t = DVector::from_column_slice(targets);
    let w = DVector::from_column_slice(base);
    let dual = |l: &DVector<f64>| -> f64 {
        let g = (aux * l).map(f64::exp);
        w.component_mul(&g).sum() - l.dot(&t)
    };
    let grad = |l: &DVector<f64>| -> DVector<f64> {
        let g = (aux * l).map(f64::exp);
        aux.transpose() * w.component_mul(&g) - &t
    };
    let d = aux.ncols();
    let mut l = DVector::zeros(d);
    let mut h = DMatrix::<f64>::identity(d, d) / w.sum();
    let mut g = grad(&l);
    for _ in 0..10_000 {
        if g.amax() <= 1e-12 * t.amax().max(1.0) {
            break;
        }
        let dir = -(&h * &g);
        let f0 = dual(&l);
        let mut s = 1.0;
        while dual(&(&l + &dir * s)) > f0 + 1e-4 * s * g.dot(&dir) && s > 1e-20 {
            s *= 0.5;
        }
        let l_new = &l + &dir * s;
        let g_new = grad(&l_new);
        let sk = &l_new - &l;
        let yk = &g_new - &g;
        let sy = sk.dot(&yk);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(d, d);
            let a = &i - &sk * yk.transpose() * rho;
            let b = &i - &yk * sk.transpose() * rho;
            h = &a * &h * &b + &sk * sk.transpose() * rho;
        }
        l = l_new;
        g = g_new;
    }
    let g = (aux * &l).map(f64::exp);
    w.component_mul(&g).iter().copied().collect()
}

/// Two-pass sample standard deviation.
pub fn two_pass_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Monte-Carlo variance of the stratified Horvitz-Thompson total of the
/// values in each stratum under simple random sampling without replacement.
pub fn mc_stratified_variance<R: Rng>(strata: &[Vec<f64>], counts: &[usize], draws: usize, rng: &mut R) -> f64 {
    let mut totals = Vec::with_capacity(draws);
    let mut pools: Vec<Vec<f64>> = strata.to_vec();
    for _ in 0..draws {
        let mut total = 0.0;
        for (pool, &n) in pools.iter_mut().zip(counts) {
            let big = pool.len();
            let mut s = 0.0;
            for i in 0..n {
                let j = rng.random_range(i..big);
                pool.swap(i, j);
                s += pool[i];
            }
            total += big as f64 / n as f64 * s;
        }
        totals.push(total);
    }
    let m = totals.iter().sum::<f64>() / draws as f64;
    totals.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (draws - 1) as f64
}
