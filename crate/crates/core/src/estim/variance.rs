use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::frame::StratumSummary;

/// Variance of the stratified expansion estimator of each parameter's
/// total under stratified simple random sampling without replacement:
/// `sum_k N_k^2 sigma_{p,k}^2 / n_k - sum_k N_k sigma_{p,k}^2`.
///
/// The second term is the finite population correction; `sigma` should be
/// the population standard deviation with denominator `N_k - 1`.
pub fn stratified_variance(strata: &[StratumSummary], counts: &[usize]) -> Result<Vec<f64>> {
    if strata.len() != counts.len() {
        return Err(Error::InvalidInput("one sample size per stratum is required".into()));
    }
    let p = strata.first().map_or(0, StratumSummary::n_params);
    let mut var = alloc::vec![0.0; p];
    for (s, &n_k) in strata.iter().zip(counts) {
        s.validate()?;
        if s.n_params() != p {
            return Err(Error::InvalidInput("strata track different numbers of parameters".into()));
        }
        if n_k > s.pop_size {
            return Err(Error::InvalidInput(format!("stratum {} sampled beyond its size", s.stratum)));
        }
        let pop = s.pop_size as f64;
        for (v, sd) in var.iter_mut().zip(&s.sd_by_param) {
            let s2 = sd * sd;
            if s2 == 0.0 {
                continue;
            }
            if n_k == 0 {
                return Err(Error::InvalidInput(format!(
                    "stratum {} has positive variance but no sample",
                    s.stratum
                )));
            }
            *v += pop * pop * s2 / n_k as f64 - pop * s2;
        }
    }
    Ok(var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn census_has_zero_variance() {
        let s = [StratumSummary::new(0, 30, alloc::vec![2.0]), StratumSummary::new(1, 12, alloc::vec![0.5])];
        let v = stratified_variance(&s, &[30, 12]).unwrap();
        assert!(v[0].abs() < 1e-9);
    }

    #[test]
    fn single_stratum_arithmetic() {
        let s = [StratumSummary::new(0, 100, alloc::vec![1.0])];
        assert_eq!(stratified_variance(&s, &[10]).unwrap(), alloc::vec![900.0]);
    }

    #[test]
    fn empty_sample_with_spread_is_an_error() {
        let s = [StratumSummary::new(0, 10, alloc::vec![1.0])];
        assert!(stratified_variance(&s, &[0]).is_err());
        let z = [StratumSummary::new(0, 10, alloc::vec![0.0])];
        assert_eq!(stratified_variance(&z, &[0]).unwrap(), alloc::vec![0.0]);
    }
}
