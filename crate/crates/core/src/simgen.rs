//! Synthetic phase-1 cohorts with correlated measurement error and
//! misclassification for the two-outcome / two-predictor scenarios.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::design::{CaseControlQuota, TrackedParam};
use crate::error::{Error, Result};
use crate::estim::ModelSpec;
use crate::frame::{Binning, SamplingFrame, StratRule, StratVar};
use crate::linalg::{Cholesky, Matrix};
use crate::stats::{expit, mean, normal_cdf, sample_sd};

/// Which coefficients a scenario targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioFamily {
    /// Two outcomes, one predictor (X1) of interest.
    TwoOutcomes,
    /// One outcome (Y2), two predictors of interest.
    TwoPredictors,
    /// Two outcomes and two predictors of interest.
    TwoOutcomesTwoPredictors,
}

/// Sensitivity and specificity of a binary proxy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Misclassification {
    pub sens: f64,
    pub spec: f64,
}

impl Misclassification {
    pub const NONE: Self = Self { sens: 1.0, spec: 1.0 };

    pub fn new(sens: f64, spec: f64) -> Self {
        Self { sens, spec }
    }

    fn validate(&self, what: &str) -> Result<()> {
        let ok = |p: f64| p > 0.0 && p <= 1.0;
        if ok(self.sens) && ok(self.spec) {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("{what}: sensitivity and specificity must lie in (0, 1]")))
        }
    }
}

/// Everything needed to generate one scenario's cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: String,
    pub family: ScenarioFamily,
    /// (intercept, X1, X2, Z, Y2) coefficients of the Y1 model, when Y1 exists.
    pub beta_y1: Option<[f64; 5]>,
    /// (intercept, X1, X2, Z) coefficients of the Y2 model.
    pub beta_y2: [f64; 4],
    pub cor_x1_x2: f64,
    pub cor_x1_z: f64,
    pub cor_x2_z: f64,
    pub y1_error: Misclassification,
    pub y2_error: Misclassification,
    pub z_error: Misclassification,
    pub var_u_x1: f64,
    pub var_u_x2: f64,
    /// Correlation between the additive errors of X1* and X2*.
    pub error_cor_continuous: f64,
    /// Correlation between the Gaussian latents driving misclassification of
    /// Y1*, Y2* and Z*.
    pub error_cor_binary: f64,
    pub n_units: usize,
    pub budget: usize,
}

const Y1_2O_AB: [f64; 5] = [-1.5, 0.4, 0.0, 0.3, 0.0];
const Y2_2O_AB: [f64; 4] = [-0.5, 0.2, 0.5, 0.0];
const Y1_2O_CD: [f64; 5] = [-3.1, 0.4, 1.0, 0.7, 1.9];
const Y2_2O_CD: [f64; 4] = [-0.8, 0.2, 1.3, 0.8];
const Y2_2P: [f64; 4] = [-2.1, 0.3, 0.7, 0.7];
const Y1_2O2P: [f64; 5] = [-1.5, 0.4, 0.6, 0.3, 0.3];

impl ScenarioSpec {
    /// Identifiers of the built-in presets.
    pub const PRESETS: [&'static str; 10] = [
        "2O-A", "2O-B", "2O-C", "2O-D", "2P-A", "2P-B", "2P-C", "2P-D", "2O2P-A", "2O2P-B",
    ];

    /// Built-in scenario by identifier (e.g. `"2O-A"`).
    pub fn preset(id: &str) -> Result<Self> {
        let low_2o = (Misclassification::new(0.95, 0.99), Misclassification::new(0.9, 0.95), 0.15, 0.1);
        let high_2o = (Misclassification::new(0.85, 0.90), Misclassification::new(0.8, 0.85), 0.5, 0.1);
        let low_2p = (Misclassification::NONE, Misclassification::new(0.90, 0.95), 0.15, 0.5);
        let high_2p = (Misclassification::NONE, Misclassification::new(0.85, 0.90), 0.4, 0.6);
        let low_2o2p = (Misclassification::new(0.95, 0.99), Misclassification::new(0.90, 0.95), 0.15, 0.5);
        let high_2o2p = (Misclassification::new(0.85, 0.90), Misclassification::new(0.80, 0.85), 0.4, 0.6);

        use ScenarioFamily::*;
        let (family, beta_y1, beta_y2, cor, err) = match id {
            "2O-A" => (TwoOutcomes, Some(Y1_2O_AB), Y2_2O_AB, 0.0, low_2o),
            "2O-B" => (TwoOutcomes, Some(Y1_2O_AB), Y2_2O_AB, 0.0, high_2o),
            "2O-C" => (TwoOutcomes, Some(Y1_2O_CD), Y2_2O_CD, 0.0, low_2o),
            "2O-D" => (TwoOutcomes, Some(Y1_2O_CD), Y2_2O_CD, 0.0, high_2o),
            "2P-A" => (TwoPredictors, None, Y2_2P, 0.05, low_2p),
            "2P-B" => (TwoPredictors, None, Y2_2P, 0.05, high_2p),
            "2P-C" => (TwoPredictors, None, Y2_2P, 0.65, low_2p),
            "2P-D" => (TwoPredictors, None, Y2_2P, 0.65, high_2p),
            "2O2P-A" => (TwoOutcomesTwoPredictors, Some(Y1_2O2P), Y2_2P, 0.3, low_2o2p),
            "2O2P-B" => (TwoOutcomesTwoPredictors, Some(Y1_2O2P), Y2_2P, 0.3, high_2o2p),
            other => return Err(Error::InvalidInput(format!("unknown scenario `{other}`"))),
        };
        Ok(Self {
            id: id.into(),
            family,
            beta_y1,
            beta_y2,
            cor_x1_x2: cor,
            cor_x1_z: 0.10,
            cor_x2_z: 0.25,
            y1_error: err.0,
            y2_error: err.1,
            z_error: Misclassification::new(0.9, 0.95),
            var_u_x1: err.2,
            var_u_x2: err.3,
            error_cor_continuous: 0.3,
            error_cor_binary: 0.3,
            n_units: 10_000,
            budget: 1_000,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.y1_error.validate("Y1*")?;
        self.y2_error.validate("Y2*")?;
        self.z_error.validate("Z*")?;
        if !(self.var_u_x1 >= 0.0 && self.var_u_x2 >= 0.0) {
            return Err(Error::InvalidInput("error variances must be nonnegative".into()));
        }
        if self.error_cor_continuous.abs() > 1.0 || !(-0.5..=1.0).contains(&self.error_cor_binary) {
            return Err(Error::InvalidInput("error correlations out of range".into()));
        }
        if self.family != ScenarioFamily::TwoPredictors && self.beta_y1.is_none() {
            return Err(Error::InvalidInput("scenario needs Y1 coefficients".into()));
        }
        if self.n_units < 2 {
            return Err(Error::InvalidInput("cohort needs at least two units".into()));
        }
        Cholesky::new(&self.covariate_covariance())?;
        Ok(())
    }

    /// Covariance of (X1, X2, latent Z).
    pub fn covariate_covariance(&self) -> Matrix {
        let (a, b, c) = (self.cor_x1_x2, self.cor_x1_z, self.cor_x2_z);
        Matrix::from_row_major(3, 3, vec![1.0, a, b, a, 1.0, c, b, c, 1.0]).expect("3x3")
    }

    pub fn has_y1(&self) -> bool {
        self.family != ScenarioFamily::TwoPredictors
    }

    /// Target models fitted to the validated variables.
    pub fn models(&self) -> Vec<ModelSpec> {
        self.model_set("")
    }

    /// The same models on the error-prone phase-1 variables.
    pub fn proxy_models(&self) -> Vec<ModelSpec> {
        self.model_set("_star")
    }

    fn model_set(&self, suffix: &str) -> Vec<ModelSpec> {
        let n = |base: &str| format!("{base}{suffix}");
        let m2 = ModelSpec {
            outcome: n("y2"),
            covariates: vec![n("x1"), n("x2"), n("z")],
        };
        if self.has_y1() {
            let m1 = ModelSpec {
                outcome: n("y1"),
                covariates: vec![n("x1"), n("x2"), n("z"), n("y2")],
            };
            vec![m1, m2]
        } else {
            vec![m2]
        }
    }

    /// Coefficients of interest, in reporting order.
    pub fn tracked(&self) -> Vec<TrackedParam> {
        match self.family {
            ScenarioFamily::TwoOutcomes => vec![TrackedParam::new("beta11", 0, 1), TrackedParam::new("beta12", 1, 1)],
            ScenarioFamily::TwoPredictors => vec![TrackedParam::new("beta12", 0, 1), TrackedParam::new("beta22", 0, 2)],
            ScenarioFamily::TwoOutcomesTwoPredictors => vec![
                TrackedParam::new("beta11", 0, 1),
                TrackedParam::new("beta21", 0, 2),
                TrackedParam::new("beta12", 1, 1),
                TrackedParam::new("beta22", 1, 2),
            ],
        }
    }

    /// Data-generating values of the tracked coefficients.
    pub fn true_values(&self) -> Vec<f64> {
        let y1 = self.beta_y1.unwrap_or([0.0; 5]);
        self.tracked()
            .iter()
            .map(|t| match (self.has_y1(), t.model) {
                (true, 0) => y1[t.coef],
                _ => self.beta_y2[t.coef],
            })
            .collect()
    }

    /// Strata for the adaptive designs: proxy outcomes crossed with median
    /// splits of both proxy predictors.
    pub fn strat_rule(&self) -> StratRule {
        let mut vars = self.outcome_vars();
        vars.push(StratVar::new("x1_star", Binning::Median));
        vars.push(StratVar::new("x2_star", Binning::Median));
        StratRule::new(vars)
    }

    /// Strata for case-control sampling: the proxy outcome cells.
    pub fn case_control_rule(&self) -> StratRule {
        StratRule::new(self.outcome_vars())
    }

    fn outcome_vars(&self) -> Vec<StratVar> {
        let b = |c: &str| StratVar::new(c, Binning::Binary);
        if self.has_y1() {
            vec![b("y1_star"), b("y2_star")]
        } else {
            vec![b("y2_star")]
        }
    }

    /// Single-wave case-control quotas over the proxy outcomes.
    pub fn case_control(&self) -> Vec<CaseControlQuota> {
        let q = |col: &str, value: f64, count: usize| CaseControlQuota {
            column: col.into(),
            value,
            count,
        };
        match self.family {
            ScenarioFamily::TwoPredictors => {
                let half = self.budget / 2;
                vec![q("y2_star", 1.0, half), q("y2_star", 0.0, self.budget - half)]
            }
            _ => {
                let quarter = self.budget / 4;
                let last = self.budget - 3 * quarter;
                vec![
                    q("y1_star", 1.0, quarter),
                    q("y1_star", 0.0, quarter),
                    q("y2_star", 1.0, quarter),
                    q("y2_star", 0.0, last),
                ]
            }
        }
    }
}

fn draw_normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Rescales to sample mean 0 and sample variance 1 (denominator n-1).
/// Constant input is only centred.
pub fn standardize(values: &mut [f64]) {
    let m = mean(values);
    let sd = sample_sd(values);
    let scale = if sd > 0.0 { sd } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - m) / scale);
}

/// Flips a 0/1 vector so that `P(proxy = 1 | truth = 1) = sens` and
/// `P(proxy = 0 | truth = 0) = spec`, independently across units.
pub fn misclassify(truth: &[f64], error: Misclassification, seed: u64) -> Result<Vec<f64>> {
    error.validate("misclassification")?;
    if truth.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(Error::InvalidInput("misclassification needs a 0/1 vector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(truth
        .iter()
        .map(|&t| {
            let u: f64 = rng.random();
            flip(t, u, error)
        })
        .collect())
}

fn flip(truth: f64, u: f64, error: Misclassification) -> f64 {
    let p_flip = if truth == 1.0 { 1.0 - error.sens } else { 1.0 - error.spec };
    if u < p_flip {
        1.0 - truth
    } else {
        truth
    }
}

/// Generates a phase-1 cohort with true and proxy columns
/// `x1 x2 z y1 y2` / `x1_star x2_star z_star y1_star y2_star`
/// (no `y1` columns in the two-predictor family).
pub fn gen_frame(spec: &ScenarioSpec, seed: u64) -> Result<SamplingFrame> {
    spec.validate()?;
    let n = spec.n_units;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chol_x = Cholesky::new(&spec.covariate_covariance())?;
    let l_x = chol_x.factor();

    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    let mut z = Vec::with_capacity(n);
    for _ in 0..n {
        let e = [draw_normal(&mut rng), draw_normal(&mut rng), draw_normal(&mut rng)];
        let v = correlate(l_x, &e);
        x1.push(v[0]);
        x2.push(v[1]);
        z.push(f64::from(u8::from(v[2] > 0.0)));
    }
    let z_binary = z.clone();
    standardize(&mut z);

    let b2 = spec.beta_y2;
    let y2: Vec<f64> = (0..n)
        .map(|i| {
            let p = expit(b2[0] + b2[1] * x1[i] + b2[2] * x2[i] + b2[3] * z[i]);
            f64::from(u8::from(rng.random::<f64>() < p))
        })
        .collect();
    let y1: Option<Vec<f64>> = spec.beta_y1.map(|b1| {
        (0..n)
            .map(|i| {
                let p = expit(b1[0] + b1[1] * x1[i] + b1[2] * x2[i] + b1[3] * z[i] + b1[4] * y2[i]);
                f64::from(u8::from(rng.random::<f64>() < p))
            })
            .collect()
    });

    // additive errors on the continuous predictors
    let (s1, s2) = (libm::sqrt(spec.var_u_x1), libm::sqrt(spec.var_u_x2));
    let rho = spec.error_cor_continuous;
    let mut x1_star = Vec::with_capacity(n);
    let mut x2_star = Vec::with_capacity(n);
    for i in 0..n {
        let (e1, e2) = (draw_normal(&mut rng), draw_normal(&mut rng));
        x1_star.push(x1[i] + s1 * e1);
        x2_star.push(x2[i] + s2 * (rho * e1 + libm::sqrt(1.0 - rho * rho) * e2));
    }

    // misclassification of Y1*, Y2*, Z* driven by equicorrelated latents
    let rb = spec.error_cor_binary;
    let latent_cov = Matrix::from_row_major(3, 3, vec![1.0, rb, rb, rb, 1.0, rb, rb, rb, 1.0])?;
    let chol_b = Cholesky::new(&latent_cov)?;
    let l_b = chol_b.factor();
    let mut y1_star = Vec::with_capacity(n);
    let mut y2_star = Vec::with_capacity(n);
    let mut z_star = Vec::with_capacity(n);
    for i in 0..n {
        let e = [draw_normal(&mut rng), draw_normal(&mut rng), draw_normal(&mut rng)];
        let v = correlate(l_b, &e);
        if let Some(y1) = &y1 {
            y1_star.push(flip(y1[i], normal_cdf(v[0]), spec.y1_error));
        }
        y2_star.push(flip(y2[i], normal_cdf(v[1]), spec.y2_error));
        z_star.push(flip(z_binary[i], normal_cdf(v[2]), spec.z_error));
    }
    standardize(&mut z_star);

    let mut frame = SamplingFrame::new(n);
    frame.add_column("x1", x1)?;
    frame.add_column("x2", x2)?;
    frame.add_column("z", z)?;
    frame.add_column("y2", y2)?;
    frame.add_column("x1_star", x1_star)?;
    frame.add_column("x2_star", x2_star)?;
    frame.add_column("z_star", z_star)?;
    frame.add_column("y2_star", y2_star)?;
    if let Some(y1) = y1 {
        frame.add_column("y1", y1)?;
        frame.add_column("y1_star", y1_star)?;
    }
    Ok(frame)
}

fn correlate(l: &Matrix, e: &[f64; 3]) -> [f64; 3] {
    [
        l[(0, 0)] * e[0],
        l[(1, 0)] * e[0] + l[(1, 1)] * e[1],
        l[(2, 0)] * e[0] + l[(2, 1)] * e[1] + l[(2, 2)] * e[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for id in ScenarioSpec::PRESETS {
            let s = ScenarioSpec::preset(id).unwrap();
            s.validate().unwrap();
            assert_eq!(s.tracked().len(), s.true_values().len());
            assert_eq!(s.case_control().iter().map(|q| q.count).sum::<usize>(), s.budget);
        }
        assert!(ScenarioSpec::preset("3X").is_err());
    }

    #[test]
    fn tracked_truths_follow_the_coefficient_table() {
        assert_eq!(ScenarioSpec::preset("2O-C").unwrap().true_values(), vec![0.4, 0.2]);
        assert_eq!(ScenarioSpec::preset("2P-A").unwrap().true_values(), vec![0.3, 0.7]);
        assert_eq!(ScenarioSpec::preset("2O2P-A").unwrap().true_values(), vec![0.4, 0.6, 0.3, 0.7]);
    }

    #[test]
    fn misclassify_identity_and_complement() {
        let truth: Vec<f64> = (0..100).map(|i| f64::from(i % 2)).collect();
        assert_eq!(misclassify(&truth, Misclassification::NONE, 3).unwrap(), truth);
        let zeros = vec![0.0; 20_000];
        let proxy = misclassify(&zeros, Misclassification::new(0.8, 0.9), 5).unwrap();
        let rate = mean(&proxy);
        assert!((rate - 0.1).abs() < 0.01, "rate {rate}");
    }

    #[test]
    fn standardized_z_is_exact() {
        let f = gen_frame(&ScenarioSpec::preset("2O-A").unwrap(), 11).unwrap();
        let z = f.column("z").unwrap();
        assert!(mean(z).abs() <= 1e-12);
        assert!((sample_sd(z).powi(2) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn no_error_means_proxies_equal_truth() {
        let mut s = ScenarioSpec::preset("2O-A").unwrap();
        s.y1_error = Misclassification::NONE;
        s.y2_error = Misclassification::NONE;
        s.z_error = Misclassification::NONE;
        s.var_u_x1 = 0.0;
        s.var_u_x2 = 0.0;
        s.n_units = 500;
        let f = gen_frame(&s, 9).unwrap();
        for c in ["x1", "x2", "z", "y1", "y2"] {
            assert_eq!(f.column(c).unwrap(), f.column(&format!("{c}_star")).unwrap(), "{c}");
        }
    }

    #[test]
    fn same_seed_same_frame() {
        let s = ScenarioSpec::preset("2P-C").unwrap();
        let a = gen_frame(&s, 1).unwrap();
        let b = gen_frame(&s, 1).unwrap();
        assert_eq!(a.column("x2_star").unwrap(), b.column("x2_star").unwrap());
        assert!(!a.has_column("y1"));
    }
}
