use multiwave_core::estim::fit_logistic;
use multiwave_core::simgen::{misclassify, Misclassification};
use multiwave_core::stats::{mean, sample_variance};
use multiwave_core::*;

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn high_prevalence_scenarios_hit_their_rates() {
    for id in ["2O-C", "2O-D"] {
        let spec = ScenarioSpec::preset(id).unwrap();
        let (mut p1, mut p2) = (0.0, 0.0);
        for seed in 0..20 {
            let f = gen_frame(&spec, seed).unwrap();
            p1 += mean(f.column("y1").unwrap()) / 20.0;
            p2 += mean(f.column("y2").unwrap()) / 20.0;
        }
        assert!((p1 - 0.2).abs() <= 0.03, "{id} Y1 prevalence {p1}");
        // The configured coefficients give about 0.37 for Y2.
        assert!((p2 - 0.4).abs() <= 0.04, "{id} Y2 prevalence {p2}");
    }
}

#[test]
fn covariate_correlation_matches_spec() {
    for id in ["2P-A", "2P-C", "2O2P-A"] {
        let spec = ScenarioSpec::preset(id).unwrap();
        let f = gen_frame(&spec, 12).unwrap();
        let r = correlation(f.column("x1").unwrap(), f.column("x2").unwrap());
        assert!((r - spec.cor_x1_x2).abs() <= 0.02, "{id}: {r}");
    }
}

#[test]
fn binary_z_is_exactly_standardized() {
    let f = gen_frame(&ScenarioSpec::preset("2O-B").unwrap(), 0).unwrap();
    let z = f.column("z").unwrap();
    assert!(mean(z).abs() <= 1e-12);
    assert!((sample_variance(z) - 1.0).abs() <= 1e-9);
}

#[test]
fn true_models_recover_generating_coefficients() {
    for id in ["2O-C", "2P-A", "2O2P-B"] {
        let spec = ScenarioSpec::preset(id).unwrap();
        let f = gen_frame(&spec, 42).unwrap();
        let units: Vec<usize> = (0..f.n_units()).collect();
        let betas: Vec<Vec<f64>> = match spec.beta_y1 {
            Some(b1) => vec![b1.to_vec(), spec.beta_y2.to_vec()],
            None => vec![spec.beta_y2.to_vec()],
        };
        for (model, beta) in spec.models().iter().zip(&betas) {
            let (x, y) = model.design(&f, &units).unwrap();
            let fit = fit_logistic(&x, &y, None).unwrap();
            let cov = multiwave_core::linalg::Cholesky::new(&fit.info).unwrap().inverse();
            for j in 0..beta.len() {
                let se = cov[(j, j)].sqrt();
                assert!((fit.coef[j] - beta[j]).abs() <= 3.0 * se, "{id} {} coef {j}: {} vs {}", model.outcome, fit.coef[j], beta[j]);
            }
        }
    }
}

#[test]
fn error_free_spec_copies_truth() {
    let mut spec = ScenarioSpec::preset("2O2P-B").unwrap();
    spec.y1_error = Misclassification::NONE;
    spec.y2_error = Misclassification::NONE;
    spec.z_error = Misclassification::NONE;
    spec.var_u_x1 = 0.0;
    spec.var_u_x2 = 0.0;
    let f = gen_frame(&spec, 1).unwrap();
    for v in ["x1", "x2", "z", "y1", "y2"] {
        assert_eq!(f.column(v).unwrap(), f.column(&format!("{v}_star")).unwrap(), "{v}");
    }
}

#[test]
fn frames_are_reproducible() {
    let spec = ScenarioSpec::preset("2P-D").unwrap();
    assert_eq!(gen_frame(&spec, 5).unwrap(), gen_frame(&spec, 5).unwrap());
    assert_ne!(gen_frame(&spec, 5).unwrap(), gen_frame(&spec, 6).unwrap());
}

#[test]
fn misclassification_rates() {
    let n = 100_000;
    let truth: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i % 2 == 0))).collect();
    let proxy = misclassify(&truth, Misclassification::new(0.85, 0.90), 3).unwrap();
    let pos = truth.iter().zip(&proxy).filter(|(t, _)| **t == 1.0);
    let sens = pos.clone().filter(|(_, p)| **p == 1.0).count() as f64 / pos.count() as f64;
    let neg = truth.iter().zip(&proxy).filter(|(t, _)| **t == 0.0);
    let spec = neg.clone().filter(|(_, p)| **p == 0.0).count() as f64 / neg.count() as f64;
    assert!((sens - 0.85).abs() <= 0.01 && (spec - 0.90).abs() <= 0.01, "{sens} {spec}");

    let zeros = vec![0.0; n];
    let ones = misclassify(&zeros, Misclassification::new(0.5, 0.9), 4).unwrap();
    assert!((mean(&ones) - 0.1).abs() <= 0.01);
    assert_eq!(misclassify(&truth, Misclassification::NONE, 5).unwrap(), truth);
    assert!(misclassify(&truth, Misclassification::new(0.0, 0.9), 5).is_err());
    assert!(misclassify(&[0.5], Misclassification::NONE, 5).is_err());
}
