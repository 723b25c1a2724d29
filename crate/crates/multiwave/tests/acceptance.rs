//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! `MULTIWAVE_ACCEPTANCE_R` overrides the replicate count of the simulation
//! criteria (default 500); `MULTIWAVE_ACCEPTANCE_STRICT=1` turns any FAIL
//! into a test failure.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::io::Write as _;
use std::time::Instant;

use multiwave::config::OptimalityMode;
use multiwave::core::allocation::{a_optimal_neyman, a_optimal_wright, neyman, wright, AOptWeights};
use multiwave::core::estim::{fit_logistic, log_likelihood, rake, residual_sds, score, stratified_variance, InfluenceMatrix};
use multiwave::core::frame::summarize_strata;
use multiwave::core::linalg::Matrix;
use multiwave::core::stats::expit;
use multiwave::core::{Optimality, SamplingFrame, Strata, StratumSummary};
use multiwave::emit::emit;
use multiwave::harness::paired_variance_difference;
use multiwave::{run_experiment, Experiment, ExperimentConfig, StrategyKind};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const BASE_SEED: u64 = 20_240_611;

struct Report {
    failed: Vec<usize>,
}

impl Report {
    fn line(&mut self, id: usize, pass: bool, detail: String) {
        if !pass {
            self.failed.push(id);
        }
        let verdict = if pass { "PASS" } else { "FAIL" };
        // written to the real stdout so the lines survive test capture
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "acceptance criterion {id:>2}: {verdict}  {detail}");
        let _ = out.flush();
    }
}

fn replicates() -> usize {
    std::env::var("MULTIWAVE_ACCEPTANCE_R")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(500)
}

fn summaries(pop: &[usize], sd: &[Vec<f64>]) -> Vec<StratumSummary> {
    pop.iter()
        .zip(sd)
        .enumerate()
        .map(|(k, (&n, s))| StratumSummary::new(k, n, s.clone()))
        .collect()
}

fn objective(pop: &[usize], var: &[f64], counts: &[usize]) -> f64 {
    pop.iter()
        .zip(var)
        .zip(counts)
        .map(|((&p, &v), &c)| {
            let num = (p * p) as f64 * v;
            if num == 0.0 {
                0.0
            } else {
                num / c as f64
            }
        })
        .sum()
}

struct Instance {
    pop: Vec<usize>,
    sd: Vec<Vec<f64>>,
    weights: AOptWeights,
    n: usize,
    min: usize,
}

fn random_instance(rng: &mut ChaCha8Rng, max_p: usize) -> Instance {
    let k = rng.random_range(1..=4);
    let p = rng.random_range(1..=max_p);
    let min = rng.random_range(0..=2);
    let pop: Vec<usize> = (0..k).map(|_| rng.random_range(min.max(1)..=12)).collect();
    let sd: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..p)
                .map(|_| if rng.random::<f64>() < 0.1 { 0.0 } else { rng.random_range(0.0..5.0) })
                .collect()
        })
        .collect();
    let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..1.0)).collect();
    let lo = min * k;
    let hi = pop.iter().sum::<usize>().min(20).max(lo);
    let n = rng.random_range(lo..=hi);
    Instance {
        pop,
        sd,
        weights: AOptWeights::normalized(&raw).unwrap(),
        n,
        min,
    }
}

fn same(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 3);
        let s = summaries(&inst.pop, &inst.sd);
        let var: Vec<f64> = inst
            .sd
            .iter()
            .map(|sd| sd.iter().zip(inst.weights.as_slice()).map(|(s, a)| a * s * s).sum())
            .collect();
        let best = oracles::brute_force_optimum(&inst.pop, &var, inst.n, inst.min).unwrap();
        let got = a_optimal_wright(&s, &inst.weights, inst.n, inst.min).unwrap();
        if !same(objective(&inst.pop, &var, &got.counts), best) {
            mismatches += 1;
        }
        let single: Vec<f64> = inst.sd.iter().map(|sd| sd[0] * sd[0]).collect();
        let best1 = oracles::brute_force_optimum(&inst.pop, &single, inst.n, inst.min).unwrap();
        let got1 = wright(&s, 0, inst.n, inst.min).unwrap();
        if !same(objective(&inst.pop, &single, &got1.counts), best1) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.line(
        1,
        mismatches == 0 && secs < 60.0,
        format!("allocation vs exhaustive search: {mismatches} mismatches in 1000 instances, {secs:.1}s"),
    );
}

fn criterion_2(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut bad = 0;
    for _ in 0..200 {
        let inst = random_instance(&mut rng, 3);
        let p = inst.sd[0].len();
        let one: Vec<Vec<f64>> = inst.sd.iter().map(|s| vec![s[0]]).collect();
        let s1 = summaries(&inst.pop, &one);
        let a = a_optimal_wright(&s1, &AOptWeights::equal(1), inst.n, inst.min).unwrap();
        let w = wright(&s1, 0, inst.n, inst.min).unwrap();
        if a.counts != w.counts {
            bad += 1;
        }
        let s = summaries(&inst.pop, &inst.sd);
        match (a_optimal_neyman(&s, &AOptWeights::unit(p, 0), inst.n as f64), neyman(&s, 0, inst.n as f64)) {
            (Ok(x), Ok(y)) if x.counts == y.counts => {}
            (Err(x), Err(y)) if x == y => {}
            _ => bad += 1,
        }
    }
    report.line(2, bad == 0, format!("single-parameter reductions: {bad} mismatches in 200 instances"));
}

fn criterion_3(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let n = rng.random_range(20..300);
        let q = rng.random_range(1..6);
        let base: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..10.0)).collect();
        let mut aux = Matrix::zeros(n, q);
        for i in 0..n {
            aux[(i, 0)] = 1.0;
            for j in 1..q {
                aux[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let targets: Vec<f64> = (0..q)
            .map(|j| {
                let t: f64 = (0..n).map(|i| base[i] * aux[(i, j)]).sum();
                t + rng.random_range(-0.05..0.05) * (1.0 + t.abs())
            })
            .collect();
        match rake(&base, &aux, &targets) {
            Ok(cal) => {
                for (a, t) in cal.achieved.iter().zip(&targets) {
                    worst = worst.max((a - t).abs() / t.abs().max(1.0));
                }
            }
            Err(_) => failures += 1,
        }
    }
    report.line(
        3,
        failures == 0 && worst <= 1e-8,
        format!("raking calibration: worst relative violation {worst:.2e}, {failures} failures in 200 problems"),
    );
}

fn criterion_4(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_fit: f64 = 0.0;
    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let (n, d) = (200, 3);
        let beta = [-0.5, 0.8, -0.3];
        let mut x = Matrix::zeros(n, d);
        let mut y = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 1..d {
                x[(i, j)] = rng.sample(StandardNormal);
            }
            let eta: f64 = (0..d).map(|j| x[(i, j)] * beta[j]).sum();
            y.push(f64::from(u8::from(rng.random::<f64>() < expit(eta))));
            w.push(rng.random_range(1.0..5.0));
        }
        let fit = fit_logistic(&x, &y, Some(&w)).unwrap();
        let xn = DMatrix::from_row_slice(n, d, x.as_slice());
        let oracle = oracles::irls(&xn, &DVector::from_vec(y.clone()), &DVector::from_vec(w.clone()));
        for j in 0..d {
            worst_fit = worst_fit.max((fit.coef[j] - oracle[j]).abs());
        }
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let g = score(&x, &y, Some(&w), &b);
        for j in 0..d {
            let h = 1e-5;
            let mut up = b.clone();
            let mut dn = b.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (log_likelihood(&x, &y, Some(&w), &up) - log_likelihood(&x, &y, Some(&w), &dn)) / (2.0 * h);
            worst_grad = worst_grad.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    report.line(
        4,
        worst_fit <= 1e-6 && worst_grad <= 1e-5,
        format!("logistic fit vs IRLS oracle max |diff| {worst_fit:.2e}; score vs finite differences max rel {worst_grad:.2e}"),
    );
}

fn table2_config(r: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(&["2O-A"], &[StrategyKind::CaseControl, StrategyKind::AOptimal], r, BASE_SEED);
    cfg.optimality = vec![OptimalityMode::Gr];
    cfg
}

fn within(got: f64, target: f64, rel: f64) -> bool {
    (got / target - 1.0).abs() <= rel
}

fn criterion_5(report: &mut Report, r: usize) -> Experiment {
    let start = Instant::now();
    let exp = run_experiment(&table2_config(r)).expect("2O-A experiment");
    let secs = start.elapsed().as_secs_f64();
    let t = &exp.table;
    let v = |strategy: &str, design: &str, est: &str| t.cell("2O-A", strategy, design, est, "beta11").unwrap().var * 1e3;
    let gr_cc = v("case-control", "fixed", "GR");
    let ipw_cc = v("case-control", "fixed", "IPW");
    let gr_aopt = v("a-optimal", "GR", "GR");
    let pass = within(gr_cc, 2.14, 0.2) && within(ipw_cc, 5.43, 0.2) && within(gr_aopt, 1.86, 0.2) && secs < 900.0;
    report.line(
        5,
        pass,
        format!(
            "2O-A var(beta11) x 10^3 at R={r}: GR case-control {gr_cc:.2} (2.14), IPW case-control {ipw_cc:.2} (5.43), \
             GR A-optimal {gr_aopt:.2} (1.86), {secs:.0}s"
        ),
    );
    exp
}

fn criterion_6(report: &mut Report, r: usize) -> Experiment {
    let scenarios = ["2O-A", "2O-B", "2O-C", "2O-D", "2P-A", "2P-B", "2P-C", "2P-D"];
    let mut cfg = ExperimentConfig::new(&scenarios, &StrategyKind::ALL, r, BASE_SEED);
    cfg.optimality = vec![OptimalityMode::Gr];
    let exp = run_experiment(&cfg).expect("ordering experiment");
    let mut violations = Vec::new();
    for raw in &exp.raw {
        let aopt = raw.cell(StrategyKind::AOptimal, Some(Optimality::Gr)).unwrap();
        for other in raw.cells.iter().filter(|c| c.strategy != StrategyKind::AOptimal) {
            let (diff, se) = paired_variance_difference(&aopt.gr, &other.gr);
            if diff > 2.0 * se {
                violations.push(format!("{} vs {} (+{:.1} se)", raw.scenario, other.strategy.name(), diff / se));
            }
        }
    }
    let ere = exp.table.ere("2O-C", "case-control", "GR", "GR").unwrap().ere;
    let pass = violations.is_empty() && (ere - 0.86).abs() <= 0.06;
    report.line(
        6,
        pass,
        format!(
            "A-optimal GR total variance ordering: {} violations{}; ERE(case-control, 2O-C) = {ere:.3} (0.86)",
            violations.len(),
            if violations.is_empty() { String::new() } else { format!(" [{}]", violations.join("; ")) }
        ),
    );
    exp
}

fn criterion_7(report: &mut Report, exps: &[&Experiment]) {
    let mut below = 0;
    let mut gaps = Vec::new();
    let mut worst: f64 = 0.0;
    for exp in exps {
        for c in &exp.table.cells {
            if c.mse < c.var {
                below += 1;
            }
            let low_error = c.scenario.ends_with("-A") || c.scenario.ends_with("-C");
            if c.estimator == "GR" && low_error {
                let gap = (c.mse - c.var) / c.var;
                worst = worst.max(gap);
                if gap >= 0.05 {
                    gaps.push(format!("{} {} {} {:.3}", c.scenario, c.strategy, c.coef, gap));
                }
            }
        }
    }
    report.line(
        7,
        below == 0 && gaps.is_empty(),
        format!(
            "MSE below variance in {below} cells; low-error GR cells with (MSE-var)/var >= 5%: {} (worst {worst:.3}){}",
            gaps.len(),
            if gaps.is_empty() { String::new() } else { format!(" [{}]", gaps.join("; ")) }
        ),
    );
}

fn criterion_8(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.random_range(2..6);
        let mut strata = Vec::new();
        let mut sums = Vec::new();
        let mut counts = Vec::new();
        for s in 0..k {
            let size = rng.random_range(10..60);
            let scale = rng.random_range(0.5..3.0);
            let vals: Vec<f64> = (0..size).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
            sums.push(StratumSummary::new(s, size, vec![oracles::two_pass_sd(&vals)]));
            counts.push(rng.random_range(2..size / 2));
            strata.push(vals);
        }
        let formula = stratified_variance(&sums, &counts).unwrap()[0];
        let mc = oracles::mc_stratified_variance(&strata, &counts, 200_000, &mut rng);
        worst = worst.max((mc / formula - 1.0).abs());
    }
    report.line(
        8,
        worst <= 0.02,
        format!("stratified variance vs Monte Carlo: worst relative gap {worst:.4} over 20 instances"),
    );
}

fn fractions(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Four strata of 250; parameter 1's influence is large in stratum 1 and
/// nearly reproduced by its phase-1 counterpart, parameter 2's is large in
/// stratum 4 and has an unrelated phase-1 counterpart.
fn criterion_9(report: &mut Report) {
    let (k, per, n) = (4, 250, 200);
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let units = k * per;
        let labels: Vec<usize> = (0..units).map(|u| u / per).collect();
        let mut frame = SamplingFrame::new(units);
        frame.set_strata(Strata::from_labels(labels.clone()).unwrap()).unwrap();
        let sd1 = [4.0, 1.0, 1.0, 1.0];
        let sd2 = [1.0, 1.0, 1.0, 4.0];
        let mut h = Matrix::zeros(units, 2);
        let mut hs = Matrix::zeros(units, 2);
        for u in 0..units {
            let s = labels[u];
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            h[(u, 0)] = sd1[s] * e1;
            h[(u, 1)] = sd2[s] * e2;
            hs[(u, 0)] = h[(u, 0)] + 0.05 * rng.sample::<f64, _>(StandardNormal);
            hs[(u, 1)] = rng.sample(StandardNormal);
        }
        let ids: Vec<usize> = (0..units).collect();
        let h = InfluenceMatrix::new(ids.clone(), h).unwrap();
        let hs = InfluenceMatrix::new(ids, hs).unwrap();
        let ipw_sums = summarize_strata(&frame, &h).unwrap();
        let gr_sums = residual_sds(&frame, &h, &hs, None, Default::default()).unwrap().summaries;
        let gr_aopt = fractions(&a_optimal_wright(&gr_sums, &AOptWeights::equal(2), n, 2).unwrap().counts);
        let ipw1 = fractions(&wright(&ipw_sums, 0, n, 2).unwrap().counts);
        let ipw2 = fractions(&wright(&ipw_sums, 1, n, 2).unwrap().counts);
        if l1(&gr_aopt, &ipw2) < l1(&gr_aopt, &ipw1) {
            hits += 1;
        }
    }
    report.line(
        9,
        hits >= 95,
        format!("GR A-optimal allocation closer to parameter-2 IPW allocation in {hits}/100 seeds"),
    );
}

fn criterion_10(report: &mut Report, first: &Experiment, r: usize) {
    let again = run_experiment(&table2_config(r)).expect("2O-A experiment");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = emit(&first.table, a.path()).unwrap();
    let fb = emit(&again.table, b.path()).unwrap();
    let mut identical = fa.len() == fb.len();
    for (x, y) in fa.iter().zip(&fb) {
        identical &= x.file_name() == y.file_name() && std::fs::read(x).unwrap() == std::fs::read(y).unwrap();
    }
    report.line(
        10,
        identical,
        format!("rerun of criterion 5 with the same base seed: {} files, identical = {identical}", fa.len()),
    );
}

#[test]
fn acceptance() {
    let r = replicates();
    let mut report = Report { failed: Vec::new() };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    let table2 = criterion_5(&mut report, r);
    let ordering = criterion_6(&mut report, r);
    criterion_7(&mut report, &[&table2, &ordering]);
    criterion_8(&mut report);
    criterion_9(&mut report);
    criterion_10(&mut report, &table2, r);

    let strict = std::env::var("MULTIWAVE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let summary = if report.failed.is_empty() {
        "all criteria passed".to_string()
    } else {
        format!("failing criteria: {:?}", report.failed)
    };
    let _ = writeln!(std::io::stdout().lock(), "acceptance summary (R={r}): {summary}");
    if strict {
        assert!(report.failed.is_empty(), "{summary}");
    }
}
