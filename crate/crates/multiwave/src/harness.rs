//! Replicate runner and result aggregation.

use multiwave_core::seed;
use multiwave_core::{
    build_strata, gen_frame, phase1, run_design, DesignProblem, Optimality, ScenarioSpec, Strategy, StrategyConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StrategyKind};
use crate::error::{Error, Result};

/// Largest tolerated fraction of failed replicates per cell.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Design label used for strategies with fixed quotas.
pub const FIXED_DESIGN: &str = "fixed";

/// Summary statistics for one (scenario, strategy, design, estimator,
/// coefficient) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub scenario: String,
    pub strategy: String,
    /// Optimality the allocations targeted (`IPW`, `GR`, or `fixed`).
    pub design: String,
    pub estimator: String,
    pub coef: String,
    pub true_value: f64,
    pub mean: f64,
    pub var: f64,
    pub mse: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

/// Total variance of one strategy relative to the A-optimal design with the
/// same design optimality and estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EreRow {
    pub scenario: String,
    pub strategy: String,
    pub design: String,
    pub estimator: String,
    pub total_var: f64,
    pub ere: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub cells: Vec<CellRow>,
    pub ere: Vec<EreRow>,
}

impl ResultTable {
    pub fn scenarios(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.scenario) {
                out.push(c.scenario.clone());
            }
        }
        out
    }

    pub fn cell(&self, scenario: &str, strategy: &str, design: &str, estimator: &str, coef: &str) -> Option<&CellRow> {
        self.cells.iter().find(|c| {
            c.scenario == scenario && c.strategy == strategy && c.design == design && c.estimator == estimator && c.coef == coef
        })
    }

    pub fn ere(&self, scenario: &str, strategy: &str, design: &str, estimator: &str) -> Option<&EreRow> {
        self.ere
            .iter()
            .find(|e| e.scenario == scenario && e.strategy == strategy && e.design == design && e.estimator == estimator)
    }
}

/// One strategy run under one design optimality, replicated.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCell {
    pub strategy: StrategyKind,
    /// `None` for fixed-quota strategies.
    pub design: Option<Optimality>,
    /// Tracked IPW estimates per replicate (`None` when the run failed).
    pub ipw: Vec<Option<Vec<f64>>>,
    pub gr: Vec<Option<Vec<f64>>>,
}

impl RawCell {
    pub fn design_name(&self) -> &'static str {
        self.design.map_or(FIXED_DESIGN, Optimality::name)
    }

    pub fn estimates(&self, estimator: Optimality) -> &[Option<Vec<f64>>] {
        match estimator {
            Optimality::Ipw => &self.ipw,
            Optimality::Gr => &self.gr,
        }
    }
}

/// Per-replicate estimates for one scenario, aligned by replicate index
/// across cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRaw {
    pub scenario: String,
    pub coefs: Vec<String>,
    pub true_values: Vec<f64>,
    pub cells: Vec<RawCell>,
}

impl ScenarioRaw {
    pub fn cell(&self, strategy: StrategyKind, design: Option<Optimality>) -> Option<&RawCell> {
        self.cells.iter().find(|c| c.strategy == strategy && c.design == design)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub table: ResultTable,
    pub raw: Vec<ScenarioRaw>,
}

struct Slot {
    kind: StrategyKind,
    strategy: Strategy,
    design: Option<Optimality>,
    stream: u64,
}

fn slots(config: &ExperimentConfig, spec: &ScenarioSpec) -> Vec<Slot> {
    let p = spec.tracked().len();
    let mut out = Vec::new();
    for &kind in &config.strategies {
        let si = StrategyKind::ALL.iter().position(|&k| k == kind).expect("every kind is listed") as u64;
        let strategy = match kind {
            StrategyKind::CaseControl => Strategy::CaseControl(spec.case_control()),
            StrategyKind::Simultaneous => Strategy::Simultaneous,
            StrategyKind::Sequential => Strategy::Sequential((0..p).collect()),
            StrategyKind::SequentialReversed if p == 2 => Strategy::Sequential(vec![1, 0]),
            StrategyKind::SequentialReversed => continue,
            StrategyKind::AOptimal => Strategy::AOptimal,
        };
        if kind == StrategyKind::CaseControl {
            out.push(Slot {
                kind,
                strategy,
                design: None,
                stream: seed::derive(si, &[0]),
            });
            continue;
        }
        for &mode in &config.optimality {
            let design: Optimality = mode.into();
            let mi = match design {
                Optimality::Ipw => 1,
                Optimality::Gr => 2,
            };
            out.push(Slot {
                kind,
                strategy: strategy.clone(),
                design: Some(design),
                stream: seed::derive(si, &[mi]),
            });
        }
    }
    out
}

/// Seed of replicate `r` of `scenario`.
pub fn replicate_seed(base_seed: u64, scenario: &str, r: usize) -> u64 {
    seed::derive(base_seed, &[seed::hash_label(scenario), r as u64])
}

type SlotResult = Option<(Vec<f64>, Vec<f64>)>;

fn run_replicate(config: &ExperimentConfig, spec: &ScenarioSpec, slots: &[Slot], rep_seed: u64) -> Vec<SlotResult> {
    let prepared = (|| -> multiwave_core::Result<_> {
        let mut frame = gen_frame(spec, rep_seed)?;
        let problem = DesignProblem {
            models: spec.models(),
            proxy_models: spec.proxy_models(),
            tracked: spec.tracked(),
        };
        let cc_frame = if slots.iter().any(|s| s.design.is_none()) {
            let mut f = frame.clone();
            build_strata(&mut f, &spec.case_control_rule())?;
            Some(f)
        } else {
            None
        };
        build_strata(&mut frame, &spec.strat_rule())?;
        let p1 = phase1(&frame, &problem)?;
        let cc = match cc_frame {
            Some(f) => {
                let p = p1.restratified(&f)?;
                Some((f, p))
            }
            None => None,
        };
        Ok((frame, problem, p1, cc))
    })();
    let Ok((frame, problem, p1, cc)) = prepared else {
        return slots.iter().map(|_| None).collect();
    };
    let p = problem.tracked.len();
    let weights = config.aopt_weights(&spec.id, p).expect("validated config");
    slots
        .iter()
        .map(|slot| {
            let (frame, p1, budgets) = match (&slot.design, &cc) {
                (None, Some((f, p))) => (f, p, vec![spec.budget]),
                _ => (&frame, &p1, config.wave_budgets(spec.budget)),
            };
            let mut sc = StrategyConfig::new(
                slot.strategy.clone(),
                slot.design.unwrap_or(Optimality::Gr),
                budgets,
                p,
            )
            .with_seed(seed::derive(rep_seed, &[slot.stream]));
            sc.weights = weights.clone();
            sc.min_per_stratum = config.design.min_per_stratum;
            sc.weighted_residuals = config.design.weighted_residuals;
            sc.residual_regressors = config.design.residual_regressors();
            sc.raking_aux = config.design.raking_aux();
            run_design(frame, &problem, p1, &sc).ok().map(|run| (run.ipw.tracked, run.gr.tracked))
        })
        .collect()
}

/// Runs every configured strategy on `config.replicates` generated frames
/// per scenario and aggregates the tracked estimates.
///
/// All strategies within a replicate see the same frame; each (strategy,
/// design) pair has its own sampling stream, so a cell's results do not
/// depend on which other strategies are listed or on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Experiment> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.resolved_threads()? {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;

    let mut table = ResultTable::default();
    let mut raw = Vec::new();
    for id in &config.scenarios {
        let spec = config.scenario_spec(id)?;
        let slots = slots(config, &spec);
        let per_rep: Vec<Vec<SlotResult>> = pool.install(|| {
            (0..config.replicates)
                .into_par_iter()
                .map(|r| run_replicate(config, &spec, &slots, replicate_seed(config.base_seed, id, r)))
                .collect()
        });
        let scenario = ScenarioRaw {
            scenario: id.clone(),
            coefs: spec.tracked().into_iter().map(|t| t.label).collect(),
            true_values: spec.true_values(),
            cells: slots
                .iter()
                .enumerate()
                .map(|(i, slot)| RawCell {
                    strategy: slot.kind,
                    design: slot.design,
                    ipw: per_rep.iter().map(|r| r[i].as_ref().map(|(a, _)| a.clone())).collect(),
                    gr: per_rep.iter().map(|r| r[i].as_ref().map(|(_, b)| b.clone())).collect(),
                })
                .collect(),
        };
        aggregate(&scenario, &mut table)?;
        raw.push(scenario);
    }
    Ok(Experiment { table, raw })
}

/// Sample mean and variance (denominator n-1).
pub fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn aggregate(raw: &ScenarioRaw, table: &mut ResultTable) -> Result<()> {
    let mut totals: Vec<(&RawCell, Optimality, f64)> = Vec::new();
    for cell in &raw.cells {
        let total = cell.ipw.len();
        let failed = cell.ipw.iter().filter(|e| e.is_none()).count();
        if failed as f64 > MAX_FAILURE_RATE * total as f64 || total - failed < 2 {
            return Err(Error::TooManyFailures {
                scenario: raw.scenario.clone(),
                cell: format!("{} ({} design)", cell.strategy.name(), cell.design_name()),
                failed,
                total,
            });
        }
        for estimator in [Optimality::Ipw, Optimality::Gr] {
            let ok: Vec<&Vec<f64>> = cell.estimates(estimator).iter().flatten().collect();
            let mut sum_var = 0.0;
            for (j, coef) in raw.coefs.iter().enumerate() {
                let values: Vec<f64> = ok.iter().map(|e| e[j]).collect();
                let (mean, var) = mean_var(&values);
                let bias = mean - raw.true_values[j];
                sum_var += var;
                table.cells.push(CellRow {
                    scenario: raw.scenario.clone(),
                    strategy: cell.strategy.name().into(),
                    design: cell.design_name().into(),
                    estimator: estimator.name().into(),
                    coef: coef.clone(),
                    true_value: raw.true_values[j],
                    mean,
                    var,
                    mse: var + bias * bias,
                    n_ok: values.len(),
                    n_fail: failed,
                });
            }
            totals.push((cell, estimator, sum_var));
        }
    }
    for &(aopt, estimator, reference) in totals.iter().filter(|t| t.0.strategy == StrategyKind::AOptimal) {
        let design = aopt.design.expect("A-optimal designs have an optimality");
        for &(cell, est, total_var) in &totals {
            let comparable = cell.design.is_none_or(|d| d == design);
            if est != estimator || !comparable {
                continue;
            }
            table.ere.push(EreRow {
                scenario: raw.scenario.clone(),
                strategy: cell.strategy.name().into(),
                design: design.name().into(),
                estimator: estimator.name().into(),
                total_var,
                ere: reference / total_var,
            });
        }
    }
    Ok(())
}

/// Paired comparison of total variance between two cells of the same
/// scenario: returns the estimated difference `total_var(a) - total_var(b)`
/// and its Monte-Carlo standard error. Only replicates where both runs
/// succeeded are used.
pub fn paired_variance_difference(a: &[Option<Vec<f64>>], b: &[Option<Vec<f64>>]) -> (f64, f64) {
    let pairs: Vec<(&Vec<f64>, &Vec<f64>)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()?, y.as_ref()?)))
        .collect();
    let n = pairs.len();
    let p = pairs.first().map_or(0, |(x, _)| x.len());
    let mean_of = |side: usize, j: usize| -> f64 {
        pairs.iter().map(|(x, y)| if side == 0 { x[j] } else { y[j] }).sum::<f64>() / n as f64
    };
    let ma: Vec<f64> = (0..p).map(|j| mean_of(0, j)).collect();
    let mb: Vec<f64> = (0..p).map(|j| mean_of(1, j)).collect();
    let d: Vec<f64> = pairs
        .iter()
        .map(|(x, y)| {
            (0..p)
                .map(|j| (x[j] - ma[j]).powi(2) - (y[j] - mb[j]).powi(2))
                .sum::<f64>()
                * n as f64
                / (n as f64 - 1.0)
        })
        .collect();
    let (mean, var) = mean_var(&d);
    (mean, (var / n as f64).sqrt())
}
