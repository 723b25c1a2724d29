//! Configuration for running one multiwave design on a user-supplied frame.
//!
//! ```toml
//! frame = "cohort.csv"
//! strategy = "a-optimal"
//! optimality = "gr"
//! wave_budgets = [250, 250, 250, 250]
//! seed = 11
//!
//! [[strata]]
//! column = "y_star"
//! binning = "binary"
//!
//! [[strata]]
//! column = "x_star"
//! binning = "median"
//!
//! [[models]]
//! outcome = "y"
//! covariates = ["x", "z"]
//!
//! [[proxy_models]]
//! outcome = "y_star"
//! covariates = ["x_star", "z"]
//!
//! [[tracked]]
//! label = "beta_x"
//! model = 0
//! coef = 1
//! ```
//!
//! Case-control designs list their quotas as `[[case_control]]` tables with
//! `column`, `value` and `count`; sequential designs may give `order`
//! (0-based indices into `tracked`).

use std::path::{Path, PathBuf};

use multiwave_core::estim::ModelSpec;
use multiwave_core::{
    build_strata, phase1, run_design, AOptWeights, Binning, CaseControlQuota, DesignProblem, DesignRun, SamplingFrame,
    StratRule, StratVar, Strategy, StrategyConfig, TrackedParam,
};
use serde::Deserialize;

use crate::config::{DesignSettings, OptimalityMode, StrategyKind};
use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinningName {
    Binary,
    Median,
    Tertiles,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrataVar {
    pub column: String,
    pub binning: BinningName,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub outcome: String,
    pub covariates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackedEntry {
    pub label: String,
    pub model: usize,
    pub coef: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotaEntry {
    pub column: String,
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    /// CSV frame, relative to the design file's directory.
    pub frame: PathBuf,
    pub strategy: StrategyKind,
    pub optimality: OptimalityMode,
    pub wave_budgets: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    pub strata: Vec<StrataVar>,
    #[serde(default = "default_min_size")]
    pub min_stratum_size: usize,
    pub models: Vec<ModelEntry>,
    pub proxy_models: Vec<ModelEntry>,
    pub tracked: Vec<TrackedEntry>,
    #[serde(default)]
    pub order: Option<Vec<usize>>,
    #[serde(default)]
    pub aopt_weights: Option<Vec<f64>>,
    #[serde(default)]
    pub case_control: Vec<QuotaEntry>,
    #[serde(default)]
    pub design: DesignSettings,
}

fn default_min_size() -> usize {
    4
}

fn model(m: &ModelEntry) -> ModelSpec {
    let covs: Vec<&str> = m.covariates.iter().map(String::as_str).collect();
    ModelSpec::new(m.outcome.as_str(), &covs)
}

impl DesignFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file: Self = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if file.frame.is_relative() {
            if let Some(dir) = path.parent() {
                file.frame = dir.join(&file.frame);
            }
        }
        Ok(file)
    }

    pub fn problem(&self) -> DesignProblem {
        DesignProblem {
            models: self.models.iter().map(model).collect(),
            proxy_models: self.proxy_models.iter().map(model).collect(),
            tracked: self.tracked.iter().map(|t| TrackedParam::new(t.label.as_str(), t.model, t.coef)).collect(),
        }
    }

    pub fn rule(&self) -> StratRule {
        let vars = self
            .strata
            .iter()
            .map(|v| {
                let b = match v.binning {
                    BinningName::Binary => Binning::Binary,
                    BinningName::Median => Binning::Median,
                    BinningName::Tertiles => Binning::Tertiles,
                };
                StratVar::new(v.column.as_str(), b)
            })
            .collect();
        StratRule {
            min_stratum_size: self.min_stratum_size,
            ..StratRule::new(vars)
        }
    }

    pub fn strategy_config(&self) -> Result<StrategyConfig> {
        let p = self.tracked.len();
        let strategy = match self.strategy {
            StrategyKind::CaseControl => {
                if self.case_control.is_empty() {
                    return Err(Error::Config("case-control designs need [[case_control]] quotas".into()));
                }
                Strategy::CaseControl(
                    self.case_control
                        .iter()
                        .map(|q| CaseControlQuota {
                            column: q.column.clone(),
                            value: q.value,
                            count: q.count,
                        })
                        .collect(),
                )
            }
            StrategyKind::Simultaneous => Strategy::Simultaneous,
            StrategyKind::Sequential => Strategy::Sequential(self.order.clone().unwrap_or_else(|| (0..p).collect())),
            StrategyKind::SequentialReversed => {
                Strategy::Sequential(self.order.clone().unwrap_or_else(|| (0..p).rev().collect()))
            }
            StrategyKind::AOptimal => Strategy::AOptimal,
        };
        let mut sc = StrategyConfig::new(strategy, self.optimality.into(), self.wave_budgets.clone(), p).with_seed(self.seed);
        if let Some(w) = &self.aopt_weights {
            sc.weights = AOptWeights::normalized(w).map_err(|e| Error::Config(e.to_string()))?;
        }
        sc.min_per_stratum = self.design.min_per_stratum;
        sc.weighted_residuals = self.design.weighted_residuals;
        sc.residual_regressors = self.design.residual_regressors();
        sc.raking_aux = self.design.raking_aux();
        Ok(sc)
    }

    /// Loads and stratifies the frame, runs the design and returns the
    /// stratified frame with the run.
    pub fn run(&self) -> Result<(SamplingFrame, DesignRun)> {
        let mut frame = io::read_frame(&self.frame)?;
        build_strata(&mut frame, &self.rule())?;
        let problem = self.problem();
        let config = self.strategy_config()?;
        let p1 = phase1(&frame, &problem)?;
        let run = run_design(&frame, &problem, &p1, &config)?;
        Ok((frame, run))
    }
}
