//! Experiment configuration files (TOML).
//!
//! ```toml
//! scenarios = ["2O-A", "2P-C"]
//! strategies = ["case-control", "simultaneous", "sequential", "sequential-reversed", "a-optimal"]
//! optimality = ["ipw", "gr"]
//! replicates = 500
//! base_seed = 2024
//! output_dir = "results"
//! waves = 4
//! threads = 4
//!
//! [design]
//! min_per_stratum = 2
//! weighted_residuals = true
//! residual_regressors = "own"
//! raking_aux = "tracked"
//!
//! [scenario."2O-A"]
//! n_units = 5000
//! budget = 500
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use multiwave_core::estim::ResidualRegressors;
use multiwave_core::{AOptWeights, Optimality, RakingAux, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable consulted when the config does not set `threads`.
pub const THREADS_ENV: &str = "MULTIWAVE_THREADS";

/// The five phase-2 strategies, as named in config files and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    CaseControl,
    Simultaneous,
    /// Tracked parameters in their natural order, one block of waves each.
    Sequential,
    /// As `Sequential` with the order reversed (two-parameter problems only).
    SequentialReversed,
    AOptimal,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::CaseControl,
        StrategyKind::Simultaneous,
        StrategyKind::Sequential,
        StrategyKind::SequentialReversed,
        StrategyKind::AOptimal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::CaseControl => "case-control",
            StrategyKind::Simultaneous => "simultaneous",
            StrategyKind::Sequential => "sequential",
            StrategyKind::SequentialReversed => "sequential-reversed",
            StrategyKind::AOptimal => "a-optimal",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimalityMode {
    Ipw,
    Gr,
}

impl From<OptimalityMode> for Optimality {
    fn from(m: OptimalityMode) -> Self {
        match m {
            OptimalityMode::Ipw => Optimality::Ipw,
            OptimalityMode::Gr => Optimality::Gr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorChoice {
    #[default]
    Own,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuxChoice {
    #[default]
    Tracked,
    All,
}

/// Design settings shared by every strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSettings {
    pub min_per_stratum: usize,
    pub weighted_residuals: bool,
    pub residual_regressors: RegressorChoice,
    pub raking_aux: AuxChoice,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self {
            min_per_stratum: 2,
            weighted_residuals: true,
            residual_regressors: RegressorChoice::Own,
            raking_aux: AuxChoice::Tracked,
        }
    }
}

impl DesignSettings {
    pub fn residual_regressors(&self) -> ResidualRegressors {
        match self.residual_regressors {
            RegressorChoice::Own => ResidualRegressors::Own,
            RegressorChoice::All => ResidualRegressors::All,
        }
    }

    pub fn raking_aux(&self) -> RakingAux {
        match self.raking_aux {
            AuxChoice::Tracked => RakingAux::Tracked,
            AuxChoice::All => RakingAux::AllCoefficients,
        }
    }
}

/// Per-scenario changes to a built-in preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOverride {
    pub n_units: Option<usize>,
    pub budget: Option<usize>,
    pub cor_x1_x2: Option<f64>,
    pub var_u_x1: Option<f64>,
    pub var_u_x2: Option<f64>,
    pub error_cor_continuous: Option<f64>,
    pub error_cor_binary: Option<f64>,
    /// A-optimality weights, one per tracked coefficient (normalised).
    pub aopt_weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenarios: Vec<String>,
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_optimality")]
    pub optimality: Vec<OptimalityMode>,
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_waves")]
    pub waves: usize,
    /// Worker threads; falls back to `MULTIWAVE_THREADS`, then to the
    /// number of CPUs.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub design: DesignSettings,
    #[serde(default, rename = "scenario")]
    pub overrides: BTreeMap<String, ScenarioOverride>,
}

fn default_optimality() -> Vec<OptimalityMode> {
    vec![OptimalityMode::Ipw, OptimalityMode::Gr]
}

fn default_waves() -> usize {
    4
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// A config with default settings for the given scenarios and strategies.
    pub fn new(scenarios: &[&str], strategies: &[StrategyKind], replicates: usize, base_seed: u64) -> Self {
        Self {
            scenarios: scenarios.iter().map(|s| s.to_string()).collect(),
            strategies: strategies.to_vec(),
            optimality: default_optimality(),
            replicates,
            base_seed,
            waves: default_waves(),
            threads: None,
            output_dir: default_output(),
            design: DesignSettings::default(),
            overrides: BTreeMap::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.scenarios.is_empty() {
            return fail("no scenarios listed".into());
        }
        if self.strategies.is_empty() {
            return fail("no strategies listed".into());
        }
        if self.optimality.is_empty() {
            return fail("no optimality modes listed".into());
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return fail(format!("strategy `{}` listed twice", s.name()));
            }
        }
        for (i, m) in self.optimality.iter().enumerate() {
            if self.optimality[..i].contains(m) {
                return fail("optimality mode listed twice".into());
            }
        }
        if self.replicates < 2 {
            return fail(format!("replicates must be at least 2, got {}", self.replicates));
        }
        if self.waves == 0 {
            return fail("waves must be positive".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be positive".into());
        }
        for key in self.overrides.keys() {
            if !self.scenarios.contains(key) {
                return fail(format!("override for unlisted scenario `{key}`"));
            }
        }
        for id in &self.scenarios {
            let spec = self.scenario_spec(id)?;
            if spec.budget < self.waves {
                return fail(format!("{id}: budget {} is smaller than the number of waves", spec.budget));
            }
            self.aopt_weights(id, spec.tracked().len())?;
        }
        Ok(())
    }

    /// The preset with this config's overrides applied.
    pub fn scenario_spec(&self, id: &str) -> Result<ScenarioSpec> {
        let mut spec = ScenarioSpec::preset(id).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(o) = self.overrides.get(id) {
            if let Some(v) = o.n_units {
                spec.n_units = v;
            }
            if let Some(v) = o.budget {
                spec.budget = v;
            }
            if let Some(v) = o.cor_x1_x2 {
                spec.cor_x1_x2 = v;
            }
            if let Some(v) = o.var_u_x1 {
                spec.var_u_x1 = v;
            }
            if let Some(v) = o.var_u_x2 {
                spec.var_u_x2 = v;
            }
            if let Some(v) = o.error_cor_continuous {
                spec.error_cor_continuous = v;
            }
            if let Some(v) = o.error_cor_binary {
                spec.error_cor_binary = v;
            }
        }
        spec.validate().map_err(|e| Error::Config(format!("{id}: {e}")))?;
        Ok(spec)
    }

    pub fn aopt_weights(&self, id: &str, p: usize) -> Result<AOptWeights> {
        match self.overrides.get(id).and_then(|o| o.aopt_weights.as_ref()) {
            None => Ok(AOptWeights::equal(p)),
            Some(w) if w.len() != p => Err(Error::Config(format!(
                "{id}: {} A-optimality weights for {p} tracked coefficients",
                w.len()
            ))),
            Some(w) => AOptWeights::normalized(w).map_err(|e| Error::Config(format!("{id}: {e}"))),
        }
    }

    /// Per-wave budgets, as even as possible with earlier waves larger.
    pub fn wave_budgets(&self, budget: usize) -> Vec<usize> {
        (0..self.waves)
            .map(|t| budget / self.waves + usize::from(t < budget % self.waves))
            .collect()
    }

    /// Worker threads to use, `None` meaning the rayon default.
    pub fn resolved_threads(&self) -> Result<Option<usize>> {
        if let Some(t) = self.threads {
            return Ok(Some(t));
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(t) if t > 0 => Ok(Some(t)),
                _ => Err(Error::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
            },
            Err(_) => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            scenarios = ["2O-A", "2P-C"]
            strategies = ["case-control", "a-optimal"]
            optimality = ["gr"]
            replicates = 10
            base_seed = 7

            [design]
            raking_aux = "all"

            [scenario."2O-A"]
            n_units = 2000
            budget = 200
            aopt_weights = [3.0, 1.0]
        "#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.strategies, [StrategyKind::CaseControl, StrategyKind::AOptimal]);
        assert_eq!(cfg.waves, 4);
        assert_eq!(cfg.design.raking_aux(), RakingAux::AllCoefficients);
        let spec = cfg.scenario_spec("2O-A").unwrap();
        assert_eq!((spec.n_units, spec.budget), (2000, 200));
        assert_eq!(cfg.aopt_weights("2O-A", 2).unwrap().as_slice(), &[0.75, 0.25]);
        assert_eq!(cfg.wave_budgets(1001), [251, 250, 250, 250]);
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = "scenarios = [\"2O-A\"]\nstrategies = [\"a-optimal\"]\n";
        assert!(ExperimentConfig::from_toml(&format!("{base}replicates = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml("scenarios = [\"2O-A\"]\nstrategies = []\nreplicates = 5\n").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}replicates = 5\nbogus = 1\n")).is_err());
        assert!(ExperimentConfig::from_toml("scenarios = [\"9Z\"]\nstrategies = [\"a-optimal\"]\nreplicates = 5\n").is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}replicates = 5\n[scenario.\"2O-A\"]\naopt_weights = [1.0]\n")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("{base}replicates = 5\n[scenario.\"2P-A\"]\nbudget = 10\n")).is_err());
        let err = ExperimentConfig::from_toml(&format!("{base}replicates = 1\n")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
