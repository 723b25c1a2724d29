//! Multiwave two-phase sampling designs for several logistic-regression
//! coefficients at once: stratification, optimal allocation, IPW and
//! generalized raking estimation, and a simulation generator.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod allocation;
pub mod design;
pub mod error;
pub mod estim;
pub mod frame;
pub mod linalg;
pub mod seed;
pub mod simgen;
pub mod stats;

pub use allocation::{AOptWeights, Allocation, PriorityCell};
pub use design::{
    phase1, run_design, CaseControlQuota, DesignProblem, DesignRun, Estimates, Optimality, Phase1, RakingAux, Strategy,
    StrategyConfig, TrackedParam,
};
pub use error::{Error, Result};
pub use estim::{InfluenceMatrix, ModelSpec};
pub use frame::{build_strata, Binning, SamplingFrame, StratRule, StratVar, Strata, StratumSummary};
pub use simgen::{gen_frame, ScenarioSpec};
