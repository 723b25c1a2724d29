//! Design-based estimation: weighted logistic regression, influence
//! functions, raking calibration, inverse-probability-weighted and
//! generalized raking estimators, residual standard deviations for
//! raking-optimal designs and the stratified variance formula.

mod estimators;
mod influence;
mod logistic;
mod rake;
mod residual;
mod variance;

pub use estimators::{gr_estimate, ipw_estimate, GrEstimate, IpwEstimate, ModelSpec};
pub use influence::{influence, InfluenceMatrix};
pub use logistic::{fit_logistic, fit_logistic_with, log_likelihood, score, IrlsOptions, LogisticFit};
pub use rake::{rake, rake_with, CalibratedWeights, RakeOptions};
pub use residual::{residual_sds, ResidualFit, ResidualRegressors};
pub use variance::stratified_variance;
