//! Multiwave phase-2 designs: allocation strategies, wave-by-wave sampling
//! and the final IPW / generalized raking estimates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::allocation::{composite_sd, independent_wright, multiwave_step, priority_allocation, AOptWeights};
use crate::error::{Error, Result};
use crate::estim::{
    fit_logistic, gr_estimate, influence, ipw_estimate, residual_sds, InfluenceMatrix, LogisticFit, ModelSpec,
    ResidualRegressors,
};
use crate::frame::{summarize_strata, SamplingFrame, StratumSummary};
use crate::seed;

/// One coefficient of interest: coefficient `coef` (0 = intercept) of
/// model `model`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackedParam {
    pub label: String,
    pub model: usize,
    pub coef: usize,
}

impl TrackedParam {
    pub fn new(label: impl Into<String>, model: usize, coef: usize) -> Self {
        Self {
            label: label.into(),
            model,
            coef,
        }
    }
}

/// Sample `count` units with `column == value`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseControlQuota {
    pub column: String,
    pub value: f64,
    pub count: usize,
}

/// The analysis a design is built for.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    /// Target models on the validated variables.
    pub models: Vec<ModelSpec>,
    /// The same models on the phase-1 proxies.
    pub proxy_models: Vec<ModelSpec>,
    pub tracked: Vec<TrackedParam>,
}

impl DesignProblem {
    pub fn validate(&self) -> Result<()> {
        if self.models.len() != self.proxy_models.len() {
            return Err(Error::InvalidInput("each target model needs a proxy model".into()));
        }
        if self.tracked.is_empty() {
            return Err(Error::InvalidInput("no tracked parameters".into()));
        }
        for (m, p) in self.models.iter().zip(&self.proxy_models) {
            if m.n_coef() != p.n_coef() {
                return Err(Error::InvalidInput(format!(
                    "proxy model for `{}` has a different number of coefficients",
                    m.outcome
                )));
            }
        }
        for t in &self.tracked {
            let ok = self.models.get(t.model).is_some_and(|m| t.coef < m.n_coef());
            if !ok {
                return Err(Error::InvalidInput(format!("tracked parameter `{}` does not exist", t.label)));
            }
        }
        Ok(())
    }
}

/// How the per-wave sample sizes are allocated across strata.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// One wave with fixed quotas on binary phase-1 variables.
    CaseControl(Vec<CaseControlQuota>),
    /// Every wave splits its cumulative budget evenly over the tracked
    /// parameters and sums the single-parameter optimal allocations.
    Simultaneous,
    /// Wave `t` optimises for a single tracked parameter `order[...]`.
    Sequential(Vec<usize>),
    /// Every wave optimises the weighted trace criterion.
    AOptimal,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::CaseControl(_) => "case-control",
            Strategy::Simultaneous => "simultaneous",
            Strategy::Sequential(_) => "sequential",
            Strategy::AOptimal => "a-optimal",
        }
    }
}

/// Which estimator the allocations are optimised for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimality {
    /// Stratum SDs of the influence functions themselves.
    Ipw,
    /// Stratum SDs of influence-function residuals after regression on
    /// their phase-1 counterparts.
    Gr,
}

impl Optimality {
    pub fn name(self) -> &'static str {
        match self {
            Optimality::Ipw => "IPW",
            Optimality::Gr => "GR",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub optimality: Optimality,
    /// Units drawn in each wave.
    pub wave_budgets: Vec<usize>,
    pub weights: AOptWeights,
    pub min_per_stratum: usize,
    pub residual_regressors: ResidualRegressors,
    /// Weight the residual regressions by the current design weights.
    pub weighted_residuals: bool,
    pub raking_aux: RakingAux,
    pub seed: u64,
}

/// Phase-1 influence columns used as raking auxiliaries (besides the
/// intercept).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RakingAux {
    /// The tracked coefficients only.
    #[default]
    Tracked,
    /// Every coefficient of every proxy model.
    AllCoefficients,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, optimality: Optimality, wave_budgets: Vec<usize>, n_params: usize) -> Self {
        Self {
            strategy,
            optimality,
            wave_budgets,
            weights: AOptWeights::equal(n_params),
            min_per_stratum: 2,
            residual_regressors: ResidualRegressors::Own,
            weighted_residuals: true,
            raking_aux: RakingAux::Tracked,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_budget(&self) -> usize {
        self.wave_budgets.iter().sum()
    }
}

/// Tracked parameter driving wave `wave` (0-based) of a sequential design
/// with `n_waves` waves. Waves are split into `order.len()` consecutive
/// blocks as evenly as possible, earlier blocks taking the extra waves.
pub fn sequential_wave_param(order: &[usize], n_waves: usize, wave: usize) -> Result<usize> {
    if order.is_empty() || n_waves < order.len() {
        return Err(Error::InvalidInput(format!(
            "{n_waves} waves cannot cover {} parameters in turn",
            order.len()
        )));
    }
    if wave >= n_waves {
        return Err(Error::InvalidInput(format!("wave {wave} of {n_waves}")));
    }
    let per = n_waves / order.len();
    let extra = n_waves % order.len();
    let mut start = 0;
    for (i, &p) in order.iter().enumerate() {
        let len = per + usize::from(i < extra);
        if wave < start + len {
            return Ok(p);
        }
        start += len;
    }
    unreachable!("wave index checked above")
}

/// Phase-1 quantities shared by every design on the same frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Phase1 {
    /// Proxy-model fits on the whole cohort.
    pub fits: Vec<LogisticFit>,
    /// Influence functions of the tracked proxy coefficients, all units.
    pub hstar: InfluenceMatrix,
    /// Influence functions of every proxy coefficient, model by model.
    pub hstar_all: InfluenceMatrix,
    /// Stratum SDs of `hstar`.
    pub summaries: Vec<StratumSummary>,
}

/// Fits the proxy models to the full cohort and summarises the tracked
/// influence functions by stratum.
pub fn phase1(frame: &SamplingFrame, problem: &DesignProblem) -> Result<Phase1> {
    problem.validate()?;
    let units: Vec<usize> = (0..frame.n_units()).collect();
    let mut fits = Vec::with_capacity(problem.proxy_models.len());
    let mut full = Vec::with_capacity(problem.proxy_models.len());
    for model in &problem.proxy_models {
        let (x, y) = model.design(frame, &units)?;
        let fit = fit_logistic(&x, &y, None)?;
        full.push(influence(&fit, &x, &y, units.clone())?);
        fits.push(fit);
    }
    let hstar = tracked_columns(&full, &problem.tracked)?;
    let summaries = summarize_strata(frame, &hstar)?;
    let hstar_all = InfluenceMatrix::hstack(&full)?;
    Ok(Phase1 {
        fits,
        hstar,
        hstar_all,
        summaries,
    })
}

impl Phase1 {
    /// The same phase-1 fits summarised under the strata currently on
    /// `frame`, which must describe the same cohort.
    pub fn restratified(&self, frame: &SamplingFrame) -> Result<Phase1> {
        if frame.n_units() != self.hstar.n_rows() {
            return Err(Error::InvalidInput("frame and phase-1 fits cover different cohorts".into()));
        }
        Ok(Phase1 {
            summaries: summarize_strata(frame, &self.hstar)?,
            ..self.clone()
        })
    }
}

fn tracked_columns(per_model: &[InfluenceMatrix], tracked: &[TrackedParam]) -> Result<InfluenceMatrix> {
    let parts: Vec<InfluenceMatrix> = tracked
        .iter()
        .map(|t| per_model[t.model].select_columns(&[t.coef]))
        .collect();
    InfluenceMatrix::hstack(&parts)
}

/// Where a wave's stratum standard deviations came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdSource {
    /// Fixed quotas; no standard deviations used.
    None,
    /// Phase-1 proxy influence functions.
    Phase1,
    /// Influence functions of the weighted fits on the units sampled so far.
    Phase2,
    /// Residuals of the phase-2 influence functions on their phase-1
    /// counterparts.
    Residual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveRecord {
    pub wave: usize,
    /// Cumulative per-stratum sample size the wave aimed for.
    pub target: Vec<usize>,
    /// Units drawn per stratum in this wave.
    pub draws: Vec<usize>,
    /// Tracked parameter the wave optimised, for sequential designs.
    pub driving_param: Option<usize>,
    pub source: SdSource,
    /// Stratum summaries the allocation was computed from (empty for
    /// fixed quotas).
    pub summaries: Vec<StratumSummary>,
}

/// Point estimates from a finished design.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    /// Full coefficient vector per target model.
    pub coefs: Vec<Vec<f64>>,
    /// Tracked coefficients in tracking order.
    pub tracked: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRun {
    pub waves: Vec<WaveRecord>,
    /// Sampled units in selection order with their 1-based wave.
    pub sampled: Vec<(usize, u32)>,
    /// Final per-stratum sample sizes, including units sampled before the run.
    pub counts: Vec<usize>,
    /// Every unit in the phase-2 sample, pre-existing ones first.
    pub units: Vec<usize>,
    /// Final design weight `N_k / n_k`, aligned with `units`.
    pub weights: Vec<f64>,
    pub ipw: Estimates,
    pub gr: Estimates,
}

impl DesignRun {
    /// Records the run's draws on `frame`.
    pub fn apply(&self, frame: &mut SamplingFrame) -> Result<()> {
        for &(unit, wave) in &self.sampled {
            frame.mark_sampled(unit, wave)?;
        }
        Ok(())
    }
}

struct SampleState {
    labels: Vec<usize>,
    pop: Vec<usize>,
    sampled: Vec<bool>,
    units: Vec<usize>,
    counts: Vec<usize>,
}

impl SampleState {
    fn new(frame: &SamplingFrame) -> Result<Self> {
        let strata = frame.strata()?;
        let labels = strata.labels().to_vec();
        let pop = strata.sizes();
        let sampled: Vec<bool> = frame.sampling_state().iter().map(Option::is_some).collect();
        let units: Vec<usize> = (0..frame.n_units()).filter(|&u| sampled[u]).collect();
        let mut counts = vec![0; pop.len()];
        for &u in &units {
            counts[labels[u]] += 1;
        }
        Ok(Self {
            labels,
            pop,
            sampled,
            units,
            counts,
        })
    }

    fn weights(&self) -> Vec<f64> {
        self.units
            .iter()
            .map(|&u| {
                let k = self.labels[u];
                self.pop[k] as f64 / self.counts[k] as f64
            })
            .collect()
    }

    fn add(&mut self, unit: usize) {
        self.sampled[unit] = true;
        self.units.push(unit);
        self.counts[self.labels[unit]] += 1;
    }
}

/// Splits each quota over the design strata whose units all match it, in
/// proportion to their unsampled units, and returns per-stratum draws.
///
/// A quota column must be constant within every stratum. Quotas are filled
/// in order; when the matching strata run out, the shortfall is spread over
/// the remaining quotas in proportion to their sizes.
pub fn case_control_allocation(
    frame: &SamplingFrame,
    quotas: &[CaseControlQuota],
    already: &[usize],
) -> Result<Vec<usize>> {
    let strata = frame.strata()?;
    let k = strata.n_strata();
    if already.len() != k {
        return Err(Error::InvalidInput("one sampled count per stratum is required".into()));
    }
    let mut stratum_values: Vec<Vec<f64>> = Vec::with_capacity(quotas.len());
    for q in quotas {
        let col = frame.column(&q.column)?;
        let mut values = Vec::with_capacity(k);
        for s in 0..k {
            let members = strata.members(s);
            let v = members.first().map_or(f64::NAN, |&u| col[u]);
            if members.iter().any(|&u| col[u] != v) {
                return Err(Error::InvalidInput(format!(
                    "quota column `{}` varies within stratum {s}",
                    q.column
                )));
            }
            values.push(v);
        }
        stratum_values.push(values);
    }
    let mut room: Vec<usize> = (0..k).map(|s| strata.members(s).len().saturating_sub(already[s])).collect();
    let mut draws = vec![0usize; k];
    let mut wanted: Vec<f64> = quotas.iter().map(|q| q.count as f64).collect();
    let mut carry = 0.0;
    for (i, q) in quotas.iter().enumerate() {
        let want = libm::round(wanted[i] + carry) as usize;
        carry = 0.0;
        let eligible: Vec<usize> = (0..k).filter(|&s| stratum_values[i][s] == q.value).collect();
        let available: usize = eligible.iter().map(|&s| room[s]).sum();
        let take = want.min(available);
        let shares = largest_remainder(&eligible.iter().map(|&s| room[s] as f64).collect::<Vec<_>>(), take);
        for (&s, &d) in eligible.iter().zip(&shares) {
            draws[s] += d;
            room[s] -= d;
        }
        let short = (want - take) as f64;
        if short > 0.0 {
            let rest: f64 = wanted[i + 1..].iter().sum();
            if rest > 0.0 {
                for w in &mut wanted[i + 1..] {
                    *w += short * *w / rest;
                }
            } else {
                carry = short;
            }
        }
    }
    let total: usize = quotas.iter().map(|q| q.count).sum();
    let got: usize = draws.iter().sum();
    if got != total {
        return Err(Error::Infeasible(format!(
            "case-control quotas call for {total} units but only {got} match"
        )));
    }
    Ok(draws)
}

/// Integer shares of `n` proportional to `sizes`, capped at `sizes`, by
/// largest remainders (ties to the lower index).
fn largest_remainder(sizes: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = sizes.iter().sum();
    if sizes.is_empty() || total <= 0.0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|s| n as f64 * s / total).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| libm::floor(*e) as usize).collect();
    let mut left = n - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - libm::floor(exact[a]);
        let rb = exact[b] - libm::floor(exact[b]);
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if (out[i] as f64) < sizes[i] {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

/// Simple random sample without replacement of `count` unsampled members of
/// each stratum.
fn draw_units(frame: &SamplingFrame, state: &SampleState, draws: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let strata = frame.strata()?;
    let mut chosen = Vec::with_capacity(draws.iter().sum());
    for (s, &d) in draws.iter().enumerate() {
        if d == 0 {
            continue;
        }
        let mut pool: Vec<usize> = strata.members(s).iter().copied().filter(|&u| !state.sampled[u]).collect();
        if pool.len() < d {
            return Err(Error::Infeasible(format!(
                "stratum {s} has {} unsampled units, {d} requested",
                pool.len()
            )));
        }
        for i in 0..d {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        chosen.extend_from_slice(&pool[..d]);
    }
    Ok(chosen)
}

fn summaries_for_wave(
    frame: &SamplingFrame,
    problem: &DesignProblem,
    phase1: &Phase1,
    config: &StrategyConfig,
    state: &SampleState,
    wave: usize,
) -> Result<(Vec<StratumSummary>, SdSource)> {
    let (mut summaries, source) = if wave == 0 || state.units.is_empty() {
        (phase1.summaries.clone(), SdSource::Phase1)
    } else {
        let weights = state.weights();
        let per_model = problem
            .models
            .iter()
            .map(|m| ipw_estimate(frame, m, &state.units, &weights).map(|e| e.influence))
            .collect::<Result<Vec<_>>>()?;
        let h = tracked_columns(&per_model, &problem.tracked)?;
        match config.optimality {
            Optimality::Ipw => (summarize_strata(frame, &h)?, SdSource::Phase2),
            Optimality::Gr => {
                let w = config.weighted_residuals.then_some(weights.as_slice());
                let fit = residual_sds(frame, &h, &phase1.hstar, w, config.residual_regressors)?;
                (fit.summaries, SdSource::Residual)
            }
        }
    };
    for s in &mut summaries {
        s.already_sampled = state.counts[s.stratum];
    }
    Ok((summaries, source))
}

/// Runs a design on `frame` (which must be stratified) and returns the
/// waves, the sample and the IPW and generalized raking estimates.
///
/// Units already marked sampled on the frame count toward every stratum's
/// sample size. The frame itself is not modified; see [`DesignRun::apply`].
pub fn run_design(
    frame: &SamplingFrame,
    problem: &DesignProblem,
    phase1: &Phase1,
    config: &StrategyConfig,
) -> Result<DesignRun> {
    problem.validate()?;
    let p = problem.tracked.len();
    if config.weights.len() != p {
        return Err(Error::InvalidInput(format!("{} A-optimality weights for {p} parameters", config.weights.len())));
    }
    if phase1.hstar.n_params() != p {
        return Err(Error::InvalidInput("phase-1 quantities were computed for another problem".into()));
    }
    let mut state = SampleState::new(frame)?;
    let k = state.pop.len();
    let mut waves = Vec::new();
    let mut sampled = Vec::new();

    let n_waves = match &config.strategy {
        Strategy::CaseControl(_) => 1,
        _ => config.wave_budgets.len(),
    };
    if n_waves == 0 {
        return Err(Error::InvalidInput("a design needs at least one wave".into()));
    }
    if let Strategy::Sequential(order) = &config.strategy {
        if order.iter().any(|&i| i >= p) {
            return Err(Error::InvalidInput("sequential order names an unknown parameter".into()));
        }
        sequential_wave_param(order, n_waves, 0)?;
    }

    for wave in 0..n_waves {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(config.seed, &[wave as u64]));
        let already = state.counts.clone();
        let (target, draws, driving_param, source, summaries) = match &config.strategy {
            Strategy::CaseControl(quotas) => {
                let total: usize = quotas.iter().map(|q| q.count).sum();
                if total != config.total_budget() {
                    return Err(Error::InvalidInput(format!(
                        "case-control quotas sum to {total}, the budget is {}",
                        config.total_budget()
                    )));
                }
                let draws = case_control_allocation(frame, quotas, &already)?;
                let target: Vec<usize> = (0..k).map(|s| already[s] + draws[s]).collect();
                (target, draws, None, SdSource::None, Vec::new())
            }
            strategy => {
                let budget = config.wave_budgets[wave];
                let cumulative = state.units.len() + budget;
                let (summaries, source) = summaries_for_wave(frame, problem, phase1, config, &state, wave)?;
                let lower: Vec<usize> = (0..k)
                    .map(|s| config.min_per_stratum.min(state.pop[s]).max(already[s]))
                    .collect();
                let (target, driving, scale): (Vec<usize>, Option<usize>, Vec<f64>) = match strategy {
                    Strategy::Simultaneous => {
                        let budgets: Vec<usize> = (0..p).map(|i| cumulative / p + usize::from(i < cumulative % p)).collect();
                        let mut min = config.min_per_stratum.min(state.pop.iter().copied().min().unwrap_or(0));
                        // small budgets cannot give every sub-allocation its own minimum
                        if budgets.iter().any(|&b| b < min * k) {
                            min = 0;
                        }
                        let summed = independent_wright(&summaries, &budgets, min)?.counts;
                        let target = summed.iter().zip(&lower).map(|(&t, &l)| t.max(l)).collect();
                        let equal = AOptWeights::equal(p);
                        let scale = summaries.iter().map(|s| s.pop_size as f64 * composite_sd(s, &equal)).collect();
                        (target, None, scale)
                    }
                    Strategy::Sequential(order) => {
                        let param = sequential_wave_param(order, n_waves, wave)?;
                        let sd: Vec<f64> = summaries.iter().map(|s| s.sd_by_param[param]).collect();
                        let target = priority_allocation(&state.pop, &sd, &lower, cumulative)?;
                        let scale = summaries.iter().zip(&sd).map(|(s, &sd)| s.pop_size as f64 * sd).collect();
                        (target, Some(param), scale)
                    }
                    Strategy::AOptimal => {
                        let sd: Vec<f64> = summaries.iter().map(|s| composite_sd(s, &config.weights)).collect();
                        let target = priority_allocation(&state.pop, &sd, &lower, cumulative)?;
                        let scale = summaries.iter().zip(&sd).map(|(s, &sd)| s.pop_size as f64 * sd).collect();
                        (target, None, scale)
                    }
                    Strategy::CaseControl(_) => unreachable!("handled above"),
                };
                let draws = multiwave_step(&target, &already, &state.pop, budget, &scale)?;
                (target, draws, driving, source, summaries)
            }
        };
        for unit in draw_units(frame, &state, &draws, &mut rng)? {
            state.add(unit);
            sampled.push((unit, wave as u32 + 1));
        }
        waves.push(WaveRecord {
            wave: wave + 1,
            target,
            draws,
            driving_param,
            source,
            summaries,
        });
    }

    let weights = state.weights();
    let ipw_fits = problem
        .models
        .iter()
        .map(|m| ipw_estimate(frame, m, &state.units, &weights).map(|e| e.fit))
        .collect::<Result<Vec<_>>>()?;
    let aux = match config.raking_aux {
        RakingAux::Tracked => &phase1.hstar,
        RakingAux::AllCoefficients => &phase1.hstar_all,
    };
    let gr = gr_estimate(frame, &problem.models, &state.units, &weights, aux)?;
    Ok(DesignRun {
        waves,
        sampled,
        counts: state.counts.clone(),
        units: state.units.clone(),
        weights,
        ipw: estimates(&ipw_fits, &problem.tracked),
        gr: estimates(&gr.fits, &problem.tracked),
    })
}

fn estimates(fits: &[LogisticFit], tracked: &[TrackedParam]) -> Estimates {
    Estimates {
        coefs: fits.iter().map(|f| f.coef.clone()).collect(),
        tracked: tracked.iter().map(|t| fits[t.model].coef[t.coef]).collect(),
    }
}
