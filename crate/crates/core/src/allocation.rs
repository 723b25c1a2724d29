//! Optimum allocation of a phase-2 sample across strata.
//!
//! Every allocator minimises the (weighted) sum over strata of
//! `N_k^2 s_k^2 / n_k`, where `s_k` is a per-stratum standard deviation. The
//! continuous allocators return Neyman's closed form; the integer allocators
//! pick the largest entries of the priority array `N_k s_k / sqrt(m (m + 1))`,
//! which is exact because each stratum's term is convex in `n_k`.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::frame::StratumSummary;

/// Importance weights for the weighted A-optimality criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct AOptWeights(Vec<f64>);

impl AOptWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(Error::InvalidInput("A-optimality weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("A-optimality weights sum to {total}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Normalises arbitrary nonnegative importances to sum to one.
    pub fn normalized(raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("A-optimality weights must have a positive sum".into()));
        }
        let mut w: Vec<f64> = raw.iter().map(|a| a / total).collect();
        // absorb rounding so the invariant holds to the last bit
        let drift: f64 = 1.0 - w.iter().sum::<f64>();
        if let Some(last) = w.iter_mut().rev().find(|a| **a > 0.0) {
            *last += drift;
        }
        Self::new(w)
    }

    pub fn equal(p: usize) -> Self {
        Self::normalized(&vec![1.0; p]).expect("p > 0")
    }

    /// All weight on parameter `index`.
    pub fn unit(p: usize, index: usize) -> Self {
        let mut w = vec![0.0; p];
        w[index] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Stratum sample sizes together with the criterion value they achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<C> {
    pub counts: Vec<C>,
    pub total: C,
    /// `sum_k N_k^2 s_k^2 / n_k` for the criterion that produced the counts.
    pub objective: f64,
}

/// One entry of the priority array: adding the `slot`-th unit to `stratum`
/// reduces the criterion by `value^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityCell {
    pub stratum: usize,
    pub slot: usize,
    pub value: f64,
}

impl PriorityCell {
    fn new(stratum: usize, slot: usize, scale: f64) -> Self {
        // slot counts the sample size reached once this cell is taken
        let value = if scale == 0.0 {
            0.0
        } else if slot <= 1 {
            f64::INFINITY
        } else {
            let m = slot as f64;
            scale / libm::sqrt((m - 1.0) * m)
        };
        Self { stratum, slot, value }
    }
}

impl Eq for PriorityCell {}

impl Ord for PriorityCell {
    fn cmp(&self, other: &Self) -> Ordering {
        // larger values first; ties go to the lower stratum, then lower slot
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.stratum.cmp(&self.stratum))
            .then_with(|| other.slot.cmp(&self.slot))
    }
}

impl PartialOrd for PriorityCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `sqrt(sum_p a_p sigma_{p,k}^2)` for one stratum.
pub fn composite_sd(summary: &StratumSummary, weights: &AOptWeights) -> f64 {
    let v: f64 = summary
        .sd_by_param
        .iter()
        .zip(weights.as_slice())
        .map(|(s, a)| a * s * s)
        .sum();
    libm::sqrt(v)
}

/// `sum_k N_k^2 s_k^2 / n_k`; strata with `s_k = 0` contribute nothing and
/// an empty stratum with `s_k > 0` makes the criterion infinite.
pub fn objective<C: Copy + Into<f64>>(pop: &[usize], sd: &[f64], counts: &[C]) -> f64 {
    pop.iter()
        .zip(sd)
        .zip(counts)
        .map(|((&n_pop, &s), &c)| {
            let c: f64 = c.into();
            let num = (n_pop as f64) * (n_pop as f64) * s * s;
            if num == 0.0 {
                0.0
            } else if c <= 0.0 {
                f64::INFINITY
            } else {
                num / c
            }
        })
        .sum()
}

fn counts_f64(counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&c| c as f64).collect()
}

fn check_param(strata: &[StratumSummary], param: usize) -> Result<()> {
    if strata.is_empty() {
        return Err(Error::InvalidInput("no strata".into()));
    }
    for s in strata {
        s.validate()?;
        if param >= s.n_params() {
            return Err(Error::InvalidInput(format!(
                "stratum {} has {} parameters, asked for index {param}",
                s.stratum,
                s.n_params()
            )));
        }
    }
    Ok(())
}

fn pops(strata: &[StratumSummary]) -> Vec<usize> {
    strata.iter().map(|s| s.pop_size).collect()
}

fn composite_sds(strata: &[StratumSummary], weights: &AOptWeights) -> Result<Vec<f64>> {
    for s in strata {
        s.validate()?;
        if s.n_params() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "stratum {} has {} parameters but {} weights were given",
                s.stratum,
                s.n_params(),
                weights.len()
            )));
        }
    }
    Ok(strata.iter().map(|s| composite_sd(s, weights)).collect())
}

/// Continuous Neyman allocation `n_k = n N_k s_k / sum_j N_j s_j`.
pub fn neyman_from_sd(pop: &[usize], sd: &[f64], n: f64) -> Result<Allocation<f64>> {
    if !(n >= 0.0 && n.is_finite()) {
        return Err(Error::InvalidInput(format!("sample size {n} is not a nonnegative number")));
    }
    let total: f64 = pop.iter().zip(sd).map(|(&p, &s)| p as f64 * s).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateAllocation);
    }
    let counts: Vec<f64> = pop.iter().zip(sd).map(|(&p, &s)| n * p as f64 * s / total).collect();
    let objective = objective(pop, sd, &counts);
    Ok(Allocation { counts, total: n, objective })
}

/// Neyman allocation for a single parameter.
pub fn neyman(strata: &[StratumSummary], param: usize, n: f64) -> Result<Allocation<f64>> {
    check_param(strata, param)?;
    let sd: Vec<f64> = strata.iter().map(|s| s.sd_by_param[param]).collect();
    neyman_from_sd(&pops(strata), &sd, n)
}

/// Neyman allocation with each stratum's standard deviation replaced by the
/// weighted composite `sqrt(sum_p a_p sigma_{p,k}^2)`.
pub fn a_optimal_neyman(strata: &[StratumSummary], weights: &AOptWeights, n: f64) -> Result<Allocation<f64>> {
    let sd = composite_sds(strata, weights)?;
    neyman_from_sd(&pops(strata), &sd, n)
}

/// Sum of per-parameter Neyman allocations with budgets `budgets[p]`.
pub fn independent_neyman(strata: &[StratumSummary], budgets: &[f64]) -> Result<Allocation<f64>> {
    let mut counts = vec![0.0; strata.len()];
    for (p, &n_p) in budgets.iter().enumerate() {
        let a = neyman(strata, p, n_p)?;
        counts.iter_mut().zip(&a.counts).for_each(|(c, x)| *c += x);
    }
    let objective = trace_objective(strata, budgets.len(), &counts);
    Ok(Allocation {
        counts,
        total: budgets.iter().sum(),
        objective,
    })
}

/// Sum of per-parameter exact integer allocations with budgets `budgets[p]`.
///
/// Each summand respects `min_per_stratum <= n_pk <= N_k` on its own; the sum
/// may exceed `N_k`, which the multiwave step resolves by redistribution.
pub fn independent_wright(
    strata: &[StratumSummary],
    budgets: &[usize],
    min_per_stratum: usize,
) -> Result<Allocation<usize>> {
    let mut counts = vec![0usize; strata.len()];
    for (p, &n_p) in budgets.iter().enumerate() {
        let a = wright(strata, p, n_p, min_per_stratum)?;
        counts.iter_mut().zip(&a.counts).for_each(|(c, x)| *c += x);
    }
    let objective = trace_objective(strata, budgets.len(), &counts_f64(&counts));
    Ok(Allocation {
        counts,
        total: budgets.iter().sum(),
        objective,
    })
}

fn trace_objective(strata: &[StratumSummary], n_params: usize, counts: &[f64]) -> f64 {
    let pop = pops(strata);
    (0..n_params)
        .map(|p| {
            let sd: Vec<f64> = strata.iter().map(|s| s.sd_by_param[p]).collect();
            objective(&pop, &sd, counts)
        })
        .sum()
}

/// Exact integer allocation for a single parameter (Neyman-Wright).
pub fn wright(strata: &[StratumSummary], param: usize, n: usize, min_per_stratum: usize) -> Result<Allocation<usize>> {
    check_param(strata, param)?;
    let sd: Vec<f64> = strata.iter().map(|s| s.sd_by_param[param]).collect();
    let pop = pops(strata);
    let lower = vec![min_per_stratum; strata.len()];
    let counts = priority_allocation(&pop, &sd, &lower, n)?;
    let objective = objective(&pop, &sd, &counts_f64(&counts));
    Ok(Allocation { counts, total: n, objective })
}

/// Exact integer weighted A-optimal allocation.
pub fn a_optimal_wright(
    strata: &[StratumSummary],
    weights: &AOptWeights,
    n: usize,
    min_per_stratum: usize,
) -> Result<Allocation<usize>> {
    let sd = composite_sds(strata, weights)?;
    let pop = pops(strata);
    let lower = vec![min_per_stratum; strata.len()];
    let counts = priority_allocation(&pop, &sd, &lower, n)?;
    let objective = objective(&pop, &sd, &counts_f64(&counts));
    Ok(Allocation { counts, total: n, objective })
}

/// Greedy selection from the priority array with per-stratum bounds
/// `lower[k] <= n_k <= pop[k]`.
///
/// Each stratum starts at its lower bound; the remaining `n - sum(lower)`
/// units go to the largest cells `pop[k] sd[k] / sqrt((m-1) m)`, with each
/// stratum's stream truncated at slot `pop[k]`.
pub fn priority_allocation(pop: &[usize], sd: &[f64], lower: &[usize], n: usize) -> Result<Vec<usize>> {
    if pop.len() != sd.len() || pop.len() != lower.len() {
        return Err(Error::InvalidInput("stratum inputs differ in length".into()));
    }
    if let Some(k) = (0..pop.len()).find(|&k| lower[k] > pop[k]) {
        return Err(Error::Infeasible(format!(
            "stratum {k} needs {} units but has only {}",
            lower[k], pop[k]
        )));
    }
    if sd.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::InvalidInput("standard deviations must be finite and nonnegative".into()));
    }
    let floor: usize = lower.iter().sum();
    let capacity: usize = pop.iter().sum();
    if n < floor {
        return Err(Error::Infeasible(format!("sample size {n} is below the required minimum {floor}")));
    }
    if n > capacity {
        return Err(Error::Infeasible(format!("sample size {n} exceeds the population size {capacity}")));
    }
    let scale: Vec<f64> = pop.iter().zip(sd).map(|(&p, &s)| p as f64 * s).collect();
    let mut counts = lower.to_vec();
    let mut heap: BinaryHeap<PriorityCell> = (0..pop.len())
        .filter(|&k| counts[k] < pop[k])
        .map(|k| PriorityCell::new(k, counts[k] + 1, scale[k]))
        .collect();
    for _ in floor..n {
        let cell = heap.pop().expect("capacity checked above");
        let k = cell.stratum;
        counts[k] += 1;
        if counts[k] < pop[k] {
            heap.push(PriorityCell::new(k, counts[k] + 1, scale[k]));
        }
    }
    Ok(counts)
}

/// The first `per_stratum` cells of every stratum's priority stream for the
/// weighted A-criterion, starting after `min_per_stratum`, sorted in
/// selection order.
pub fn priority_cells(
    strata: &[StratumSummary],
    weights: &AOptWeights,
    min_per_stratum: usize,
    per_stratum: usize,
) -> Result<Vec<PriorityCell>> {
    let sd = composite_sds(strata, weights)?;
    let mut cells: Vec<PriorityCell> = strata
        .iter()
        .zip(&sd)
        .enumerate()
        .flat_map(|(k, (s, &sd))| {
            let scale = s.pop_size as f64 * sd;
            let last = s.pop_size.min(min_per_stratum + per_stratum);
            (min_per_stratum + 1..=last).map(move |slot| PriorityCell::new(k, slot, scale))
        })
        .collect();
    cells.sort_unstable_by(|a, b| b.cmp(a));
    Ok(cells)
}

/// Converts a cumulative target allocation into this wave's draws.
///
/// Draws are `max(0, target_k - already_k)`, capped by each stratum's
/// unsampled units. When the capped draws overshoot `budget`, units are
/// removed from the strata whose last drawn unit has the smallest priority
/// `scale_k / sqrt((c-1) c)`; when they fall short, units are added to the
/// strata with the largest next priority among those with capacity left.
pub fn multiwave_step(
    target: &[usize],
    already: &[usize],
    pop: &[usize],
    budget: usize,
    scale: &[f64],
) -> Result<Vec<usize>> {
    let k = target.len();
    if already.len() != k || pop.len() != k || scale.len() != k {
        return Err(Error::InvalidInput("stratum inputs differ in length".into()));
    }
    if let Some(s) = (0..k).find(|&s| already[s] > pop[s]) {
        return Err(Error::InvalidInput(format!("stratum {s} has more sampled units than members")));
    }
    let room: Vec<usize> = (0..k).map(|s| pop[s] - already[s]).collect();
    if room.iter().sum::<usize>() < budget {
        return Err(Error::Infeasible(format!("only {} unsampled units remain for a wave of {budget}", room.iter().sum::<usize>())));
    }
    let mut draws: Vec<usize> = (0..k).map(|s| target[s].saturating_sub(already[s]).min(room[s])).collect();
    let mut total: usize = draws.iter().sum();
    while total > budget {
        let s = (0..k)
            .filter(|&s| draws[s] > 0)
            .map(|s| PriorityCell::new(s, already[s] + draws[s], scale[s]))
            .min()
            .expect("positive total has a drawing stratum")
            .stratum;
        draws[s] -= 1;
        total -= 1;
    }
    while total < budget {
        let s = (0..k)
            .filter(|&s| draws[s] < room[s])
            .map(|s| PriorityCell::new(s, already[s] + draws[s] + 1, scale[s]))
            .max()
            .expect("capacity checked above")
            .stratum;
        draws[s] += 1;
        total += 1;
    }
    Ok(draws)
}
