//! Phase-1 cohort data, stratification and phase-2 sampling state.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estim::InfluenceMatrix;
use crate::linalg::Matrix;
use crate::stats;

/// Unit-level phase-1 data together with stratum labels and the wave in
/// which each unit was selected for phase 2 (if any).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingFrame {
    n_units: usize,
    columns: BTreeMap<String, Vec<f64>>,
    strata: Option<Strata>,
    sampled_wave: Vec<Option<u32>>,
}

/// Stratum assignment for every unit. Labels are zero-based and contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Strata {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Strata {
    /// Builds strata from zero-based labels. Every label in `0..K` must be used.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); k];
        for (unit, &s) in labels.iter().enumerate() {
            members[s].push(unit);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("stratum {empty} has no units")));
        }
        Ok(Self { labels, members })
    }

    pub fn n_strata(&self) -> usize {
        self.members.len()
    }

    pub fn label(&self, unit: usize) -> usize {
        self.labels[unit]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self, stratum: usize) -> &[usize] {
        &self.members[stratum]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }
}

impl SamplingFrame {
    pub fn new(n_units: usize) -> Self {
        Self {
            n_units,
            columns: BTreeMap::new(),
            strata: None,
            sampled_wave: vec![None; n_units],
        }
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn add_column(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n_units {
            return Err(Error::ColumnLength {
                name,
                got: values.len(),
                expected: self.n_units,
            });
        }
        self.columns.insert(name, values);
        Ok(())
    }

    pub fn with_column(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        self.add_column(name, values)?;
        Ok(self)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn strata(&self) -> Result<&Strata> {
        self.strata.as_ref().ok_or(Error::NotStratified)
    }

    /// Installs an externally computed stratification.
    pub fn set_strata(&mut self, strata: Strata) -> Result<()> {
        if strata.labels.len() != self.n_units {
            return Err(Error::ColumnLength {
                name: "stratum".into(),
                got: strata.labels.len(),
                expected: self.n_units,
            });
        }
        if self.sampled_wave.iter().any(Option::is_some) && self.strata.is_some() {
            return Err(Error::StrataFrozen);
        }
        self.strata = Some(strata);
        Ok(())
    }

    pub fn sampled_wave(&self, unit: usize) -> Option<u32> {
        self.sampled_wave[unit]
    }

    pub fn sampling_state(&self) -> &[Option<u32>] {
        &self.sampled_wave
    }

    /// Marks a unit as sampled in `wave`. Sampling is without replacement, so
    /// a unit can only be marked once.
    pub fn mark_sampled(&mut self, unit: usize, wave: u32) -> Result<()> {
        match self.sampled_wave.get_mut(unit) {
            None => Err(Error::InvalidInput(format!("unit {unit} out of range"))),
            Some(Some(_)) => Err(Error::AlreadySampled(unit)),
            Some(slot) => {
                *slot = Some(wave);
                Ok(())
            }
        }
    }

    pub fn sampled_units(&self) -> Vec<usize> {
        (0..self.n_units).filter(|&i| self.sampled_wave[i].is_some()).collect()
    }
}

/// How a stratification variable is cut into bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Nonzero values go to bin 1, zero to bin 0.
    Binary,
    /// Split at the sample median (values above the median form bin 1).
    Median,
    /// Cut at the 1/3 and 2/3 sample quantiles.
    Tertiles,
}

impl Binning {
    fn n_bins(self) -> usize {
        match self {
            Binning::Binary | Binning::Median => 2,
            Binning::Tertiles => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratVar {
    pub column: String,
    pub binning: Binning,
}

impl StratVar {
    pub fn new(column: impl Into<String>, binning: Binning) -> Self {
        Self {
            column: column.into(),
            binning,
        }
    }
}

/// Cross-classification rule for building strata.
#[derive(Debug, Clone, PartialEq)]
pub struct StratRule {
    pub vars: Vec<StratVar>,
    /// Cells with fewer units than this are merged into an adjacent cell.
    pub min_stratum_size: usize,
}

impl StratRule {
    pub fn new(vars: Vec<StratVar>) -> Self {
        Self {
            vars,
            min_stratum_size: 4,
        }
    }
}

/// A small cell folded into a neighbour while building strata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMerge {
    pub cell: usize,
    pub size: usize,
    pub into: usize,
}

/// Outcome of [`build_strata`]: which cross-classification cells make up
/// each stratum and which cells had to be merged.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataReport {
    pub n_cells: usize,
    pub stratum_cells: Vec<Vec<usize>>,
    pub empty_cells: Vec<usize>,
    pub merges: Vec<CellMerge>,
}

impl StrataReport {
    pub fn n_strata(&self) -> usize {
        self.stratum_cells.len()
    }
}

/// Cross-classifies the frame by the rule's binned variables and stores the
/// resulting contiguous stratum labels on the frame.
///
/// Cells are numbered in mixed radix with the first variable varying
/// slowest. Empty cells are dropped; cells smaller than
/// `rule.min_stratum_size` are merged into the nearest cell in bin space
/// (Manhattan distance, ties to the lower cell id).
pub fn build_strata(frame: &mut SamplingFrame, rule: &StratRule) -> Result<StrataReport> {
    if frame.sampled_wave.iter().any(Option::is_some) {
        return Err(Error::StrataFrozen);
    }
    if rule.vars.is_empty() {
        return Err(Error::InvalidInput("stratification rule has no variables".into()));
    }
    let n = frame.n_units();
    let radices: Vec<usize> = rule.vars.iter().map(|v| v.binning.n_bins()).collect();
    let n_cells: usize = radices.iter().product();

    let mut cell = vec![0usize; n];
    for var in &rule.vars {
        let values = frame.column(&var.column)?;
        let bins = bin_values(values, var.binning);
        let radix = var.binning.n_bins();
        for (c, b) in cell.iter_mut().zip(bins) {
            *c = *c * radix + b;
        }
    }

    let mut counts = vec![0usize; n_cells];
    for &c in &cell {
        counts[c] += 1;
    }
    let coords: Vec<Vec<usize>> = (0..n_cells).map(|c| cell_coords(c, &radices)).collect();

    // union-find over cells; each group is keyed by its representative
    let mut parent: Vec<usize> = (0..n_cells).collect();
    let mut group_size = counts.clone();
    let mut merges = Vec::new();
    loop {
        let groups: Vec<usize> = (0..n_cells)
            .filter(|&c| find(&mut parent, c) == c && group_size[c] > 0)
            .collect();
        if groups.len() <= 1 {
            break;
        }
        let Some(&small) = groups
            .iter()
            .filter(|&&g| group_size[g] < rule.min_stratum_size)
            .min_by_key(|&&g| (group_size[g], g))
        else {
            break;
        };
        let small_cells: Vec<usize> = (0..n_cells)
            .filter(|&c| counts[c] > 0 && find(&mut parent, c) == small)
            .collect();
        let mut best: Option<(usize, usize)> = None;
        for c in (0..n_cells).filter(|&c| counts[c] > 0) {
            let g = find(&mut parent, c);
            if g == small {
                continue;
            }
            let dist = small_cells
                .iter()
                .map(|&s| manhattan(&coords[s], &coords[c]))
                .min()
                .unwrap_or(usize::MAX);
            if best.is_none_or(|(bd, bg)| (dist, g) < (bd, bg)) {
                best = Some((dist, g));
            }
        }
        let (_, target) = best.expect("at least two groups exist");
        merges.push(CellMerge {
            cell: small,
            size: group_size[small],
            into: target,
        });
        parent[small] = target;
        group_size[target] += group_size[small];
        group_size[small] = 0;
    }

    let mut rep_to_stratum = BTreeMap::new();
    let mut stratum_cells: Vec<Vec<usize>> = Vec::new();
    let mut empty_cells = Vec::new();
    for c in 0..n_cells {
        if counts[c] == 0 {
            empty_cells.push(c);
            continue;
        }
        let rep = find(&mut parent, c);
        let next = rep_to_stratum.len();
        let s = *rep_to_stratum.entry(rep).or_insert(next);
        if s == stratum_cells.len() {
            stratum_cells.push(Vec::new());
        }
        stratum_cells[s].push(c);
    }
    let labels: Vec<usize> = cell
        .iter()
        .map(|&c| rep_to_stratum[&find(&mut parent, c)])
        .collect();
    frame.strata = Some(Strata::from_labels(labels)?);
    Ok(StrataReport {
        n_cells,
        stratum_cells,
        empty_cells,
        merges,
    })
}

fn find(parent: &mut [usize], mut c: usize) -> usize {
    while parent[c] != c {
        parent[c] = parent[parent[c]];
        c = parent[c];
    }
    c
}

fn cell_coords(mut cell: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = cell % r;
        cell /= r;
    }
    out
}

fn manhattan(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).map(|(x, y)| x.abs_diff(*y)).sum()
}

fn bin_values(values: &[f64], binning: Binning) -> Vec<usize> {
    match binning {
        Binning::Binary => values.iter().map(|&v| usize::from(v != 0.0)).collect(),
        Binning::Median => {
            let m = stats::quantile(values, 0.5);
            values.iter().map(|&v| usize::from(v > m)).collect()
        }
        Binning::Tertiles => {
            let q1 = stats::quantile(values, 1.0 / 3.0);
            let q2 = stats::quantile(values, 2.0 / 3.0);
            values
                .iter()
                .map(|&v| if v <= q1 { 0 } else if v <= q2 { 1 } else { 2 })
                .collect()
        }
    }
}

/// Per-stratum design inputs: population size, units already sampled and
/// the standard deviation of each tracked parameter's influence function
/// (or regression residual) within the stratum.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumSummary {
    pub stratum: usize,
    pub pop_size: usize,
    pub already_sampled: usize,
    pub sd_by_param: Vec<f64>,
    /// Full within-stratum covariance of the tracked columns when at least
    /// two rows contributed. Not used by any allocation criterion.
    pub covariance: Option<Matrix>,
    /// Number of rows the standard deviations were computed from.
    pub n_rows: usize,
    /// True when the pooled fallback replaced the within-stratum estimate.
    pub used_fallback: bool,
}

impl StratumSummary {
    pub fn new(stratum: usize, pop_size: usize, sd_by_param: Vec<f64>) -> Self {
        Self {
            stratum,
            pop_size,
            already_sampled: 0,
            sd_by_param,
            covariance: None,
            n_rows: 0,
            used_fallback: false,
        }
    }

    pub fn n_params(&self) -> usize {
        self.sd_by_param.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.already_sampled > self.pop_size {
            return Err(Error::InvalidInput(format!(
                "stratum {}: {} sampled out of {}",
                self.stratum, self.already_sampled, self.pop_size
            )));
        }
        if self.sd_by_param.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "stratum {}: standard deviations must be finite and nonnegative",
                self.stratum
            )));
        }
        Ok(())
    }
}

/// Within-stratum sample standard deviations (denominator n-1) of each
/// column of `influence`, whose rows map to frame units.
///
/// Strata with fewer than two contributing rows take the pooled standard
/// deviation of all rows for that column.
pub fn summarize_strata(frame: &SamplingFrame, influence: &InfluenceMatrix) -> Result<Vec<StratumSummary>> {
    let strata = frame.strata()?;
    let k = strata.n_strata();
    let p = influence.n_params();
    let mut rows_by_stratum: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (row, &unit) in influence.units().iter().enumerate() {
        if unit >= frame.n_units() {
            return Err(Error::InvalidInput(format!("influence row maps to unknown unit {unit}")));
        }
        rows_by_stratum[strata.label(unit)].push(row);
    }
    let values = influence.values();
    let pooled: Vec<f64> = (0..p)
        .map(|j| {
            let col: Vec<f64> = (0..values.rows()).map(|i| values[(i, j)]).collect();
            stats::sample_sd(&col)
        })
        .collect();

    let mut sampled = vec![0usize; k];
    for unit in 0..frame.n_units() {
        if frame.sampled_wave(unit).is_some() {
            sampled[strata.label(unit)] += 1;
        }
    }

    let mut out = Vec::with_capacity(k);
    for (s, rows) in rows_by_stratum.iter().enumerate() {
        let mut summary = StratumSummary::new(s, strata.members(s).len(), Vec::with_capacity(p));
        summary.already_sampled = sampled[s];
        summary.n_rows = rows.len();
        if rows.len() >= 2 {
            let cov = stats::sample_covariance(values, rows);
            summary.sd_by_param = (0..p).map(|j| libm::sqrt(cov[(j, j)].max(0.0))).collect();
            summary.covariance = Some(cov);
        } else {
            if pooled.iter().any(|v| v.is_nan()) {
                return Err(Error::EmptyStratum(s));
            }
            summary.sd_by_param = pooled.clone();
            summary.used_fallback = true;
        }
        out.push(summary);
    }
    Ok(out)
}
