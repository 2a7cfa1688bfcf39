//! Finite filtered probability spaces.
//!
//! A [`FilteredSpace`] is a finite outcome set with strictly positive weights,
//! a chain of refining partitions `Π_0 ⊑ Π_1 ⊑ … ⊑ Π_N` (the atoms of the
//! σ-algebras `F_n`) and a block partition `{Ω_j}` used by the amalgam norms.
//! Random variables are plain value tables indexed by outcome position.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative tolerance for equality checks.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of stopping times an exact enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// `|a - b| <= tol * max(1, |a|, |b|)`.
#[inline]
pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}

/// A partition of `0..m` into cells. Cell order is preserved as given; the
/// members of each cell are kept sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl Partition {
    /// Builds a partition, checking disjointness and coverage. Empty cells are
    /// rejected unless `allow_empty` is set.
    pub fn new(cells: Vec<Vec<usize>>, m: usize, allow_empty: bool) -> Result<Self> {
        let mut cell_of = vec![usize::MAX; m];
        let mut cells = cells;
        for (c, cell) in cells.iter_mut().enumerate() {
            if cell.is_empty() && !allow_empty {
                return Err(Error::InvalidSpace(format!("cell {c} is empty")));
            }
            cell.sort_unstable();
            for &w in cell.iter() {
                if w >= m {
                    return Err(Error::InvalidSpace(format!("outcome index {w} out of range")));
                }
                if cell_of[w] != usize::MAX {
                    return Err(Error::InvalidSpace(format!(
                        "outcome {w} appears in more than one cell"
                    )));
                }
                cell_of[w] = c;
            }
        }
        if let Some(w) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidSpace(format!("outcome {w} is not covered")));
        }
        Ok(Self { cells, cell_of })
    }

    pub fn trivial(m: usize) -> Self {
        Self {
            cells: vec![(0..m).collect()],
            cell_of: vec![0; m],
        }
    }

    pub fn discrete(m: usize) -> Self {
        Self {
            cells: (0..m).map(|w| vec![w]).collect(),
            cell_of: (0..m).collect(),
        }
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, outcome: usize) -> usize {
        self.cell_of[outcome]
    }

    /// True iff every cell of `self` lies inside a single cell of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.cells.iter().all(|cell| match cell.first() {
            None => true,
            Some(&first) => {
                let target = coarser.cell_of(first);
                cell.iter().all(|&w| coarser.cell_of(w) == target)
            }
        })
    }

    /// True iff `set` (a membership mask) is a union of cells.
    pub fn is_union_of_cells(&self, set: &[bool]) -> bool {
        self.cells
            .iter()
            .all(|cell| cell.iter().all(|&w| set[w] == set[cell[0]]))
    }
}

/// A real-valued function on the outcomes of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RandomVariable(Vec<f64>);

impl RandomVariable {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![0.0; m])
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self(vec![c; m])
    }

    /// The indicator of a membership mask.
    pub fn indicator(set: &[bool]) -> Self {
        Self(set.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, outcome: usize) -> f64 {
        self.0[outcome]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Pointwise `self >= other` up to the relative tolerance.
    pub fn dominates(&self, other: &Self, tol: f64) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .all(|(&a, &b)| a >= b || approx_eq(a, b, tol))
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.len() == other.len()
            && self
                .0
                .iter()
                .zip(&other.0)
                .all(|(&a, &b)| approx_eq(a, b, tol))
    }
}

impl Add for &RandomVariable {
    type Output = RandomVariable;
    fn add(self, rhs: Self) -> RandomVariable {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &RandomVariable {
    type Output = RandomVariable;
    fn sub(self, rhs: Self) -> RandomVariable {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &RandomVariable {
    type Output = RandomVariable;
    fn mul(self, c: f64) -> RandomVariable {
        self.map(|x| c * x)
    }
}

impl Neg for &RandomVariable {
    type Output = RandomVariable;
    fn neg(self) -> RandomVariable {
        self.map(|x| -x)
    }
}

/// A random time `ω ↦ {0, …, N} ∪ {∞}`; `None` encodes `∞`. Deserialized
/// values are unchecked until validated against a space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StoppingTime {
    times: Vec<Option<usize>>,
}

impl StoppingTime {
    /// Builds a stopping time, checking that `{ν = n}` is a union of cells of
    /// `Π_n` for every `n` and that all finite values are at most `N`.
    pub fn new(space: &FilteredSpace, times: Vec<Option<usize>>) -> Result<Self> {
        let nu = Self { times };
        space.check_stopping_time(&nu)?;
        Ok(nu)
    }

    /// Skips validation. Callers must guarantee measurability.
    pub(crate) fn from_times_unchecked(times: Vec<Option<usize>>) -> Self {
        Self { times }
    }

    pub fn constant(space: &FilteredSpace, time: Option<usize>) -> Result<Self> {
        Self::new(space, vec![time; space.len()])
    }

    pub fn never(space: &FilteredSpace) -> Self {
        Self {
            times: vec![None; space.len()],
        }
    }

    pub fn times(&self) -> &[Option<usize>] {
        &self.times
    }

    pub fn time(&self, outcome: usize) -> Option<usize> {
        self.times[outcome]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Membership mask of `B_ν = {ν ≠ ∞}`.
    pub fn support(&self) -> Vec<bool> {
        self.times.iter().map(Option::is_some).collect()
    }

    /// `ν(ω) ≥ n`, with `∞ ≥ n` for all `n`.
    pub fn reaches(&self, outcome: usize, n: usize) -> bool {
        self.times[outcome].is_none_or(|t| t >= n)
    }

    /// Pointwise `self ≤ other`.
    pub fn le(&self, other: &StoppingTime) -> bool {
        self.times
            .iter()
            .zip(&other.times)
            .all(|(a, b)| time_key(*a) <= time_key(*b))
    }

    /// Lexicographic order of the time tables with `∞` largest.
    pub fn lex_cmp(&self, other: &StoppingTime) -> Ordering {
        self.times
            .iter()
            .map(|t| time_key(*t))
            .cmp(other.times.iter().map(|t| time_key(*t)))
    }
}

#[inline]
fn time_key(t: Option<usize>) -> usize {
    t.unwrap_or(usize::MAX)
}

/// Result of counting stopping times against a cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoppingTimeCount {
    Exact(u64),
    ExceedsCap,
}

/// A finite filtered probability space with an amalgam block partition.
#[derive(Debug)]
pub struct FilteredSpace {
    outcomes: Vec<String>,
    prob: Vec<f64>,
    filtration: Vec<Partition>,
    blocks: Partition,
    // parents[n][c]: index in Π_{n-1} of the cell containing cell c of Π_n (n ≥ 1)
    parents: Vec<Vec<usize>>,
    // children[n][c]: cells of Π_{n+1} inside cell c of Π_n (n < N)
    children: Vec<Vec<Vec<usize>>>,
    cell_prob: Vec<Vec<f64>>,
    tol: f64,
    regularity: OnceLock<f64>,
}

impl Clone for FilteredSpace {
    fn clone(&self) -> Self {
        Self {
            outcomes: self.outcomes.clone(),
            prob: self.prob.clone(),
            filtration: self.filtration.clone(),
            blocks: self.blocks.clone(),
            parents: self.parents.clone(),
            children: self.children.clone(),
            cell_prob: self.cell_prob.clone(),
            tol: self.tol,
            regularity: self.regularity.clone(),
        }
    }
}

impl PartialEq for FilteredSpace {
    fn eq(&self, other: &Self) -> bool {
        self.outcomes == other.outcomes
            && self.prob == other.prob
            && self.filtration == other.filtration
            && self.blocks == other.blocks
    }
}

impl FilteredSpace {
    /// Builds and validates a space. `filtration[n]` lists the cells of `Π_n`
    /// as outcome indices; `blocks` lists the amalgam blocks (may contain empty
    /// blocks).
    pub fn new(
        outcomes: Vec<String>,
        prob: Vec<f64>,
        filtration: Vec<Vec<Vec<usize>>>,
        blocks: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let m = outcomes.len();
        if m == 0 {
            return Err(Error::InvalidSpace("outcome set is empty".into()));
        }
        if prob.len() != m {
            return Err(Error::InvalidSpace(format!(
                "{} probabilities for {m} outcomes",
                prob.len()
            )));
        }
        if let Some(w) = prob.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidSpace(format!(
                "probability of outcome {w} is not strictly positive"
            )));
        }
        let total: f64 = prob.iter().sum();
        if (total - 1.0).abs() > DEFAULT_TOLERANCE {
            return Err(Error::InvalidSpace(format!("probabilities sum to {total}")));
        }
        {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = outcomes.iter().find(|o| !seen.insert(o.as_str())) {
                return Err(Error::InvalidSpace(format!("duplicate outcome id {dup:?}")));
            }
        }
        if filtration.is_empty() {
            return Err(Error::InvalidSpace("filtration has no levels".into()));
        }
        let filtration = filtration
            .into_iter()
            .map(|cells| Partition::new(cells, m, false))
            .collect::<Result<Vec<_>>>()?;
        if filtration[0].len() != 1 {
            return Err(Error::InvalidSpace("Π_0 must be the trivial partition".into()));
        }
        for n in 1..filtration.len() {
            if !filtration[n].refines(&filtration[n - 1]) {
                return Err(Error::InvalidSpace(format!("Π_{n} does not refine Π_{}", n - 1)));
            }
        }
        let blocks = Partition::new(blocks, m, true)?;

        let horizon = filtration.len() - 1;
        let cell_prob: Vec<Vec<f64>> = filtration
            .iter()
            .map(|part| {
                part.cells()
                    .iter()
                    .map(|cell| cell.iter().map(|&w| prob[w]).sum())
                    .collect()
            })
            .collect();
        let mut parents = vec![Vec::new()];
        let mut children = Vec::with_capacity(horizon);
        for n in 1..=horizon {
            let up: Vec<usize> = filtration[n]
                .cells()
                .iter()
                .map(|cell| filtration[n - 1].cell_of(cell[0]))
                .collect();
            let mut down = vec![Vec::new(); filtration[n - 1].len()];
            for (c, &parent) in up.iter().enumerate() {
                down[parent].push(c);
            }
            parents.push(up);
            children.push(down);
        }

        Ok(Self {
            outcomes,
            prob,
            filtration,
            blocks,
            parents,
            children,
            cell_prob,
            tol: DEFAULT_TOLERANCE,
            regularity: OnceLock::new(),
        })
    }

    /// Uniform dyadic space of the given depth with a single block.
    pub fn dyadic(depth: usize) -> Result<Self> {
        Self::uniform_tree(2, depth)
    }

    /// Uniform `branching`-ary tree of the given depth with a single block.
    pub fn uniform_tree(branching: usize, depth: usize) -> Result<Self> {
        if branching == 0 {
            return Err(Error::InvalidSpace("branching must be positive".into()));
        }
        let m = branching
            .checked_pow(depth as u32)
            .ok_or_else(|| Error::InvalidSpace("tree too large".into()))?;
        let outcomes = (0..m).map(|w| format!("w{w}")).collect();
        let prob = vec![1.0 / m as f64; m];
        let filtration = (0..=depth)
            .map(|n| {
                let width = m / branching.pow(n as u32);
                (0..m).collect::<Vec<_>>().chunks(width).map(<[usize]>::to_vec).collect()
            })
            .collect();
        Self::new(outcomes, prob, filtration, vec![(0..m).collect()])
    }

    /// Replaces the block partition.
    pub fn with_blocks(mut self, blocks: Vec<Vec<usize>>) -> Result<Self> {
        self.blocks = Partition::new(blocks, self.len(), true)?;
        Ok(self)
    }

    /// Uses the cells of `Π_n` (clamped to `N`) as blocks.
    pub fn with_level_blocks(self, n: usize) -> Result<Self> {
        let n = n.min(self.horizon());
        let blocks = self.filtration[n].cells().to_vec();
        self.with_blocks(blocks)
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Number of outcomes `M`.
    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// The horizon `N` (index of the last partition).
    pub fn horizon(&self) -> usize {
        self.filtration.len() - 1
    }

    pub fn outcomes(&self) -> &[String] {
        &self.outcomes
    }

    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn filtration(&self) -> &[Partition] {
        &self.filtration
    }

    pub fn level(&self, n: usize) -> Result<&Partition> {
        self.check_index(n)?;
        Ok(&self.filtration[n])
    }

    pub fn blocks(&self) -> &Partition {
        &self.blocks
    }

    pub fn cell_probabilities(&self, n: usize) -> &[f64] {
        &self.cell_prob[n]
    }

    /// Cells of `Π_{n+1}` inside cell `c` of `Π_n`.
    pub fn children(&self, n: usize, c: usize) -> &[usize] {
        &self.children[n][c]
    }

    pub fn check_index(&self, n: usize) -> Result<()> {
        if n > self.horizon() {
            Err(Error::IndexOutOfRange {
                index: n,
                horizon: self.horizon(),
            })
        } else {
            Ok(())
        }
    }

    pub fn check_len(&self, x: &RandomVariable) -> Result<()> {
        if x.len() != self.len() {
            Err(Error::DimensionMismatch {
                expected: self.len(),
                got: x.len(),
            })
        } else {
            Ok(())
        }
    }

    pub fn expectation(&self, x: &RandomVariable) -> f64 {
        self.prob.iter().zip(x.values()).map(|(p, v)| p * v).sum()
    }

    /// `P(A)` for a membership mask.
    pub fn probability(&self, set: &[bool]) -> f64 {
        self.prob
            .iter()
            .zip(set)
            .filter(|(_, &inside)| inside)
            .map(|(p, _)| p)
            .sum()
    }

    /// `E[X | F_n]`: the `P`-weighted average of `X` on each cell of `Π_n`.
    /// Singleton cells return `X` unchanged.
    pub fn conditional_expectation(&self, x: &RandomVariable, n: usize) -> Result<RandomVariable> {
        self.check_index(n)?;
        self.check_len(x)?;
        Ok(self.conditional_expectation_unchecked(x, n))
    }

    pub(crate) fn conditional_expectation_unchecked(&self, x: &RandomVariable, n: usize) -> RandomVariable {
        let part = &self.filtration[n];
        let mut out = vec![0.0; self.len()];
        for (c, cell) in part.cells().iter().enumerate() {
            if let [w] = cell.as_slice() {
                out[*w] = x.get(*w);
                continue;
            }
            let mass: f64 = cell.iter().map(|&w| self.prob[w] * x.get(w)).sum();
            let avg = mass / self.cell_prob[n][c];
            for &w in cell {
                out[w] = avg;
            }
        }
        RandomVariable(out)
    }

    /// Cellwise maximum over `Π_n`: the smallest `F_n`-measurable majorant.
    pub fn conditional_ess_sup(&self, x: &RandomVariable, n: usize) -> Result<RandomVariable> {
        self.check_index(n)?;
        self.check_len(x)?;
        Ok(self.conditional_ess_sup_unchecked(x, n))
    }

    pub(crate) fn conditional_ess_sup_unchecked(&self, x: &RandomVariable, n: usize) -> RandomVariable {
        let mut out = vec![0.0; self.len()];
        for cell in self.filtration[n].cells() {
            let top = cell.iter().map(|&w| x.get(w)).fold(f64::NEG_INFINITY, f64::max);
            for &w in cell {
                out[w] = top;
            }
        }
        RandomVariable(out)
    }

    /// True iff `x` is constant (within the space tolerance) on every cell of
    /// `Π_n`. Out-of-range indices and length mismatches report `false`.
    pub fn is_measurable(&self, x: &RandomVariable, n: usize) -> bool {
        if n > self.horizon() || x.len() != self.len() {
            return false;
        }
        self.filtration[n].cells().iter().all(|cell| {
            let first = x.get(cell[0]);
            cell.iter().all(|&w| approx_eq(x.get(w), first, self.tol))
        })
    }

    /// The smallest `R` with `P(B) ≤ R·P(A)` for every cell `A ∈ Π_n` inside
    /// its parent `B ∈ Π_{n-1}`. Cached after the first call.
    pub fn regularity_constant(&self) -> f64 {
        *self.regularity.get_or_init(|| {
            let mut r: f64 = 1.0;
            for n in 1..=self.horizon() {
                for (c, &parent) in self.parents[n].iter().enumerate() {
                    r = r.max(self.cell_prob[n - 1][parent] / self.cell_prob[n][c]);
                }
            }
            r
        })
    }

    /// Whether every block is a union of cells of `Π_n`.
    pub fn blocks_measurable_at(&self, n: usize) -> bool {
        if n > self.horizon() {
            return false;
        }
        self.blocks.cells().iter().all(|block| {
            let mut mask = vec![false; self.len()];
            for &w in block {
                mask[w] = true;
            }
            self.filtration[n].is_union_of_cells(&mask)
        })
    }

    pub fn check_stopping_time(&self, nu: &StoppingTime) -> Result<()> {
        if nu.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: nu.len(),
            });
        }
        let horizon = self.horizon();
        if let Some(t) = nu.times().iter().flatten().find(|&&t| t > horizon) {
            return Err(Error::NotStoppingTime(format!("time {t} exceeds horizon {horizon}")));
        }
        for n in 0..=horizon {
            let level_set: Vec<bool> = nu.times().iter().map(|&t| t == Some(n)).collect();
            if !self.filtration[n].is_union_of_cells(&level_set) {
                return Err(Error::NotStoppingTime(format!(
                    "{{ν = {n}}} is not F_{n}-measurable"
                )));
            }
        }
        Ok(())
    }

    pub fn is_stopping_time(&self, nu: &StoppingTime) -> bool {
        self.check_stopping_time(nu).is_ok()
    }

    /// Counts stopping times by dynamic programming over the partition tree:
    /// on a cell of `Π_n` either `ν = n` throughout, or the choice is deferred
    /// to the children (at `n = N` deferring means `ν = ∞`).
    pub fn stopping_time_count(&self, cap: u64) -> StoppingTimeCount {
        let limit = cap as u128 + 1;
        let horizon = self.horizon();
        let mut below: Vec<u128> = vec![2; self.filtration[horizon].len()];
        for n in (0..horizon).rev() {
            below = (0..self.filtration[n].len())
                .map(|c| {
                    let deferred = self.children[n][c]
                        .iter()
                        .fold(1u128, |acc, &child| acc.saturating_mul(below[child]).min(limit));
                    (1 + deferred).min(limit)
                })
                .collect();
        }
        match below[0] {
            total if total <= cap as u128 => StoppingTimeCount::Exact(total as u64),
            _ => StoppingTimeCount::ExceedsCap,
        }
    }

    /// Visits every stopping time, or returns [`Error::EnumerationOverflow`]
    /// without visiting any when their number exceeds `cap`. Returns the count.
    pub fn for_each_stopping_time(
        &self,
        cap: u64,
        mut visit: impl FnMut(&StoppingTime),
    ) -> Result<u64> {
        let total = match self.stopping_time_count(cap) {
            StoppingTimeCount::Exact(total) => total,
            StoppingTimeCount::ExceedsCap => return Err(Error::EnumerationOverflow { cap }),
        };
        let mut current = StoppingTime::never(self);
        let mut pending = vec![(0usize, 0usize)];
        let mut visited = 0u64;
        self.enumerate_from(&mut pending, &mut current, &mut |nu| {
            visited += 1;
            visit(nu);
        });
        debug_assert_eq!(visited, total);
        Ok(total)
    }

    fn enumerate_from(
        &self,
        pending: &mut Vec<(usize, usize)>,
        current: &mut StoppingTime,
        visit: &mut dyn FnMut(&StoppingTime),
    ) {
        let Some((n, c)) = pending.pop() else {
            visit(current);
            return;
        };
        let cell = &self.filtration[n].cells()[c];

        for &w in cell {
            current.times[w] = Some(n);
        }
        self.enumerate_from(pending, current, visit);

        if n < self.horizon() {
            let kids = &self.children[n][c];
            let mark = pending.len();
            pending.extend(kids.iter().rev().map(|&k| (n + 1, k)));
            self.enumerate_from(pending, current, visit);
            pending.truncate(mark);
        } else {
            for &w in cell {
                current.times[w] = None;
            }
            self.enumerate_from(pending, current, visit);
        }
        pending.push((n, c));
    }

    /// All stopping times, materialized. Prefer
    /// [`for_each_stopping_time`](Self::for_each_stopping_time) for large spaces.
    pub fn enumerate_stopping_times(&self, cap: u64) -> Result<Vec<StoppingTime>> {
        let mut all = Vec::new();
        self.for_each_stopping_time(cap, |nu| all.push(nu.clone()))?;
        Ok(all)
    }

    /// First-entry time of cell `c` of `Π_n`: `n` on the cell, `∞` elsewhere.
    pub fn cell_entry_time(&self, n: usize, c: usize) -> Result<StoppingTime> {
        self.check_index(n)?;
        let mut times = vec![None; self.len()];
        for &w in self.filtration[n]
            .cells()
            .get(c)
            .ok_or_else(|| Error::InvalidSpace(format!("no cell {c} at level {n}")))?
        {
            times[w] = Some(n);
        }
        Ok(StoppingTime::from_times_unchecked(times))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn depth2() -> FilteredSpace {
        FilteredSpace::dyadic(2).unwrap()
    }

    fn rv(v: &[f64]) -> RandomVariable {
        RandomVariable::new(v.to_vec())
    }

    #[test]
    fn conditional_expectation_examples() {
        let s = depth2();
        let x = rv(&[2.0, 0.0, -1.0, -1.0]);
        assert_eq!(s.conditional_expectation(&x, 1).unwrap(), rv(&[1.0, 1.0, -1.0, -1.0]));
        assert_eq!(s.conditional_expectation(&x, 2).unwrap(), x);
        let c = RandomVariable::constant(4, 3.5);
        for n in 0..=2 {
            assert!(s.conditional_expectation(&c, n).unwrap().approx_eq(&c, 1e-15));
        }
        assert!(matches!(
            s.conditional_expectation(&x, 3),
            Err(Error::IndexOutOfRange { index: 3, horizon: 2 })
        ));
    }

    #[test]
    fn ess_sup_examples() {
        let s = depth2();
        let x = rv(&[2.0, 0.0, -1.0, -1.0]);
        assert_eq!(s.conditional_ess_sup(&x, 1).unwrap(), rv(&[2.0, 2.0, -1.0, -1.0]));
        assert_eq!(s.conditional_ess_sup(&x, 0).unwrap(), RandomVariable::constant(4, 2.0));
        assert!(s.conditional_ess_sup(&x, 7).is_err());
    }

    #[test]
    fn measurability_examples() {
        let s = depth2();
        assert!(s.is_measurable(&RandomVariable::constant(4, 1.0), 0));
        assert!(s.is_measurable(&rv(&[1.0, 1.0, -1.0, -1.0]), 1));
        assert!(!s.is_measurable(&rv(&[2.0, 0.0, -1.0, -1.0]), 1));
    }

    #[test]
    fn regularity_examples() {
        assert_eq!(FilteredSpace::dyadic(3).unwrap().regularity_constant(), 2.0);
        assert_eq!(FilteredSpace::dyadic(0).unwrap().regularity_constant(), 1.0);
        assert_eq!(FilteredSpace::uniform_tree(3, 1).unwrap().regularity_constant(), 3.0);
    }

    #[test]
    fn rejects_bad_spaces() {
        let ids = |m: usize| (0..m).map(|w| format!("w{w}")).collect::<Vec<_>>();
        // Π_0 not trivial
        assert!(FilteredSpace::new(ids(2), vec![0.5, 0.5], vec![vec![vec![0], vec![1]]], vec![vec![0, 1]]).is_err());
        // not refining
        assert!(FilteredSpace::new(
            ids(3),
            vec![0.25, 0.25, 0.5],
            vec![vec![vec![0, 1, 2]], vec![vec![0, 1], vec![2]], vec![vec![0, 2], vec![1]]],
            vec![vec![0, 1, 2]]
        )
        .is_err());
        // zero probability
        assert!(FilteredSpace::new(ids(2), vec![1.0, 0.0], vec![vec![vec![0, 1]]], vec![vec![0, 1]]).is_err());
        // probabilities off by more than the tolerance
        assert!(FilteredSpace::new(ids(2), vec![0.5, 0.5 + 1e-9], vec![vec![vec![0, 1]]], vec![vec![0, 1]]).is_err());
        // overlapping blocks
        assert!(FilteredSpace::new(ids(2), vec![0.5, 0.5], vec![vec![vec![0, 1]]], vec![vec![0, 1], vec![1]]).is_err());
        // uncovered outcome in blocks
        assert!(FilteredSpace::new(ids(2), vec![0.5, 0.5], vec![vec![vec![0, 1]]], vec![vec![0]]).is_err());
        // empty blocks are fine
        assert!(FilteredSpace::new(ids(2), vec![0.5, 0.5], vec![vec![vec![0, 1]]], vec![vec![0, 1], vec![]]).is_ok());
    }

    #[test]
    fn stopping_time_validation() {
        let s = depth2();
        assert!(StoppingTime::new(&s, vec![Some(1), Some(1), None, None]).is_ok());
        assert!(StoppingTime::new(&s, vec![Some(2), None, Some(1), Some(1)]).is_ok());
        assert!(StoppingTime::new(&s, vec![Some(1), Some(2), None, None]).is_err());
        assert!(StoppingTime::new(&s, vec![Some(0), Some(1), Some(1), Some(1)]).is_err());
        assert!(StoppingTime::new(&s, vec![Some(1), None, None, None]).is_err());
        assert!(StoppingTime::new(&s, vec![Some(3), Some(3), None, None]).is_err());
        assert!(StoppingTime::new(&s, vec![None; 3]).is_err());
    }

    #[test]
    fn block_measurability_predicate() {
        let s = depth2();
        assert!(s.blocks_measurable_at(0));
        let s = s.with_level_blocks(1).unwrap();
        assert!(!s.blocks_measurable_at(0));
        assert!(s.blocks_measurable_at(1));
        assert!(s.blocks_measurable_at(2));
        let s = s.with_blocks(vec![vec![0, 2], vec![1, 3]]).unwrap();
        assert!(!s.blocks_measurable_at(1));
        assert!(s.blocks_measurable_at(2));
    }

    #[test]
    fn enumeration_small_counts() {
        let trivial = FilteredSpace::dyadic(0).unwrap();
        let all = trivial.enumerate_stopping_times(DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(all.len(), 2);
        assert!(all.contains(&StoppingTime::constant(&trivial, Some(0)).unwrap()));
        assert!(all.contains(&StoppingTime::never(&trivial)));

        assert_eq!(FilteredSpace::dyadic(1).unwrap().stopping_time_count(100), StoppingTimeCount::Exact(5));
        assert_eq!(FilteredSpace::dyadic(4).unwrap().stopping_time_count(DEFAULT_ENUMERATION_CAP), StoppingTimeCount::Exact(458_330));
        assert_eq!(FilteredSpace::uniform_tree(3, 3).unwrap().stopping_time_count(DEFAULT_ENUMERATION_CAP), StoppingTimeCount::ExceedsCap);
    }

    #[test]
    fn enumeration_overflow_yields_nothing() {
        let s = depth2();
        let mut seen = 0;
        let res = s.for_each_stopping_time(1, |_| seen += 1);
        assert_eq!(res, Err(Error::EnumerationOverflow { cap: 1 }));
        assert_eq!(seen, 0);
    }

    #[test]
    fn cell_entry_times_are_stopping_times() {
        let s = FilteredSpace::uniform_tree(3, 2).unwrap();
        for n in 0..=2 {
            for c in 0..s.level(n).unwrap().len() {
                assert!(s.is_stopping_time(&s.cell_entry_time(n, c).unwrap()));
            }
        }
    }
}
