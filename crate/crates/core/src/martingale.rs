//! Martingales on a finite filtered space and their process functionals.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{approx_eq, FilteredSpace, RandomVariable, StoppingTime};

/// An adapted process `f_0 = 0, f_1, …, f_N` with `E_n f_{n+1} = f_n`.
#[derive(Debug, Clone)]
pub struct Martingale {
    space: Arc<FilteredSpace>,
    levels: Vec<RandomVariable>,
}

impl PartialEq for Martingale {
    fn eq(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space) && self.levels == other.levels
    }
}

pub(crate) fn same_space(a: &Arc<FilteredSpace>, b: &Arc<FilteredSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl Martingale {
    /// Validates `f_0 = 0`, adaptedness and the martingale property, all up to
    /// the space tolerance scaled by `max |f_n|`.
    pub fn new(space: Arc<FilteredSpace>, levels: Vec<RandomVariable>) -> Result<Self> {
        if levels.len() != space.horizon() + 1 {
            return Err(Error::NotMartingale(format!(
                "{} levels for horizon {}",
                levels.len(),
                space.horizon()
            )));
        }
        for level in &levels {
            space.check_len(level)?;
        }
        let tol = space.tolerance();
        let scale = levels.iter().map(RandomVariable::max_abs).fold(1.0, f64::max);
        if levels[0].max_abs() > tol * scale {
            return Err(Error::NotMartingale("f_0 is not zero".into()));
        }
        for (n, level) in levels.iter().enumerate() {
            let projected = space.conditional_expectation_unchecked(level, n);
            if !close_at_scale(&projected, level, tol, scale) {
                return Err(Error::NotMartingale(format!("f_{n} is not F_{n}-measurable")));
            }
            if n > 0 {
                let back = space.conditional_expectation_unchecked(level, n - 1);
                if !close_at_scale(&back, &levels[n - 1], tol, scale) {
                    return Err(Error::NotMartingale(format!("E_{} f_{n} ≠ f_{}", n - 1, n - 1)));
                }
            }
        }
        Ok(Self { space, levels })
    }

    /// `f_n = E_n X`, with `f_0` set to exactly zero after checking `E[X] ≈ 0`.
    pub fn from_terminal(space: &Arc<FilteredSpace>, x: &RandomVariable) -> Result<Self> {
        space.check_len(x)?;
        let mean = space.expectation(x);
        if mean.abs() > space.tolerance() * x.max_abs().max(1.0) {
            return Err(Error::NonzeroMean { mean });
        }
        let mut levels = Vec::with_capacity(space.horizon() + 1);
        levels.push(RandomVariable::zeros(space.len()));
        for n in 1..=space.horizon() {
            levels.push(space.conditional_expectation_unchecked(x, n));
        }
        Ok(Self {
            space: space.clone(),
            levels,
        })
    }

    pub fn zero(space: &Arc<FilteredSpace>) -> Self {
        Self {
            space: space.clone(),
            levels: vec![RandomVariable::zeros(space.len()); space.horizon() + 1],
        }
    }

    /// Skips validation; the caller guarantees the martingale invariants.
    pub(crate) fn from_levels_unchecked(space: Arc<FilteredSpace>, levels: Vec<RandomVariable>) -> Self {
        Self { space, levels }
    }

    pub fn space(&self) -> &Arc<FilteredSpace> {
        &self.space
    }

    pub fn levels(&self) -> &[RandomVariable] {
        &self.levels
    }

    pub fn level(&self, n: usize) -> Result<&RandomVariable> {
        self.space.check_index(n)?;
        Ok(&self.levels[n])
    }

    pub fn terminal(&self) -> &RandomVariable {
        self.levels.last().expect("at least one level")
    }

    pub fn horizon(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.levels.iter().all(|l| l.max_abs() == 0.0)
    }

    /// `d_0 = 0`, `d_n = f_n − f_{n−1}`.
    pub fn differences(&self) -> Vec<RandomVariable> {
        differences(&self.levels)
    }

    /// `S_0, …, S_N` with `S_n = (Σ_{i≤n} |d_i|²)^{1/2}`.
    pub fn square_function_path(&self) -> Vec<RandomVariable> {
        square_path(&self.levels)
    }

    /// `s_0, …, s_N` with `s_n = (Σ_{i≤n} E_{i−1}|d_i|²)^{1/2}`; `s_n` is
    /// `F_{n−1}`-measurable.
    pub fn conditional_square_function_path(&self) -> Vec<RandomVariable> {
        conditional_square_path(&self.space, &self.levels)
    }

    /// `S(f)`.
    pub fn quadratic_variation(&self) -> RandomVariable {
        self.square_function_path().pop().expect("nonempty")
    }

    /// `s(f)`.
    pub fn conditional_quadratic_variation(&self) -> RandomVariable {
        self.conditional_square_function_path().pop().expect("nonempty")
    }

    /// `f* = max_n |f_n|`.
    pub fn maximal_function(&self) -> RandomVariable {
        maximal(&self.levels)
    }

    /// The stopped martingale `f^ν_n = f_{n∧ν}`.
    pub fn stop(&self, nu: &StoppingTime) -> Result<Martingale> {
        self.space.check_stopping_time(nu).map_err(|e| match e {
            Error::DimensionMismatch { .. } => Error::SpaceMismatch,
            other => other,
        })?;
        Ok(self.stop_unchecked(nu))
    }

    pub(crate) fn stop_unchecked(&self, nu: &StoppingTime) -> Martingale {
        let levels = (0..=self.horizon())
            .map(|n| {
                RandomVariable::new(
                    (0..self.space.len())
                        .map(|w| {
                            let at = nu.time(w).map_or(n, |t| t.min(n));
                            self.levels[at].get(w)
                        })
                        .collect(),
                )
            })
            .collect();
        Martingale::from_levels_unchecked(self.space.clone(), levels)
    }

    /// Terminal value of `f^ν`: `f_{ν∧N}`.
    pub fn stopped_terminal(&self, nu: &StoppingTime) -> RandomVariable {
        let last = self.horizon();
        RandomVariable::new(
            (0..self.space.len())
                .map(|w| self.levels[nu.time(w).map_or(last, |t| t.min(last))].get(w))
                .collect(),
        )
    }

    /// Threshold stopping time at level `2^k`.
    ///
    /// `Conditional`: first `n ∈ {0..N}` with `s_{n+1}(f) > 2^k` (taking
    /// `s_{N+1} = s(f)`). `Envelope`: first `n` with `β_n > 2^k`.
    pub fn ladder_stopping_time(
        &self,
        k: i32,
        kind: LadderKind,
        envelope: Option<&PredictorEnvelope>,
    ) -> Result<StoppingTime> {
        let stats = self.ladder_statistic(kind, envelope)?;
        Ok(ladder_time(&stats, k))
    }

    /// The per-index statistic the ladder thresholds: `s_{n+1}` or `β_n` for
    /// `n = 0..=N`.
    pub fn ladder_statistic(
        &self,
        kind: LadderKind,
        envelope: Option<&PredictorEnvelope>,
    ) -> Result<Vec<RandomVariable>> {
        match kind {
            LadderKind::Conditional => {
                let mut path = self.conditional_square_function_path();
                let full = path.last().cloned().expect("nonempty");
                path.remove(0);
                path.push(full);
                Ok(path)
            }
            LadderKind::Envelope => {
                let env = envelope.ok_or(Error::MissingEnvelope)?;
                if env.levels.len() != self.levels.len() || env.levels[0].len() != self.space.len() {
                    return Err(Error::SpaceMismatch);
                }
                Ok(env.levels.clone())
            }
        }
    }

    /// The pointwise-smallest admissible predictor envelope:
    /// `β_n = max(β_{n−1}, ess sup_{F_n} T_{n+1})` with `β_{−1} = 0` and
    /// `T_{N+1} = T_N`, where `T_n = S_n(f)` or `|f_n|`.
    pub fn minimal_envelope(&self, flavor: EnvelopeFlavor) -> PredictorEnvelope {
        let horizon = self.horizon();
        let dominated: Vec<RandomVariable> = match flavor {
            EnvelopeFlavor::Square => self.square_function_path(),
            EnvelopeFlavor::Maximal => self.levels.iter().map(RandomVariable::abs).collect(),
        };
        let mut levels: Vec<RandomVariable> = Vec::with_capacity(horizon + 1);
        let mut prev = RandomVariable::zeros(self.space.len());
        for n in 0..=horizon {
            let next = &dominated[(n + 1).min(horizon)];
            let sup = self.space.conditional_ess_sup_unchecked(next, n);
            let beta = prev.zip_with(&sup, f64::max);
            levels.push(beta.clone());
            prev = beta;
        }
        PredictorEnvelope { levels, flavor }
    }
}

fn close_at_scale(a: &RandomVariable, b: &RandomVariable, tol: f64, scale: f64) -> bool {
    a.values()
        .iter()
        .zip(b.values())
        .all(|(x, y)| (x - y).abs() <= tol * scale)
}

/// `d_0 = 0`, `d_n = x_n − x_{n−1}` for an arbitrary level table.
pub fn differences(levels: &[RandomVariable]) -> Vec<RandomVariable> {
    let m = levels[0].len();
    std::iter::once(RandomVariable::zeros(m))
        .chain(levels.windows(2).map(|w| &w[1] - &w[0]))
        .collect()
}

/// `S_0..S_N` of an arbitrary level table.
pub fn square_path(levels: &[RandomVariable]) -> Vec<RandomVariable> {
    let d = differences(levels);
    let mut acc = vec![0.0; levels[0].len()];
    d.iter()
        .map(|dn| {
            for (a, x) in acc.iter_mut().zip(dn.values()) {
                *a += x * x;
            }
            RandomVariable::new(acc.iter().map(|a| a.sqrt()).collect())
        })
        .collect()
}

/// `s_0..s_N` of an arbitrary level table.
pub fn conditional_square_path(space: &FilteredSpace, levels: &[RandomVariable]) -> Vec<RandomVariable> {
    let d = differences(levels);
    let mut acc = vec![0.0; levels[0].len()];
    let mut out = vec![RandomVariable::zeros(levels[0].len())];
    for (n, dn) in d.iter().enumerate().skip(1) {
        let sq = dn.map(|x| x * x);
        let cond = space.conditional_expectation_unchecked(&sq, n - 1);
        for (a, x) in acc.iter_mut().zip(cond.values()) {
            *a += x;
        }
        out.push(RandomVariable::new(acc.iter().map(|a| a.sqrt()).collect()));
    }
    out
}

/// `max_n |x_n|` of an arbitrary level table.
pub fn maximal(levels: &[RandomVariable]) -> RandomVariable {
    let mut out = RandomVariable::zeros(levels[0].len());
    for level in levels {
        out = out.zip_with(level, |m, x| m.max(x.abs()));
    }
    out
}

/// `E_n a` for `n = 0..=N`.
pub fn adapted_levels(space: &FilteredSpace, terminal: &RandomVariable) -> Vec<RandomVariable> {
    (0..=space.horizon())
        .map(|n| space.conditional_expectation_unchecked(terminal, n))
        .collect()
}

/// First index `n` at which `stats[n] > 2^k`, else `∞`.
pub(crate) fn ladder_time(stats: &[RandomVariable], k: i32) -> StoppingTime {
    let threshold = 2f64.powi(k);
    let m = stats[0].len();
    StoppingTime::from_times_unchecked(
        (0..m)
            .map(|w| stats.iter().position(|s| s.get(w) > threshold))
            .collect(),
    )
}

/// `[k_lo, k_hi]` outside of which the ladder is constant and contributes no
/// atom: `k_lo = ⌊log₂ min⁺⌋ − 1`, `k_hi = ⌈log₂ max⌉`. `None` when the
/// statistic vanishes identically.
pub fn ladder_window(stats: &[RandomVariable]) -> Option<(i32, i32)> {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for x in stats.iter().flat_map(|s| s.values()) {
        if *x > 0.0 {
            lo = lo.min(*x);
            hi = hi.max(*x);
        }
    }
    if hi == 0.0 {
        return None;
    }
    Some((lo.log2().floor() as i32 - 1, hi.log2().ceil() as i32))
}

/// Which statistic a ladder stopping time thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderKind {
    /// `s_{n+1}(f) > 2^k`.
    Conditional,
    /// `β_n > 2^k`.
    Envelope,
}

/// Which process an envelope dominates one step ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvelopeFlavor {
    /// `S_n(f) ≤ β_{n−1}`.
    #[serde(rename = "S")]
    Square,
    /// `|f_n| ≤ β_{n−1}`.
    #[serde(rename = "star")]
    Maximal,
}

/// An adapted, non-decreasing, non-negative sequence `β_0, …, β_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorEnvelope {
    levels: Vec<RandomVariable>,
    flavor: EnvelopeFlavor,
}

impl PredictorEnvelope {
    /// Builds an envelope, checking that it lies in `Γ` (adapted,
    /// non-decreasing, non-negative). Domination of a particular martingale is
    /// checked separately with [`dominates`](Self::dominates).
    pub fn new(space: &FilteredSpace, levels: Vec<RandomVariable>, flavor: EnvelopeFlavor) -> Result<Self> {
        if levels.len() != space.horizon() + 1 {
            return Err(Error::SpaceMismatch);
        }
        for (n, level) in levels.iter().enumerate() {
            space.check_len(level)?;
            if !space.is_measurable(level, n) {
                return Err(Error::InvalidSpace(format!("β_{n} is not F_{n}-measurable")));
            }
            if level.min_value() < 0.0 {
                return Err(Error::InvalidSpace(format!("β_{n} is negative")));
            }
            if n > 0 && !level.dominates(&levels[n - 1], space.tolerance()) {
                return Err(Error::InvalidSpace(format!("β_{n} < β_{}", n - 1)));
            }
        }
        Ok(Self { levels, flavor })
    }

    pub fn levels(&self) -> &[RandomVariable] {
        &self.levels
    }

    pub fn flavor(&self) -> EnvelopeFlavor {
        self.flavor
    }

    /// `β_∞ = β_N` on a finite horizon.
    pub fn terminal(&self) -> &RandomVariable {
        self.levels.last().expect("nonempty")
    }

    /// Whether `S_n(f) ≤ β_{n−1}` (or `|f_n| ≤ β_{n−1}`) for `1 ≤ n ≤ N + 1`,
    /// where index `N + 1` repeats `N`.
    pub fn dominates(&self, f: &Martingale) -> bool {
        let tol = f.space().tolerance();
        let dominated: Vec<RandomVariable> = match self.flavor {
            EnvelopeFlavor::Square => f.square_function_path(),
            EnvelopeFlavor::Maximal => f.levels().iter().map(RandomVariable::abs).collect(),
        };
        let horizon = f.horizon();
        (1..=horizon + 1).all(|n| {
            let t = &dominated[n.min(horizon)];
            self.levels[n - 1]
                .values()
                .iter()
                .zip(t.values())
                .all(|(&b, &x)| b >= x || approx_eq(b, x, tol))
        })
    }

    /// Pointwise `self ≤ other` at every index.
    pub fn below(&self, other: &PredictorEnvelope, tol: f64) -> bool {
        self.levels
            .iter()
            .zip(&other.levels)
            .all(|(a, b)| b.dominates(a, tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(v: &[f64]) -> RandomVariable {
        RandomVariable::new(v.to_vec())
    }

    fn example() -> Martingale {
        let space = Arc::new(FilteredSpace::dyadic(2).unwrap());
        Martingale::from_terminal(&space, &rv(&[2.0, 0.0, -1.0, -1.0])).unwrap()
    }

    fn coin() -> Martingale {
        let space = Arc::new(FilteredSpace::dyadic(1).unwrap());
        Martingale::from_terminal(&space, &rv(&[1.0, -1.0])).unwrap()
    }

    fn assert_close(a: &RandomVariable, b: &[f64]) {
        assert!(a.approx_eq(&rv(b), 1e-14), "{a:?} vs {b:?}");
    }

    #[test]
    fn from_terminal_example() {
        let f = example();
        assert_eq!(f.levels()[0], RandomVariable::zeros(4));
        assert_eq!(f.levels()[1], rv(&[1.0, 1.0, -1.0, -1.0]));
        assert_eq!(f.levels()[2], rv(&[2.0, 0.0, -1.0, -1.0]));
    }

    #[test]
    fn from_terminal_rejects_nonzero_mean() {
        let space = Arc::new(FilteredSpace::dyadic(2).unwrap());
        let err = Martingale::from_terminal(&space, &rv(&[0.5; 4])).unwrap_err();
        assert_eq!(err, Error::NonzeroMean { mean: 0.5 });
        assert!(Martingale::from_terminal(&space, &RandomVariable::zeros(4)).unwrap().is_zero());
    }

    #[test]
    fn new_rejects_non_martingales() {
        let space = Arc::new(FilteredSpace::dyadic(1).unwrap());
        assert!(Martingale::new(space.clone(), vec![rv(&[0.0, 0.0]), rv(&[1.0, -1.0])]).is_ok());
        assert!(Martingale::new(space.clone(), vec![rv(&[1.0, 1.0]), rv(&[2.0, 0.0])]).is_err());
        assert!(Martingale::new(space.clone(), vec![rv(&[0.0, 0.0]), rv(&[1.0, 0.0])]).is_err());
        assert!(Martingale::new(space, vec![rv(&[0.0, 0.0])]).is_err());
    }

    #[test]
    fn differences_example() {
        let d = example().differences();
        assert_eq!(d[0], RandomVariable::zeros(4));
        assert_eq!(d[1], rv(&[1.0, 1.0, -1.0, -1.0]));
        assert_eq!(d[2], rv(&[1.0, -1.0, 0.0, 0.0]));
    }

    #[test]
    fn quadratic_variations_example() {
        let f = example();
        let r2 = 2f64.sqrt();
        assert_close(&f.quadratic_variation(), &[r2, r2, 1.0, 1.0]);
        assert_close(&f.conditional_quadratic_variation(), &[r2, r2, 1.0, 1.0]);
        assert_close(&f.conditional_square_function_path()[1], &[1.0; 4]);
        let c = coin();
        assert_close(&c.quadratic_variation(), &[1.0, 1.0]);
        assert_close(&c.conditional_quadratic_variation(), &[1.0, 1.0]);
    }

    #[test]
    fn maximal_example() {
        assert_eq!(example().maximal_function(), rv(&[2.0, 1.0, 1.0, 1.0]));
    }

    #[test]
    fn stop_examples() {
        let f = example();
        let space = f.space().clone();
        assert_eq!(f.stop(&StoppingTime::never(&space)).unwrap(), f);
        assert!(f.stop(&StoppingTime::constant(&space, Some(0)).unwrap()).unwrap().is_zero());
        let nu = StoppingTime::new(&space, vec![Some(1), Some(1), None, None]).unwrap();
        let g = f.stop(&nu).unwrap();
        assert_eq!(g.levels()[2], rv(&[1.0, 1.0, -1.0, -1.0]));
        let other = Arc::new(FilteredSpace::dyadic(1).unwrap());
        assert_eq!(f.stop(&StoppingTime::never(&other)), Err(Error::SpaceMismatch));
    }

    #[test]
    fn ladder_examples() {
        let f = example();
        let nu = f.ladder_stopping_time(0, LadderKind::Conditional, None).unwrap();
        assert_eq!(nu.times(), &[Some(1), Some(1), None, None]);
        let high = f.ladder_stopping_time(1, LadderKind::Conditional, None).unwrap();
        assert!(high.support().iter().all(|b| !b));
        let low = f.ladder_stopping_time(-1, LadderKind::Conditional, None).unwrap();
        assert_eq!(low.times(), &[Some(0); 4]);
        assert_eq!(
            f.ladder_stopping_time(0, LadderKind::Envelope, None),
            Err(Error::MissingEnvelope)
        );
        assert!(f.space().is_stopping_time(&nu));
    }

    #[test]
    fn minimal_envelope_examples() {
        let space = Arc::new(FilteredSpace::dyadic(2).unwrap());
        let z = Martingale::zero(&space);
        let b = z.minimal_envelope(EnvelopeFlavor::Square);
        assert!(b.levels().iter().all(|l| l.max_abs() == 0.0));

        let c = coin().minimal_envelope(EnvelopeFlavor::Square);
        assert_eq!(c.levels()[0], rv(&[1.0, 1.0]));
        assert_eq!(c.terminal(), &rv(&[1.0, 1.0]));

        let f = example();
        let b = f.minimal_envelope(EnvelopeFlavor::Square);
        let r2 = 2f64.sqrt();
        assert!(b.levels()[1].dominates(&rv(&[r2, r2, 1.0, 1.0]), 1e-14));
        assert!(b.dominates(&f));
        assert!(PredictorEnvelope::new(&space, b.levels().to_vec(), EnvelopeFlavor::Square).is_ok());
    }

    #[test]
    fn ladder_window_bounds() {
        let f = example();
        let stats = f.ladder_statistic(LadderKind::Conditional, None).unwrap();
        assert_eq!(ladder_window(&stats), Some((-1, 1)));
        let space = Arc::new(FilteredSpace::dyadic(2).unwrap());
        let z = Martingale::zero(&space);
        assert_eq!(ladder_window(&z.ladder_statistic(LadderKind::Conditional, None).unwrap()), None);
    }
}
