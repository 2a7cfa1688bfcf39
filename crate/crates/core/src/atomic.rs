//! Constructive atomic decompositions.
//!
//! A martingale is split along a dyadic threshold ladder `ν^k`: the stopping
//! times at which the ladder statistic (the conditional square function
//! `s_{n+1}(f)`, or a predictor envelope `β_n`) first exceeds `2^k`. The atoms
//! are the normalized increments `a^k = (f^{ν^{k+1}} − f^{ν^k}) / λ_k`, so that
//! `Σ_k λ_k E_n a^k = f_n` holds exactly on a finite horizon.
//!
//! Coefficients:
//!
//! | flavor   | simple                       | weighted                        |
//! |----------|------------------------------|---------------------------------|
//! | `s`      | `2^{k+1} P(B_{ν^k})^{1/p}`   | `2^{k+1} ‖1_{B_{ν^k}}‖_{p,q}`   |
//! | `S`, `*` | `2^{k+2} P(B_{ν^k})^{1/p}`   | `2^{k+2} ‖1_{B_{ν^k}}‖_{p,q}`   |
//!
//! With these, the coefficient field `Σ_k (λ_k / D_k)^η 1_{B_{ν^k}}` (with
//! `D_k` the normalizer in the table) is bounded by `(4^η/(2^η−1))·s(f)^η`
//! pointwise for the `s` ladder and by twice that for the envelope ladders.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingale::{
    adapted_levels, conditional_square_path, ladder_time, ladder_window, maximal, same_space,
    square_path, EnvelopeFlavor, LadderKind, Martingale,
};
use crate::norms::{check_eta, check_pq, check_r, hardy_norm, lp_norm, lpq_norm, NormKind};
use crate::space::{FilteredSpace, RandomVariable, StoppingTime};

/// Which maximal operator `T` controls the atoms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AtomFlavor {
    /// `T = s`, decomposing `H^s_{p,q}`.
    #[serde(rename = "s")]
    Conditional,
    /// `T = S`, decomposing `Q_{p,q}`.
    #[serde(rename = "S")]
    Square,
    /// `T = *`, decomposing `P_{p,q}`.
    #[serde(rename = "star")]
    Maximal,
}

impl AtomFlavor {
    pub const ALL: [AtomFlavor; 3] = [AtomFlavor::Conditional, AtomFlavor::Square, AtomFlavor::Maximal];

    pub fn envelope(self) -> Option<EnvelopeFlavor> {
        match self {
            AtomFlavor::Conditional => None,
            AtomFlavor::Square => Some(EnvelopeFlavor::Square),
            AtomFlavor::Maximal => Some(EnvelopeFlavor::Maximal),
        }
    }

    /// The norm of the space this flavor decomposes.
    pub fn source_norm_kind(self) -> NormKind {
        match self {
            AtomFlavor::Conditional => NormKind::ConditionalSquare,
            AtomFlavor::Square => NormKind::PredictableSquare,
            AtomFlavor::Maximal => NormKind::PredictableMaximal,
        }
    }

    /// `e` in `λ_k = 2^{k+e} D_k`.
    fn coefficient_shift(self) -> i32 {
        match self {
            AtomFlavor::Conditional => 1,
            AtomFlavor::Square | AtomFlavor::Maximal => 2,
        }
    }

    /// Factor on top of `(4^η/(2^η−1))^{1/η}` in the upper certificate.
    pub fn budget_factor(self) -> f64 {
        match self {
            AtomFlavor::Conditional => 1.0,
            AtomFlavor::Square | AtomFlavor::Maximal => 2.0,
        }
    }

    /// Default size exponent: `r = 2` for `s` (if admissible), `r = ∞` otherwise.
    pub fn default_r(self, p: f64) -> f64 {
        match self {
            AtomFlavor::Conditional if p.max(1.0) < 2.0 => 2.0,
            _ => f64::INFINITY,
        }
    }

    /// `T(a)` computed from the level table `a_n = E_n a`.
    pub fn statistic(self, space: &FilteredSpace, levels: &[RandomVariable]) -> RandomVariable {
        match self {
            AtomFlavor::Conditional => conditional_square_path(space, levels).pop().expect("nonempty"),
            AtomFlavor::Square => square_path(levels).pop().expect("nonempty"),
            AtomFlavor::Maximal => maximal(levels),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AtomFlavor::Conditional => "s",
            AtomFlavor::Square => "S",
            AtomFlavor::Maximal => "star",
        }
    }
}

/// Which size condition an atom satisfies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomDefinition {
    /// `‖T(a)‖_r ≤ P(B_ν)^{1/r − 1/p}`.
    Simple,
    /// `‖T(a)‖_r ≤ P(B_ν)^{1/r} ‖1_{B_ν}‖_{p,q}^{−1}`.
    Weighted,
}

impl AtomDefinition {
    pub const ALL: [AtomDefinition; 2] = [AtomDefinition::Simple, AtomDefinition::Weighted];

    pub fn label(self) -> &'static str {
        match self {
            AtomDefinition::Simple => "simple",
            AtomDefinition::Weighted => "weighted",
        }
    }

    /// `D(B)`: `P(B)^{1/p}` or `‖1_B‖_{p,q}`.
    fn normalizer(self, space: &FilteredSpace, support: &[bool], p: f64, q: f64) -> Result<f64> {
        match self {
            AtomDefinition::Simple => Ok(space.probability(support).powf(1.0 / p)),
            AtomDefinition::Weighted => lpq_norm(space, &RandomVariable::indicator(support), p, q),
        }
    }
}

/// One term `(λ_k, a^k, ν^k)`. The atom is stored by its terminal value; its
/// levels are `E_n a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomTriple {
    pub k: i32,
    pub lambda: f64,
    pub nu: StoppingTime,
    pub atom: RandomVariable,
    pub flavor: AtomFlavor,
    pub defn: AtomDefinition,
}

impl AtomTriple {
    pub fn levels(&self, space: &FilteredSpace) -> Vec<RandomVariable> {
        adapted_levels(space, &self.atom)
    }

    pub fn support(&self) -> Vec<bool> {
        self.nu.support()
    }
}

/// Ladder bookkeeping for one `k`: `B_{ν^k}`, its probability, and
/// `G_k = B_{ν^k} \ B_{ν^{k+1}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderStep {
    pub k: i32,
    pub support: Vec<bool>,
    pub probability: f64,
    pub increment: Vec<bool>,
}

/// A family of triples together with the space, exponents and source norm.
#[derive(Debug, Clone)]
pub struct Decomposition {
    space: Arc<FilteredSpace>,
    flavor: AtomFlavor,
    defn: AtomDefinition,
    p: f64,
    q: f64,
    triples: Vec<AtomTriple>,
    source_norm: f64,
    trace: Vec<LadderStep>,
}

impl Decomposition {
    /// Wraps an arbitrary family of triples for `f`. The trace is rebuilt from
    /// the triples in `k` order.
    pub fn from_parts(
        f: &Martingale,
        flavor: AtomFlavor,
        defn: AtomDefinition,
        p: f64,
        q: f64,
        mut triples: Vec<AtomTriple>,
    ) -> Result<Self> {
        check_pq(p, q)?;
        let space = f.space().clone();
        for t in &triples {
            space.check_stopping_time(&t.nu)?;
            space.check_len(&t.atom)?;
        }
        triples.sort_by_key(|t| t.k);
        let source_norm = hardy_norm(f, flavor.source_norm_kind(), p, q)?;
        let supports: Vec<Vec<bool>> = triples.iter().map(AtomTriple::support).collect();
        let trace = build_trace(&space, triples.iter().map(|t| t.k).collect(), supports);
        Ok(Self {
            space,
            flavor,
            defn,
            p,
            q,
            triples,
            source_norm,
            trace,
        })
    }

    pub fn space(&self) -> &Arc<FilteredSpace> {
        &self.space
    }

    pub fn flavor(&self) -> AtomFlavor {
        self.flavor
    }

    pub fn defn(&self) -> AtomDefinition {
        self.defn
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn triples(&self) -> &[AtomTriple] {
        &self.triples
    }

    pub fn source_norm(&self) -> f64 {
        self.source_norm
    }

    pub fn trace(&self) -> &[LadderStep] {
        &self.trace
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Rescales each triple: `λ_k ↦ c_k λ_k`, `a^k ↦ a^k / c_k`. Products
    /// `λ_k a^k` are unchanged.
    pub fn rescaled(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.triples.len() || factors.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::Document("rescaling needs one positive factor per triple".into()));
        }
        let mut out = self.clone();
        for (t, &c) in out.triples.iter_mut().zip(factors) {
            t.lambda *= c;
            t.atom = t.atom.map(|x| x / c);
        }
        Ok(out)
    }

    /// `G_k` pairwise disjoint and `1_{B_{ν^k}} = Σ_{r≥k} 1_{G_r}` along the trace.
    pub fn trace_is_consistent(&self) -> bool {
        let m = self.space.len();
        let mut covered = vec![0usize; m];
        for step in &self.trace {
            for (w, &inside) in step.increment.iter().enumerate() {
                covered[w] += inside as usize;
            }
        }
        if covered.iter().any(|&c| c > 1) {
            return false;
        }
        self.trace.iter().enumerate().all(|(i, step)| {
            (0..m).all(|w| {
                let union = self.trace[i..].iter().any(|later| later.increment[w]);
                union == step.support[w]
            })
        })
    }
}

fn build_trace(space: &FilteredSpace, ks: Vec<i32>, supports: Vec<Vec<bool>>) -> Vec<LadderStep> {
    let m = space.len();
    (0..ks.len())
        .map(|i| {
            let next = supports.get(i + 1);
            let increment = (0..m)
                .map(|w| supports[i][w] && !next.is_some_and(|s| s[w]))
                .collect();
            LadderStep {
                k: ks[i],
                probability: space.probability(&supports[i]),
                support: supports[i].clone(),
                increment,
            }
        })
        .collect()
}

/// Runs the threshold-ladder construction.
///
/// For the `S` and `*` flavors the ladder thresholds the pointwise-minimal
/// predictor envelope, so the source norm is the exact `Q_{p,q}`/`P_{p,q}`
/// norm. Triples whose support `B_{ν^k}` is null, or whose atom vanishes
/// identically, are omitted.
pub fn decompose(
    f: &Martingale,
    p: f64,
    q: f64,
    flavor: AtomFlavor,
    defn: AtomDefinition,
) -> Result<Decomposition> {
    check_pq(p, q)?;
    let space = f.space().clone();
    let envelope = flavor.envelope().map(|e| f.minimal_envelope(e));
    let kind = if envelope.is_some() {
        LadderKind::Envelope
    } else {
        LadderKind::Conditional
    };
    let stats = f.ladder_statistic(kind, envelope.as_ref())?;
    let controlling = match &envelope {
        Some(env) => env.terminal().clone(),
        None => stats.last().expect("nonempty").clone(),
    };
    let source_norm = lpq_norm(&space, &controlling, p, q)?;

    let mut out = Decomposition {
        space: space.clone(),
        flavor,
        defn,
        p,
        q,
        triples: Vec::new(),
        source_norm,
        trace: Vec::new(),
    };
    let Some((lo, hi)) = ladder_window(&stats) else {
        return Ok(out);
    };

    let times: Vec<StoppingTime> = (lo..=hi + 1).map(|k| ladder_time(&stats, k)).collect();
    let stopped: Vec<RandomVariable> = times.iter().map(|nu| f.stopped_terminal(nu)).collect();
    let supports: Vec<Vec<bool>> = times.iter().map(StoppingTime::support).collect();
    out.trace = build_trace(&space, (lo..=hi + 1).collect(), supports.clone());

    for (i, k) in (lo..=hi).enumerate() {
        if out.trace[i].probability == 0.0 {
            continue;
        }
        let increment = &stopped[i + 1] - &stopped[i];
        if increment.max_abs() == 0.0 {
            continue;
        }
        let scale = defn.normalizer(&space, &supports[i], p, q)?;
        let lambda = 2f64.powi(k + flavor.coefficient_shift()) * scale;
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::CoefficientRange { k });
        }
        out.triples.push(AtomTriple {
            k,
            lambda,
            nu: times[i].clone(),
            atom: increment.map(|x| x / lambda),
            flavor,
            defn,
        });
    }
    Ok(out)
}

/// Outcome of checking one atom against its definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomReport {
    pub k: i32,
    #[serde(with = "crate::harness::io::extended_real")]
    pub r: f64,
    /// (a1): `E_n a = 0` on `{ν ≥ n}` for every `n`.
    pub vanishing_passed: bool,
    pub vanishing_residual: f64,
    pub vanishing_first_failure: Option<usize>,
    /// `"a2"` (simple) or `"a3"` (weighted).
    pub size_condition: String,
    pub measured: f64,
    #[serde(with = "crate::harness::io::extended_real")]
    pub bound: f64,
    /// `bound − measured`.
    #[serde(with = "crate::harness::io::extended_real")]
    pub slack: f64,
    pub size_passed: bool,
    /// `T(a)` vanishes off `B_ν`.
    pub support_passed: bool,
    pub support_residual: f64,
}

impl AtomReport {
    pub fn passed(&self) -> bool {
        self.vanishing_passed && self.size_passed && self.support_passed
    }
}

/// Checks (a1), the size condition at exponent `r`, and support containment.
/// Equalities are tested relative to the atom's own magnitude at the space
/// tolerance.
pub fn verify_atom(space: &FilteredSpace, t: &AtomTriple, p: f64, q: f64, r: f64) -> Result<AtomReport> {
    Ok(verify_atom_at(space, t, p, q, &[r])?.pop().expect("one exponent"))
}

/// [`verify_atom`] at several exponents, sharing the level table and `T(a)`.
pub fn verify_atom_at(space: &FilteredSpace, t: &AtomTriple, p: f64, q: f64, rs: &[f64]) -> Result<Vec<AtomReport>> {
    check_pq(p, q)?;
    for &r in rs {
        check_r(p, r)?;
    }
    space.check_stopping_time(&t.nu)?;
    space.check_len(&t.atom)?;
    let tol = space.tolerance();
    let levels = t.levels(space);
    let scale = t.atom.max_abs();

    let mut vanishing_residual: f64 = 0.0;
    let mut vanishing_first_failure = None;
    for (n, level) in levels.iter().enumerate() {
        let worst = (0..space.len())
            .filter(|&w| t.nu.reaches(w, n))
            .map(|w| level.get(w).abs())
            .fold(0.0, f64::max);
        if worst > tol * scale && vanishing_first_failure.is_none() {
            vanishing_first_failure = Some(n);
        }
        vanishing_residual = vanishing_residual.max(worst);
    }

    let stat = t.flavor.statistic(space, &levels);
    let support = t.support();
    let prob = space.probability(&support);
    let indicator_norm = match t.defn {
        AtomDefinition::Simple => 0.0,
        AtomDefinition::Weighted => lpq_norm(space, &RandomVariable::indicator(&support), p, q)?,
    };
    let support_residual = (0..space.len())
        .filter(|&w| !support[w])
        .map(|w| stat.get(w).abs())
        .fold(0.0, f64::max);
    let support_passed = support_residual <= tol * stat.max_abs();

    rs.iter()
        .map(|&r| {
            let measured = lp_norm(space, &stat, r)?;
            let inv_r = if r.is_infinite() { 0.0 } else { 1.0 / r };
            let bound = if prob == 0.0 {
                f64::INFINITY
            } else {
                match t.defn {
                    AtomDefinition::Simple => prob.powf(inv_r - 1.0 / p),
                    AtomDefinition::Weighted => prob.powf(inv_r) / indicator_norm,
                }
            };
            Ok(AtomReport {
                k: t.k,
                r,
                vanishing_passed: vanishing_first_failure.is_none(),
                vanishing_residual,
                vanishing_first_failure,
                size_condition: match t.defn {
                    AtomDefinition::Simple => "a2".into(),
                    AtomDefinition::Weighted => "a3".into(),
                },
                measured,
                bound,
                slack: bound - measured,
                size_passed: measured <= bound * (1.0 + tol),
                support_passed,
                support_residual,
            })
        })
        .collect()
}

/// Verifies every triple of `d` at every admissible `r` in `rs`.
pub fn verify_decomposition(d: &Decomposition, rs: &[f64]) -> Result<Vec<AtomReport>> {
    let mut out = Vec::new();
    let admissible: Vec<f64> = rs.iter().copied().filter(|&r| r > d.p.max(1.0)).collect();
    for t in d.triples() {
        out.extend(verify_atom_at(&d.space, t, d.p, d.q, &admissible)?);
    }
    Ok(out)
}

/// `Σ_k λ_k E_n a^k`.
pub fn reconstruct(d: &Decomposition, n: usize) -> Result<RandomVariable> {
    d.space.check_index(n)?;
    let mut acc = RandomVariable::zeros(d.space.len());
    for t in &d.triples {
        let level = d.space.conditional_expectation_unchecked(&t.atom, n);
        acc = acc.zip_with(&level, |a, x| a + t.lambda * x);
    }
    Ok(acc)
}

/// Maximum over levels of `max_ω |Σ_k λ_k E_n a^k − f_n|`, relative to
/// `max_{n,ω} |f_n|` (absolute when `f = 0`).
pub fn reconstruction_error(d: &Decomposition, f: &Martingale) -> Result<f64> {
    if !same_space(&d.space, f.space()) {
        return Err(Error::SpaceMismatch);
    }
    let scale = f.levels().iter().map(RandomVariable::max_abs).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for n in 0..=f.horizon() {
        let diff = &reconstruct(d, n)? - &f.levels()[n];
        worst = worst.max(diff.max_abs());
    }
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// `Σ_{l ≤ k ≤ m} λ_k a^k` (terminal values).
pub fn partial_sum(d: &Decomposition, l: i32, m: i32) -> RandomVariable {
    d.triples
        .iter()
        .filter(|t| (l..=m).contains(&t.k))
        .fold(RandomVariable::zeros(d.space.len()), |acc, t| {
            acc.zip_with(&t.atom, |a, x| a + t.lambda * x)
        })
}

/// Residual `‖f − Σ_{k=l}^m λ_k a^k‖_{H^s_{p,q}}` over nested windows that
/// grow one triple at a time (alternating below and above the middle) until
/// the full family is covered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowResidual {
    pub lo: i32,
    pub hi: i32,
    pub residual: f64,
}

pub fn window_residuals(f: &Martingale, d: &Decomposition) -> Result<Vec<WindowResidual>> {
    let ks: Vec<i32> = d.triples.iter().map(|t| t.k).collect();
    if ks.is_empty() {
        return Ok(vec![]);
    }
    let mid = ks.len() / 2;
    let (mut lo, mut hi) = (mid, mid);
    let mut out = Vec::with_capacity(ks.len());
    let mut grow_low = true;
    loop {
        let partial = partial_sum(d, ks[lo], ks[hi]);
        let residual = f.terminal() - &partial;
        let r = Martingale::from_terminal(f.space(), &residual)?;
        out.push(WindowResidual {
            lo: ks[lo],
            hi: ks[hi],
            residual: hardy_norm(&r, NormKind::ConditionalSquare, d.p, d.q)?,
        });
        match (lo > 0, hi + 1 < ks.len()) {
            (false, false) => break,
            (true, true) if grow_low => lo -= 1,
            (true, true) => hi += 1,
            (true, false) => lo -= 1,
            (false, true) => hi += 1,
        }
        grow_low = !grow_low;
    }
    Ok(out)
}

/// `‖Σ_k (λ_k / D_k)^η 1_{B_{ν^k}}‖_{p/η, q/η}^{1/η}` with `D_k = P(B_{ν^k})^{1/p}`
/// (simple) or `‖1_{B_{ν^k}}‖_{p,q}` (weighted).
pub fn aggregate_eta_norm(d: &Decomposition, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    let field = coefficient_field(d, eta)?;
    let q_eta = if d.q.is_infinite() { f64::INFINITY } else { d.q / eta };
    Ok(lpq_norm(&d.space, &field, d.p / eta, q_eta)?.powf(1.0 / eta))
}

/// `Σ_k (λ_k / D_k)^η 1_{B_{ν^k}}`.
pub fn coefficient_field(d: &Decomposition, eta: f64) -> Result<RandomVariable> {
    let mut field = vec![0.0; d.space.len()];
    for t in &d.triples {
        let support = t.support();
        if !support.iter().any(|&b| b) {
            continue;
        }
        let weight = (t.lambda / t.defn.normalizer(&d.space, &support, d.p, d.q)?).powf(eta);
        for (x, _) in field.iter_mut().zip(&support).filter(|(_, &inside)| inside) {
            *x += weight;
        }
    }
    Ok(RandomVariable::new(field))
}

/// `(4^η / (2^η − 1))^{1/η}`.
pub fn upper_constant(eta: f64) -> f64 {
    (4f64.powf(eta) / (2f64.powf(eta) - 1.0)).powf(1.0 / eta)
}

pub const DEFAULT_ETA_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// One row of a [`BoundsCertificate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBound {
    pub eta: f64,
    pub aggregate: f64,
    pub constant: f64,
    pub upper_budget: f64,
    /// `aggregate / upper_budget`; at most 1 when the upper bound holds.
    #[serde(with = "crate::harness::io::extended_real")]
    pub upper_ratio: f64,
    pub upper_passed: bool,
    /// `source_norm / aggregate`; at most 1 when the converse holds.
    #[serde(with = "crate::harness::io::extended_real")]
    pub lower_ratio: f64,
    pub lower_passed: bool,
}

/// Two-sided norm certificate for a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsCertificate {
    pub flavor: AtomFlavor,
    pub defn: AtomDefinition,
    #[serde(with = "crate::harness::io::extended_real")]
    pub p: f64,
    #[serde(with = "crate::harness::io::extended_real")]
    pub q: f64,
    pub source_norm: f64,
    pub budget_factor: f64,
    pub rows: Vec<EtaBound>,
}

impl BoundsCertificate {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.upper_passed && r.lower_passed)
    }

    pub fn converse_passed(&self) -> bool {
        self.rows.iter().all(|r| r.lower_passed)
    }

    /// The `η` values at which some inequality fails.
    pub fn failures(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| !(r.upper_passed && r.lower_passed))
            .map(|r| r.eta)
            .collect()
    }
}

/// For each `η`: `A(η) ≤ factor · (4^η/(2^η−1))^{1/η} · ‖f‖` and
/// `‖f‖ ≤ A(η)`, where `‖f‖` is the norm of the decomposed space and the
/// factor is 1 for `s` atoms and 2 for `S`/`*` atoms.
pub fn certify_bounds(f: &Martingale, d: &Decomposition, eta_grid: &[f64]) -> Result<BoundsCertificate> {
    if !same_space(&d.space, f.space()) {
        return Err(Error::SpaceMismatch);
    }
    let tol = d.space.tolerance();
    let source = hardy_norm(f, d.flavor.source_norm_kind(), d.p, d.q)?;
    let factor = d.flavor.budget_factor();
    let rows = eta_grid
        .iter()
        .map(|&eta| {
            let aggregate = aggregate_eta_norm(d, eta)?;
            let constant = upper_constant(eta);
            let upper_budget = factor * constant * source;
            Ok(EtaBound {
                eta,
                aggregate,
                constant,
                upper_budget,
                upper_ratio: ratio(aggregate, upper_budget),
                upper_passed: aggregate <= upper_budget * (1.0 + tol),
                lower_ratio: ratio(source, aggregate),
                lower_passed: source <= aggregate * (1.0 + tol),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsCertificate {
        flavor: d.flavor,
        defn: d.defn,
        p: d.p,
        q: d.q,
        source_norm: source,
        budget_factor: factor,
        rows,
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}
