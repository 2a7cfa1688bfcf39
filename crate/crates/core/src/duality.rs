//! The Campanato-type space `L_{2,φ}` and its pairing with `H^s_{p,q}`.
//!
//! `φ(A) = ‖1_A‖_{p,q} / P(A)` and
//! `‖g‖_{L_{2,φ}} = sup_ν φ(B_ν)^{-1} ((1/P(B_ν)) ∫_{B_ν} |g − g^ν|²)^{1/2}`,
//! where `g^ν` is the martingale `E_n g` stopped at `ν`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::atomic::{decompose, upper_constant, AtomDefinition, AtomFlavor};
use crate::error::{Error, Result};
use crate::martingale::{adapted_levels, ladder_time, ladder_window, EnvelopeFlavor, LadderKind, Martingale};
use crate::norms::{check_pq, hardy_norm, lpq_norm, NormKind};
use crate::space::{FilteredSpace, RandomVariable, StoppingTime, DEFAULT_ENUMERATION_CAP};

/// `‖1_A‖_{p,q} / P(A)`.
pub fn phi(space: &FilteredSpace, set: &[bool], p: f64, q: f64) -> Result<f64> {
    check_pq(p, q)?;
    if set.len() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            got: set.len(),
        });
    }
    let prob = space.probability(set);
    if prob == 0.0 {
        return Err(Error::NullSet("φ is undefined on a null set"));
    }
    Ok(lpq_norm(space, &RandomVariable::indicator(set), p, q)? / prob)
}

/// How the supremum over stopping times is searched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Every stopping time, when their number is within the cap.
    ExactEnumeration,
    /// Ladder times of `E_n g` for all three ladder statistics, together with
    /// first-entry times of every cell.
    HeuristicFamily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampanatoResult {
    pub norm_value: f64,
    /// `None` only when no candidate has a non-null support.
    pub attaining_nu: Option<StoppingTime>,
    pub mode: SearchMode,
    pub candidates_examined: u64,
    /// Exact mode was requested but the enumeration exceeded its cap.
    pub fell_back: bool,
}

/// Evaluates the oscillation ratio for `g` against its level table.
struct Oscillation<'a> {
    space: &'a FilteredSpace,
    g: &'a RandomVariable,
    levels: Vec<RandomVariable>,
    p: f64,
    q: f64,
}

impl<'a> Oscillation<'a> {
    fn new(space: &'a FilteredSpace, g: &'a RandomVariable, p: f64, q: f64) -> Self {
        Self {
            space,
            g,
            levels: adapted_levels(space, g),
            p,
            q,
        }
    }

    /// `∫_{B_ν} |g − g^ν|²`.
    fn integral(&self, nu: &StoppingTime) -> f64 {
        let prob = self.space.prob();
        (0..self.space.len())
            .filter_map(|w| nu.time(w).map(|n| prob[w] * (self.g.get(w) - self.levels[n].get(w)).powi(2)))
            .sum()
    }

    /// The ratio for one candidate; `None` when `B_ν` is null.
    fn value(&self, nu: &StoppingTime) -> Option<f64> {
        let support = nu.support();
        let prob = self.space.probability(&support);
        if prob == 0.0 {
            return None;
        }
        let weight = lpq_norm(self.space, &RandomVariable::indicator(&support), self.p, self.q)
            .expect("exponents checked")
            / prob;
        Some((self.integral(nu) / prob).sqrt() / weight)
    }
}

/// Running argmax with ties going to the lexicographically smallest table.
#[derive(Default)]
struct Best {
    value: f64,
    nu: Option<StoppingTime>,
    examined: u64,
}

impl Best {
    fn offer(&mut self, nu: &StoppingTime, value: Option<f64>) {
        self.examined += 1;
        let Some(v) = value else { return };
        let better = match &self.nu {
            None => true,
            Some(current) => v > self.value || (v == self.value && nu.lex_cmp(current) == Ordering::Less),
        };
        if better {
            self.value = v;
            self.nu = Some(nu.clone());
        }
    }
}

/// Candidate stopping times of the heuristic family, sorted and deduplicated.
pub fn heuristic_family(g: &Martingale) -> Vec<StoppingTime> {
    let space = g.space();
    let mut family = Vec::new();
    let mut push_ladder = |stats: Vec<RandomVariable>| {
        if let Some((lo, hi)) = ladder_window(&stats) {
            family.extend((lo..=hi + 1).map(|k| ladder_time(&stats, k)));
        }
    };
    push_ladder(g.ladder_statistic(LadderKind::Conditional, None).expect("no envelope needed"));
    for flavor in [EnvelopeFlavor::Square, EnvelopeFlavor::Maximal] {
        let env = g.minimal_envelope(flavor);
        push_ladder(g.ladder_statistic(LadderKind::Envelope, Some(&env)).expect("envelope given"));
    }
    for n in 0..=space.horizon() {
        for c in 0..space.filtration()[n].len() {
            family.push(space.cell_entry_time(n, c).expect("cell exists"));
        }
    }
    family.retain(|nu| nu.times().iter().any(Option::is_some));
    family.sort_by(StoppingTime::lex_cmp);
    family.dedup();
    family
}

/// `‖g‖_{L_{2,φ}}`, exactly (all stopping times, up to `cap`) or over the
/// heuristic family. `g` must have mean zero.
pub fn campanato_norm(
    space: &std::sync::Arc<FilteredSpace>,
    g: &RandomVariable,
    p: f64,
    q: f64,
    mode: SearchMode,
    cap: u64,
) -> Result<CampanatoResult> {
    check_pq(p, q)?;
    let martingale = Martingale::from_terminal(space, g)?;
    let osc = Oscillation::new(space, g, p, q);
    let mut best = Best::default();
    let mut fell_back = false;
    if mode == SearchMode::ExactEnumeration {
        let outcome = space.for_each_stopping_time(cap, |nu| {
            if nu.times().iter().any(Option::is_some) {
                best.offer(nu, osc.value(nu));
            }
        });
        match outcome {
            Ok(_) => {
                return Ok(CampanatoResult {
                    norm_value: best.value,
                    attaining_nu: best.nu,
                    mode,
                    candidates_examined: best.examined,
                    fell_back,
                })
            }
            Err(Error::EnumerationOverflow { .. }) => fell_back = true,
            Err(e) => return Err(e),
        }
    }
    for nu in heuristic_family(&martingale) {
        best.offer(&nu, osc.value(&nu));
    }
    Ok(CampanatoResult {
        norm_value: best.value,
        attaining_nu: best.nu,
        mode: SearchMode::HeuristicFamily,
        candidates_examined: best.examined,
        fell_back,
    })
}

/// Oscillation ratio of `g` at a single stopping time; `None` on a null support.
pub fn campanato_value(space: &FilteredSpace, g: &RandomVariable, nu: &StoppingTime, p: f64, q: f64) -> Result<Option<f64>> {
    check_pq(p, q)?;
    space.check_len(g)?;
    space.check_stopping_time(nu)?;
    Ok(Oscillation::new(space, g, p, q).value(nu))
}

/// `E[f_N g]`.
pub fn pairing(f: &Martingale, g: &RandomVariable) -> Result<f64> {
    f.space().check_len(g).map_err(|_| Error::SpaceMismatch)?;
    let prod = f.terminal().zip_with(g, |a, b| a * b);
    Ok(f.space().expectation(&prod))
}

/// One ladder term of the duality chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityTerm {
    pub k: i32,
    pub lambda: f64,
    /// `‖a^k‖_2`.
    pub atom_l2: f64,
    /// `(∫_{B_{ν^k}} |g − g^{ν^k}|²)^{1/2}`.
    pub oscillation: f64,
}

/// `|E[f_N g]| ≤ Σ_k λ_k ‖a^k‖_2 (∫_{B_{ν^k}} |g − g^{ν^k}|²)^{1/2} ≤ C(1) ‖f‖_{H^s_{p,q}} G`,
/// with `G` the larger of the searched `L_{2,φ}` value and the oscillation
/// ratios at the ladder times of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityCertificate {
    pub p: f64,
    pub q: f64,
    pub pairing: f64,
    pub atomwise_bound: f64,
    pub f_norm: f64,
    pub campanato: CampanatoResult,
    /// `G`: the `L_{2,φ}` value used in the budget.
    pub g_norm: f64,
    pub constant: f64,
    pub budget: f64,
    pub lower_slack: f64,
    pub upper_slack: f64,
    pub lower_passed: bool,
    pub upper_passed: bool,
    pub terms: Vec<DualityTerm>,
}

impl DualityCertificate {
    pub fn passed(&self) -> bool {
        self.lower_passed && self.upper_passed
    }
}

/// Certifies the duality chain for `0 < p ≤ q ≤ 1` and mean-zero `g`.
pub fn certify_duality(
    f: &Martingale,
    g: &RandomVariable,
    p: f64,
    q: f64,
    mode: SearchMode,
    cap: u64,
) -> Result<DualityCertificate> {
    check_pq(p, q)?;
    if !(p <= q && q <= 1.0) {
        return Err(Error::InvalidExponent {
            name: "q",
            value: q,
            reason: "duality needs 0 < p <= q <= 1",
        });
    }
    let space = f.space();
    let value = pairing(f, g)?;
    let campanato = campanato_norm(space, g, p, q, mode, cap)?;
    let osc = Oscillation::new(space, g, p, q);
    let tol = space.tolerance();

    let d = decompose(f, p, q, AtomFlavor::Conditional, AtomDefinition::Simple)?;
    let mut g_norm = campanato.norm_value;
    let mut terms = Vec::with_capacity(d.triples().len());
    for t in d.triples() {
        let atom_sq = t.atom.map(|x| x * x);
        terms.push(DualityTerm {
            k: t.k,
            lambda: t.lambda,
            atom_l2: space.expectation(&atom_sq).sqrt(),
            oscillation: osc.integral(&t.nu).sqrt(),
        });
        if let Some(v) = osc.value(&t.nu) {
            g_norm = g_norm.max(v);
        }
    }
    let atomwise_bound: f64 = terms.iter().map(|t| t.lambda * t.atom_l2 * t.oscillation).sum();
    let f_norm = hardy_norm(f, NormKind::ConditionalSquare, p, q)?;
    let constant = upper_constant(1.0);
    let budget = constant * f_norm * g_norm;

    // Roundoff in E[f_N g] is relative to the Cauchy–Schwarz magnitude.
    let l2 = |x: &RandomVariable| space.expectation(&x.map(|v| v * v)).sqrt();
    let floor = tol * l2(f.terminal()) * l2(g);
    Ok(DualityCertificate {
        p,
        q,
        pairing: value,
        atomwise_bound,
        f_norm,
        campanato,
        g_norm,
        constant,
        budget,
        lower_slack: atomwise_bound - value.abs(),
        upper_slack: budget - atomwise_bound,
        lower_passed: value.abs() <= atomwise_bound * (1.0 + tol) + floor,
        upper_passed: atomwise_bound <= budget * (1.0 + tol),
        terms,
    })
}

/// Certifies with the default enumeration cap.
pub fn certify_duality_default(f: &Martingale, g: &RandomVariable, p: f64, q: f64, mode: SearchMode) -> Result<DualityCertificate> {
    certify_duality(f, g, p, q, mode, DEFAULT_ENUMERATION_CAP)
}

/// The mean-zero `F_N`-measurable `g` with `E[X_i g] = v_i` for every given
/// pair `(X_i, v_i)`.
///
/// Solved by least squares in the basis of `Π_N` cells with the mean-zero
/// row appended; rejects rank-deficient systems and systems whose residual
/// exceeds the space tolerance relative to the data.
pub fn representer(space: &FilteredSpace, functional_values: &[(RandomVariable, f64)]) -> Result<RandomVariable> {
    let last = &space.filtration()[space.horizon()];
    let cells = last.cells();
    let rows = functional_values.len() + 1;
    let mut a = DMatrix::<f64>::zeros(rows, cells.len());
    let mut b = DVector::<f64>::zeros(rows);
    for (i, (x, v)) in functional_values.iter().enumerate() {
        space.check_len(x)?;
        for (c, cell) in cells.iter().enumerate() {
            a[(i, c)] = cell.iter().map(|&w| space.prob()[w] * x.get(w)).sum();
        }
        b[i] = *v;
    }
    for (c, p) in space.cell_probabilities(space.horizon()).iter().enumerate() {
        a[(rows - 1, c)] = *p;
    }

    let scale = a.amax().max(f64::MIN_POSITIVE);
    let svd = a.clone().svd(true, true);
    let cutoff = scale * 1e-10;
    if svd.rank(cutoff) < cells.len() {
        return Err(Error::Singular("underdetermined"));
    }
    let coeffs = svd.solve(&b, cutoff).map_err(|_| Error::Singular("not solvable"))?;
    let residual = (&a * &coeffs - &b).amax();
    if residual > space.tolerance().max(1e-10) * b.amax().max(1.0) {
        return Err(Error::Singular("inconsistent"));
    }
    let mut g = vec![0.0; space.len()];
    for (c, cell) in cells.iter().enumerate() {
        for &w in cell {
            g[w] = coeffs[c];
        }
    }
    Ok(RandomVariable::new(g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseMinkowskiReport {
    pub p: f64,
    pub q: f64,
    /// `Σ_n ‖f_n‖_{p,q}`.
    pub left: f64,
    /// `‖Σ_n |f_n|‖_{p,q}`.
    pub right: f64,
    pub slack: f64,
    pub passed: bool,
}

/// `Σ_n ‖f_n‖_{p,q} ≤ ‖Σ_n |f_n|‖_{p,q}` for `0 < p < 1`, `0 < q ≤ 1`.
pub fn reverse_minkowski_check(space: &FilteredSpace, fs: &[RandomVariable], p: f64, q: f64) -> Result<ReverseMinkowskiReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidExponent {
            name: "p",
            value: p,
            reason: "reverse Minkowski needs 0 < p < 1",
        });
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidExponent {
            name: "q",
            value: q,
            reason: "reverse Minkowski needs 0 < q <= 1",
        });
    }
    let mut left = 0.0;
    let mut total = RandomVariable::zeros(space.len());
    for f in fs {
        space.check_len(f)?;
        left += lpq_norm(space, f, p, q)?;
        total = total.zip_with(f, |acc, x| acc + x.abs());
    }
    let right = lpq_norm(space, &total, p, q)?;
    Ok(ReverseMinkowskiReport {
        p,
        q,
        left,
        right,
        slack: right - left,
        passed: left <= right * (1.0 + space.tolerance()),
    })
}
