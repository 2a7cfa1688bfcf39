//! The `L_{p,q}` amalgam quasi-norm and the five martingale Hardy-amalgam
//! norms built on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::martingale::{EnvelopeFlavor, Martingale};
use crate::space::{FilteredSpace, RandomVariable};

/// Exponents below this are combined in log-space.
const LOG_SPACE_BELOW: f64 = 0.1;

/// Exponent set `(p, q, r, η)`; `q` and `r` may be `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentConfig {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub eta: f64,
}

impl ExponentConfig {
    pub fn new(p: f64, q: f64, r: f64, eta: f64) -> Result<Self> {
        check_pq(p, q)?;
        check_r(p, r)?;
        check_eta(eta)?;
        Ok(Self { p, q, r, eta })
    }
}

pub(crate) fn check_pq(p: f64, q: f64) -> Result<()> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::InvalidExponent {
            name: "p",
            value: p,
            reason: "must lie in (0, ∞)",
        });
    }
    if q.is_nan() || q <= 0.0 {
        return Err(Error::InvalidExponent {
            name: "q",
            value: q,
            reason: "must lie in (0, ∞]",
        });
    }
    Ok(())
}

pub(crate) fn check_r(p: f64, r: f64) -> Result<()> {
    if r.is_nan() || r <= p.max(1.0) {
        return Err(Error::InvalidExponent {
            name: "r",
            value: r,
            reason: "must lie in (max(p, 1), ∞]",
        });
    }
    Ok(())
}

pub(crate) fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidExponent {
            name: "eta",
            value: eta,
            reason: "must lie in (0, 1]",
        });
    }
    Ok(())
}

/// `‖g‖_{p,q} = [Σ_j (∫ |g|^p 1_{Ω_j} dP)^{q/p}]^{1/q}`, or
/// `sup_j (∫ |g|^p 1_{Ω_j} dP)^{1/p}` when `q = ∞`.
pub fn lpq_norm(space: &FilteredSpace, g: &RandomVariable, p: f64, q: f64) -> Result<f64> {
    check_pq(p, q)?;
    space.check_len(g)?;
    Ok(combine_blocks(&block_integrals(space, g, p), p, q))
}

/// `∫ |g|^p 1_{Ω_j} dP` for every block, in block order.
pub fn block_integrals(space: &FilteredSpace, g: &RandomVariable, p: f64) -> Vec<f64> {
    let prob = space.prob();
    space
        .blocks()
        .cells()
        .iter()
        .map(|block| block.iter().map(|&w| prob[w] * g.get(w).abs().powf(p)).sum())
        .collect()
}

/// Outer `ℓ_q` aggregation of the block integrals. Zero integrals contribute
/// zero for every `q`.
pub fn combine_blocks(integrals: &[f64], p: f64, q: f64) -> f64 {
    if q.is_infinite() {
        return integrals
            .iter()
            .map(|i| i.powf(1.0 / p))
            .fold(0.0, f64::max);
    }
    if p < LOG_SPACE_BELOW || q < LOG_SPACE_BELOW {
        let logs: Vec<f64> = integrals
            .iter()
            .filter(|&&i| i > 0.0)
            .map(|i| (q / p) * i.ln())
            .collect();
        let Some(top) = logs.iter().copied().reduce(f64::max) else {
            return 0.0;
        };
        if top.is_infinite() {
            return f64::INFINITY;
        }
        let lse = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
        return (lse / q).exp();
    }
    let ratio = q / p;
    integrals
        .iter()
        .map(|i| if ratio == 1.0 { *i } else { i.powf(ratio) })
        .sum::<f64>()
        .powf(1.0 / q)
}

/// Plain `‖g‖_p = (E|g|^p)^{1/p}`; `p = ∞` gives `max |g|`.
pub fn lp_norm(space: &FilteredSpace, g: &RandomVariable, p: f64) -> Result<f64> {
    space.check_len(g)?;
    if p.is_infinite() && p > 0.0 {
        return Ok(g.max_abs());
    }
    check_pq(p, p)?;
    let sum: f64 = space
        .prob()
        .iter()
        .zip(g.values())
        .map(|(w, x)| w * x.abs().powf(p))
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// The five Hardy-amalgam norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormKind {
    /// `‖s(f)‖_{p,q}`
    #[serde(rename = "Hs")]
    ConditionalSquare,
    /// `‖S(f)‖_{p,q}`
    #[serde(rename = "HS")]
    Square,
    /// `‖f*‖_{p,q}`
    #[serde(rename = "Hstar")]
    Maximal,
    /// `inf_β ‖β_∞‖_{p,q}` over envelopes with `S_n(f) ≤ β_{n−1}`
    #[serde(rename = "Q")]
    PredictableSquare,
    /// `inf_β ‖β_∞‖_{p,q}` over envelopes with `|f_n| ≤ β_{n−1}`
    #[serde(rename = "P")]
    PredictableMaximal,
}

impl NormKind {
    pub const ALL: [NormKind; 5] = [
        NormKind::ConditionalSquare,
        NormKind::Square,
        NormKind::Maximal,
        NormKind::PredictableSquare,
        NormKind::PredictableMaximal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            NormKind::ConditionalSquare => "Hs",
            NormKind::Square => "HS",
            NormKind::Maximal => "Hstar",
            NormKind::PredictableSquare => "Q",
            NormKind::PredictableMaximal => "P",
        }
    }
}

/// The random variable whose `L_{p,q}` norm defines the given Hardy norm.
pub fn norm_statistic(f: &Martingale, kind: NormKind) -> RandomVariable {
    match kind {
        NormKind::ConditionalSquare => f.conditional_quadratic_variation(),
        NormKind::Square => f.quadratic_variation(),
        NormKind::Maximal => f.maximal_function(),
        NormKind::PredictableSquare => f.minimal_envelope(EnvelopeFlavor::Square).terminal().clone(),
        NormKind::PredictableMaximal => f.minimal_envelope(EnvelopeFlavor::Maximal).terminal().clone(),
    }
}

pub fn hardy_norm(f: &Martingale, kind: NormKind, p: f64, q: f64) -> Result<f64> {
    lpq_norm(f.space(), &norm_statistic(f, kind), p, q)
}

/// `‖f‖_{H^s_{p,q}}`.
pub fn hardy_s_norm(f: &Martingale, p: f64, q: f64) -> Result<f64> {
    hardy_norm(f, NormKind::ConditionalSquare, p, q)
}

/// `‖f‖_{H^S_{p,q}}`.
pub fn hardy_big_s_norm(f: &Martingale, p: f64, q: f64) -> Result<f64> {
    hardy_norm(f, NormKind::Square, p, q)
}

/// `‖f‖_{H^*_{p,q}}`.
pub fn hardy_star_norm(f: &Martingale, p: f64, q: f64) -> Result<f64> {
    hardy_norm(f, NormKind::Maximal, p, q)
}

/// `‖f‖_{Q_{p,q}}`, exact because the minimal envelope is pointwise below
/// every admissible one and `L_{p,q}` is monotone.
pub fn q_space_norm(f: &Martingale, p: f64, q: f64) -> Result<f64> {
    hardy_norm(f, NormKind::PredictableSquare, p, q)
}

/// `‖f‖_{P_{p,q}}`.
pub fn p_space_norm(f: &Martingale, p: f64, q: f64) -> Result<f64> {
    hardy_norm(f, NormKind::PredictableMaximal, p, q)
}

/// All five norms at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyNorms {
    #[serde(rename = "Hs")]
    pub conditional_square: f64,
    #[serde(rename = "HS")]
    pub square: f64,
    #[serde(rename = "Hstar")]
    pub maximal: f64,
    #[serde(rename = "Q")]
    pub predictable_square: f64,
    #[serde(rename = "P")]
    pub predictable_maximal: f64,
}

impl HardyNorms {
    pub fn compute(f: &Martingale, p: f64, q: f64) -> Result<Self> {
        Ok(Self {
            conditional_square: hardy_s_norm(f, p, q)?,
            square: hardy_big_s_norm(f, p, q)?,
            maximal: hardy_star_norm(f, p, q)?,
            predictable_square: q_space_norm(f, p, q)?,
            predictable_maximal: p_space_norm(f, p, q)?,
        })
    }

    pub fn get(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::ConditionalSquare => self.conditional_square,
            NormKind::Square => self.square,
            NormKind::Maximal => self.maximal,
            NormKind::PredictableSquare => self.predictable_square,
            NormKind::PredictableMaximal => self.predictable_maximal,
        }
    }
}
