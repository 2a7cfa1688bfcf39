//! Empirical ratio tables between the five martingale norms.
//!
//! On the diagonal `p = q` the classical embeddings give, for some finite
//! constant `C_p`:
//!
//! | item | bounded ratios                         | range        |
//! |------|----------------------------------------|--------------|
//! | i    | `H^*/H^s`, `H^S/H^s`                   | `0 < p ≤ 2`  |
//! | ii   | `H^s/H^*`, `H^s/H^S`                   | `2 ≤ p < ∞`  |
//! | iii  | `H^*/P`, `H^S/Q`                       | all `p`      |
//! | iv   | `H^*/Q`, `H^S/P`                       | all `p`      |
//! | v    | `H^s/P`, `H^s/Q`                       | all `p`      |
//!
//! Only finiteness is checked, since `C_p` is not explicit. The two pairs in
//! item iii also hold pointwise with constant 1 (`S(f) ≤ β_∞` and
//! `f* ≤ β_∞` for the respective envelopes), which is checked exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::martingale::Martingale;
use crate::norms::{HardyNorms, NormKind};

use super::io::extended_real;

#[derive(Debug, Clone, Copy)]
struct Embedding {
    numerator: NormKind,
    denominator: NormKind,
    item: &'static str,
    applies: fn(f64) -> bool,
    unit_constant: bool,
}

const EMBEDDINGS: [Embedding; 10] = {
    use NormKind::*;
    const fn e(numerator: NormKind, denominator: NormKind, item: &'static str, applies: fn(f64) -> bool, unit_constant: bool) -> Embedding {
        Embedding {
            numerator,
            denominator,
            item,
            applies,
            unit_constant,
        }
    }
    fn small(p: f64) -> bool {
        p <= 2.0
    }
    fn large(p: f64) -> bool {
        p >= 2.0
    }
    fn all(_: f64) -> bool {
        true
    }
    [
        e(Maximal, ConditionalSquare, "i", small, false),
        e(Square, ConditionalSquare, "i", small, false),
        e(ConditionalSquare, Maximal, "ii", large, false),
        e(ConditionalSquare, Square, "ii", large, false),
        e(Maximal, PredictableMaximal, "iii", all, true),
        e(Square, PredictableSquare, "iii", all, true),
        e(Maximal, PredictableSquare, "iv", all, false),
        e(Square, PredictableMaximal, "iv", all, false),
        e(ConditionalSquare, PredictableMaximal, "v", all, false),
        e(ConditionalSquare, PredictableSquare, "v", all, false),
    ]
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRow {
    pub numerator: NormKind,
    pub denominator: NormKind,
    pub item: String,
    /// `p = q` and `p` lies in the item's range.
    pub asserted: bool,
    /// Samples with a nonzero denominator (zero martingales are skipped).
    pub samples: usize,
    #[serde(with = "extended_real")]
    pub max_ratio: f64,
    #[serde(with = "extended_real")]
    pub median_ratio: f64,
    pub all_finite: bool,
    /// Samples violating a constant-1 relation (item iii only).
    pub unit_violations: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    #[serde(with = "extended_real")]
    pub p: f64,
    #[serde(with = "extended_real")]
    pub q: f64,
    pub diagonal: bool,
    pub rows: Vec<EmbeddingRow>,
}

impl EmbeddingTable {
    pub fn flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,q,numerator,denominator,item,asserted,samples,max_ratio,median_ratio,all_finite,unit_violations,flagged\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                self.p,
                self.q,
                r.numerator.label(),
                r.denominator.label(),
                r.item,
                r.asserted,
                r.samples,
                r.max_ratio,
                r.median_ratio,
                r.all_finite,
                r.unit_violations,
                r.flagged
            ));
        }
        out
    }
}

pub fn explore_embeddings(corpus: &[Martingale], p: f64, q: f64) -> Result<EmbeddingTable> {
    let norms: Vec<(HardyNorms, f64)> = corpus
        .par_iter()
        .map(|f| Ok((HardyNorms::compute(f, p, q)?, f.space().tolerance())))
        .collect::<Result<_>>()?;
    let diagonal = p == q;
    let rows = EMBEDDINGS
        .iter()
        .map(|e| {
            let mut ratios = Vec::with_capacity(norms.len());
            let mut unit_violations = 0;
            for (n, tol) in &norms {
                let (a, b) = (n.get(e.numerator), n.get(e.denominator));
                if e.unit_constant && a > b * (1.0 + tol) {
                    unit_violations += 1;
                }
                if b > 0.0 {
                    ratios.push(a / b);
                } else if a > 0.0 {
                    ratios.push(f64::INFINITY);
                }
            }
            ratios.sort_by(f64::total_cmp);
            let all_finite = ratios.iter().all(|r| r.is_finite());
            let asserted = diagonal && (e.applies)(p);
            EmbeddingRow {
                numerator: e.numerator,
                denominator: e.denominator,
                item: e.item.into(),
                asserted,
                samples: ratios.len(),
                max_ratio: ratios.last().copied().unwrap_or(0.0),
                median_ratio: median(&ratios),
                all_finite,
                unit_violations,
                flagged: asserted && (!all_finite || unit_violations > 0),
            }
        })
        .collect();
    Ok(EmbeddingTable { p, q, diagonal, rows })
}

fn median(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}
