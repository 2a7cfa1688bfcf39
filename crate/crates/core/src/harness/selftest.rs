//! A compact end-to-end property suite over a seeded corpus.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{
    certify_bounds, decompose, reconstruction_error, verify_decomposition, AtomDefinition, AtomFlavor,
    DEFAULT_ETA_GRID,
};
use crate::duality::{certify_duality, reverse_minkowski_check, SearchMode};
use crate::error::Result;
use crate::martingale::Martingale;
use crate::norms::{lp_norm, lpq_norm};
use crate::space::{RandomVariable, DEFAULT_ENUMERATION_CAP};

use super::explore::explore_embeddings;
use super::generate::{generate, item_rng, random_rescaling, standard_corpus, CorpusSpec, Generator};
use super::io::{from_json_str, to_canonical_string, DecompositionDoc, MartingaleDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, outcomes: Vec<Result<bool>>, detail: String) -> Result<Check> {
    let cases = outcomes.len();
    let mut failures = 0;
    for o in outcomes {
        if !o? {
            failures += 1;
        }
    }
    Ok(Check {
        name: name.into(),
        passed: failures == 0,
        cases,
        failures,
        detail,
    })
}

const CORPUS_SIZE: usize = 48;

type VariantTest = dyn Fn(&Martingale, f64, f64, AtomFlavor, AtomDefinition) -> Result<bool> + Sync;
const PQ: [(f64, f64); 3] = [(0.5, 1.0), (1.0, 1.0), (2.0, 2.0)];

pub fn run_selftest(seed: u64) -> Result<SelftestReport> {
    let corpus = standard_corpus(CORPUS_SIZE, seed)?;
    let mut checks = Vec::new();

    let per_variant = |test: &VariantTest| {
        corpus
            .par_iter()
            .flat_map_iter(|f| {
                PQ.iter().flat_map(move |&(p, q)| {
                    AtomFlavor::ALL
                        .into_iter()
                        .flat_map(move |fl| AtomDefinition::ALL.into_iter().map(move |df| (fl, df)))
                        .map(move |(fl, df)| test(f, p, q, fl, df))
                })
            })
            .collect::<Vec<_>>()
    };

    checks.push(check(
        "reconstruction",
        per_variant(&|f, p, q, fl, df| Ok(reconstruction_error(&decompose(f, p, q, fl, df)?, f)? <= 1e-10)),
        "max relative error over levels <= 1e-10".into(),
    )?);
    checks.push(check(
        "atom-validity",
        per_variant(&|f, p, q, fl, df| {
            let d = decompose(f, p, q, fl, df)?;
            Ok(verify_decomposition(&d, &[2.0, 4.0, f64::INFINITY])?.iter().all(|r| r.passed()))
        }),
        "vanishing, size and support at r in {2, 4, inf}".into(),
    )?);
    checks.push(check(
        "two-sided-bounds",
        per_variant(&|f, p, q, fl, df| {
            let d = decompose(f, p, q, fl, df)?;
            Ok(certify_bounds(f, &d, &DEFAULT_ETA_GRID)?.passed())
        }),
        "eta in {0.25, 0.5, 0.75, 1}".into(),
    )?);
    checks.push(check(
        "converse-under-rescaling",
        corpus
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let mut rng = item_rng(seed ^ 0x5eed, i);
                let d = decompose(f, 1.0, 1.0, AtomFlavor::ALL[i % 3], AtomDefinition::ALL[i % 2])?;
                let e = random_rescaling(&d, &mut rng)?;
                Ok(certify_bounds(f, &e, &DEFAULT_ETA_GRID)?.converse_passed())
            })
            .collect(),
        "constant 1 for rescaled families".into(),
    )?);
    checks.push(check(
        "l2-isometry",
        corpus
            .iter()
            .map(|f| {
                let space = f.space();
                let e = |x: &RandomVariable| space.expectation(&x.map(|v| v * v));
                let a = e(f.terminal());
                let scale = a.max(f64::MIN_POSITIVE);
                let b = e(&f.square_function_path().pop().expect("nonempty"));
                let c = e(&f.conditional_square_function_path().pop().expect("nonempty"));
                Ok((a - b).abs() <= 1e-10 * scale && (a - c).abs() <= 1e-10 * scale)
            })
            .collect(),
        "E f_N^2 = E S(f)^2 = E s(f)^2".into(),
    )?);
    checks.push(check(
        "amalgam-diagonal",
        corpus
            .iter()
            .map(|f| {
                let x = f.terminal();
                let (a, b) = (lpq_norm(f.space(), x, 1.5, 1.5)?, lp_norm(f.space(), x, 1.5)?);
                Ok((a - b).abs() <= 1e-12 * b.max(f64::MIN_POSITIVE))
            })
            .collect(),
        "||x||_{p,p} = ||x||_p".into(),
    )?);
    checks.push(check(
        "reverse-minkowski",
        corpus
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut rng = item_rng(seed ^ 0xface, i);
                let fs: Vec<RandomVariable> = (0..3)
                    .map(|_| RandomVariable::new((0..f.space().len()).map(|_| rng.random_range(-1.0..1.0)).collect()))
                    .collect();
                Ok(reverse_minkowski_check(f.space(), &fs, 0.5, 0.5)?.passed)
            })
            .collect(),
        "p = q = 0.5, three random summands".into(),
    )?);

    let small = generate(&CorpusSpec::new(Generator::Dyadic { depth: 3 }, 8, seed))?;
    checks.push(check(
        "duality-chain",
        corpus
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let g = centered_noise(f, &mut item_rng(seed ^ 0xd0a1, i));
                certify_duality(f, &g, 0.5, 1.0, SearchMode::HeuristicFamily, DEFAULT_ENUMERATION_CAP).map(|c| c.passed())
            })
            .chain(small.iter().enumerate().map(|(i, f)| {
                let g = centered_noise(f, &mut item_rng(seed ^ 0xd0a2, i));
                certify_duality(f, &g, 1.0, 1.0, SearchMode::ExactEnumeration, DEFAULT_ENUMERATION_CAP)
                    .map(|c| c.passed() && !c.campanato.fell_back)
            }))
            .collect(),
        "heuristic on the corpus, exact on dyadic depth 3".into(),
    )?);
    checks.push(check(
        "json-round-trip",
        corpus
            .iter()
            .map(|f| {
                let m = to_canonical_string(&MartingaleDoc::from_martingale(f))?;
                let back: MartingaleDoc = from_json_str(&m)?;
                let d = decompose(f, 1.0, 1.0, AtomFlavor::Conditional, AtomDefinition::Simple)?;
                let dd = to_canonical_string(&DecompositionDoc::from_decomposition(&d, None))?;
                let dback: DecompositionDoc = from_json_str(&dd)?;
                Ok(back.to_martingale()? == *f
                    && to_canonical_string(&back)? == m
                    && to_canonical_string(&dback)? == dd)
            })
            .collect(),
        "canonical text is a fixed point".into(),
    )?);
    let dyadic: Vec<Martingale> = corpus.iter().filter(|f| f.space().regularity_constant() == 2.0).cloned().collect();
    checks.push(check(
        "embedding-directions",
        [1.0, 2.0]
            .iter()
            .map(|&p| explore_embeddings(&dyadic, p, p).map(|t| !t.flagged()))
            .collect(),
        "p = q in {1, 2} on regular binary spaces".into(),
    )?);

    Ok(SelftestReport { seed, checks })
}

/// Gaussian noise on the outcomes of `f`'s space, centered to mean zero.
pub fn centered_noise(f: &Martingale, rng: &mut impl Rng) -> RandomVariable {
    let space = f.space();
    let raw = RandomVariable::new((0..space.len()).map(|_| rng.sample(rand_distr::StandardNormal)).collect());
    let mean = space.expectation(&raw);
    raw.map(|x| x - mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_7_passes() {
        let report = run_selftest(7).unwrap();
        for c in &report.checks {
            assert!(c.passed, "{c:?}");
        }
    }
}
