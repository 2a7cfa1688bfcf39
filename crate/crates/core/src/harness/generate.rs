//! Seeded corpus generation. Item `i` of a corpus draws from ChaCha stream
//! `i` of the corpus seed, so items are independent of evaluation order.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomic::{verify_atom, Decomposition};
use crate::error::{Error, Result};
use crate::martingale::Martingale;
use crate::space::{FilteredSpace, RandomVariable};

use super::io::extended_real;
use super::tolerance_from_env;

/// Largest outcome count a generator may produce.
pub const MAX_OUTCOMES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    /// Uniform binary tree; i.i.d. Gaussian terminal values.
    Dyadic { depth: usize },
    /// Every node splits into 2..=`max_branching` children with random
    /// conditional weights; i.i.d. Gaussian terminal values.
    RandomTree { max_branching: usize, depth: usize },
    /// Uniform binary tree; `f_n = Σ_{i≤n} c_i ε_i` with `c_i` drawn per cell
    /// of `Π_{i−1}` and fair signs `ε_i`.
    CoinWalk { steps: usize },
}

impl Generator {
    fn max_outcomes(self) -> Option<usize> {
        let (b, d) = match self {
            Generator::Dyadic { depth } => (2, depth),
            Generator::RandomTree { max_branching, depth } => (max_branching.max(1), depth),
            Generator::CoinWalk { steps } => (2, steps),
        };
        b.checked_pow(u32::try_from(d).ok()?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BlockPolicy {
    Single,
    /// Cells of `Π_level` (clamped to the horizon).
    LevelCells { level: usize },
    /// Each outcome joins one of `count` blocks uniformly at random; blocks
    /// may end up empty.
    RandomPartition { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    #[serde(with = "extended_real")]
    pub p: f64,
    #[serde(with = "extended_real")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub generator: Generator,
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub exponents: Vec<ExponentPair>,
    pub blocks: BlockPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl CorpusSpec {
    pub fn new(generator: Generator, count: usize, seed: u64) -> Self {
        Self {
            generator,
            count,
            seed,
            exponents: Vec::new(),
            blocks: BlockPolicy::Single,
            tolerance: None,
        }
    }

    pub fn with_blocks(mut self, blocks: BlockPolicy) -> Self {
        self.blocks = blocks;
        self
    }
}

/// The ChaCha stream for item `index` of a corpus.
pub fn item_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate(spec: &CorpusSpec) -> Result<Vec<Martingale>> {
    let size = spec.generator.max_outcomes();
    if size.is_none_or(|m| m > MAX_OUTCOMES) {
        return Err(Error::SizeBound(format!(
            "{:?} may produce more than {MAX_OUTCOMES} outcomes",
            spec.generator
        )));
    }
    let tol = match spec.tolerance {
        Some(t) => Some(t),
        None => tolerance_from_env()?,
    };
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = item_rng(spec.seed, i);
            generate_item(spec.generator, spec.blocks, tol, &mut rng)
        })
        .collect()
}

/// One corpus item drawn from `rng`.
pub fn generate_item(generator: Generator, blocks: BlockPolicy, tol: Option<f64>, rng: &mut impl Rng) -> Result<Martingale> {
    let space = match generator {
        Generator::Dyadic { depth } => FilteredSpace::dyadic(depth)?,
        Generator::RandomTree { max_branching, depth } => random_tree(max_branching, depth, rng)?,
        Generator::CoinWalk { steps } => FilteredSpace::dyadic(steps)?,
    };
    let space = apply_blocks(space, blocks, rng)?;
    let space = Arc::new(match tol {
        Some(t) => space.with_tolerance(t),
        None => space,
    });
    let terminal = match generator {
        Generator::CoinWalk { .. } => coin_walk_terminal(&space, rng),
        _ => {
            let raw = RandomVariable::new((0..space.len()).map(|_| rng.sample(StandardNormal)).collect());
            let mean = space.expectation(&raw);
            raw.map(|x| x - mean)
        }
    };
    Martingale::from_terminal(&space, &terminal)
}

fn apply_blocks(space: FilteredSpace, blocks: BlockPolicy, rng: &mut impl Rng) -> Result<FilteredSpace> {
    match blocks {
        BlockPolicy::Single => Ok(space),
        BlockPolicy::LevelCells { level } => space.with_level_blocks(level),
        BlockPolicy::RandomPartition { count } => {
            if count == 0 {
                return Err(Error::InvalidSpace("random partition needs at least one block".into()));
            }
            let mut parts = vec![Vec::new(); count];
            for w in 0..space.len() {
                parts[rng.random_range(0..count)].push(w);
            }
            space.with_blocks(parts)
        }
    }
}

/// Tree of the given depth in which every node has 2..=`max_branching`
/// children (exactly one when `max_branching` is 1) and random conditional
/// weights in `[1/4, 1]` before normalization.
pub fn random_tree(max_branching: usize, depth: usize, rng: &mut impl Rng) -> Result<FilteredSpace> {
    if max_branching == 0 {
        return Err(Error::InvalidSpace("branching must be positive".into()));
    }
    // children[n][j]: indices at level n+1 of node j at level n
    let mut prob_levels: Vec<Vec<f64>> = vec![vec![1.0]];
    let mut children: Vec<Vec<std::ops::Range<usize>>> = Vec::with_capacity(depth);
    for n in 0..depth {
        let mut next = Vec::new();
        let mut ranges = Vec::with_capacity(prob_levels[n].len());
        for &parent in &prob_levels[n] {
            let b = rng.random_range(max_branching.min(2)..=max_branching);
            let weights: Vec<f64> = (0..b).map(|_| rng.random_range(0.25..=1.0)).collect();
            let total: f64 = weights.iter().sum();
            let start = next.len();
            next.extend(weights.iter().map(|w| parent * w / total));
            ranges.push(start..next.len());
        }
        children.push(ranges);
        prob_levels.push(next);
    }
    let m = prob_levels[depth].len();
    if m > MAX_OUTCOMES {
        return Err(Error::SizeBound(format!("{m} outcomes")));
    }
    // leaves under each node are contiguous in breadth-first order
    let mut spans: Vec<Vec<std::ops::Range<usize>>> = vec![Vec::new(); depth + 1];
    spans[depth] = (0..m).map(|w| w..w + 1).collect();
    for n in (0..depth).rev() {
        spans[n] = children[n]
            .iter()
            .map(|r| spans[n + 1][r.start].start..spans[n + 1][r.end - 1].end)
            .collect();
    }
    let filtration = spans
        .iter()
        .map(|level| level.iter().map(|r| r.clone().collect()).collect())
        .collect();
    let total: f64 = prob_levels[depth].iter().sum();
    let prob = prob_levels[depth].iter().map(|p| p / total).collect();
    FilteredSpace::new(
        (0..m).map(|w| format!("w{w}")).collect(),
        prob,
        filtration,
        vec![(0..m).collect()],
    )
}

fn coin_walk_terminal(space: &FilteredSpace, rng: &mut impl Rng) -> RandomVariable {
    let mut terminal = vec![0.0; space.len()];
    for n in 1..=space.horizon() {
        for c in 0..space.filtration()[n - 1].len() {
            let step: f64 = rng.random_range(0.25..=2.0);
            let kids = space.children(n - 1, c);
            let cells = space.filtration()[n].cells();
            let weights: Vec<f64> = kids.iter().map(|&k| cell_mass(space, &cells[k])).collect();
            let parent: f64 = weights.iter().sum();
            // +step on the first child, balanced on the rest
            let rest = parent - weights[0];
            for (i, &k) in kids.iter().enumerate() {
                let inc = if kids.len() == 1 {
                    0.0
                } else if i == 0 {
                    step
                } else {
                    -step * weights[0] / rest
                };
                for &w in &cells[k] {
                    terminal[w] += inc;
                }
            }
        }
    }
    RandomVariable::new(terminal)
}

fn cell_mass(space: &FilteredSpace, cell: &[usize]) -> f64 {
    cell.iter().map(|&w| space.prob()[w]).sum()
}

/// Mixed corpus of binary and random binary/ternary trees with depths 2..=6
/// and varied block partitions.
pub fn standard_corpus(count: usize, seed: u64) -> Result<Vec<Martingale>> {
    let tol = tolerance_from_env()?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let depth = 2 + (i / 2) % 5;
            let generator = if i % 2 == 0 {
                Generator::Dyadic { depth }
            } else {
                Generator::RandomTree { max_branching: 3, depth }
            };
            let blocks = match (i / 10) % 4 {
                0 => BlockPolicy::Single,
                1 => BlockPolicy::LevelCells { level: 1 },
                2 => BlockPolicy::LevelCells { level: 2 },
                _ => BlockPolicy::RandomPartition { count: 3 },
            };
            generate_item(generator, blocks, tol, &mut item_rng(seed, i))
        })
        .collect()
}

/// Rescales each triple by a factor drawn from `[c_min, 3]`, where `c_min` is
/// the smallest factor keeping the atom within its size bound at `r = ∞`.
pub fn random_rescaling(d: &Decomposition, rng: &mut impl Rng) -> Result<Decomposition> {
    let mut factors = Vec::with_capacity(d.triples().len());
    for t in d.triples() {
        let report = verify_atom(d.space(), t, d.p(), d.q(), f64::INFINITY)?;
        let c_min = report.measured / report.bound;
        factors.push(rng.random_range(c_min..=3.0f64.max(c_min)));
    }
    d.rescaled(&factors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_item() {
        let corpus = generate(&CorpusSpec::new(Generator::Dyadic { depth: 2 }, 1, 42)).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus[0].space().len(), 4);
        assert_eq!(corpus[0].space().regularity_constant(), 2.0);
    }

    #[test]
    fn deterministic() {
        let spec = CorpusSpec::new(Generator::RandomTree { max_branching: 3, depth: 3 }, 5, 9)
            .with_blocks(BlockPolicy::RandomPartition { count: 2 });
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = CorpusSpec { seed: 10, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn random_tree_size() {
        let spec = CorpusSpec::new(Generator::RandomTree { max_branching: 3, depth: 3 }, 20, 1);
        for f in generate(&spec).unwrap() {
            let m = f.space().len();
            assert!((8..=27).contains(&m));
            for n in 1..=3 {
                assert!(f.space().filtration()[n].refines(&f.space().filtration()[n - 1]));
            }
        }
    }

    #[test]
    fn coin_walk_steps() {
        let f = generate(&CorpusSpec::new(Generator::CoinWalk { steps: 3 }, 1, 3)).unwrap().remove(0);
        for d in &f.differences()[1..] {
            assert!(d.values().iter().all(|x| x.abs() >= 0.25 - 1e-12 && x.abs() <= 2.0 + 1e-12));
        }
    }

    #[test]
    fn size_bound() {
        assert!(generate(&CorpusSpec::new(Generator::Dyadic { depth: 13 }, 1, 0)).is_err());
        assert!(generate(&CorpusSpec::new(Generator::RandomTree { max_branching: 5, depth: 6 }, 1, 0)).is_err());
    }
}
