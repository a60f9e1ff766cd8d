//! Synthetic graphs with a controllable tail-entity concentration.
//!
//! Every relation owns a seeded permutation of the candidate tail entities and
//! draws tails by Zipf rank over that permutation, so each relation prefers its
//! own small set of popular tails. Heads and relations are uniform.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{KnowledgeGraph, Triple};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Resample budget per requested triple.
pub const RETRY_FACTOR: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub entity_count: usize,
    pub relation_count: usize,
    pub triple_count: usize,
    /// 0 gives uniform tails.
    pub zipf_exponent: f64,
    pub typed: bool,
    pub type_count: usize,
    /// train, valid, test.
    pub split_fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::wikikg2_like()
    }
}

impl SyntheticConfig {
    /// Highly concentrated, untyped tails: the regime where sampled-negative
    /// evaluation rewards popularity.
    pub fn wikikg2_like() -> Self {
        Self {
            entity_count: 10_000,
            relation_count: 20,
            triple_count: 125_000,
            zipf_exponent: 2.0,
            typed: false,
            type_count: 1,
            split_fractions: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }

    /// Mildly skewed, typed tails; every relation targets a single type.
    pub fn biokg_like() -> Self {
        Self {
            zipf_exponent: 0.5,
            typed: true,
            type_count: 5,
            ..Self::wikikg2_like()
        }
    }

    /// Uniform tails.
    pub fn uniform() -> Self {
        Self {
            zipf_exponent: 0.0,
            ..Self::wikikg2_like()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "wikikg2-like" => Ok(Self::wikikg2_like()),
            "biokg-like" => Ok(Self::biokg_like()),
            "uniform" => Ok(Self::uniform()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected wikikg2-like, biokg-like or uniform)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entity_count == 0 || self.relation_count == 0 || self.triple_count == 0 {
            return Err(Error::Config(
                "entity_count, relation_count and triple_count must be positive".into(),
            ));
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return Err(Error::Config("zipf_exponent must be a non-negative real".into()));
        }
        if self.type_count == 0 || (self.typed && self.type_count > self.entity_count) {
            return Err(Error::Config(format!(
                "type_count must be in 1..={} when typed",
                self.entity_count
            )));
        }
        let sum: f64 = self.split_fractions.iter().sum();
        if self.split_fractions.iter().any(|f| f.is_nan() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "split_fractions must be non-negative and sum to 1".into(),
            ));
        }
        Ok(())
    }

    /// Triples per split; the test split absorbs rounding.
    pub fn split_sizes(&self) -> [usize; 3] {
        let n = self.triple_count;
        let train = ((self.split_fractions[0] * n as f64).round() as usize).min(n);
        let valid = ((self.split_fractions[1] * n as f64).round() as usize).min(n - train);
        [train, valid, n - train - valid]
    }
}

/// Inverse-CDF sampler over ranks `0..n` with weight `(rank + 1)^-s`.
#[derive(Clone, Debug)]
pub struct ZipfTable {
    cumulative: Vec<f64>,
}

impl ZipfTable {
    pub fn new(n: usize, exponent: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|k| {
                acc += (k as f64).powf(-exponent);
                acc
            })
            .collect();
        Self { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Probability mass of `rank`.
    pub fn probability(&self, rank: usize) -> f64 {
        let total = *self.cumulative.last().unwrap_or(&1.0);
        let lo = if rank == 0 { 0.0 } else { self.cumulative[rank - 1] };
        (self.cumulative[rank] - lo) / total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("empty Zipf table");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Tail candidates of `relation`, ordered by popularity rank.
pub(crate) fn relation_tail_order(cfg: &SyntheticConfig, relation: u32) -> Vec<u32> {
    let mut entities: Vec<u32> = if cfg.typed {
        let ty = relation as usize % cfg.type_count;
        (0..cfg.entity_count as u32)
            .filter(|e| *e as usize % cfg.type_count == ty)
            .collect()
    } else {
        (0..cfg.entity_count as u32).collect()
    };
    let mut rng = seed::chacha(cfg.seed, &[stream::PERMUTATION, relation as u64]);
    entities.shuffle(&mut rng);
    entities
}

/// Generates a graph from `cfg`; bit-identical for equal configs.
///
/// Triples are drawn for train, then valid, then test. Any draw that repeats
/// an earlier triple (in any split) is discarded and redrawn, with a total
/// budget of [`RETRY_FACTOR`] × `triple_count` draws.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<KnowledgeGraph> {
    cfg.validate()?;
    let orders: Vec<Vec<u32>> = (0..cfg.relation_count as u32)
        .map(|r| relation_tail_order(cfg, r))
        .collect();
    let zipf_tables: Vec<ZipfTable> = {
        // typed relations may have candidate lists of different lengths
        let mut lens: Vec<usize> = orders.iter().map(Vec::len).collect();
        lens.sort_unstable();
        lens.dedup();
        lens.into_iter()
            .map(|n| ZipfTable::new(n, cfg.zipf_exponent))
            .collect()
    };
    let table_for = |n: usize| {
        zipf_tables
            .iter()
            .find(|t| t.len() == n)
            .expect("table for every length")
    };

    let mut rng = seed::chacha(cfg.seed, &[stream::GENERATE]);
    let budget = RETRY_FACTOR.saturating_mul(cfg.triple_count);
    let mut attempts = 0usize;
    let mut seen: HashSet<Triple> = HashSet::with_capacity(cfg.triple_count);
    let mut splits: [Vec<Triple>; 3] = Default::default();
    for (split, size) in splits.iter_mut().zip(cfg.split_sizes()) {
        split.reserve(size);
        while split.len() < size {
            if attempts == budget {
                return Err(Error::Infeasible {
                    requested: cfg.triple_count,
                    attempts,
                });
            }
            attempts += 1;
            let relation = rng.random_range(0..cfg.relation_count as u32);
            let head = rng.random_range(0..cfg.entity_count as u32);
            let order = &orders[relation as usize];
            let tail = order[table_for(order.len()).sample(&mut rng)];
            let t = Triple::new(head, relation, tail);
            if seen.insert(t) {
                split.push(t);
            }
        }
    }
    let [train, valid, test] = splits;
    let types = cfg.typed.then(|| {
        (0..cfg.entity_count)
            .map(|e| (e % cfg.type_count) as u32)
            .collect()
    });
    KnowledgeGraph::new(
        cfg.entity_count,
        cfg.relation_count,
        train,
        valid,
        test,
        types,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(exponent: f64) -> SyntheticConfig {
        SyntheticConfig {
            entity_count: 10,
            relation_count: 1,
            triple_count: 5,
            zipf_exponent: exponent,
            typed: false,
            type_count: 1,
            split_fractions: [1.0, 0.0, 0.0],
            seed: 1,
        }
    }

    #[test]
    fn uniform_small_graph() {
        let g = generate_synthetic(&small(0.0)).unwrap();
        assert_eq!(g.train().len(), 5);
        assert!(g.valid().is_empty() && g.test().is_empty());
        let distinct: HashSet<_> = g.train().iter().collect();
        assert_eq!(distinct.len(), 5);
    }

    fn max_share(g: &KnowledgeGraph) -> f64 {
        let mut counts = vec![0usize; g.entity_count()];
        for t in g.train() {
            counts[t.tail as usize] += 1;
        }
        *counts.iter().max().unwrap() as f64 / g.train().len() as f64
    }

    #[test]
    fn higher_exponent_concentrates_tails() {
        let mut flat = small(0.0);
        let mut steep = small(2.0);
        flat.triple_count = 50;
        steep.triple_count = 50;
        let flat = generate_synthetic(&flat).unwrap();
        let steep = generate_synthetic(&steep).unwrap();
        assert!(max_share(&steep) > max_share(&flat));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = SyntheticConfig {
            entity_count: 200,
            triple_count: 2_000,
            ..SyntheticConfig::biokg_like()
        };
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SyntheticConfig { seed: 9, ..cfg.clone() };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn typed_relations_target_one_type() {
        let cfg = SyntheticConfig {
            entity_count: 100,
            triple_count: 1_000,
            ..SyntheticConfig::biokg_like()
        };
        let g = generate_synthetic(&cfg).unwrap();
        let types = g.entity_types().unwrap();
        assert_eq!(g.type_count(), 5);
        for t in g.train().iter().chain(g.valid()).chain(g.test()) {
            assert_eq!(types[t.tail as usize] as usize, t.relation as usize % 5);
        }
    }

    #[test]
    fn infeasible_budget_errors() {
        let cfg = SyntheticConfig {
            triple_count: 11,
            entity_count: 2,
            ..small(0.0)
        };
        // only 4 distinct triples exist
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn zipf_probabilities_sum_to_one() {
        let z = ZipfTable::new(50, 1.2);
        let s: f64 = (0..50).map(|k| z.probability(k)).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(z.probability(0) > z.probability(1));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small(0.0);
        cfg.split_fractions = [0.5, 0.2, 0.2];
        assert!(cfg.validate().is_err());
        let mut cfg = small(0.0);
        cfg.typed = true;
        cfg.type_count = 11;
        assert!(cfg.validate().is_err());
        let mut cfg = small(0.0);
        cfg.zipf_exponent = -1.0;
        assert!(cfg.validate().is_err());
    }
}
