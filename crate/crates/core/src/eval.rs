//! Filtered link-prediction ranking under three candidate protocols.
//!
//! * `sampled:N`: the positive against `N` distinct entities drawn uniformly.
//! * `typed:N`: as above, restricted to entities sharing the positive's type.
//! * `full`: the positive against every entity.
//!
//! In the filtered setting, candidates that form a known triple with the
//! query `(h, r)` are never counted against the positive. Ties count half
//! (the mean of the optimistic and pessimistic rank), so a constant scorer
//! lands at chance. Graphs must carry inverse relations: every query is a
//! tail query.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Split, Triple};
use crate::seed::{self, stream};

/// Anything that can score candidate tails for a `(head, relation)` query.
/// Higher is more plausible.
pub trait Scorer: Sync {
    fn entity_count(&self) -> usize;

    /// Replaces `out` with one score per entry of `tails`.
    fn score_tails(&self, head: EntityId, relation: RelationId, tails: &[EntityId], out: &mut Vec<f64>);

    /// Replaces `out` with the score of every entity, indexed by id.
    fn score_all(&self, head: EntityId, relation: RelationId, out: &mut Vec<f64>) {
        let tails: Vec<EntityId> = (0..self.entity_count() as EntityId).collect();
        self.score_tails(head, relation, &tails, out);
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn entity_count(&self) -> usize {
        (**self).entity_count()
    }

    fn score_tails(&self, head: EntityId, relation: RelationId, tails: &[EntityId], out: &mut Vec<f64>) {
        (**self).score_tails(head, relation, tails, out)
    }

    fn score_all(&self, head: EntityId, relation: RelationId, out: &mut Vec<f64>) {
        (**self).score_all(head, relation, out)
    }
}

impl<S: Scorer + ?Sized + Send> Scorer for Box<S> {
    fn entity_count(&self) -> usize {
        (**self).entity_count()
    }

    fn score_tails(&self, head: EntityId, relation: RelationId, tails: &[EntityId], out: &mut Vec<f64>) {
        (**self).score_tails(head, relation, tails, out)
    }

    fn score_all(&self, head: EntityId, relation: RelationId, out: &mut Vec<f64>) {
        (**self).score_all(head, relation, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolMode {
    SampledUniform { num_negatives: usize },
    TypedSampled { num_negatives: usize },
    FullRanking,
}

impl fmt::Display for ProtocolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolMode::SampledUniform { num_negatives } => write!(f, "sampled:{num_negatives}"),
            ProtocolMode::TypedSampled { num_negatives } => write!(f, "typed:{num_negatives}"),
            ProtocolMode::FullRanking => f.write_str("full"),
        }
    }
}

impl FromStr for ProtocolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad protocol `{s}` (expected sampled:N, typed:N or full)"));
        let count = |n: &str| -> Result<usize> {
            match n.parse::<usize>() {
                Ok(v) if v > 0 => Ok(v),
                _ => Err(bad()),
            }
        };
        match s.trim().split_once(':') {
            None if s.trim() == "full" => Ok(ProtocolMode::FullRanking),
            Some(("sampled", n)) => Ok(ProtocolMode::SampledUniform {
                num_negatives: count(n)?,
            }),
            Some(("typed", n)) => Ok(ProtocolMode::TypedSampled {
                num_negatives: count(n)?,
            }),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ProtocolMode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProtocolMode {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

/// Which splits feed the filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterScope {
    #[default]
    All,
    Train,
}

impl FromStr for FilterScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FilterScope::All),
            "train" => Ok(FilterScope::Train),
            other => Err(Error::Config(format!("unknown filter scope `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalProtocol {
    pub mode: ProtocolMode,
    pub filtered: bool,
    pub filter_scope: FilterScope,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self::sampled(500, 0)
    }
}

impl EvalProtocol {
    pub fn new(mode: ProtocolMode, seed: u64) -> Self {
        Self {
            mode,
            filtered: true,
            filter_scope: FilterScope::All,
            seed,
        }
    }

    pub fn sampled(num_negatives: usize, seed: u64) -> Self {
        Self::new(ProtocolMode::SampledUniform { num_negatives }, seed)
    }

    pub fn typed(num_negatives: usize, seed: u64) -> Self {
        Self::new(ProtocolMode::TypedSampled { num_negatives }, seed)
    }

    pub fn full() -> Self {
        Self::new(ProtocolMode::FullRanking, 0)
    }
}

/// Known-true `(h, r, t)` set, indexed by `(h, r)`.
#[derive(Clone, Debug, Default)]
pub struct KnownTriples {
    tails: HashMap<(EntityId, RelationId), Vec<EntityId>>,
    len: usize,
}

impl KnownTriples {
    pub fn contains(&self, head: EntityId, relation: RelationId, tail: EntityId) -> bool {
        self.known_tails(head, relation).binary_search(&tail).is_ok()
    }

    /// Sorted, distinct known tails of `(head, relation)`.
    pub fn known_tails(&self, head: EntityId, relation: RelationId) -> &[EntityId] {
        self.tails.get(&(head, relation)).map_or(&[], Vec::as_slice)
    }

    /// Number of distinct known triples.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Union of all three splits.
pub fn build_filter(g: &KnowledgeGraph) -> KnownTriples {
    build_filter_scoped(g, FilterScope::All)
}

pub fn build_filter_scoped(g: &KnowledgeGraph, scope: FilterScope) -> KnownTriples {
    let splits: &[Split] = match scope {
        FilterScope::All => &Split::ALL,
        FilterScope::Train => &[Split::Train],
    };
    let mut tails: HashMap<(EntityId, RelationId), Vec<EntityId>> = HashMap::new();
    for &split in splits {
        for t in g.split(split) {
            tails.entry((t.head, t.relation)).or_default().push(t.tail);
        }
    }
    let mut len = 0;
    for v in tails.values_mut() {
        v.sort_unstable();
        v.dedup();
        len += v.len();
    }
    KnownTriples { tails, len }
}

/// `1 + #{better} + #{tied} / 2`.
pub fn rank_of_positive(negative_scores: &[f64], positive_score: f64) -> f64 {
    let (mut better, mut tied) = (0usize, 0usize);
    for &s in negative_scores {
        if s > positive_score {
            better += 1;
        } else if s == positive_score {
            tied += 1;
        }
    }
    1.0 + better as f64 + 0.5 * tied as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
    /// Queries with fewer eligible candidates than requested.
    pub shortfall_queries: usize,
}

impl RankingMetrics {
    /// Aggregates ranks in the given order. Empty input gives all zeros.
    pub fn from_ranks(ranks: &[f64]) -> Self {
        if ranks.is_empty() {
            return Self::default();
        }
        let n = ranks.len() as f64;
        let mut rr = 0.0;
        let mut hits = [0usize; 3];
        for &rank in ranks {
            rr += 1.0 / rank;
            for (h, k) in hits.iter_mut().zip([1.0, 3.0, 10.0]) {
                if rank <= k {
                    *h += 1;
                }
            }
        }
        Self {
            mrr: rr / n,
            hits1: hits[0] as f64 / n,
            hits3: hits[1] as f64 / n,
            hits10: hits[2] as f64 / n,
            num_queries: ranks.len(),
            shortfall_queries: 0,
        }
    }
}

/// One evaluation result in its emitted form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub protocol: String,
    pub split: Split,
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
    pub seed: u64,
}

impl EvalRecord {
    pub fn new(protocol: &EvalProtocol, split: Split, m: &RankingMetrics) -> Self {
        let mut name = protocol.mode.to_string();
        if !protocol.filtered {
            name.push_str(",raw");
        } else if protocol.filter_scope == FilterScope::Train {
            name.push_str(",filter=train");
        }
        Self {
            protocol: name,
            split,
            mrr: m.mrr,
            hits1: m.hits1,
            hits3: m.hits3,
            hits10: m.hits10,
            num_queries: m.num_queries,
            seed: protocol.seed,
        }
    }
}

/// Reusable evaluator for one graph and protocol (builds the filter once).
pub struct Evaluator<'g> {
    graph: &'g KnowledgeGraph,
    protocol: EvalProtocol,
    filter: Option<KnownTriples>,
    type_members: Vec<Vec<EntityId>>,
}

impl<'g> Evaluator<'g> {
    pub fn new(graph: &'g KnowledgeGraph, protocol: EvalProtocol) -> Result<Self> {
        if !graph.is_augmented() {
            return Err(Error::NotAugmented);
        }
        let type_members = match protocol.mode {
            ProtocolMode::TypedSampled { .. } => {
                let types = graph.entity_types().ok_or_else(|| {
                    Error::Config("typed protocol needs a graph with entity types".into())
                })?;
                let mut members = vec![Vec::new(); graph.type_count()];
                for (e, &ty) in types.iter().enumerate() {
                    members[ty as usize].push(e as EntityId);
                }
                members
            }
            _ => Vec::new(),
        };
        let filter = protocol
            .filtered
            .then(|| build_filter_scoped(graph, protocol.filter_scope));
        Ok(Self {
            graph,
            protocol,
            filter,
            type_members,
        })
    }

    pub fn protocol(&self) -> &EvalProtocol {
        &self.protocol
    }

    /// Ranks of every query of `split`, in split order, and the number of
    /// queries that had fewer eligible candidates than requested.
    ///
    /// Queries are spread over the available cores; each query's candidates
    /// depend only on its index, so the result does not depend on the split.
    pub fn ranks<S: Scorer + ?Sized>(&self, scorer: &S, split: Split) -> (Vec<f64>, usize) {
        let queries = self.graph.split(split);
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
        let chunk = queries.len().div_ceil(threads).max(256);
        if chunk >= queries.len() {
            return self.rank_range(scorer, queries, 0);
        }
        let parts: Vec<(Vec<f64>, usize)> = std::thread::scope(|scope| {
            let handles: Vec<_> = queries
                .chunks(chunk)
                .enumerate()
                .map(|(i, qs)| scope.spawn(move || self.rank_range(scorer, qs, i * chunk)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation thread panicked"))
                .collect()
        });
        let mut ranks = Vec::with_capacity(queries.len());
        let mut shortfall = 0;
        for (r, s) in parts {
            ranks.extend(r);
            shortfall += s;
        }
        (ranks, shortfall)
    }

    fn rank_range<S: Scorer + ?Sized>(&self, scorer: &S, queries: &[Triple], first: usize) -> (Vec<f64>, usize) {
        let n = self.graph.entity_count();
        let mut excluded = vec![false; n];
        let mut chosen = vec![false; n];
        let mut scores = Vec::new();
        let mut candidates: Vec<EntityId> = Vec::new();
        let mut pool_buf: Vec<EntityId> = Vec::new();
        let mut shortfall = 0;
        let mut ranks = Vec::with_capacity(queries.len());
        let all: Vec<EntityId>;
        let all_pool: &[EntityId] = match self.protocol.mode {
            ProtocolMode::SampledUniform { .. } => {
                all = (0..n as EntityId).collect();
                &all
            }
            _ => &[],
        };

        for (offset, triple) in queries.iter().enumerate() {
            let q = first + offset;
            let (h, r, t) = (triple.head, triple.relation, triple.tail);
            let known: &[EntityId] = match &self.filter {
                Some(f) => f.known_tails(h, r),
                None => &[],
            };
            for &k in known {
                excluded[k as usize] = true;
            }
            excluded[t as usize] = true;

            let rank = match self.protocol.mode {
                ProtocolMode::FullRanking => {
                    scorer.score_all(h, r, &mut scores);
                    let pos = scores[t as usize];
                    let (mut better, mut tied) = (0usize, 0usize);
                    for (&s, &ex) in scores.iter().zip(&excluded) {
                        better += usize::from(!ex & (s > pos));
                        tied += usize::from(!ex & (s == pos));
                    }
                    1.0 + better as f64 + 0.5 * tied as f64
                }
                ProtocolMode::SampledUniform { num_negatives }
                | ProtocolMode::TypedSampled { num_negatives } => {
                    let pool: &[EntityId] = match self.protocol.mode {
                        ProtocolMode::TypedSampled { .. } => {
                            let ty = self.graph.entity_types().expect("typed graph")[t as usize];
                            &self.type_members[ty as usize]
                        }
                        _ => all_pool,
                    };
                    // the pool always holds t
                    let blocked = known
                        .iter()
                        .filter(|&&e| pool_contains(pool, e, self.protocol.mode))
                        .count()
                        + usize::from(known.binary_search(&t).is_err());
                    let eligible = pool.len() - blocked;
                    let mut rng = seed::chacha(self.protocol.seed, &[stream::EVAL_QUERY, q as u64]);
                    candidates.clear();
                    candidates.push(t);
                    if num_negatives >= eligible {
                        if num_negatives > eligible {
                            shortfall += 1;
                        }
                        candidates.extend(pool.iter().copied().filter(|&e| !excluded[e as usize]));
                    } else if 2 * num_negatives <= eligible {
                        while candidates.len() <= num_negatives {
                            let e = pool[rng.random_range(0..pool.len())];
                            if excluded[e as usize] || chosen[e as usize] {
                                continue;
                            }
                            chosen[e as usize] = true;
                            candidates.push(e);
                        }
                        for &e in &candidates[1..] {
                            chosen[e as usize] = false;
                        }
                    } else {
                        pool_buf.clear();
                        pool_buf.extend(pool.iter().copied().filter(|&e| !excluded[e as usize]));
                        for i in 0..num_negatives {
                            let j = rng.random_range(i..pool_buf.len());
                            pool_buf.swap(i, j);
                        }
                        candidates.extend_from_slice(&pool_buf[..num_negatives]);
                    }
                    scorer.score_tails(h, r, &candidates, &mut scores);
                    rank_of_positive(&scores[1..], scores[0])
                }
            };
            ranks.push(rank);

            for &k in known {
                excluded[k as usize] = false;
            }
            excluded[t as usize] = false;
        }
        (ranks, shortfall)
    }

    pub fn evaluate<S: Scorer + ?Sized>(&self, scorer: &S, split: Split) -> RankingMetrics {
        let (ranks, shortfall) = self.ranks(scorer, split);
        RankingMetrics {
            shortfall_queries: shortfall,
            ..RankingMetrics::from_ranks(&ranks)
        }
    }
}

fn pool_contains(pool: &[EntityId], e: EntityId, mode: ProtocolMode) -> bool {
    match mode {
        // type pools are built in ascending id order
        ProtocolMode::TypedSampled { .. } => pool.binary_search(&e).is_ok(),
        _ => true,
    }
}

/// Evaluates `scorer` on `split` of an augmented graph.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    g: &KnowledgeGraph,
    split: Split,
    protocol: &EvalProtocol,
) -> Result<RankingMetrics> {
    Ok(Evaluator::new(g, *protocol)?.evaluate(scorer, split))
}
