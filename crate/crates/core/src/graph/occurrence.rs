use std::collections::BTreeMap;

use serde::Serialize;

use super::{EntityId, KnowledgeGraph, RelationId, Split};

/// Tail-entity occurrence counts, per relation and overall.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OccurrenceTable {
    entity_count: usize,
    relation_count: usize,
    per_relation: BTreeMap<(RelationId, EntityId), u64>,
    global: Vec<u64>,
    total: u64,
    augmented: bool,
}

impl OccurrenceTable {
    pub fn empty(entity_count: usize, relation_count: usize) -> Self {
        Self {
            entity_count,
            relation_count,
            per_relation: BTreeMap::new(),
            global: vec![0; entity_count],
            total: 0,
            augmented: false,
        }
    }

    pub(crate) fn record(&mut self, relation: RelationId, tail: EntityId) {
        *self.per_relation.entry((relation, tail)).or_insert(0) += 1;
        self.global[tail as usize] += 1;
        self.total += 1;
    }

    /// Occurrences of `tail` as the tail of `relation`; 0 if never seen.
    pub fn count(&self, relation: RelationId, tail: EntityId) -> u64 {
        self.per_relation
            .get(&(relation, tail))
            .copied()
            .unwrap_or(0)
    }

    /// Occurrences of `entity` as a tail of any relation.
    pub fn global(&self, entity: EntityId) -> u64 {
        self.global.get(entity as usize).copied().unwrap_or(0)
    }

    pub fn global_counts(&self) -> &[u64] {
        &self.global
    }

    /// Non-zero `(relation, entity) -> count` entries in ascending key order.
    pub fn per_relation(&self) -> impl Iterator<Item = (RelationId, EntityId, u64)> + '_ {
        self.per_relation.iter().map(|(&(r, e), &c)| (r, e, c))
    }

    /// Number of triples counted.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    /// Whether the source graph carried inverse relations.
    pub fn augmented(&self) -> bool {
        self.augmented
    }
}

/// Counts tail occurrences over one split of `g`.
pub fn tail_occurrences(g: &KnowledgeGraph, split: Split) -> OccurrenceTable {
    let mut table = OccurrenceTable::empty(g.entity_count(), g.relation_count());
    table.augmented = g.is_augmented();
    for t in g.split(split) {
        table.record(t.relation, t.tail);
    }
    table
}

/// `(occurrence, number of entities with exactly that many occurrences)`,
/// ascending, for occurrence >= 1.
pub fn occurrence_histogram(table: &OccurrenceTable) -> Vec<(u64, u64)> {
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for &c in table.global_counts().iter().filter(|&&c| c > 0) {
        *hist.entry(c).or_insert(0) += 1;
    }
    hist.into_iter().collect()
}

/// Share of all tail occurrences held by the `ceil(fraction * entity_count)`
/// most frequent entities. Returns 0 for an empty table.
pub fn top_share(table: &OccurrenceTable, fraction: f64) -> f64 {
    if table.total() == 0 {
        return 0.0;
    }
    let k = ((fraction * table.entity_count() as f64).ceil() as usize).clamp(1, table.entity_count());
    let mut counts = table.global_counts().to_vec();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let top: u64 = counts[..k].iter().sum();
    top as f64 / table.total() as f64
}
