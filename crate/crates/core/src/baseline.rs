//! EntOccur: score a candidate tail by how often it was the tail of the query
//! relation in training. The head is ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{IoContext, Result};
use crate::eval::Scorer;
use crate::graph::{tail_occurrences, EntityId, KnowledgeGraph, OccurrenceTable, RelationId, Split};

/// Weight of the optional global-count tiebreak.
pub const TIEBREAK_EPSILON: f64 = 1e-6;

/// Dense score tables are used up to this many (relation, entity) cells.
const DENSE_LIMIT: usize = 1 << 26;

#[derive(Clone, Debug)]
pub struct EntOccurModel {
    table: OccurrenceTable,
    tiebreak: bool,
    dense: Option<Vec<f64>>,
}

/// Fits on the train split of `g`. Graphs used for evaluation should be
/// augmented first so head queries are counted through inverse relations.
pub fn fit_entoccur(g: &KnowledgeGraph) -> EntOccurModel {
    EntOccurModel::new(tail_occurrences(g, Split::Train), false)
}

impl EntOccurModel {
    /// With `tiebreak`, scores become `count(r, t) + ε · global(t)`.
    pub fn new(table: OccurrenceTable, tiebreak: bool) -> Self {
        let (r_count, e_count) = (table.relation_count(), table.entity_count());
        let dense = (r_count.saturating_mul(e_count) <= DENSE_LIMIT).then(|| {
            let mut scores = vec![0.0; r_count * e_count];
            if tiebreak {
                for r in 0..r_count {
                    for (e, &c) in table.global_counts().iter().enumerate() {
                        scores[r * e_count + e] = TIEBREAK_EPSILON * c as f64;
                    }
                }
            }
            for (r, e, c) in table.per_relation() {
                let cell = &mut scores[r as usize * e_count + e as usize];
                *cell = Self::combine(c, table.global(e), tiebreak);
            }
            scores
        });
        Self { table, tiebreak, dense }
    }

    pub fn with_tiebreak(self, tiebreak: bool) -> Self {
        Self::new(self.table, tiebreak)
    }

    fn combine(count: u64, global: u64, tiebreak: bool) -> f64 {
        if tiebreak {
            count as f64 + TIEBREAK_EPSILON * global as f64
        } else {
            count as f64
        }
    }

    pub fn table(&self) -> &OccurrenceTable {
        &self.table
    }

    pub fn count(&self, relation: RelationId, tail: EntityId) -> u64 {
        self.table.count(relation, tail)
    }

    /// Writes `relation,entity,count` rows for every non-zero count.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::from("relation,entity,count\n");
        for (r, e, c) in self.table.per_relation() {
            let _ = writeln!(out, "{r},{e},{c}");
        }
        fs::write(path, out).at(path)
    }
}

/// `count(relation, tail)`, 0 when unseen; `head` is unused.
pub fn entoccur_score(model: &EntOccurModel, _head: EntityId, relation: RelationId, tail: EntityId) -> f64 {
    match &model.dense {
        Some(d) => d[relation as usize * model.table.entity_count() + tail as usize],
        None => EntOccurModel::combine(
            model.table.count(relation, tail),
            model.table.global(tail),
            model.tiebreak,
        ),
    }
}

impl Scorer for EntOccurModel {
    fn entity_count(&self) -> usize {
        self.table.entity_count()
    }

    fn score_tails(&self, head: EntityId, relation: RelationId, tails: &[EntityId], out: &mut Vec<f64>) {
        out.clear();
        out.extend(tails.iter().map(|&t| entoccur_score(self, head, relation, t)));
    }

    fn score_all(&self, head: EntityId, relation: RelationId, out: &mut Vec<f64>) {
        out.clear();
        let n = self.table.entity_count();
        match &self.dense {
            Some(d) => out.extend_from_slice(&d[relation as usize * n..(relation as usize + 1) * n]),
            None => out.extend((0..n as EntityId).map(|t| entoccur_score(self, head, relation, t))),
        }
    }
}
