//! Knowledge-graph data model.
//!
//! Entities and relations are dense integer ids. A [`KnowledgeGraph`] owns
//! three splits and, optionally, one type id per entity. Head prediction is
//! handled by [`KnowledgeGraph::add_inverse_relations`], which rewrites every
//! `(h, r, t)` into an extra `(t, r + R, h)` so that every query downstream is
//! a tail query.

mod io;
mod occurrence;
mod synth;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_graph, write_graph, GraphMeta, FORMAT_VERSION};
pub use occurrence::{occurrence_histogram, tail_occurrences, top_share, OccurrenceTable};
pub use synth::{generate_synthetic, SyntheticConfig, ZipfTable};

pub type EntityId = u32;
pub type RelationId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

impl From<(u32, u32, u32)> for Triple {
    fn from((h, r, t): (u32, u32, u32)) -> Self {
        Self::new(h, r, t)
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// A validated knowledge graph with train/valid/test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    entity_count: usize,
    relation_count: usize,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    entity_types: Option<Vec<u32>>,
    augmented: bool,
}

impl KnowledgeGraph {
    /// Builds a graph, checking id bounds, split disjointness and type coverage.
    ///
    /// Duplicates inside one split are allowed; the same triple in two splits
    /// is not.
    pub fn new(
        entity_count: usize,
        relation_count: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        entity_types: Option<Vec<u32>>,
    ) -> Result<Self> {
        Self::with_augmented(
            entity_count,
            relation_count,
            train,
            valid,
            test,
            entity_types,
            false,
        )
    }

    pub(crate) fn with_augmented(
        entity_count: usize,
        relation_count: usize,
        train: Vec<Triple>,
        valid: Vec<Triple>,
        test: Vec<Triple>,
        entity_types: Option<Vec<u32>>,
        augmented: bool,
    ) -> Result<Self> {
        if entity_count == 0 || relation_count == 0 {
            return Err(Error::Bounds(format!(
                "entity_count ({entity_count}) and relation_count ({relation_count}) must be positive"
            )));
        }
        if entity_count > u32::MAX as usize || relation_count > u32::MAX as usize {
            return Err(Error::Bounds("counts exceed the 32-bit id space".into()));
        }
        if augmented && !relation_count.is_multiple_of(2) {
            return Err(Error::Bounds(format!(
                "augmented graph has odd relation_count {relation_count}"
            )));
        }
        for (split, triples) in [(Split::Train, &train), (Split::Valid, &valid), (Split::Test, &test)] {
            for t in triples {
                if t.head as usize >= entity_count || t.tail as usize >= entity_count {
                    return Err(Error::Bounds(format!(
                        "{split} triple {t} references an entity >= {entity_count}"
                    )));
                }
                if t.relation as usize >= relation_count {
                    return Err(Error::Bounds(format!(
                        "{split} triple {t} references a relation >= {relation_count}"
                    )));
                }
            }
        }
        let mut seen: HashSet<Triple> = train.iter().copied().collect();
        for split in [&valid, &test] {
            let here: HashSet<Triple> = split.iter().copied().collect();
            if let Some(t) = here.iter().filter(|t| seen.contains(*t)).min() {
                return Err(Error::SplitOverlap(t.head, t.relation, t.tail));
            }
            seen.extend(here);
        }
        if let Some(types) = &entity_types {
            if types.len() != entity_count {
                return Err(Error::Bounds(format!(
                    "{} entity types given for {entity_count} entities",
                    types.len()
                )));
            }
        }
        Ok(Self {
            entity_count,
            relation_count,
            train,
            valid,
            test,
            entity_types,
            augmented,
        })
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn entity_types(&self) -> Option<&[u32]> {
        self.entity_types.as_deref()
    }

    pub fn is_typed(&self) -> bool {
        self.entity_types.is_some()
    }

    /// Number of distinct type ids (`1 + max`), 0 when untyped.
    pub fn type_count(&self) -> usize {
        self.entity_types
            .as_ref()
            .and_then(|t| t.iter().max())
            .map_or(0, |&m| m as usize + 1)
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Relation count before inverse augmentation.
    pub fn base_relation_count(&self) -> usize {
        if self.augmented {
            self.relation_count / 2
        } else {
            self.relation_count
        }
    }

    pub fn triple_count(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    /// Returns a graph where every `(h, r, t)` is joined by `(t, r + R, h)` in
    /// the same split, `R` being the current relation count.
    ///
    /// Inverse triples follow all original triples of their split, in the same
    /// order. Refuses a graph that is already augmented.
    pub fn add_inverse_relations(&self) -> Result<KnowledgeGraph> {
        if self.augmented {
            return Err(Error::AlreadyAugmented);
        }
        let offset = self.relation_count as u32;
        let invert = |triples: &[Triple]| -> Vec<Triple> {
            let mut out = Vec::with_capacity(triples.len() * 2);
            out.extend_from_slice(triples);
            out.extend(
                triples
                    .iter()
                    .map(|t| Triple::new(t.tail, t.relation + offset, t.head)),
            );
            out
        };
        Ok(KnowledgeGraph {
            entity_count: self.entity_count,
            relation_count: self.relation_count * 2,
            train: invert(&self.train),
            valid: invert(&self.valid),
            test: invert(&self.test),
            entity_types: self.entity_types.clone(),
            augmented: true,
        })
    }

    /// Augments unless already augmented.
    pub fn into_augmented(self) -> KnowledgeGraph {
        if self.augmented {
            self
        } else {
            // cannot fail: not yet augmented
            self.add_inverse_relations().expect("graph not augmented")
        }
    }
}
