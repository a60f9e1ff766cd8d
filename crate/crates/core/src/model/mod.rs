//! Embeddings, scoring, the margin loss, sparse Adam and the training loop.

mod adam;
mod checkpoint;
mod loss;
mod sampler;
mod score;
mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalProtocol;
use crate::graph::{EntityId, KnowledgeGraph, RelationId};
use crate::seed::{self, stream};

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, VERSION as CHECKPOINT_VERSION};
pub use loss::{loss_and_grad, Gradients, LossAndGrad};
pub use sampler::{sample_negatives, sample_negatives_into};
pub use score::{score, score_batch_tails, EmbeddingModel, ModelView, QueryKernel};
pub use train::{train, TrainReport, ValidationPoint};

pub const ENTITY_PARTS: usize = 2;
pub const RELATION_PARTS: usize = 3;

/// Dense entity (`e0`, `e1`) and relation (`r0`, `r1`, `r2`) tables.
///
/// Row-major: entity `e` occupies `entities[e * 2d .. (e + 1) * 2d]` with `e0`
/// first; relation rows likewise hold `r0`, `r1`, `r2`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entity_count: usize,
    relation_count: usize,
    entities: Vec<f64>,
    relations: Vec<f64>,
}

impl EmbeddingStore {
    pub fn zeros(entity_count: usize, relation_count: usize, dim: usize) -> Self {
        Self {
            dim,
            entity_count,
            relation_count,
            entities: vec![0.0; entity_count * ENTITY_PARTS * dim],
            relations: vec![0.0; relation_count * RELATION_PARTS * dim],
        }
    }

    pub fn from_parts(
        entity_count: usize,
        relation_count: usize,
        dim: usize,
        entities: Vec<f64>,
        relations: Vec<f64>,
    ) -> Result<Self> {
        if entities.len() != entity_count * ENTITY_PARTS * dim
            || relations.len() != relation_count * RELATION_PARTS * dim
        {
            return Err(Error::Config("embedding table sizes do not match counts".into()));
        }
        if entities.iter().chain(&relations).any(|v| !v.is_finite()) {
            return Err(Error::Config("embedding values must be finite".into()));
        }
        Ok(Self {
            dim,
            entity_count,
            relation_count,
            entities,
            relations,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn entities(&self) -> &[f64] {
        &self.entities
    }

    pub fn relations(&self) -> &[f64] {
        &self.relations
    }

    pub fn entities_mut(&mut self) -> &mut [f64] {
        &mut self.entities
    }

    pub fn relations_mut(&mut self) -> &mut [f64] {
        &mut self.relations
    }

    /// Both tables at once: `(entities, relations)`.
    pub fn tables_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entities, &mut self.relations)
    }

    pub fn entity_row(&self, e: EntityId) -> &[f64] {
        let w = ENTITY_PARTS * self.dim;
        &self.entities[e as usize * w..(e as usize + 1) * w]
    }

    pub fn relation_row(&self, r: RelationId) -> &[f64] {
        let w = RELATION_PARTS * self.dim;
        &self.relations[r as usize * w..(r as usize + 1) * w]
    }

    pub fn entity_row_mut(&mut self, e: EntityId) -> &mut [f64] {
        let w = ENTITY_PARTS * self.dim;
        &mut self.entities[e as usize * w..(e as usize + 1) * w]
    }

    pub fn relation_row_mut(&mut self, r: RelationId) -> &mut [f64] {
        let w = RELATION_PARTS * self.dim;
        &mut self.relations[r as usize * w..(r as usize + 1) * w]
    }

    /// `e0` (part 0) or `e1` (part 1) of entity `e`.
    pub fn entity_part(&self, e: EntityId, part: usize) -> &[f64] {
        &self.entity_row(e)[part * self.dim..(part + 1) * self.dim]
    }

    /// `r0`, `r1` or `r2` of relation `r`.
    pub fn relation_part(&self, r: RelationId, part: usize) -> &[f64] {
        &self.relation_row(r)[part * self.dim..(part + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|v| v.is_finite())
    }
}

/// Per-negative weights in the loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NegativeWeighting {
    /// `1/n` each.
    Uniform,
    /// Softmax of `-temperature * distance`, treated as constants.
    SelfAdversarial { temperature: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives: usize,
    pub margin: f64,
    pub dropout: f64,
    pub max_steps: usize,
    pub valid_interval: usize,
    pub negative_weighting: NegativeWeighting,
    /// Protocol used for the periodic validation MRR.
    pub valid_protocol: EvalProtocol,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Desk-scale defaults: the reference optimizer settings with `dim = 32` and
    /// 5000 steps.
    fn default() -> Self {
        Self {
            dim: 32,
            learning_rate: 0.0005,
            batch_size: 512,
            negatives: 128,
            margin: 6.0,
            dropout: 0.1,
            max_steps: 5_000,
            valid_interval: 1_000,
            negative_weighting: NegativeWeighting::Uniform,
            valid_protocol: EvalProtocol::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Full-size settings: `dim = 200`, 300k steps, validation every 20k.
    pub fn paper_scale() -> Self {
        Self {
            dim: 200,
            max_steps: 300_000,
            valid_interval: 20_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if self.dim == 0 {
            return fail("dim must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.negatives == 0 || self.valid_interval == 0 {
            return fail("batch_size, negatives and valid_interval must be positive");
        }
        if !self.margin.is_finite() {
            return fail("margin must be finite");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must be in [0, 1)");
        }
        if let NegativeWeighting::SelfAdversarial { temperature } = self.negative_weighting {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return fail("self-adversarial temperature must be positive");
            }
        }
        Ok(())
    }
}

/// Uniform values in `[-margin/dim, margin/dim]`, seeded by `cfg.seed`.
pub fn init_embeddings(g: &KnowledgeGraph, cfg: &TrainConfig) -> EmbeddingStore {
    let mut store = EmbeddingStore::zeros(g.entity_count(), g.relation_count(), cfg.dim);
    let bound = cfg.margin.abs() / cfg.dim as f64;
    let mut rng = seed::chacha(cfg.seed, &[stream::INIT]);
    for v in store.entities.iter_mut().chain(store.relations.iter_mut()) {
        *v = rng.random_range(-bound..=bound);
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triple;

    fn tiny() -> KnowledgeGraph {
        KnowledgeGraph::new(1, 1, vec![Triple::new(0, 0, 0)], vec![], vec![], None).unwrap()
    }

    #[test]
    fn init_shape_and_bounds() {
        let cfg = TrainConfig {
            dim: 2,
            ..TrainConfig::default()
        };
        let store = init_embeddings(&tiny(), &cfg);
        assert_eq!(store.entities().len(), 2 * 2);
        assert_eq!(store.relations().len(), 3 * 2);
        let bound = 6.0 / 2.0;
        assert!(store
            .entities()
            .iter()
            .chain(store.relations())
            .all(|v| v.abs() <= bound));
    }

    #[test]
    fn init_is_seeded() {
        let cfg = TrainConfig {
            dim: 8,
            ..TrainConfig::default()
        };
        let a = init_embeddings(&tiny(), &cfg);
        assert_eq!(a, init_embeddings(&tiny(), &cfg));
        let other = TrainConfig { seed: 1, ..cfg };
        assert_ne!(a, init_embeddings(&tiny(), &other));
    }

    #[test]
    fn part_accessors() {
        let mut store = EmbeddingStore::zeros(2, 1, 2);
        store.entity_row_mut(1).copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        store.relation_row_mut(0).copy_from_slice(&[5.0, 6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(store.entity_part(1, 1), &[3.0, 4.0]);
        assert_eq!(store.relation_part(0, 2), &[9.0, 10.0]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            negative_weighting: NegativeWeighting::SelfAdversarial { temperature: 0.0 },
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn paper_scale_values() {
        let cfg = TrainConfig::paper_scale();
        assert_eq!(cfg.dim, 200);
        assert_eq!(cfg.learning_rate, 0.0005);
        assert_eq!(cfg.batch_size, 512);
        assert_eq!(cfg.negatives, 128);
        assert_eq!(cfg.margin, 6.0);
        assert_eq!(cfg.dropout, 0.1);
        assert_eq!(cfg.max_steps, 300_000);
        assert_eq!(cfg.valid_interval, 20_000);
    }
}
