use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{Dropout, LossWorkspace};
use super::{adam_step, init_embeddings, sample_negatives_into, AdamState, EmbeddingStore, Gradients, ModelView, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::Evaluator;
use crate::graph::{KnowledgeGraph, Split};
use crate::seed::{self, stream};
use crate::sf::SfSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub step: usize,
    pub valid_mrr: f64,
    /// Mean per-positive training loss since the previous point.
    pub mean_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub points: Vec<ValidationPoint>,
    /// Step of the returned snapshot, `None` when no step ran.
    pub best_step: Option<usize>,
    pub best_valid_mrr: Option<f64>,
    pub seconds: f64,
}

impl TrainReport {
    /// `step,valid_mrr` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,valid_mrr\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.step, p.valid_mrr));
        }
        out
    }
}

/// Trains embeddings for `spec` on the train split of an augmented graph.
///
/// Each step draws `batch_size` positives uniformly with replacement, pairs
/// each with `negatives` corrupted tails and applies one sparse Adam update
/// to the mean loss. Validation MRR is measured every `valid_interval` steps
/// and after the last step; the snapshot with the best validation MRR (the
/// earliest on ties) is returned.
///
/// Randomness: the batch of step `s` comes from stream `(seed, BATCH, s)`;
/// negatives and dropout masks of positive `i` from `(seed, POSITIVE, s, i)`.
pub fn train(g: &KnowledgeGraph, spec: &SfSpec, cfg: &TrainConfig) -> Result<(EmbeddingStore, TrainReport)> {
    cfg.validate()?;
    if !g.is_augmented() {
        return Err(Error::NotAugmented);
    }
    let started = Instant::now();
    let mut store = init_embeddings(g, cfg);
    let mut report = TrainReport::default();
    if cfg.max_steps == 0 {
        report.seconds = started.elapsed().as_secs_f64();
        return Ok((store, report));
    }
    if g.train().is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let evaluator = Evaluator::new(g, cfg.valid_protocol)?;
    let mut state = AdamState::new(&store);
    let mut grads = Gradients::for_store(&store);
    let mut ws = LossWorkspace::new(cfg.dim);
    let mut triples = Vec::with_capacity(cfg.negatives + 1);
    let scale = 1.0 / cfg.batch_size as f64;
    let train = g.train();
    let mut best: Option<(f64, EmbeddingStore)> = None;
    let (mut loss_sum, mut loss_count) = (0.0, 0usize);

    for step in 1..=cfg.max_steps {
        let mut batch_rng = seed::fast(cfg.seed, &[stream::BATCH, step as u64]);
        for i in 0..cfg.batch_size {
            let positive = train[batch_rng.random_range(0..train.len())];
            let mut rng = seed::fast(cfg.seed, &[stream::POSITIVE, step as u64, i as u64]);
            triples.clear();
            triples.push(positive);
            sample_negatives_into(g.entity_count(), positive, cfg.negatives, &mut rng, &mut triples)?;
            let mut dropout = (cfg.dropout > 0.0).then(|| Dropout::new(cfg.dropout, &mut rng));
            loss_sum += ws.accumulate(
                &store,
                spec,
                &triples,
                cfg.margin,
                cfg.negative_weighting,
                dropout.as_mut(),
                scale,
                &mut grads,
            );
            loss_count += 1;
        }
        adam_step(&mut store, &grads, &mut state, cfg.learning_rate);
        grads.clear();

        if step % cfg.valid_interval == 0 || step == cfg.max_steps {
            let view = ModelView {
                store: &store,
                spec,
            };
            let mrr = evaluator.evaluate(&view, Split::Valid).mrr;
            report.points.push(ValidationPoint {
                step,
                valid_mrr: mrr,
                mean_loss: loss_sum / loss_count.max(1) as f64,
            });
            (loss_sum, loss_count) = (0.0, 0);
            if best.as_ref().is_none_or(|(b, _)| mrr > *b) {
                best = Some((mrr, store.clone()));
                report.best_step = Some(step);
                report.best_valid_mrr = Some(mrr);
            }
        }
    }
    if !store.is_finite() {
        return Err(Error::Config("training diverged to non-finite embeddings".into()));
    }
    report.seconds = started.elapsed().as_secs_f64();
    let (_, best_store) = best.expect("at least one validation point");
    Ok((best_store, report))
}
