//! Analytic loss gradients against central finite differences.

mod common;

use kgsf::model::{loss_and_grad, NegativeWeighting};
use kgsf::{sample_sf, EmbeddingStore, SfSpec, TrainConfig, Triple};
use rand::Rng;

const STEP: f64 = 1e-4;
const REL_TOL: f64 = 1e-3;
/// Residual components closer to zero than this count as kinks.
const KINK_MARGIN: f64 = 1e-2;

struct Instance {
    store: EmbeddingStore,
    spec: SfSpec,
    positive: Triple,
    negatives: Vec<Triple>,
    cfg: TrainConfig,
}

fn away_from_kinks(inst: &Instance) -> bool {
    std::iter::once(&inst.positive)
        .chain(&inst.negatives)
        .all(|t| {
            common::oracle_f(&inst.store, &inst.spec, t.head, t.relation, t.tail)
                .iter()
                .all(|x| x.abs() > KINK_MARGIN)
        })
}

fn draw(rng: &mut rand::rngs::StdRng) -> Instance {
    let (entities, relations) = (rng.random_range(2..7), rng.random_range(1..4));
    let dim = rng.random_range(1..10);
    let store = common::random_store(entities, relations, dim, 1.0, rng);
    let spec = sample_sf(rng.random_range(1..=6), rng).unwrap();
    let triple = |rng: &mut rand::rngs::StdRng| {
        Triple::new(
            rng.random_range(0..entities as u32),
            rng.random_range(0..relations as u32),
            rng.random_range(0..entities as u32),
        )
    };
    let positive = triple(rng);
    // negatives share the query, with an occasional foreign query mixed in
    let negatives = (0..rng.random_range(1..6))
        .map(|_| {
            if rng.random_bool(0.8) {
                Triple::new(positive.head, positive.relation, rng.random_range(0..entities as u32))
            } else {
                triple(rng)
            }
        })
        .collect();
    let negative_weighting = if rng.random_bool(0.5) {
        NegativeWeighting::Uniform
    } else {
        NegativeWeighting::SelfAdversarial {
            temperature: rng.random_range(0.2..2.0),
        }
    };
    let cfg = TrainConfig {
        dim,
        margin: rng.random_range(0.0..6.0),
        dropout: 0.0,
        negative_weighting,
        ..TrainConfig::default()
    };
    Instance {
        store,
        spec,
        positive,
        negatives,
        cfg,
    }
}

fn distance(inst: &Instance, store: &EmbeddingStore, t: &Triple) -> f64 {
    common::oracle_f(store, &inst.spec, t.head, t.relation, t.tail)
        .iter()
        .map(|x| x.abs())
        .sum()
}

fn ln_sigmoid(x: f64) -> f64 {
    -(-x).exp().ln_1p()
}

/// Negative weights at the unperturbed store. Self-adversarial weights are
/// constants to the gradient, so finite differences must hold them fixed.
fn weights(inst: &Instance) -> Vec<f64> {
    let n = inst.negatives.len();
    match inst.cfg.negative_weighting {
        NegativeWeighting::Uniform => vec![1.0 / n as f64; n],
        NegativeWeighting::SelfAdversarial { temperature } => {
            let logits: Vec<f64> = inst
                .negatives
                .iter()
                .map(|t| -temperature * distance(inst, &inst.store, t))
                .collect();
            let max = logits.iter().cloned().fold(f64::MIN, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exp.iter().sum();
            exp.iter().map(|e| e / total).collect()
        }
    }
}

/// The loss written out directly from its definition.
fn oracle_loss(inst: &Instance, store: &EmbeddingStore, w: &[f64]) -> f64 {
    let gamma = inst.cfg.margin;
    let pos = -ln_sigmoid(gamma - distance(inst, store, &inst.positive));
    let neg: f64 = inst
        .negatives
        .iter()
        .zip(w)
        .map(|(t, wi)| wi * ln_sigmoid(distance(inst, store, t) - gamma))
        .sum();
    pos - neg
}

fn close(analytic: f64, numeric: f64) -> bool {
    let scale = analytic.abs().max(numeric.abs());
    scale < 1e-9 || (analytic - numeric).abs() <= REL_TOL * scale
}

#[test]
fn fifty_instances_match_central_differences() {
    let mut rng = common::rng(2024);
    let mut checked = 0;
    let mut coords = 0;
    while checked < 50 {
        let inst = draw(&mut rng);
        if !away_from_kinks(&inst) {
            continue;
        }
        let analytic = loss_and_grad(&inst.store, &inst.spec, inst.positive, &inst.negatives, &inst.cfg).unwrap();
        let w = weights(&inst);
        let base = oracle_loss(&inst, &inst.store, &w);
        assert!((analytic.loss - base).abs() <= 1e-12 * base.abs().max(1.0));
        let loss = |store: &EmbeddingStore| oracle_loss(&inst, store, &w);
        let w_ent = 2 * inst.store.dim();
        let w_rel = 3 * inst.store.dim();

        let mut probe = inst.store.clone();
        for i in 0..probe.entities().len() {
            let orig = probe.entities()[i];
            probe.entities_mut()[i] = orig + STEP;
            let up = loss(&probe);
            probe.entities_mut()[i] = orig - STEP;
            let down = loss(&probe);
            probe.entities_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let e = (i / w_ent) as u32;
            let a = analytic.grads.entity(e).map_or(0.0, |g| g[i % w_ent]);
            assert!(close(a, numeric), "entity {e} coord {}: {a} vs {numeric} ({})", i % w_ent, inst.spec);
            coords += 1;
        }
        for i in 0..probe.relations().len() {
            let orig = probe.relations()[i];
            probe.relations_mut()[i] = orig + STEP;
            let up = loss(&probe);
            probe.relations_mut()[i] = orig - STEP;
            let down = loss(&probe);
            probe.relations_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let r = (i / w_rel) as u32;
            let a = analytic.grads.relation(r).map_or(0.0, |g| g[i % w_rel]);
            assert!(close(a, numeric), "relation {r} coord {}: {a} vs {numeric} ({})", i % w_rel, inst.spec);
            coords += 1;
        }
        checked += 1;
    }
    println!("{checked} instances, {coords} coordinates");
}

#[test]
fn uniform_loss_differences_match_without_freezing() {
    // with uniform weights nothing is held fixed: difference the library loss
    let mut rng = common::rng(99);
    let mut checked = 0;
    while checked < 10 {
        let mut inst = draw(&mut rng);
        inst.cfg.negative_weighting = NegativeWeighting::Uniform;
        if !away_from_kinks(&inst) {
            continue;
        }
        let lib = |store: &EmbeddingStore| {
            loss_and_grad(store, &inst.spec, inst.positive, &inst.negatives, &inst.cfg)
                .unwrap()
                .loss
        };
        let analytic = loss_and_grad(&inst.store, &inst.spec, inst.positive, &inst.negatives, &inst.cfg).unwrap();
        let w_ent = 2 * inst.store.dim();
        let mut probe = inst.store.clone();
        for i in 0..probe.entities().len() {
            let orig = probe.entities()[i];
            probe.entities_mut()[i] = orig + STEP;
            let up = lib(&probe);
            probe.entities_mut()[i] = orig - STEP;
            let down = lib(&probe);
            probe.entities_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.grads.entity((i / w_ent) as u32).map_or(0.0, |g| g[i % w_ent]);
            assert!(close(a, numeric));
        }
        checked += 1;
    }
}

#[test]
fn untouched_rows_have_no_gradient() {
    let mut rng = common::rng(5);
    let store = common::random_store(10, 4, 6, 1.0, &mut rng);
    let spec = kgsf::catalog("trans").unwrap();
    let cfg = TrainConfig {
        dim: 6,
        ..TrainConfig::default()
    };
    let g = loss_and_grad(&store, &spec, Triple::new(0, 1, 2), &[Triple::new(0, 1, 3)], &cfg).unwrap();
    let mut touched: Vec<u32> = g.grads.entities().map(|(e, _)| e).collect();
    touched.sort_unstable();
    assert_eq!(touched, vec![0, 2, 3]);
    assert_eq!(g.grads.relations().map(|(r, _)| r).collect::<Vec<_>>(), vec![1]);
}
