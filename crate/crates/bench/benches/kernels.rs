use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use kgsf::graph::generate_synthetic;
use kgsf::model::loss_and_grad;
use kgsf::{catalog, fit_entoccur, EmbeddingModel, EmbeddingStore, EvalProtocol, Evaluator, Scorer, Split};
use kgsf::{SyntheticConfig, TrainConfig, Triple};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const ENTITIES: usize = 10_000;
const DIM: usize = 32;

fn store(entities: usize, relations: usize, dim: usize) -> EmbeddingStore {
    let mut rng = StdRng::seed_from_u64(1);
    let mut s = EmbeddingStore::zeros(entities, relations, dim);
    let (e, r) = s.tables_mut();
    for v in e.iter_mut().chain(r.iter_mut()) {
        *v = rng.random_range(-0.1..0.1);
    }
    s
}

/// One query against every entity: the inner loop of full ranking.
fn score_all(c: &mut Criterion) {
    let mut group = c.benchmark_group("score_all");
    group.throughput(Throughput::Elements(ENTITIES as u64));
    let mut out = Vec::new();
    for name in ["transe", "pairre", "trans", "autoweird"] {
        let model = EmbeddingModel::new(store(ENTITIES, 40, DIM), catalog(name).unwrap());
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                model.score_all(black_box(3), black_box(5), &mut out);
                black_box(&out);
            })
        });
    }
    group.finish();
}

/// Loss and analytic gradient for one positive and 128 negatives.
fn loss_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("loss_and_grad");
    let s = store(ENTITIES, 40, DIM);
    let mut rng = StdRng::seed_from_u64(2);
    let positive = Triple::new(1, 2, 3);
    let negatives: Vec<Triple> = (0..128)
        .map(|_| Triple::new(1, 2, rng.random_range(0..ENTITIES as u32)))
        .collect();
    let cfg = TrainConfig {
        dim: DIM,
        ..TrainConfig::default()
    };
    for name in ["transe", "trans"] {
        let spec = catalog(name).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(loss_and_grad(&s, &spec, positive, &negatives, &cfg).unwrap().loss))
        });
    }
    group.finish();
}

/// Test-split evaluation on a 2,000-entity graph under each protocol.
fn ranking(c: &mut Criterion) {
    let g = generate_synthetic(&SyntheticConfig {
        entity_count: 2_000,
        triple_count: 20_000,
        ..SyntheticConfig::biokg_like()
    })
    .unwrap()
    .into_augmented();
    let occ = fit_entoccur(&g);
    let model = EmbeddingModel::new(store(g.entity_count(), g.relation_count(), DIM), catalog("transe").unwrap());
    let mut group = c.benchmark_group("evaluate");
    group.sample_size(10);
    for (label, p) in [
        ("sampled_500", EvalProtocol::sampled(500, 0)),
        ("typed_500", EvalProtocol::typed(500, 0)),
        ("full", EvalProtocol::full()),
    ] {
        let eval = Evaluator::new(&g, p).unwrap();
        for (name, scorer) in [("entoccur", &occ as &dyn Scorer), ("transe", &model)] {
            group.bench_function(BenchmarkId::new(name, label), |b| {
                b.iter(|| black_box(eval.evaluate(scorer, Split::Test).mrr))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, score_all, loss_step, ranking);
criterion_main!(benches);
