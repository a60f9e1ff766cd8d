use kgsf::graph::generate_synthetic;
use kgsf::model::{init_embeddings, read_checkpoint, write_checkpoint, ModelView, NegativeWeighting};
use kgsf::{catalog, evaluate, train, EvalProtocol, KnowledgeGraph, Split, SyntheticConfig, TrainConfig};

fn tiny() -> KnowledgeGraph {
    generate_synthetic(&SyntheticConfig {
        entity_count: 50,
        relation_count: 2,
        triple_count: 200,
        zipf_exponent: 1.0,
        seed: 4,
        ..SyntheticConfig::wikikg2_like()
    })
    .unwrap()
    .into_augmented()
}

fn small_cfg(steps: usize) -> TrainConfig {
    TrainConfig {
        dim: 16,
        batch_size: 32,
        negatives: 16,
        max_steps: steps,
        valid_interval: 500,
        valid_protocol: EvalProtocol::full(),
        ..TrainConfig::default()
    }
}

#[test]
fn training_beats_the_untrained_initialisation() {
    let g = tiny();
    let spec = catalog("transe").unwrap();
    let cfg = small_cfg(2000);
    let init = init_embeddings(&g, &cfg);
    let before = evaluate(&ModelView { store: &init, spec: &spec }, &g, Split::Valid, &EvalProtocol::full())
        .unwrap()
        .mrr;
    let (store, report) = train(&g, &spec, &cfg).unwrap();
    let after = evaluate(&ModelView { store: &store, spec: &spec }, &g, Split::Valid, &EvalProtocol::full())
        .unwrap()
        .mrr;
    assert!(after > before, "{before} -> {after}");
    assert_eq!(report.points.len(), 4);
    assert_eq!(Some(after), report.best_valid_mrr);
}

#[test]
fn training_is_bit_deterministic() {
    let g = tiny();
    for (name, weighting, dropout) in [
        ("autoweird", NegativeWeighting::Uniform, 0.1),
        ("trans", NegativeWeighting::SelfAdversarial { temperature: 1.0 }, 0.0),
    ] {
        let spec = catalog(name).unwrap();
        let cfg = TrainConfig {
            negative_weighting: weighting,
            dropout,
            ..small_cfg(100)
        };
        let (a, ra) = train(&g, &spec, &cfg).unwrap();
        let (b, rb) = train(&g, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.points, rb.points);
        let (c, _) = train(&g, &spec, &TrainConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn zero_steps_return_the_initialisation() {
    let g = tiny();
    let cfg = small_cfg(0);
    let (store, report) = train(&g, &catalog("autoweird").unwrap(), &cfg).unwrap();
    assert_eq!(store, init_embeddings(&g, &cfg));
    assert!(report.points.is_empty());
    assert_eq!(report.best_step, None);
}

#[test]
fn unaugmented_graphs_are_rejected() {
    let g = generate_synthetic(&SyntheticConfig {
        entity_count: 20,
        triple_count: 40,
        relation_count: 1,
        ..SyntheticConfig::wikikg2_like()
    })
    .unwrap();
    assert!(train(&g, &catalog("transe").unwrap(), &small_cfg(10)).is_err());
}

#[test]
fn checkpoint_keeps_single_precision_scores() {
    let g = tiny();
    let spec = catalog("triplere").unwrap();
    let (store, _) = train(&g, &spec, &small_cfg(50)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    write_checkpoint(&path, &store, &spec, 0).unwrap();
    let ck = read_checkpoint(&path).unwrap();
    assert_eq!(ck.spec, spec);
    for (a, b) in store.entities().iter().zip(ck.store.entities()) {
        assert_eq!(*a as f32 as f64, *b);
    }
}

