#![allow(dead_code)]

use kgsf::graph::{EntityId, RelationId};
use kgsf::sf::{Term, VectorPart};
use kgsf::{EmbeddingStore, KnowledgeGraph, SfSpec, Triple};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Store with every value uniform in `[-scale, scale]`.
pub fn random_store(entities: usize, relations: usize, dim: usize, scale: f64, rng: &mut StdRng) -> EmbeddingStore {
    let mut store = EmbeddingStore::zeros(entities, relations, dim);
    let (ent, rel) = store.tables_mut();
    for v in ent.iter_mut().chain(rel.iter_mut()) {
        *v = rng.random_range(-scale..=scale);
    }
    store
}

pub fn part(store: &EmbeddingStore, p: VectorPart, h: EntityId, r: RelationId, t: EntityId) -> &[f64] {
    match p {
        VectorPart::E0H => store.entity_part(h, 0),
        VectorPart::E1H => store.entity_part(h, 1),
        VectorPart::R0 => store.relation_part(r, 0),
        VectorPart::R1 => store.relation_part(r, 1),
        VectorPart::R2 => store.relation_part(r, 2),
        VectorPart::E0T => store.entity_part(t, 0),
        VectorPart::E1T => store.entity_part(t, 1),
    }
}

/// The vector inside the norm, built term by term.
pub fn oracle_f(store: &EmbeddingStore, spec: &SfSpec, h: EntityId, r: RelationId, t: EntityId) -> Vec<f64> {
    let d = store.dim();
    let mut f = vec![0.0; d];
    for st in spec.terms() {
        let sign = st.sign.value();
        for (j, fj) in f.iter_mut().enumerate() {
            let v = match st.term {
                Term::First(a) => part(store, a, h, r, t)[j],
                Term::Second(a, b) => part(store, a, h, r, t)[j] * part(store, b, h, r, t)[j],
            };
            *fj += sign * v;
        }
    }
    f
}

pub fn oracle_score(store: &EmbeddingStore, spec: &SfSpec, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    -oracle_f(store, spec, h, r, t).iter().map(|x| x.abs()).sum::<f64>()
}

/// Random graph with distinct triples spread over three splits, augmented.
pub fn random_graph(entities: usize, relations: usize, triples: usize, rng: &mut StdRng) -> KnowledgeGraph {
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::new();
    let mut attempts = 0;
    while all.len() < triples && attempts < 100 * triples {
        attempts += 1;
        let t = Triple::new(
            rng.random_range(0..entities as u32),
            rng.random_range(0..relations as u32),
            rng.random_range(0..entities as u32),
        );
        if seen.insert(t) {
            all.push(t);
        }
    }
    let n = all.len();
    let test: Vec<Triple> = all.split_off(n - n / 4);
    let valid: Vec<Triple> = all.split_off(all.len() - n / 8);
    KnowledgeGraph::new(entities, relations, all, valid, test, None)
        .unwrap()
        .into_augmented()
}
