//! Every catalog model against a hand-written closed form.

mod common;

use kgsf::model::score;
use kgsf::{catalog, EmbeddingStore};
use rand::Rng;

type Oracle = fn(&Parts, usize) -> f64;

struct Parts<'a> {
    e0h: &'a [f64],
    e1h: &'a [f64],
    r0: &'a [f64],
    r1: &'a [f64],
    r2: &'a [f64],
    e0t: &'a [f64],
    e1t: &'a [f64],
}

fn transe(p: &Parts, j: usize) -> f64 {
    p.e0h[j] - p.e0t[j] + p.r0[j]
}

fn interht(p: &Parts, j: usize) -> f64 {
    p.e0h[j] * p.e1t[j] - p.e1h[j] * p.e0t[j] + p.r0[j]
}

fn triplere(p: &Parts, j: usize) -> f64 {
    p.e0h[j] * p.r1[j] - p.e0t[j] * p.r2[j] + p.r0[j]
}

fn pairre(p: &Parts, j: usize) -> f64 {
    p.e0h[j] * p.r1[j] - p.e0t[j] * p.r2[j]
}

fn trans(p: &Parts, j: usize) -> f64 {
    p.e0h[j] * p.e1t[j] - p.e1h[j] * p.e0t[j] + p.r0[j] + p.e0h[j] * p.r1[j] + p.e0t[j] * p.r2[j]
}

fn autoweird(p: &Parts, j: usize) -> f64 {
    -p.e1t[j] * p.r2[j] + p.e0t[j] * p.r0[j] + p.e0t[j] * p.r2[j] - p.r0[j]
}

const MODELS: [(&str, Oracle); 6] = [
    ("transe", transe),
    ("interht", interht),
    ("triplere", triplere),
    ("pairre", pairre),
    ("trans", trans),
    ("autoweird", autoweird),
];

fn closed_form(store: &EmbeddingStore, oracle: Oracle, h: u32, r: u32, t: u32) -> f64 {
    let p = Parts {
        e0h: store.entity_part(h, 0),
        e1h: store.entity_part(h, 1),
        r0: store.relation_part(r, 0),
        r1: store.relation_part(r, 1),
        r2: store.relation_part(r, 2),
        e0t: store.entity_part(t, 0),
        e1t: store.entity_part(t, 1),
    };
    -(0..store.dim()).map(|j| oracle(&p, j).abs()).sum::<f64>()
}

#[test]
fn catalog_matches_closed_forms_on_100_stores() {
    let mut rng = common::rng(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let dim = rng.random_range(1..=40);
        let store = common::random_store(6, 3, dim, 2.0, &mut rng);
        for (name, oracle) in MODELS {
            let spec = catalog(name).unwrap();
            for _ in 0..5 {
                let (h, r, t) = (rng.random_range(0..6), rng.random_range(0..3), rng.random_range(0..6));
                let got = score(&store, &spec, h, r, t);
                let want = closed_form(&store, oracle, h, r, t);
                let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
                assert!(rel < 1e-12, "{name}: {got} vs {want} (dim {dim})");
                worst = worst.max(rel);
            }
        }
    }
    println!("worst relative error {worst:e}");
}

#[test]
fn generic_oracle_agrees_with_closed_forms() {
    // guards the term-by-term oracle used by the other suites
    let mut rng = common::rng(12);
    let store = common::random_store(4, 2, 9, 1.5, &mut rng);
    for (name, oracle) in MODELS {
        let spec = catalog(name).unwrap();
        let a = common::oracle_score(&store, &spec, 1, 1, 3);
        let b = closed_form(&store, oracle, 1, 1, 3);
        assert!((a - b).abs() <= 1e-12 * b.abs(), "{name}");
    }
}
