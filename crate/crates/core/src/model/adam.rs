use super::{EmbeddingStore, Gradients};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moments for every parameter, plus the global step used
/// for bias correction. Rows that receive no gradient keep their moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    step: u64,
    m_entities: Vec<f64>,
    v_entities: Vec<f64>,
    m_relations: Vec<f64>,
    v_relations: Vec<f64>,
}

impl AdamState {
    pub fn new(store: &EmbeddingStore) -> Self {
        Self {
            step: 0,
            m_entities: vec![0.0; store.entities().len()],
            v_entities: vec![0.0; store.entities().len()],
            m_relations: vec![0.0; store.relations().len()],
            v_relations: vec![0.0; store.relations().len()],
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

#[inline]
fn update(params: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, bc1: f64, bc2: f64) {
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = BETA1 * *m + (1.0 - BETA1) * g;
        *v = BETA2 * *v + (1.0 - BETA2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}

/// One Adam step over the rows present in `grads`.
pub fn adam_step(store: &mut EmbeddingStore, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let we = 2 * store.dim();
    for (e, g) in grads.entities() {
        let range = e as usize * we..(e as usize + 1) * we;
        update(
            store.entity_row_mut(e),
            g,
            &mut state.m_entities[range.clone()],
            &mut state.v_entities[range],
            lr,
            bc1,
            bc2,
        );
    }
    let wr = 3 * store.dim();
    for (r, g) in grads.relations() {
        let range = r as usize * wr..(r as usize + 1) * wr;
        update(
            store.relation_row_mut(r),
            g,
            &mut state.m_relations[range.clone()],
            &mut state.v_relations[range],
            lr,
            bc1,
            bc2,
        );
    }
}
