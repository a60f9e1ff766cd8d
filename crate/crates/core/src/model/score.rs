use super::EmbeddingStore;
use crate::eval::Scorer;
use crate::graph::{EntityId, RelationId};
use crate::sf::{SfSpec, Term, VectorPart};
use crate::simd::multiversion;

/// Where a part comes from once `(h, r)` is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Source {
    /// Index into the five query vectors `e0h e1h r0 r1 r2`.
    Query(usize),
    /// Tail part 0 or 1.
    Tail(usize),
}

pub(crate) fn source(part: VectorPart) -> Source {
    match part {
        VectorPart::E0H => Source::Query(0),
        VectorPart::E1H => Source::Query(1),
        VectorPart::R0 => Source::Query(2),
        VectorPart::R1 => Source::Query(3),
        VectorPart::R2 => Source::Query(4),
        VectorPart::E0T => Source::Tail(0),
        VectorPart::E1T => Source::Tail(1),
    }
}

/// The residual `f` of a spec with head and relation already substituted:
///
/// `f = base + a0∘e0t + a1∘e1t + q00·e0t∘e0t + q11·e1t∘e1t + q01·e0t∘e1t`
///
/// Every score in the crate is computed through this form, so single and
/// batched scoring agree bit for bit.
#[derive(Clone, Debug)]
pub struct QueryKernel {
    dim: usize,
    pub(crate) base: Vec<f64>,
    pub(crate) tail_coef: [Vec<f64>; 2],
    /// e0t∘e0t, e1t∘e1t, e0t∘e1t
    pub(crate) quad: [f64; 3],
}

impl QueryKernel {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            base: vec![0.0; dim],
            tail_coef: [vec![0.0; dim], vec![0.0; dim]],
            quad: [0.0; 3],
        }
    }

    pub fn for_query(store: &EmbeddingStore, spec: &SfSpec, head: EntityId, relation: RelationId) -> Self {
        let mut kernel = Self::new(store.dim());
        kernel.compile(spec, &query_parts(store, head, relation));
        kernel
    }

    /// Rebuilds the kernel from the five query vectors `e0h e1h r0 r1 r2`.
    pub(crate) fn compile(&mut self, spec: &SfSpec, query: &[&[f64]; 5]) {
        self.base.fill(0.0);
        self.tail_coef[0].fill(0.0);
        self.tail_coef[1].fill(0.0);
        self.quad = [0.0; 3];
        for st in spec.terms() {
            let c = st.sign.value();
            match st.term.canonical() {
                Term::First(p) => match source(p) {
                    Source::Query(i) => {
                        for (b, x) in self.base.iter_mut().zip(query[i]) {
                            *b += c * x;
                        }
                    }
                    Source::Tail(k) => {
                        for a in self.tail_coef[k].iter_mut() {
                            *a += c;
                        }
                    }
                },
                Term::Second(p, q) => match (source(p), source(q)) {
                    (Source::Query(i), Source::Query(j)) => {
                        for ((b, x), y) in self.base.iter_mut().zip(query[i]).zip(query[j]) {
                            *b += c * (x * y);
                        }
                    }
                    // canonical order puts query parts before tail parts
                    (Source::Query(i), Source::Tail(k)) | (Source::Tail(k), Source::Query(i)) => {
                        for (a, x) in self.tail_coef[k].iter_mut().zip(query[i]) {
                            *a += c * x;
                        }
                    }
                    (Source::Tail(k), Source::Tail(l)) => {
                        let slot = if k == l { k } else { 2 };
                        self.quad[slot] += c;
                    }
                },
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn is_linear(&self) -> bool {
        self.quad == [0.0; 3]
    }

    /// `||f||_1` for a tail with parts `t0`, `t1`.
    #[inline(always)]
    pub fn distance(&self, t0: &[f64], t1: &[f64]) -> f64 {
        if self.is_linear() {
            self.l1::<false, false>(t0, t1, &mut [])
        } else {
            self.l1::<true, false>(t0, t1, &mut [])
        }
    }

    /// Writes `f` into `out` and returns `||f||_1`.
    #[inline(always)]
    pub(crate) fn residual(&self, t0: &[f64], t1: &[f64], out: &mut [f64]) -> f64 {
        if self.is_linear() {
            self.l1::<false, true>(t0, t1, out)
        } else {
            self.l1::<true, true>(t0, t1, out)
        }
    }

    /// Four-lane L1 sum; the zero-`quad` specialization produces the same
    /// values as the general form since it only drops `+0.0` terms.
    #[inline(always)]
    fn l1<const QUAD: bool, const WRITE: bool>(&self, t0: &[f64], t1: &[f64], out: &mut [f64]) -> f64 {
        let d = self.dim;
        let (b, a0, a1) = (&self.base[..d], &self.tail_coef[0][..d], &self.tail_coef[1][..d]);
        let (t0, t1) = (&t0[..d], &t1[..d]);
        let out = if WRITE { &mut out[..d] } else { out };
        let [q00, q11, q01] = self.quad;
        let component = |b: f64, a0: f64, a1: f64, t0: f64, t1: f64| {
            let lin = b + a0 * t0 + a1 * t1;
            if QUAD {
                lin + q00 * (t0 * t0) + q11 * (t1 * t1) + q01 * (t0 * t1)
            } else {
                lin
            }
        };
        let mut lanes = [0.0; LANES];
        let body = d - d % LANES;
        for blk in 0..d / LANES {
            let c = blk * LANES;
            let (b, a0, a1) = (lane(b, c), lane(a0, c), lane(a1, c));
            let (t0, t1) = (lane(t0, c), lane(t1, c));
            let mut g = [0.0; LANES];
            for k in 0..LANES {
                g[k] = component(b[k], a0[k], a1[k], t0[k], t1[k]);
                lanes[k] += g[k].abs();
            }
            if WRITE {
                out[c..c + LANES].copy_from_slice(&g);
            }
        }
        let mut rest = 0.0;
        for j in body..d {
            let g = component(b[j], a0[j], a1[j], t0[j], t1[j]);
            if WRITE {
                out[j] = g;
            }
            rest += g.abs();
        }
        (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + rest
    }

    /// Distance for the tail entity `t` read from `store`.
    #[inline]
    pub fn tail_distance(&self, store: &EmbeddingStore, t: EntityId) -> f64 {
        let row = store.entity_row(t);
        let (t0, t1) = row.split_at(self.dim);
        self.distance(t0, t1)
    }
}

pub(crate) const LANES: usize = 4;

#[inline(always)]
pub(crate) fn lane(s: &[f64], c: usize) -> &[f64; LANES] {
    s[c..c + LANES].try_into().expect("lane in bounds")
}

pub(crate) fn query_parts(store: &EmbeddingStore, head: EntityId, relation: RelationId) -> [&[f64]; 5] {
    [
        store.entity_part(head, 0),
        store.entity_part(head, 1),
        store.relation_part(relation, 0),
        store.relation_part(relation, 1),
        store.relation_part(relation, 2),
    ]
}

/// `s(h, r, t) = -||f||_1`; always `<= 0`.
pub fn score(store: &EmbeddingStore, spec: &SfSpec, head: EntityId, relation: RelationId, tail: EntityId) -> f64 {
    -QueryKernel::for_query(store, spec, head, relation).tail_distance(store, tail)
}

/// Scores `(head, relation, t)` for every `t` in `tails`; element `i` equals
/// `score(.., tails[i])` exactly.
pub fn score_batch_tails(
    store: &EmbeddingStore,
    spec: &SfSpec,
    head: EntityId,
    relation: RelationId,
    tails: &[EntityId],
) -> Vec<f64> {
    if tails.is_empty() {
        return Vec::new();
    }
    let kernel = QueryKernel::for_query(store, spec, head, relation);
    tails.iter().map(|&t| -kernel.tail_distance(store, t)).collect()
}

/// A trained store paired with the spec it was trained for.
#[derive(Clone, Debug)]
pub struct EmbeddingModel {
    pub store: EmbeddingStore,
    pub spec: SfSpec,
}

impl EmbeddingModel {
    pub fn new(store: EmbeddingStore, spec: SfSpec) -> Self {
        Self { store, spec }
    }
}

impl EmbeddingModel {
    pub fn view(&self) -> ModelView<'_> {
        ModelView {
            store: &self.store,
            spec: &self.spec,
        }
    }
}

/// Borrowed store + spec pair usable as a [`Scorer`].
#[derive(Clone, Copy, Debug)]
pub struct ModelView<'a> {
    pub store: &'a EmbeddingStore,
    pub spec: &'a SfSpec,
}

impl Scorer for ModelView<'_> {
    fn entity_count(&self) -> usize {
        self.store.entity_count()
    }

    fn score_tails(&self, head: EntityId, relation: RelationId, tails: &[EntityId], out: &mut Vec<f64>) {
        out.clear();
        if tails.is_empty() {
            return;
        }
        let kernel = QueryKernel::for_query(self.store, self.spec, head, relation);
        out.resize(tails.len(), 0.0);
        score_ids(&kernel, self.store.entities(), tails, out);
    }

    fn score_all(&self, head: EntityId, relation: RelationId, out: &mut Vec<f64>) {
        out.clear();
        let kernel = QueryKernel::for_query(self.store, self.spec, head, relation);
        out.resize(self.store.entity_count(), 0.0);
        score_rows(&kernel, self.store.entities(), out);
    }
}

multiversion! {
    fn score_rows(kernel: &QueryKernel, entities: &[f64], out: &mut [f64]) {
        let d = kernel.dim();
        for (row, o) in entities.chunks_exact(2 * d).zip(out.iter_mut()) {
            *o = -kernel.distance(&row[..d], &row[d..]);
        }
    }
}

multiversion! {
    fn score_ids(kernel: &QueryKernel, entities: &[f64], tails: &[EntityId], out: &mut [f64]) {
        let d = kernel.dim();
        for (&t, o) in tails.iter().zip(out.iter_mut()) {
            let row = &entities[t as usize * 2 * d..(t as usize + 1) * 2 * d];
            *o = -kernel.distance(&row[..d], &row[d..]);
        }
    }
}

impl Scorer for EmbeddingModel {
    fn entity_count(&self) -> usize {
        self.store.entity_count()
    }

    fn score_tails(&self, head: EntityId, relation: RelationId, tails: &[EntityId], out: &mut Vec<f64>) {
        self.view().score_tails(head, relation, tails, out)
    }

    fn score_all(&self, head: EntityId, relation: RelationId, out: &mut Vec<f64>) {
        self.view().score_all(head, relation, out)
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sf::{catalog, parse_sf};

    fn random_store(seed: u64, entities: usize, relations: usize, dim: usize) -> EmbeddingStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = EmbeddingStore::zeros(entities, relations, dim);
        let (ents, rels) = store.tables_mut();
        for v in ents.iter_mut().chain(rels.iter_mut()) {
            *v = rng.random_range(-1.0..1.0);
        }
        store
    }

    #[test]
    fn zero_store_scores_zero() {
        let store = EmbeddingStore::zeros(3, 2, 4);
        for (name, _) in crate::sf::CATALOG {
            assert_eq!(score(&store, &catalog(name).unwrap(), 0, 1, 2), 0.0);
        }
    }

    #[test]
    fn hand_l1() {
        let mut store = EmbeddingStore::zeros(2, 1, 2);
        store.relation_row_mut(0)[..2].copy_from_slice(&[1.0, -2.0]);
        let spec = parse_sf("r0").unwrap();
        for h in 0..2 {
            for t in 0..2 {
                assert_eq!(score(&store, &spec, h, 0, t), -3.0);
            }
        }
    }

    #[test]
    fn transe_matches_straight_line_oracle() {
        let store = random_store(3, 10, 2, 16);
        let spec = catalog("transe").unwrap();
        for (h, r, t) in [(0, 0, 1), (4, 1, 4), (9, 0, 2)] {
            let e0h = store.entity_part(h, 0);
            let e0t = store.entity_part(t, 0);
            let r0 = store.relation_part(r, 0);
            let mut oracle = 0.0;
            for j in 0..16 {
                oracle += (e0h[j] - e0t[j] + r0[j]).abs();
            }
            let s = score(&store, &spec, h, r, t);
            assert!((s + oracle).abs() <= 1e-12 * oracle, "{s} vs {}", -oracle);
        }
    }

    #[test]
    fn batch_equals_loop_exactly() {
        let store = random_store(5, 300, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tails: Vec<u32> = (0..100).map(|_| rng.random_range(0..300)).collect();
        for (name, _) in crate::sf::CATALOG {
            let spec = catalog(name).unwrap();
            let batch = score_batch_tails(&store, &spec, 7, 2, &tails);
            for (s, &t) in batch.iter().zip(&tails) {
                assert_eq!(s.to_bits(), score(&store, &spec, 7, 2, t).to_bits());
            }
            assert_eq!(score_batch_tails(&store, &spec, 7, 2, &tails[..1]), vec![score(&store, &spec, 7, 2, tails[0])]);
            assert!(score_batch_tails(&store, &spec, 7, 2, &[]).is_empty());

            let model = EmbeddingModel::new(store.clone(), spec.clone());
            let mut all = Vec::new();
            model.score_all(7, 2, &mut all);
            for &t in &tails {
                assert_eq!(all[t as usize].to_bits(), score(&store, &spec, 7, 2, t).to_bits());
            }
        }
    }

    #[test]
    fn reordered_spec_scores_identically() {
        let store = random_store(8, 5, 1, 8);
        let a = parse_sf("e0t*r2 - r0 + e1h*e0h").unwrap();
        let b = parse_sf("e0h*e1h - r0 + r2*e0t").unwrap();
        assert_eq!(a, b);
        assert_eq!(
            score(&store, &a, 1, 0, 3).to_bits(),
            score(&store, &b, 1, 0, 3).to_bits()
        );
    }

    #[test]
    fn autoweird_ignores_head() {
        let store = random_store(9, 20, 2, 8);
        let spec = catalog("autoweird").unwrap();
        let reference = score(&store, &spec, 0, 1, 5);
        for h in 0..20 {
            assert_eq!(score(&store, &spec, h, 1, 5).to_bits(), reference.to_bits());
        }
    }

    #[test]
    fn tail_quadratic_terms() {
        let mut store = EmbeddingStore::zeros(1, 1, 1);
        store.entity_row_mut(0).copy_from_slice(&[2.0, 3.0]);
        // f = e0t*e0t - e0t*e1t + e1t*e1t = 4 - 6 + 9 = 7
        let spec = parse_sf("e0t*e0t - e1t*e0t + e1t*e1t").unwrap();
        assert_eq!(score(&store, &spec, 0, 0, 0), -7.0);
    }
}
