//! Margin loss over the L1 distance `d = -s`:
//!
//! `L = -ln σ(γ - d_pos) - Σ_i w_i ln σ(d_i - γ)`
//!
//! with `w_i = 1/n` (uniform) or a detached softmax of `-α d_i`
//! (self-adversarial). Gradients are analytic; the subgradient of `|x|` at 0
//! is taken as 0.

use rand::RngCore;

use crate::seed::FastRng;
use crate::simd::multiversion;

use super::score::{lane, query_parts, source, QueryKernel, Source, LANES};
use super::{EmbeddingStore, NegativeWeighting, TrainConfig, ENTITY_PARTS, RELATION_PARTS};
use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId, Triple};
use crate::sf::{SfSpec, Term};

const NONE: u32 = u32::MAX;

/// Gradient rows for the embeddings a loss touched, in first-touch order.
#[derive(Clone, Debug)]
pub struct Gradients {
    dim: usize,
    entity_slot: Vec<u32>,
    entity_ids: Vec<EntityId>,
    entity_rows: Vec<f64>,
    relation_slot: Vec<u32>,
    relation_ids: Vec<RelationId>,
    relation_rows: Vec<f64>,
}

impl Gradients {
    pub fn new(entity_count: usize, relation_count: usize, dim: usize) -> Self {
        Self {
            dim,
            entity_slot: vec![NONE; entity_count],
            entity_ids: Vec::new(),
            entity_rows: Vec::new(),
            relation_slot: vec![NONE; relation_count],
            relation_ids: Vec::new(),
            relation_rows: Vec::new(),
        }
    }

    pub fn for_store(store: &EmbeddingStore) -> Self {
        Self::new(store.entity_count(), store.relation_count(), store.dim())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clear(&mut self) {
        for &e in &self.entity_ids {
            self.entity_slot[e as usize] = NONE;
        }
        for &r in &self.relation_ids {
            self.relation_slot[r as usize] = NONE;
        }
        self.entity_ids.clear();
        self.entity_rows.clear();
        self.relation_ids.clear();
        self.relation_rows.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.entity_ids.is_empty() && self.relation_ids.is_empty()
    }

    /// Gradient of the `2d` entity row, if touched.
    pub fn entity(&self, e: EntityId) -> Option<&[f64]> {
        let w = ENTITY_PARTS * self.dim;
        match self.entity_slot.get(e as usize) {
            Some(&s) if s != NONE => Some(&self.entity_rows[s as usize * w..(s as usize + 1) * w]),
            _ => None,
        }
    }

    /// Gradient of the `3d` relation row, if touched.
    pub fn relation(&self, r: RelationId) -> Option<&[f64]> {
        let w = RELATION_PARTS * self.dim;
        match self.relation_slot.get(r as usize) {
            Some(&s) if s != NONE => Some(&self.relation_rows[s as usize * w..(s as usize + 1) * w]),
            _ => None,
        }
    }

    pub fn entities(&self) -> impl Iterator<Item = (EntityId, &[f64])> {
        self.entity_ids
            .iter()
            .copied()
            .zip(self.entity_rows.chunks_exact(ENTITY_PARTS * self.dim))
    }

    pub fn relations(&self) -> impl Iterator<Item = (RelationId, &[f64])> {
        self.relation_ids
            .iter()
            .copied()
            .zip(self.relation_rows.chunks_exact(RELATION_PARTS * self.dim))
    }

    fn entity_slot_or_insert(&mut self, e: EntityId) -> usize {
        let mut slot = self.entity_slot[e as usize];
        if slot == NONE {
            slot = self.entity_ids.len() as u32;
            self.entity_slot[e as usize] = slot;
            self.entity_ids.push(e);
            self.entity_rows.resize(self.entity_rows.len() + ENTITY_PARTS * self.dim, 0.0);
        }
        slot as usize
    }

    pub(crate) fn entity_row_mut(&mut self, e: EntityId) -> &mut [f64] {
        let w = ENTITY_PARTS * self.dim;
        let slot = self.entity_slot_or_insert(e);
        &mut self.entity_rows[slot * w..(slot + 1) * w]
    }

    pub(crate) fn entity_part_mut(&mut self, e: EntityId, part: usize) -> &mut [f64] {
        let start = part * self.dim;
        let d = self.dim;
        &mut self.entity_row_mut(e)[start..start + d]
    }

    pub(crate) fn relation_part_mut(&mut self, r: RelationId, part: usize) -> &mut [f64] {
        let w = RELATION_PARTS * self.dim;
        let mut slot = self.relation_slot[r as usize];
        if slot == NONE {
            slot = self.relation_ids.len() as u32;
            self.relation_slot[r as usize] = slot;
            self.relation_ids.push(r);
            self.relation_rows.resize(self.relation_rows.len() + w, 0.0);
        }
        let start = slot as usize * w + part * self.dim;
        &mut self.relation_rows[start..start + self.dim]
    }
}

#[derive(Clone, Debug)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grads: Gradients,
}

/// Loss for one positive and its negatives, with gradients, dropout off.
pub fn loss_and_grad(
    store: &EmbeddingStore,
    spec: &SfSpec,
    positive: Triple,
    negatives: &[Triple],
    cfg: &TrainConfig,
) -> Result<LossAndGrad> {
    if negatives.is_empty() {
        return Err(Error::Config("loss needs at least one negative".into()));
    }
    let mut triples = Vec::with_capacity(negatives.len() + 1);
    triples.push(positive);
    triples.extend_from_slice(negatives);
    let mut ws = LossWorkspace::new(store.dim());
    let mut grads = Gradients::for_store(store);
    let loss = ws.accumulate(
        store,
        spec,
        &triples,
        cfg.margin,
        cfg.negative_weighting,
        None,
        1.0,
        &mut grads,
    );
    Ok(LossAndGrad { loss, grads })
}

/// `ln σ(x)`, stable for large `|x|`.
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline(always)]
fn sign(x: f64) -> f64 {
    // selects rather than branches so the callers vectorize
    let pos = if x > 0.0 { 1.0 } else { 0.0 };
    let neg = if x < 0.0 { 1.0 } else { 0.0 };
    pos - neg
}

/// Inverted dropout masks drawn from 16-bit chunks of the generator output.
///
/// The effective drop probability is `round(rate * 65536) / 65536`.
pub(crate) struct Dropout<'a> {
    threshold: u16,
    keep_scale: f64,
    rng: &'a mut FastRng,
}

impl<'a> Dropout<'a> {
    pub(crate) fn new(rate: f64, rng: &'a mut FastRng) -> Self {
        Self {
            // capped so a rate within 2^-17 of 1 still keeps 1 in 65536
            threshold: (rate * 65536.0).round().min(65535.0) as u16,
            keep_scale: 1.0 / (1.0 - rate),
            rng,
        }
    }

    /// One 64-bit draw per four mask entries, low 16 bits first.
    pub(crate) fn fill(&mut self, mask: &mut [f64]) {
        fill_mask(self.rng, self.threshold, self.keep_scale, mask);
    }
}

const MASK_BLOCK: usize = 64;

multiversion! {
    fn fill_mask(rng: &mut FastRng, threshold: u16, keep: f64, mask: &mut [f64]) {
        let keep = keep.to_bits();
        // bit selects keep the full blocks vectorized
        let select = |d: u16| f64::from_bits(u64::from(d >= threshold).wrapping_neg() & keep);
        let mut draws = [0u16; MASK_BLOCK];
        for block in mask.chunks_mut(MASK_BLOCK) {
            for chunk in draws[..block.len().next_multiple_of(4)].chunks_exact_mut(4) {
                let bytes = rng.next_u64().to_le_bytes();
                for (k, d) in chunk.iter_mut().enumerate() {
                    *d = u16::from_le_bytes([bytes[2 * k], bytes[2 * k + 1]]);
                }
            }
            match <&mut [f64; MASK_BLOCK]>::try_from(&mut *block) {
                Ok(full) => {
                    for k in 0..MASK_BLOCK {
                        full[k] = select(draws[k]);
                    }
                }
                Err(_) => {
                    for (m, &d) in block.iter_mut().zip(&draws) {
                        *m = select(d);
                    }
                }
            }
        }
    }
}

multiversion! {
    /// Distances (and residuals) of one run of tails sharing the compiled
    /// query. With a non-empty `mask`, the masked tail rows are also written
    /// to `dropped` for the backward pass.
    fn forward_run(
        kernel: &QueryKernel,
        entities: &[f64],
        triples: &[Triple],
        mask: &[f64],
        dropped: &mut [f64],
        residual: &mut [f64],
        distance: &mut [f64],
    ) {
        let d = kernel.dim();
        let w = ENTITY_PARTS * d;
        for (i, t) in triples.iter().enumerate() {
            let row = &entities[t.tail as usize * w..(t.tail as usize + 1) * w];
            let out = &mut residual[i * d..(i + 1) * d];
            distance[i] = if mask.is_empty() {
                let (t0, t1) = row.split_at(d);
                kernel.residual(t0, t1, out)
            } else {
                let tv = &mut dropped[i * w..(i + 1) * w];
                for ((v, m), x) in tv.iter_mut().zip(&mask[i * w..(i + 1) * w]).zip(row) {
                    *v = x * m;
                }
                let (t0, t1) = tv.split_at(d);
                kernel.residual(t0, t1, out)
            };
        }
    }
}

multiversion! {
    /// Backward pass of one run: scatters tail gradients into `grads` and
    /// sums the query accumulators `S`, `S0`, `S1` into `acc`.
    fn backward_run(
        kernel: &QueryKernel,
        entities: &[f64],
        triples: &[Triple],
        mask: &[f64],
        dropped: &[f64],
        residual: &[f64],
        upstream: &[f64],
        tail_acc: bool,
        acc: &mut [f64],
        grads: &mut Gradients,
    ) {
        let quad = kernel.quad != [0.0; 3];
        match (quad, !mask.is_empty(), tail_acc) {
            (false, false, false) => backward_run_with::<false, false, false>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (false, false, true) => backward_run_with::<false, false, true>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (false, true, false) => backward_run_with::<false, true, false>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (false, true, true) => backward_run_with::<false, true, true>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (true, false, false) => backward_run_with::<true, false, false>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (true, false, true) => backward_run_with::<true, false, true>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (true, true, false) => backward_run_with::<true, true, false>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
            (true, true, true) => backward_run_with::<true, true, true>(kernel, entities, triples, mask, dropped, residual, upstream, acc, grads),
        }
    }
}

/// `QUAD`: the kernel has tail-tail terms. `MASK`: dropout is active.
/// `TAIL_ACC`: the spec has query-tail products, so `S0`, `S1` are needed.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn backward_run_with<const QUAD: bool, const MASK: bool, const TAIL_ACC: bool>(
    kernel: &QueryKernel,
    entities: &[f64],
    triples: &[Triple],
    mask: &[f64],
    dropped: &[f64],
    residual: &[f64],
    upstream: &[f64],
    acc: &mut [f64],
    grads: &mut Gradients,
) {
    let d = kernel.dim();
    let w = ENTITY_PARTS * d;
    let (s_acc, rest) = acc.split_at_mut(d);
    let (s0_acc, s1_acc) = rest.split_at_mut(d);
    let (a0, a1) = (&kernel.tail_coef[0][..d], &kernel.tail_coef[1][..d]);
    for (i, t) in triples.iter().enumerate() {
        let u = upstream[i];
        if u == 0.0 {
            continue;
        }
        let tv = if MASK {
            &dropped[i * w..(i + 1) * w]
        } else {
            &entities[t.tail as usize * w..(t.tail as usize + 1) * w]
        };
        let tm = if MASK { &mask[i * w..(i + 1) * w] } else { tv };
        let (t0, t1) = tv.split_at(d);
        let (m0, m1) = tm.split_at(d);
        let (out0, out1) = grads.entity_row_mut(t.tail).split_at_mut(d);
        tail_backward::<QUAD, MASK, TAIL_ACC>(
            u,
            kernel.quad,
            a0,
            a1,
            &residual[i * d..(i + 1) * d],
            t0,
            t1,
            m0,
            m1,
            s_acc,
            s0_acc,
            s1_acc,
            out0,
            out1,
        );
    }
}

/// Gradient of one tail's distance, scaled by `u`: adds into the tail rows
/// `out0`, `out1` and into the query accumulators.
// Plain slice parameters (not arrays of slices) keep `noalias` on every
// buffer, which the vectorizer needs.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tail_backward<const QUAD: bool, const MASK: bool, const TAIL_ACC: bool>(
    u: f64,
    q: [f64; 3],
    a0: &[f64],
    a1: &[f64],
    g: &[f64],
    t0: &[f64],
    t1: &[f64],
    m0: &[f64],
    m1: &[f64],
    s_acc: &mut [f64],
    s0_acc: &mut [f64],
    s1_acc: &mut [f64],
    out0: &mut [f64],
    out1: &mut [f64],
) {
    #[inline(always)]
    fn one<const QUAD: bool, const MASK: bool>(
        u: f64,
        q: [f64; 3],
        g: f64,
        a0: f64,
        a1: f64,
        t0: f64,
        t1: f64,
        m0: f64,
        m1: f64,
    ) -> (f64, f64, f64) {
        let s = sign(g) * u;
        let (mut local0, mut local1) = (a0, a1);
        if QUAD {
            local0 = a0 + 2.0 * q[0] * t0 + q[2] * t1;
            local1 = a1 + 2.0 * q[1] * t1 + q[2] * t0;
        }
        if MASK {
            (s, s * local0 * m0, s * local1 * m1)
        } else {
            (s, s * local0, s * local1)
        }
    }
    let d = g.len();
    let (a0, a1, t0, t1, m0, m1) = (&a0[..d], &a1[..d], &t0[..d], &t1[..d], &m0[..d], &m1[..d]);
    let (s_acc, s0_acc, s1_acc) = (&mut s_acc[..d], &mut s0_acc[..d], &mut s1_acc[..d]);
    let (out0, out1) = (&mut out0[..d], &mut out1[..d]);
    let body = d - d % LANES;
    for blk in 0..d / LANES {
        let c = blk * LANES;
        let (g, a0, a1) = (lane(g, c), lane(a0, c), lane(a1, c));
        let (t0, t1, m0, m1) = (lane(t0, c), lane(t1, c), lane(m0, c), lane(m1, c));
        let (sa, s0, s1) = (lane_mut(s_acc, c), lane_mut(s0_acc, c), lane_mut(s1_acc, c));
        let (o0, o1) = (lane_mut(out0, c), lane_mut(out1, c));
        let s: [f64; LANES] = std::array::from_fn(|k| sign(g[k]) * u);
        let mut l0 = *a0;
        let mut l1 = *a1;
        if QUAD {
            l0 = std::array::from_fn(|k| a0[k] + 2.0 * q[0] * t0[k] + q[2] * t1[k]);
            l1 = std::array::from_fn(|k| a1[k] + 2.0 * q[1] * t1[k] + q[2] * t0[k]);
        }
        let mut d0: [f64; LANES] = std::array::from_fn(|k| s[k] * l0[k]);
        let mut d1: [f64; LANES] = std::array::from_fn(|k| s[k] * l1[k]);
        if MASK {
            d0 = std::array::from_fn(|k| d0[k] * m0[k]);
            d1 = std::array::from_fn(|k| d1[k] * m1[k]);
        }
        *sa = std::array::from_fn(|k| sa[k] + s[k]);
        if TAIL_ACC {
            *s0 = std::array::from_fn(|k| s0[k] + s[k] * t0[k]);
            *s1 = std::array::from_fn(|k| s1[k] + s[k] * t1[k]);
        }
        *o0 = std::array::from_fn(|k| o0[k] + d0[k]);
        *o1 = std::array::from_fn(|k| o1[k] + d1[k]);
    }
    for j in body..d {
        let (s, d0, d1) = one::<QUAD, MASK>(u, q, g[j], a0[j], a1[j], t0[j], t1[j], m0[j], m1[j]);
        s_acc[j] += s;
        if TAIL_ACC {
            s0_acc[j] += s * t0[j];
            s1_acc[j] += s * t1[j];
        }
        out0[j] += d0;
        out1[j] += d1;
    }
}

#[inline(always)]
fn lane_mut(s: &mut [f64], c: usize) -> &mut [f64; LANES] {
    (&mut s[c..c + LANES]).try_into().expect("lane in bounds")
}

fn has_query_tail_terms(spec: &SfSpec) -> bool {
    spec.terms().iter().any(|st| match st.term {
        Term::Second(p, q) => p.is_tail() != q.is_tail(),
        Term::First(_) => false,
    })
}

/// `[start, end)` ranges of consecutive triples sharing `(head, relation)`.
fn runs_of(triples: &[Triple]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = 0;
    while start < triples.len() {
        let (h, r) = (triples[start].head, triples[start].relation);
        let len = triples[start..]
            .iter()
            .take_while(|t| t.head == h && t.relation == r)
            .count();
        runs.push((start, start + len));
        start += len;
    }
    runs
}

/// Per-call buffers for [`LossWorkspace::accumulate`].
pub(crate) struct LossWorkspace {
    dim: usize,
    kernel: QueryKernel,
    /// Five query vectors after dropout, then their mask scales.
    query: Vec<f64>,
    query_mask: Vec<f64>,
    /// Per tail: masked e0t, e1t and the masks; empty without dropout.
    dropped: Vec<f64>,
    tail_mask: Vec<f64>,
    residual: Vec<f64>,
    distance: Vec<f64>,
    upstream: Vec<f64>,
    acc: Vec<f64>,
    query_grad: Vec<f64>,
}

impl LossWorkspace {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            dim,
            kernel: QueryKernel::new(dim),
            query: vec![0.0; 5 * dim],
            query_mask: vec![1.0; 5 * dim],
            dropped: Vec::new(),
            tail_mask: Vec::new(),
            residual: Vec::new(),
            distance: Vec::new(),
            upstream: Vec::new(),
            acc: vec![0.0; 3 * dim],
            query_grad: vec![0.0; 5 * dim],
        }
    }

    /// Adds `scale * dL/dθ` into `grads` and returns the unscaled loss.
    /// `triples[0]` is the positive, the rest are negatives.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn accumulate(
        &mut self,
        store: &EmbeddingStore,
        spec: &SfSpec,
        triples: &[Triple],
        margin: f64,
        weighting: NegativeWeighting,
        mut dropout: Option<&mut Dropout<'_>>,
        scale: f64,
        grads: &mut Gradients,
    ) -> f64 {
        let d = self.dim;
        let w = ENTITY_PARTS * d;
        let n = triples.len();
        let masked = dropout.is_some();
        let tail_len = if masked { n * w } else { 0 };
        self.dropped.resize(tail_len, 0.0);
        self.tail_mask.resize(tail_len, 0.0);
        self.residual.resize(n * d, 0.0);
        self.distance.resize(n, 0.0);
        self.upstream.resize(n, 0.0);
        let entities = store.entities();

        // forward, one run of equal (h, r) at a time
        let runs = runs_of(triples);
        for &(start, end) in &runs {
            let (h, r) = (triples[start].head, triples[start].relation);
            self.gather_query(store, h, r, dropout.as_deref_mut());
            self.compile_kernel(spec);
            let (m, dr) = if masked {
                let m = &mut self.tail_mask[start * w..end * w];
                if let Some(dr) = dropout.as_deref_mut() {
                    dr.fill(m);
                }
                (&self.tail_mask[start * w..end * w], &mut self.dropped[start * w..end * w])
            } else {
                (&[][..], &mut [][..])
            };
            forward_run(
                &self.kernel,
                entities,
                &triples[start..end],
                m,
                dr,
                &mut self.residual[start * d..end * d],
                &mut self.distance[start..end],
            );
        }

        // loss and scaled dL/dd
        let d_pos = self.distance[0];
        let mut loss = -log_sigmoid(margin - d_pos);
        self.upstream[0] = sigmoid(d_pos - margin);
        let negs = n - 1;
        if negs > 0 {
            match weighting {
                NegativeWeighting::Uniform => {
                    let w = 1.0 / negs as f64;
                    for i in 1..n {
                        loss -= w * log_sigmoid(self.distance[i] - margin);
                        self.upstream[i] = -w * sigmoid(margin - self.distance[i]);
                    }
                }
                NegativeWeighting::SelfAdversarial { temperature } => {
                    let logits = || self.distance[1..].iter().map(|&x| -temperature * x);
                    let max = logits().fold(f64::NEG_INFINITY, f64::max);
                    let total: f64 = logits().map(|z| (z - max).exp()).sum();
                    for i in 1..n {
                        let w = (-temperature * self.distance[i] - max).exp() / total;
                        loss -= w * log_sigmoid(self.distance[i] - margin);
                        self.upstream[i] = -w * sigmoid(margin - self.distance[i]);
                    }
                }
            }
        }
        for u in &mut self.upstream[..n] {
            *u *= scale;
        }

        // backward
        let tail_acc = has_query_tail_terms(spec);
        for &(start, end) in &runs {
            let (h, r) = (triples[start].head, triples[start].relation);
            if runs.len() > 1 {
                // masks are only kept for a single run, so several runs need dropout off
                assert!(!masked, "dropout needs all triples to share (h, r)");
                self.gather_query(store, h, r, None);
                self.compile_kernel(spec);
            }
            self.acc.fill(0.0);
            let (m, dr) = if masked {
                (&self.tail_mask[start * w..end * w], &self.dropped[start * w..end * w])
            } else {
                (&[][..], &[][..])
            };
            backward_run(
                &self.kernel,
                entities,
                &triples[start..end],
                m,
                dr,
                &self.residual[start * d..end * d],
                &self.upstream[start..end],
                tail_acc,
                &mut self.acc,
                grads,
            );
            self.backprop_query(spec);
            for i in 0..5 {
                let gq = &self.query_grad[i * d..(i + 1) * d];
                let mq = &self.query_mask[i * d..(i + 1) * d];
                let out = if i < 2 {
                    grads.entity_part_mut(h, i)
                } else {
                    grads.relation_part_mut(r, i - 2)
                };
                for j in 0..d {
                    out[j] += gq[j] * mq[j];
                }
            }
        }
        loss
    }

    fn compile_kernel(&mut self, spec: &SfSpec) {
        let d = self.dim;
        let q = &self.query;
        let parts: [&[f64]; 5] = std::array::from_fn(|i| &q[i * d..(i + 1) * d]);
        self.kernel.compile(spec, &parts);
    }

    fn gather_query(&mut self, store: &EmbeddingStore, h: EntityId, r: RelationId, dropout: Option<&mut Dropout<'_>>) {
        let d = self.dim;
        let raw = query_parts(store, h, r);
        match dropout {
            Some(dr) => {
                dr.fill(&mut self.query_mask);
                for (i, part) in raw.iter().enumerate() {
                    for j in 0..d {
                        self.query[i * d + j] = part[j] * self.query_mask[i * d + j];
                    }
                }
            }
            None => {
                for (i, part) in raw.iter().enumerate() {
                    self.query[i * d..(i + 1) * d].copy_from_slice(part);
                }
                self.query_mask.fill(1.0);
            }
        }
    }

    /// Fills `query_grad` with dd/d(query vector) summed over the run, given
    /// the accumulators `S = Σ s`, `S0 = Σ s∘t0`, `S1 = Σ s∘t1`.
    #[allow(clippy::needless_range_loop)] // several arrays share the index
    fn backprop_query(&mut self, spec: &SfSpec) {
        let d = self.dim;
        self.query_grad.fill(0.0);
        let (s_acc, rest) = self.acc.split_at(d);
        let (s0_acc, s1_acc) = rest.split_at(d);
        let tail_acc = [s0_acc, s1_acc];
        for st in spec.terms() {
            let c = st.sign.value();
            match st.term.canonical() {
                Term::First(p) => {
                    if let Source::Query(i) = source(p) {
                        for j in 0..d {
                            self.query_grad[i * d + j] += c * s_acc[j];
                        }
                    }
                }
                Term::Second(p, q) => match (source(p), source(q)) {
                    (Source::Query(i), Source::Query(k)) if i == k => {
                        for j in 0..d {
                            self.query_grad[i * d + j] += 2.0 * c * s_acc[j] * self.query[i * d + j];
                        }
                    }
                    (Source::Query(i), Source::Query(k)) => {
                        for j in 0..d {
                            let (xi, xk) = (self.query[i * d + j], self.query[k * d + j]);
                            self.query_grad[i * d + j] += c * s_acc[j] * xk;
                            self.query_grad[k * d + j] += c * s_acc[j] * xi;
                        }
                    }
                    (Source::Query(i), Source::Tail(t)) | (Source::Tail(t), Source::Query(i)) => {
                        for j in 0..d {
                            self.query_grad[i * d + j] += c * tail_acc[t][j];
                        }
                    }
                    (Source::Tail(_), Source::Tail(_)) => {}
                },
            }
        }
    }
}
