use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, Triple};

/// `n` corrupted copies of `positive` with tails uniform over all entities
/// other than the positive tail. Not filtered against known triples.
pub fn sample_negatives<R: Rng + ?Sized>(
    g: &KnowledgeGraph,
    positive: Triple,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Triple>> {
    let mut out = Vec::with_capacity(n);
    sample_negatives_into(g.entity_count(), positive, n, rng, &mut out)?;
    Ok(out)
}

/// Appends negatives to `out`; see [`sample_negatives`].
pub fn sample_negatives_into<R: Rng + ?Sized>(
    entity_count: usize,
    positive: Triple,
    n: usize,
    rng: &mut R,
    out: &mut Vec<Triple>,
) -> Result<()> {
    if entity_count < 2 {
        return Err(Error::NoNegatives(entity_count));
    }
    let upper = entity_count as u32 - 1;
    out.extend((0..n).map(|_| {
        let draw = rng.random_range(0..upper);
        let tail = if draw >= positive.tail { draw + 1 } else { draw };
        Triple::new(positive.head, positive.relation, tail)
    }));
    Ok(())
}
