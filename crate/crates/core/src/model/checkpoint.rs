//! Binary checkpoint.
//!
//! ```text
//! magic          8 bytes  "KGSFCKPT"
//! version        u32 LE   1
//! dim            u32 LE
//! entity_count   u32 LE
//! relation_count u32 LE
//! seed           u64 LE
//! spec_len       u32 LE
//! spec           spec_len bytes, canonical UTF-8 text
//! entities       f32 LE × entity_count × 2 × dim   (e0 then e1 per entity)
//! relations      f32 LE × relation_count × 3 × dim (r0, r1, r2 per relation)
//! ```
//!
//! Values are stored at 32-bit precision; loading widens them back to f64.

use std::fs;
use std::path::Path;

use super::EmbeddingStore;
use crate::error::{Error, IoContext, Result};
use crate::sf::{parse_sf, SfSpec};

pub const MAGIC: &[u8; 8] = b"KGSFCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub store: EmbeddingStore,
    pub spec: SfSpec,
    pub seed: u64,
}

pub fn write_checkpoint(path: impl AsRef<Path>, store: &EmbeddingStore, spec: &SfSpec, seed: u64) -> Result<()> {
    let path = path.as_ref();
    let spec_text = spec.to_string();
    let floats = store.entities().len() + store.relations().len();
    let mut buf = Vec::with_capacity(40 + spec_text.len() + 4 * floats);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for n in [store.dim(), store.entity_count(), store.relation_count()] {
        let n = u32::try_from(n).map_err(|_| Error::Checkpoint("count exceeds u32".into()))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(&(spec_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(spec_text.as_bytes());
    for &v in store.entities().iter().chain(store.relations()) {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(path, buf).at(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).at(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let dim = r.u32()? as usize;
    let entity_count = r.u32()? as usize;
    let relation_count = r.u32()? as usize;
    let seed = r.u64()?;
    let spec_len = r.u32()? as usize;
    let spec_text = std::str::from_utf8(r.take(spec_len)?)
        .map_err(|_| Error::Checkpoint("spec is not UTF-8".into()))?;
    let spec = parse_sf(spec_text)?;
    let entities = r.f32s(entity_count * 2 * dim)?;
    let relations = r.f32s(relation_count * 3 * dim)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let store = EmbeddingStore::from_parts(entity_count, relation_count, dim, entities, relations)?;
    Ok(Checkpoint { store, spec, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sf::catalog;

    #[test]
    fn round_trip_at_f32_precision() {
        let mut store = EmbeddingStore::zeros(3, 2, 4);
        for (i, v) in store.entities_mut().iter_mut().enumerate() {
            *v = i as f64 / 3.0;
        }
        for (i, v) in store.relations_mut().iter_mut().enumerate() {
            *v = -(i as f64) / 7.0;
        }
        let spec = catalog("autoweird").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_checkpoint(&path, &store, &spec, 42).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(back.seed, 42);
        for (a, b) in back.store.entities().iter().zip(store.entities()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        assert_eq!(back.store.relations().len(), store.relations().len());

        let len = fs::metadata(&path).unwrap().len() as usize;
        let header = 8 + 4 * 5 + 8 + spec.to_string().len();
        assert_eq!(len, header + 4 * (3 * 2 * 4 + 2 * 3 * 4));
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        fs::write(&path, b"NOTACKPT").unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
        let store = EmbeddingStore::zeros(1, 1, 1);
        write_checkpoint(&path, &store, &catalog("transe").unwrap(), 0).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_checkpoint(&path), Err(Error::Checkpoint(_))));
    }
}
