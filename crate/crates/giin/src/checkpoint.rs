//! Binary parameter snapshots.
//!
//! Layout, all integers little endian:
//!
//! ```text
//! magic      8 bytes  "GIINCK01"
//! version    u32      currently 1
//! schema     u64      FNV-1a over "name:dims;" for every tensor in order
//! config     u32 len + UTF-8 run configuration text
//! count      u32      number of tensors
//! tensor     u32 name len + name, u32 ndim, u32 per dim, f64 per scalar
//! ```
//!
//! The schema hash binds a file to the exact parameter set the code
//! registers; restore refuses files whose hash does not match the store it
//! is restoring into.

use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GIINCK01";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hash of the ordered (name, shape) sequence of a store.
pub fn schema_hash(ps: &ParamStore) -> u64 {
    let mut text = String::new();
    for (_, name, value) in ps.iter() {
        text.push_str(name);
        text.push(':');
        for d in value.shape() {
            text.push_str(&d.to_string());
            text.push(' ');
        }
        text.push(';');
    }
    fnv1a(text.as_bytes())
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub schema: u64,
    pub config_text: String,
    pub tensors: Vec<(String, Tensor)>,
}

/// Exact serialized size in bytes; pinned by tests and handy for sanity
/// checks before writes.
pub fn encoded_len(config_text: &str, tensors: &[(String, Tensor)]) -> usize {
    let mut n = 8 + 4 + 8 + 4 + config_text.len() + 4;
    for (name, t) in tensors {
        n += 4 + name.len() + 4 + 4 * t.shape().len() + 8 * t.len();
    }
    n
}

pub fn save_checkpoint(path: &Path, ps: &ParamStore, config_text: &str) -> Result<()> {
    let tensors: Vec<(String, Tensor)> =
        ps.iter().map(|(_, name, value)| (name.to_string(), value.clone())).collect();
    let mut buf = Vec::with_capacity(encoded_len(config_text, &tensors));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&schema_hash(ps).to_le_bytes());
    buf.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
    buf.extend_from_slice(config_text.as_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    debug_assert_eq!(buf.len(), encoded_len(config_text, &tensors));
    // Write to a sibling temp file and rename, so readers never observe a
    // half-written checkpoint.
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated reading {what} at offset {}",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0 };
    let magic = r.take(8, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:02x?}")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let schema = r.u64("schema hash")?;
    let config_len = r.u32("config length")? as usize;
    let config_text = String::from_utf8(r.take(config_len, "config text")?.to_vec())
        .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let ndim = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dimension")? as usize);
        }
        let len: usize = shape.iter().product();
        let bytes = r.take(8 * len, "tensor data")?;
        let data: Vec<f64> =
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push((name, Tensor::from_vec(&shape, data)?));
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint payload",
            buf.len() - r.pos
        )));
    }
    Ok(Checkpoint { schema, config_text, tensors })
}

/// Copy checkpoint values into a freshly registered store. The store must
/// present the same tensors in the same order; the schema hash makes the
/// comparison cheap and the per-tensor check makes the error actionable.
pub fn restore_into(ps: &mut ParamStore, ck: &Checkpoint) -> Result<()> {
    if schema_hash(ps) != ck.schema {
        return Err(Error::Format(
            "checkpoint schema does not match the configured model".into(),
        ));
    }
    if ps.len() != ck.tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, store expects {}",
            ck.tensors.len(),
            ps.len()
        )));
    }
    let ids: Vec<_> = ps.iter().map(|(id, _, _)| id).collect();
    for (id, (name, tensor)) in ids.into_iter().zip(&ck.tensors) {
        if ps.name(id) != name || ps.value(id).shape() != tensor.shape() {
            return Err(Error::Format(format!("tensor mismatch restoring '{name}'")));
        }
        *ps.value_mut(id) = tensor.clone();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::InitScheme;

    fn sample_store(seed: u64) -> ParamStore {
        let mut ps = ParamStore::new();
        ps.register("layer.w", &[3, 4], InitScheme::Glorot, seed).unwrap();
        ps.register("layer.b", &[3], InitScheme::Zero, seed).unwrap();
        ps.register("head.w", &[2, 3], InitScheme::He, seed).unwrap();
        ps
    }

    #[test]
    fn round_trip_restores_every_scalar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        let ps = sample_store(3);
        save_checkpoint(&path, &ps, "scale=0.5\n").unwrap();

        let ck = read_checkpoint(&path).unwrap();
        assert_eq!(ck.config_text, "scale=0.5\n");
        let mut fresh = sample_store(99);
        restore_into(&mut fresh, &ck).unwrap();
        for ((_, _, a), (_, _, b)) in fresh.iter().zip(ps.iter()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn file_size_is_exactly_the_encoded_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        let ps = sample_store(3);
        save_checkpoint(&path, &ps, "seed=3\n").unwrap();
        let expect = encoded_len(
            "seed=3\n",
            &ps.iter().map(|(_, n, v)| (n.to_string(), v.clone())).collect::<Vec<_>>(),
        );
        // magic+version+schema 20, config 4+7, count 4, then tensors:
        // layer.w 4+7+4+8+96, layer.b 4+7+4+4+24, head.w 4+6+4+8+48.
        assert_eq!(expect, 20 + 11 + 4 + 119 + 43 + 70);
        assert_eq!(std::fs::metadata(&path).unwrap().len() as usize, expect);
    }

    #[test]
    fn schema_hash_pins_names_shapes_and_order() {
        let a = sample_store(1);
        assert_eq!(schema_hash(&a), schema_hash(&sample_store(2)), "values do not matter");

        let mut renamed = ParamStore::new();
        renamed.register("layer.W", &[3, 4], InitScheme::Glorot, 1).unwrap();
        renamed.register("layer.b", &[3], InitScheme::Zero, 1).unwrap();
        renamed.register("head.w", &[2, 3], InitScheme::He, 1).unwrap();
        assert_ne!(schema_hash(&a), schema_hash(&renamed));

        let mut reshaped = ParamStore::new();
        reshaped.register("layer.w", &[4, 3], InitScheme::Glorot, 1).unwrap();
        reshaped.register("layer.b", &[3], InitScheme::Zero, 1).unwrap();
        reshaped.register("head.w", &[2, 3], InitScheme::He, 1).unwrap();
        assert_ne!(schema_hash(&a), schema_hash(&reshaped));

        let mut reordered = ParamStore::new();
        reordered.register("layer.b", &[3], InitScheme::Zero, 1).unwrap();
        reordered.register("layer.w", &[3, 4], InitScheme::Glorot, 1).unwrap();
        reordered.register("head.w", &[2, 3], InitScheme::He, 1).unwrap();
        assert_ne!(schema_hash(&a), schema_hash(&reordered));
    }

    #[test]
    fn restore_rejects_mismatched_stores() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        save_checkpoint(&path, &sample_store(3), "").unwrap();
        let ck = read_checkpoint(&path).unwrap();

        let mut smaller = ParamStore::new();
        smaller.register("layer.w", &[3, 4], InitScheme::Glorot, 1).unwrap();
        assert!(restore_into(&mut smaller, &ck).is_err());
    }

    #[test]
    fn corrupt_files_fail_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        let ps = sample_store(3);
        save_checkpoint(&path, &ps, "").unwrap();
        let good = std::fs::read(&path).unwrap();

        let bad_magic = {
            let mut b = good.clone();
            b[0] = b'X';
            b
        };
        let truncated = good[..good.len() - 5].to_vec();
        let mut trailing = good.clone();
        trailing.push(0);
        for bytes in [bad_magic, truncated, trailing] {
            std::fs::write(&path, &bytes).unwrap();
            match read_checkpoint(&path) {
                Err(Error::Format(_)) => {}
                other => panic!("corrupt file gave {other:?}"),
            }
        }
    }
}
