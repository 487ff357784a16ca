//! Binary containers: embeddings (`AEMB`) and training checkpoints (`ACKP`).
//!
//! Both are little-endian. An embedding file is
//!
//! ```text
//! "AEMB" | u32 version = 1 | u32 count | u32 dim | count × u64 id | count·dim × f32
//! ```
//!
//! A checkpoint stores the config text and its SHA-256, the optimizer step,
//! early-stopping state, and every parameter tensor by name with its two Adam
//! moment buffers, all as f64 so that resumed training is bit-identical.

use std::collections::HashSet;
use std::path::Path;

use super::adam::AdamState;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::numerics::Tensor2D;
use crate::refinement::RefinerParams;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"AEMB";
pub const EMBEDDING_VERSION: u32 = 1;
pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ACKP";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str) -> Self {
        Self { bytes, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::TruncatedFile(format!(
                "{} needs {n} more bytes at offset {}, file has {}",
                self.what,
                self.pos,
                self.bytes.len()
            ))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length matches"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::data("size overflow"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: [u8; 4], version: u32) -> Result<()> {
        let found = self.array::<4>()?;
        if found != magic {
            return Err(Error::BadMagic { what: self.what, expected: magic, found });
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::UnsupportedVersion { what: self.what, found: v });
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::data(format!(
                "{}: {} trailing bytes after payload",
                self.what,
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn u32_len(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::data(format!("{what} {n} does not fit the container")))
}

pub fn encode_embeddings(ids: &[u64], vectors: &Tensor2D) -> Result<Vec<u8>> {
    if ids.len() != vectors.rows() {
        return Err(Error::data(format!("{} ids for {} vectors", ids.len(), vectors.rows())));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(d) = ids.iter().find(|id| !seen.insert(**id)) {
        return Err(Error::data(format!("duplicate id {d}")));
    }
    let mut out = Vec::with_capacity(16 + ids.len() * 8 + vectors.len() * 4);
    out.extend(EMBEDDING_MAGIC);
    out.extend(EMBEDDING_VERSION.to_le_bytes());
    out.extend(u32_len(ids.len(), "count")?.to_le_bytes());
    out.extend(u32_len(vectors.cols(), "dim")?.to_le_bytes());
    for id in ids {
        out.extend(id.to_le_bytes());
    }
    for v in vectors.data() {
        out.extend((*v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<(Vec<u64>, Tensor2D)> {
    let mut r = Reader::new(bytes, "embedding container");
    r.header(EMBEDDING_MAGIC, EMBEDDING_VERSION)?;
    let count = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let ids = (0..count).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let raw = r.take(count * dim * 4)?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    r.finish()?;
    Ok((ids, Tensor2D::from_vec(count, dim, data)?))
}

pub fn write_embeddings(path: &Path, ids: &[u64], vectors: &Tensor2D) -> Result<()> {
    Ok(std::fs::write(path, encode_embeddings(ids, vectors)?)?)
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<u64>, Tensor2D)> {
    decode_embeddings(&std::fs::read(path)?)
}

/// Full training state after some number of epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: RefinerParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub best_metric: f64,
    pub best_epoch: usize,
    pub epochs_since_best: usize,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let text = self.config.to_text();
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend(u32_len(text.len(), "config length")?.to_le_bytes());
        out.extend(text.as_bytes());
        out.extend(self.config.hash());
        for v in [self.adam.step, self.epoch as u64, self.best_epoch as u64, self.epochs_since_best as u64] {
            out.extend(v.to_le_bytes());
        }
        out.extend(self.best_metric.to_le_bytes());
        let tensors = self.params.tensors();
        if tensors.len() != self.adam.m.len() {
            return Err(Error::usage("optimizer state does not match the parameter set"));
        }
        out.extend(u32_len(tensors.len(), "tensor count")?.to_le_bytes());
        for (i, (name, t)) in tensors.iter().enumerate() {
            out.extend(u32_len(name.len(), "name length")?.to_le_bytes());
            out.extend(name.as_bytes());
            out.extend(u32_len(t.rows(), "rows")?.to_le_bytes());
            out.extend(u32_len(t.cols(), "cols")?.to_le_bytes());
            for v in t.data().iter().chain(&self.adam.m[i]).chain(&self.adam.v[i]) {
                out.extend(v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        r.header(CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|_| Error::data("checkpoint config is not UTF-8"))?;
        let config = TrainConfig::parse(text)?;
        let hash = r.array::<32>()?;
        if hash != config.hash() {
            return Err(Error::data("checkpoint config hash mismatch"));
        }
        let step = r.u64()?;
        let epoch = r.u64()? as usize;
        let best_epoch = r.u64()? as usize;
        let epochs_since_best = r.u64()? as usize;
        let best_metric = f64::from_le_bytes(r.array()?);
        let mut params = RefinerParams::init(&config.refiner, config.seed, config.temperature)?;
        let names: Vec<(String, (usize, usize))> = params.tensors().into_iter().map(|(n, t)| (n, t.shape())).collect();
        let count = r.u32()? as usize;
        if count != names.len() {
            return Err(Error::data(format!("checkpoint holds {count} tensors, config implies {}", names.len())));
        }
        let mut adam = AdamState { step, m: Vec::new(), v: Vec::new() };
        for ((name, shape), t) in names.iter().zip(params.tensors_mut()) {
            let n = r.u32()? as usize;
            let found = std::str::from_utf8(r.take(n)?).map_err(|_| Error::data("tensor name is not UTF-8"))?;
            let dims = (r.u32()? as usize, r.u32()? as usize);
            if found != name || dims != *shape {
                return Err(Error::data(format!("checkpoint tensor {found} {dims:?} where {name} {shape:?} expected")));
            }
            let k = dims.0 * dims.1;
            t.data_mut().copy_from_slice(&r.f64s(k)?);
            adam.m.push(r.f64s(k)?);
            adam.v.push(r.f64s(k)?);
        }
        r.finish()?;
        Ok(Self {
            config,
            params,
            adam,
            epoch,
            best_metric,
            best_epoch,
            epochs_since_best,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.encode()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{stream_rng, Stream};

    #[test]
    fn embeddings_round_trip_at_f32() {
        let mut rng = stream_rng(1, Stream::Fuzz, 0);
        let v = Tensor2D::uniform(3, 4, 1.0, &mut rng);
        let bytes = encode_embeddings(&[5, 9, 2], &v).unwrap();
        assert_eq!(bytes.len(), 16 + 3 * 8 + 12 * 4);
        let (ids, back) = decode_embeddings(&bytes).unwrap();
        assert_eq!(ids, vec![5, 9, 2]);
        for (a, b) in v.data().iter().zip(back.data()) {
            assert_eq!(*b, *a as f32 as f64);
        }
        let again = encode_embeddings(&ids, &back).unwrap();
        assert_eq!(again, bytes);
    }

    #[test]
    fn empty_store_round_trips() {
        let bytes = encode_embeddings(&[], &Tensor2D::zeros(0, 7)).unwrap();
        let (ids, v) = decode_embeddings(&bytes).unwrap();
        assert!(ids.is_empty());
        assert_eq!(v.shape(), (0, 7));
    }

    #[test]
    fn corrupt_embedding_files_fail_distinctly() {
        let v = Tensor2D::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let bytes = encode_embeddings(&[1, 2], &v).unwrap();
        for cut in [2, 10, 20, bytes.len() - 1] {
            assert!(matches!(decode_embeddings(&bytes[..cut]), Err(Error::TruncatedFile(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_embeddings(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(decode_embeddings(&bad), Err(Error::UnsupportedVersion { found: 2, .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_embeddings(&long), Err(Error::Data(_))));
        assert!(encode_embeddings(&[1, 1], &v).is_err());
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let mut config = TrainConfig::default();
        config.refiner.d_model = 8;
        config.refiner.d_shared = 4;
        config.refiner.heads = 2;
        config.refiner.learnable_temperature = true;
        let params = RefinerParams::init(&config.refiner, 3, config.temperature).unwrap();
        let mut adam = AdamState::new(params.tensors().into_iter().map(|(_, t)| t));
        adam.step = 17;
        adam.m[0][0] = 0.1 + 0.2;
        adam.v[1][0] = f64::MIN_POSITIVE;
        let ck = Checkpoint {
            config,
            params,
            adam,
            epoch: 4,
            best_metric: f64::NEG_INFINITY,
            best_epoch: 0,
            epochs_since_best: 2,
        };
        let bytes = ck.encode().unwrap();
        assert_eq!(Checkpoint::decode(&bytes).unwrap(), ck);
        assert!(matches!(Checkpoint::decode(&bytes[..bytes.len() - 3]), Err(Error::TruncatedFile(_))));
        let mut tampered = bytes.clone();
        let at = 12 + 10;
        tampered[at] ^= 1;
        assert!(Checkpoint::decode(&tampered).is_err());
    }
}
