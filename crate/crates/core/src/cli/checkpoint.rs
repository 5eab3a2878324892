//! Binary checkpoint format.
//!
//! ```text
//! "RSE1" | version: u32 | count: u32
//! per tensor: name_len: u32 | name (UTF-8) | dtype: u8 | rank: u32 | extents: u64 × rank | values (LE)
//! checksum: u64   FNV-1a 64 over every preceding byte
//! ```
//! All integers are little-endian.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::network::{ModelConfig, ModelParams, UnitKind};
use crate::numcore::{DType, Real, Tensor};

pub const MAGIC: &[u8; 4] = b"RSE1";
pub const VERSION: u32 = 1;

/// A tensor of either supported element type.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl StoredTensor {
    pub fn dtype(&self) -> DType {
        match self {
            StoredTensor::F32(_) => DType::F32,
            StoredTensor::F64(_) => DType::F64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            StoredTensor::F32(t) => t.shape(),
            StoredTensor::F64(t) => t.shape(),
        }
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        match self {
            StoredTensor::F32(t) => t.cast(),
            StoredTensor::F64(t) => t.cast(),
        }
    }
}

pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_tensor<T: Real>(out: &mut Vec<u8>, name: &str, t: &Tensor<T>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(T::DTYPE.code());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &e in t.shape() {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(out);
    }
}

pub fn encode<T: Real>(tensors: &[(String, &Tensor<T>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        put_tensor(&mut out, name, t);
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

/// Mixed-precision variant of [`encode`].
pub fn encode_stored(tensors: &[(String, StoredTensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        match t {
            StoredTensor::F32(t) => put_tensor(&mut out, name, t),
            StoredTensor::F64(t) => put_tensor(&mut out, name, t),
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn values<T: Real>(&mut self, shape: Vec<usize>) -> Result<Tensor<T>> {
        let count: usize = shape.iter().product();
        let size = T::DTYPE.size();
        let raw = self.take(count.checked_mul(size).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw.chunks_exact(size).map(T::read_le).collect();
        Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Verifies the checksum, then parses every tensor.
pub fn decode(bytes: &[u8]) -> Result<Vec<(String, StoredTensor)>> {
    if bytes.len() < MAGIC.len() + 16 {
        return Err(Error::Checkpoint(format!("file too short ({} bytes)", bytes.len())));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let computed = checksum(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let mut r = Reader { bytes: payload, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let code = r.take(1)?[0];
        let dtype = DType::from_code(code)
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` has unknown dtype code {code}")))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
        let t = match dtype {
            DType::F32 => StoredTensor::F32(r.values(shape)?),
            DType::F64 => StoredTensor::F64(r.values(shape)?),
        };
        out.push((name, t));
    }
    if r.pos != payload.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", payload.len() - r.pos)));
    }
    Ok(out)
}

pub fn save<T: Real>(path: &Path, params: &ModelParams<Tensor<T>>) -> Result<()> {
    std::fs::write(path, encode(&params.named_tensors()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Vec<(String, StoredTensor)>> {
    decode(&std::fs::read(path)?)
}

fn shape_of<'a>(tensors: &'a [(String, StoredTensor)], name: &str) -> Result<&'a [usize]> {
    tensors
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, t)| t.shape())
        .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
}

/// Recovers the shape of a token model from its tensors. Ablation flags and
/// `r` are not stored and are taken from `base`.
pub fn infer_token_config(tensors: &[(String, StoredTensor)], base: &ModelConfig) -> Result<ModelConfig> {
    let emb = shape_of(tensors, "embedding")?;
    let head = shape_of(tensors, "head.w")?;
    let (vocab, m, classes) = (emb[0], emb[1], head[1]);
    let blocks = (0..).take_while(|i| tensors.iter().any(|(n, _)| n.starts_with(&format!("block{i}.")))).count();
    let unit = if tensors.iter().any(|(n, _)| n == "final.z") { UnitKind::Residual } else { UnitKind::Gated };
    let mut cfg = ModelConfig::tokens(vocab, classes, m, blocks)
        .with_n_max(base.n_max)
        .with_unit(unit)
        .with_flags(base.flags);
    if unit == UnitKind::Residual {
        cfg = cfg.with_hidden(shape_of(tensors, "final.z")?[1]);
    }
    cfg.r = base.r;
    Ok(cfg)
}

/// Loads a checkpoint into a freshly built model of `config`, converting
/// precision if needed.
pub fn load_model<T: Real>(path: &Path, config: &ModelConfig) -> Result<ModelParams<Tensor<T>>> {
    let stored = load(path)?;
    let mut params = crate::network::build_model::<T>(config, 0)?;
    params.load_named(stored.iter().map(|(n, t)| (n.clone(), t.to_tensor::<T>())).collect())?;
    Ok(params)
}
