//! Single-file named-tensor container.
//!
//! Layout: 8-byte magic, `u64` little-endian manifest length, JSON manifest,
//! then the raw little-endian payload. Tensor offsets are relative to the
//! payload start.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DType, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"PDWCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    metadata: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: DType,
    offset: u64,
    nbytes: u64,
}

/// Parameters plus free-form metadata (model configuration and so on).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub metadata: serde_json::Value,
    pub params: ParamStore<T>,
}

pub fn save_checkpoint<T: Real>(
    path: impl AsRef<Path>,
    params: &ParamStore<T>,
    metadata: &serde_json::Value,
) -> Result<()> {
    let mut payload = Vec::with_capacity(params.num_scalars() * T::DTYPE.size());
    let mut tensors = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        let offset = payload.len() as u64;
        T::write_le(t.data(), &mut payload);
        tensors.push(Entry {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            dtype: T::DTYPE,
            offset,
            nbytes: payload.len() as u64 - offset,
        });
    }
    let manifest = serde_json::to_vec(&Manifest { metadata: metadata.clone(), tensors })?;
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(manifest.len() as u64).to_le_bytes())?;
    f.write_all(&manifest)?;
    f.write_all(&payload)?;
    Ok(())
}

/// Loads a checkpoint, converting stored values to `T` when the file dtype
/// differs.
pub fn load_checkpoint<T: Real>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let bad = |msg: &str| Error::StateMismatch(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let payload_start = 16usize.checked_add(mlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[16..payload_start])?;
    let payload = &bytes[payload_start..];
    let mut params = ParamStore::new();
    for e in manifest.tensors {
        let (start, len) = (e.offset as usize, e.nbytes as usize);
        let raw = payload.get(start..start + len).ok_or_else(|| bad(&format!("tensor {} out of range", e.name)))?;
        let n: usize = e.shape.iter().product();
        if n * e.dtype.size() != len {
            return Err(bad(&format!("tensor {} size does not match shape", e.name)));
        }
        let data: Vec<T> = match e.dtype {
            d if d == T::DTYPE => T::read_le(raw),
            DType::F32 => f32::read_le(raw).into_iter().map(|v| T::lit(f64::from(v))).collect(),
            DType::F64 => f64::read_le(raw).into_iter().map(T::lit).collect(),
        };
        params.insert(e.name, Tensor::new(&e.shape, data)?)?;
    }
    Ok(Checkpoint { metadata: manifest.metadata, params })
}
