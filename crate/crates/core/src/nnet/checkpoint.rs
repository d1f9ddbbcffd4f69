//! `VGCK1` checkpoint files.
//!
//! ```text
//! "VGCK1"                 5 bytes
//! header_len              u64 little-endian
//! header                  compact JSON {"meta": {..}, "tensors": [{name, shape, dtype, offset}]}
//! blobs                   raw little-endian values; `offset` counts from the first blob byte
//! ```
//!
//! Meta keys are serialized in sorted order and tensors in insertion order, so
//! writing a loaded checkpoint reproduces the original bytes.

use super::{NnetError, ParamStore, Real, Tensor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::Path;

pub const MAGIC: &[u8; 5] = b"VGCK1";

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
        }
    }

    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    fn to_real<T: Real>(&self) -> Vec<T> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| T::c(x as f64)).collect(),
            TensorData::F64(v) => v.iter().map(|&x| T::c(x)).collect(),
        }
    }

    fn from_real<T: Real>(v: &[T]) -> Self {
        if T::DTYPE == "f32" {
            TensorData::F32(v.iter().map(|x| x.to_f32().unwrap()).collect())
        } else {
            TensorData::F64(v.iter().map(|x| x.to_f64().unwrap()).collect())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: Map<String, Value>,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Map<String, Value>,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl Serialize) {
        self.meta
            .insert(key.to_string(), serde_json::to_value(value).expect("meta serializes"));
    }

    pub fn meta_as<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T, NnetError> {
        let v = self
            .meta
            .get(key)
            .ok_or_else(|| NnetError::Checkpoint(format!("missing meta key {key}")))?;
        serde_json::from_value(v.clone()).map_err(|e| NnetError::Checkpoint(format!("meta {key}: {e}")))
    }

    /// Adds every tensor of `store`, names prefixed with `prefix.`.
    pub fn add_store<T: Real>(&mut self, prefix: &str, store: &ParamStore<T>) {
        for (name, t) in store.iter() {
            self.add_tensor(&format!("{prefix}.{name}"), &t.shape, &t.data);
        }
    }

    pub fn add_tensor<T: Real>(&mut self, name: &str, shape: &[usize], data: &[T]) {
        assert!(
            self.tensors.iter().all(|t| t.name != name),
            "duplicate checkpoint tensor {name}"
        );
        self.tensors.push(NamedTensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data: TensorData::from_real(data),
        });
    }

    pub fn tensor<T: Real>(&self, name: &str) -> Option<Tensor<T>> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| Tensor::new(t.shape.clone(), t.data.to_real()))
    }

    /// Rebuilds a store from all tensors under `prefix.`, in file order.
    pub fn store<T: Real>(&self, prefix: &str, tag: usize) -> ParamStore<T> {
        let p = format!("{prefix}.");
        let mut store = ParamStore::new(tag);
        for t in self.tensors.iter().filter(|t| t.name.starts_with(&p)) {
            store.add(&t.name[p.len()..], Tensor::new(t.shape.clone(), t.data.to_real()));
        }
        store
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blobs = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            entries.push(Entry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                dtype: t.data.dtype().to_string(),
                offset: blobs.len() as u64,
            });
            match &t.data {
                TensorData::F32(v) => f32::write_le(v, &mut blobs),
                TensorData::F64(v) => f64::write_le(v, &mut blobs),
            }
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(13 + header.len() + blobs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&blobs);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnetError> {
        let bad = |m: &str| NnetError::Checkpoint(m.to_string());
        if bytes.len() < 13 || &bytes[..5] != MAGIC {
            return Err(bad("bad magic, expected VGCK1"));
        }
        let hlen = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let body = bytes.get(13..13 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(body).map_err(|e| NnetError::Checkpoint(format!("header: {e}")))?;
        let blobs = &bytes[13 + hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let n: usize = e.shape.iter().product();
            let width = match e.dtype.as_str() {
                "f32" => 4,
                "f64" => 8,
                other => return Err(bad(&format!("unknown dtype {other}"))),
            };
            let start = e.offset as usize;
            let raw = blobs
                .get(start..start + n * width)
                .ok_or_else(|| bad(&format!("tensor {} out of bounds", e.name)))?;
            let data = if width == 4 {
                TensorData::F32(f32::read_le(raw))
            } else {
                TensorData::F64(f64::read_le(raw))
            };
            debug_assert_eq!(data.len(), n);
            tensors.push(NamedTensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnetError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnetError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_byte_identical() {
        let mut s = ParamStore::<f32>::new(0);
        s.add("w", Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, 0.0, 1e-7, f32::MAX]));
        s.add("b", Tensor::new(vec![3], vec![0.5; 3]));
        let mut c = Checkpoint::new();
        c.set_meta("zeta", 1);
        c.set_meta("alpha", "video");
        c.add_store("encoder", &s);
        c.add_tensor("extra", &[2], &[1.0f64, 2.0]);
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.store::<f32>("encoder", 0), s);
        assert_eq!(&bytes[..5], b"VGCK1");
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut c = Checkpoint::new();
        c.add_tensor("x", &[4], &[1.0f32; 4]);
        let mut bytes = c.to_bytes();
        bytes.truncate(bytes.len() - 1);
        assert!(Checkpoint::from_bytes(&bytes).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }
}
