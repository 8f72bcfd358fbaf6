//! Binary tensor container and model checkpoints.
//!
//! Layout: the magic bytes `PXB1`, a little-endian `u64` manifest length, the
//! manifest as UTF-8 JSON (tensor names, dtypes, shapes, payload offsets and
//! free-form metadata), then the raw little-endian payloads back to back.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamKind, ParamStore};
use crate::pruning::{BinaryMask, PruningMask};
use crate::tensor::{DType, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"PXB1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dtype: DType,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    tensors: Vec<ManifestEntry>,
    metadata: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    dtype: DType,
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

/// Ordered collection of named tensors plus JSON metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    order: Vec<String>,
    entries: BTreeMap<String, Entry>,
    pub metadata: serde_json::Value,
}

impl Default for Container {
    fn default() -> Self {
        Self::new()
    }
}

impl Container {
    pub fn new() -> Self {
        Container {
            order: Vec::new(),
            entries: BTreeMap::new(),
            metadata: serde_json::Value::Null,
        }
    }

    fn push(&mut self, name: &str, entry: Entry) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(Error::Format(format!("duplicate tensor name {name}")));
        }
        self.order.push(name.to_string());
        self.entries.insert(name.to_string(), entry);
        Ok(())
    }

    pub fn push_tensor<T: Scalar>(&mut self, name: &str, t: &Tensor<T>) -> Result<()> {
        let mut bytes = Vec::with_capacity(t.len() * T::DTYPE.size());
        for &v in t.data() {
            v.extend_le(&mut bytes);
        }
        self.push(
            name,
            Entry {
                dtype: T::DTYPE,
                shape: t.shape().to_vec(),
                bytes,
            },
        )
    }

    pub fn push_mask(&mut self, name: &str, m: &BinaryMask) -> Result<()> {
        self.push(
            name,
            Entry {
                dtype: DType::U8,
                shape: m.shape().to_vec(),
                bytes: m.keep().iter().map(|&k| k as u8).collect(),
            },
        )
    }

    pub fn names(&self) -> &[String] {
        &self.order
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn dtype(&self, name: &str) -> Option<DType> {
        self.entries.get(name).map(|e| e.dtype)
    }

    fn entry(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor {name}")))
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Result<Tensor<T>> {
        let e = self.entry(name)?;
        if e.dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "tensor {name} is {:?}, requested {:?}",
                e.dtype,
                T::DTYPE
            )));
        }
        let data = e
            .bytes
            .chunks_exact(T::DTYPE.size())
            .map(T::read_le)
            .collect();
        Tensor::new(e.shape.clone(), data)
    }

    pub fn mask(&self, name: &str) -> Result<BinaryMask> {
        let e = self.entry(name)?;
        if e.dtype != DType::U8 {
            return Err(Error::Format(format!("mask {name} is {:?}", e.dtype)));
        }
        if let Some(b) = e.bytes.iter().find(|&&b| b > 1) {
            return Err(Error::Format(format!("mask {name} holds non-binary byte {b}")));
        }
        BinaryMask::new(e.shape.clone(), e.bytes.iter().map(|&b| b == 1).collect())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut tensors = Vec::with_capacity(self.order.len());
        for name in &self.order {
            let e = &self.entries[name];
            tensors.push(ManifestEntry {
                name: name.clone(),
                dtype: e.dtype,
                shape: e.shape.clone(),
                offset,
                nbytes: e.bytes.len() as u64,
            });
            offset += e.bytes.len() as u64;
        }
        let manifest = serde_json::to_vec(&Manifest {
            tensors,
            metadata: self.metadata.clone(),
        })?;
        let mut out = Vec::with_capacity(12 + manifest.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for name in &self.order {
            out.extend_from_slice(&self.entries[name].bytes);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing PXB1 magic".into()));
        }
        let mlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let payload_start = 12usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("manifest length exceeds file".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[12..payload_start])?;
        let payload = &bytes[payload_start..];
        let mut out = Container::new();
        out.metadata = manifest.metadata;
        for m in manifest.tensors {
            let (start, len) = (m.offset as usize, m.nbytes as usize);
            let expected = m.shape.iter().product::<usize>() * m.dtype.size();
            if len != expected || start.checked_add(len).is_none_or(|e| e > payload.len()) {
                return Err(Error::Format(format!("tensor {} has a bad extent", m.name)));
            }
            out.push(
                &m.name,
                Entry {
                    dtype: m.dtype,
                    shape: m.shape,
                    bytes: payload[start..start + len].to_vec(),
                },
            )?;
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub epochs: usize,
    pub seed: u64,
    pub final_accuracy: f64,
    pub target_sparsity: f64,
    pub measured_sparsity: f64,
}

/// Parameters, their init snapshot, an optional mask and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ParamStore<T>,
    pub mask: Option<PruningMask>,
    pub meta: CheckpointMeta,
}

#[derive(Serialize, Deserialize)]
struct StoredMeta {
    checkpoint: CheckpointMeta,
    kinds: BTreeMap<String, ParamKind>,
    mask_target: Option<f64>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        let mut kinds = BTreeMap::new();
        for (name, p) in self.params.iter() {
            c.push_tensor(name, p.value())?;
            c.push_tensor(&format!("{name}.init"), p.init())?;
            kinds.insert(name.to_string(), p.kind);
        }
        if let Some(mask) = &self.mask {
            for (name, m) in mask.iter() {
                c.push_mask(&format!("{name}.mask"), m)?;
            }
        }
        c.metadata = serde_json::to_value(StoredMeta {
            checkpoint: self.meta.clone(),
            kinds,
            mask_target: self.mask.as_ref().map(|m| m.target_sparsity),
        })?;
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let stored: StoredMeta = serde_json::from_value(c.metadata.clone())?;
        let mut params = ParamStore::new();
        let mut masks = BTreeMap::new();
        for (name, kind) in &stored.kinds {
            params.insert_with_init(
                name,
                *kind,
                c.tensor(name)?,
                c.tensor(&format!("{name}.init"))?,
            )?;
            let mask_name = format!("{name}.mask");
            if c.contains(&mask_name) {
                masks.insert(name.clone(), c.mask(&mask_name)?);
            }
        }
        let mask = stored
            .mask_target
            .map(|t| PruningMask::from_entries(masks, t));
        if let Some(m) = &mask {
            m.validate_against(&params)?;
        }
        Ok(Checkpoint {
            params,
            mask,
            meta: stored.checkpoint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_container(&Container::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_magic_and_truncation() {
        assert!(Container::from_bytes(b"NOPE00000000").is_err());
        let mut c = Container::new();
        c.push_tensor("a", &Tensor::<f32>::full(&[4], 1.5)).unwrap();
        let bytes = c.to_bytes().unwrap();
        assert!(Container::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dtype_is_checked_on_read() {
        let mut c = Container::new();
        c.push_tensor("a", &Tensor::<f32>::full(&[2], 1.0)).unwrap();
        assert!(c.tensor::<f64>("a").is_err());
        assert_eq!(c.tensor::<f32>("a").unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn manifest_starts_after_magic() {
        let mut c = Container::new();
        c.push_tensor("w", &Tensor::<f64>::full(&[1], 2.0)).unwrap();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"PXB1");
        let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let manifest: serde_json::Value = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
        assert_eq!(manifest["tensors"][0]["name"], "w");
        assert_eq!(&bytes[12 + len..], &2.0f64.to_le_bytes());
    }
}
