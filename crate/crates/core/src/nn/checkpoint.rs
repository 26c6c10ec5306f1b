//! Parameter checkpoints: `manifest.json` plus a flat little-endian f32 blob.
//!
//! ```json
//! { "data_file": "params.bin",
//!   "params": { "head.w1": { "shape": [64, 32], "dtype": "f32",
//!                            "byte_offset": 0, "byte_length": 8192 } } }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::{DType, Scalar, Tensor};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub byte_offset: u64,
    pub byte_length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub data_file: String,
    /// Names in the order they were stored.
    pub order: Vec<String>,
    pub params: BTreeMap<String, ParamEntry>,
}

pub fn save<T: Scalar>(dir: &Path, store: &ParamStore<T>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(store.num_elements() * 4);
    let mut params = BTreeMap::new();
    let mut order = Vec::new();
    for (name, t) in store.iter() {
        let offset = blob.len() as u64;
        for v in t.data() {
            blob.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
        params.insert(
            name.to_string(),
            ParamEntry {
                shape: t.shape().to_vec(),
                dtype: DType::F32,
                byte_offset: offset,
                byte_length: blob.len() as u64 - offset,
            },
        );
        order.push(name.to_string());
    }
    let manifest = Manifest {
        data_file: DATA_FILE.to_string(),
        order,
        params,
    };
    let data_path = dir.join(DATA_FILE);
    fs::write(&data_path, &blob).map_err(|e| Error::io(&data_path, e))?;
    let man_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(&man_path, text).map_err(|e| Error::io(&man_path, e))?;
    Ok(())
}

pub fn load<T: Scalar>(dir: &Path) -> Result<ParamStore<T>> {
    let man_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&man_path).map_err(|e| Error::io(&man_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let data_path = dir.join(&manifest.data_file);
    let blob = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let bad = |msg: String| Error::Format {
        path: data_path.clone(),
        msg,
    };

    let declared: u64 = manifest.params.values().map(|e| e.byte_length).sum();
    if declared != blob.len() as u64 {
        return Err(bad(format!(
            "manifest declares {declared} bytes, file has {}",
            blob.len()
        )));
    }
    if manifest.order.len() != manifest.params.len() {
        return Err(bad("order list does not match parameter table".into()));
    }

    let mut store = ParamStore::new();
    for name in &manifest.order {
        let e = manifest
            .params
            .get(name)
            .ok_or_else(|| bad(format!("missing entry for {name}")))?;
        if e.dtype != DType::F32 {
            return Err(bad(format!("{name}: unsupported dtype {:?}", e.dtype)));
        }
        let n: u64 = e.shape.iter().product::<usize>() as u64;
        if e.byte_length != 4 * n {
            return Err(bad(format!(
                "{name}: {} bytes for shape {:?}",
                e.byte_length, e.shape
            )));
        }
        let start = e.byte_offset as usize;
        let end = start + e.byte_length as usize;
        let bytes = blob
            .get(start..end)
            .ok_or_else(|| bad(format!("{name}: range {start}..{end} out of bounds")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        store.push(name.clone(), Tensor::new(e.shape.clone(), data)?);
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.push(
            "a",
            Tensor::from_f64(&[2, 2], &[1.0, -2.5, 3.25, 0.0]).unwrap(),
        );
        s.push("b", Tensor::from_f64(&[3], &[0.1, 0.2, 0.3]).unwrap());
        s
    }

    #[test]
    fn round_trip_is_exact_for_f32() {
        let dir = tempfile::tempdir().unwrap();
        let s = store();
        save(dir.path(), &s).unwrap();
        let back: ParamStore<f32> = load(dir.path()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_blob_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), &store()).unwrap();
        let p = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&p).unwrap();
        bytes.pop();
        fs::write(&p, bytes).unwrap();
        assert!(matches!(load::<f32>(dir.path()), Err(Error::Format { .. })));
    }
}
