//! Persistent feature store: `manifest.json` plus a record-major little-endian
//! float32 payload `features.bin`.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::vector::{Encoding, FeatureVector, Provenance};

pub const STORE_MANIFEST: &str = "manifest.json";
pub const STORE_PAYLOAD: &str = "features.bin";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    provenance: Provenance,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    /// Free-form provenance of the run that produced the store.
    pub run_config: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct StoreManifest {
    backbone: String,
    layer: String,
    encoding: Encoding,
    dim: usize,
    count: usize,
    ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    run_config: Option<serde_json::Value>,
}

impl FeatureStore {
    pub fn new(provenance: Provenance, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        Ok(Self {
            provenance,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            run_config: None,
        })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: impl Into<String>, v: &FeatureVector) -> Result<()> {
        self.provenance.ensure_same(&v.provenance)?;
        self.push_raw(id, &v.values)
    }

    /// Appends a record given as raw values under this store's provenance.
    pub fn push_raw(&mut self, id: impl Into<String>, values: &[f32]) -> Result<()> {
        let id = id.into();
        if values.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("record '{id}' has non-finite values")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<FeatureVector> {
        self.position(id).map(|i| FeatureVector {
            values: self.row(i).to_vec(),
            provenance: self.provenance.clone(),
        })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.len(), self.dim), &self.data).expect("store payload shape")
    }

    /// Records as an `N × D` matrix converted to `T`.
    pub fn to_matrix<T: crate::Scalar>(&self) -> Array2<T> {
        self.matrix().mapv(|v| T::of(f64::from(v)))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = StoreManifest {
            backbone: self.provenance.backbone.clone(),
            layer: self.provenance.layer.clone(),
            encoding: self.provenance.encoding,
            dim: self.dim,
            count: self.len(),
            ids: self.ids.clone(),
            run_config: self.run_config.clone(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("store manifest", e))?;
        let mpath = dir.join(STORE_MANIFEST);
        std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
        let ppath = dir.join(STORE_PAYLOAD);
        std::fs::write(&ppath, f32_to_le_bytes(&self.data)).map_err(|e| Error::io(&ppath, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mpath = dir.join(STORE_MANIFEST);
        let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
        let m: StoreManifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(mpath.display().to_string(), e))?;
        if m.ids.len() != m.count {
            return Err(Error::parse(
                mpath.display().to_string(),
                format!("count {} disagrees with {} listed ids", m.count, m.ids.len()),
            ));
        }
        let ppath = dir.join(STORE_PAYLOAD);
        let bytes = std::fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
        let expected = m.count * m.dim * 4;
        if bytes.len() != expected {
            return Err(Error::PayloadSize {
                expected_records: m.count,
                dim: m.dim,
                expected_bytes: expected,
                actual_bytes: bytes.len(),
            });
        }
        let data = le_bytes_to_f32(&bytes);
        let mut store = FeatureStore::new(Provenance::new(m.backbone, m.layer, m.encoding), m.dim)?;
        store.run_config = m.run_config;
        for (i, id) in m.ids.into_iter().enumerate() {
            store.push_raw(id, &data[i * m.dim..(i + 1) * m.dim])?;
        }
        Ok(store)
    }
}

pub const MODEL_DESCRIPTOR: &str = "model.json";
pub const MODEL_PAYLOAD: &str = "model.bin";

/// Writes a fitted model as `model.json` plus a float32 `model.bin`.
pub fn save_model<D: Serialize>(dir: &Path, descriptor: &D, payload: &[f32]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = serde_json::to_string_pretty(descriptor).map_err(|e| Error::parse("model descriptor", e))?;
    let mpath = dir.join(MODEL_DESCRIPTOR);
    std::fs::write(&mpath, text + "\n").map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(MODEL_PAYLOAD);
    std::fs::write(&ppath, f32_to_le_bytes(payload)).map_err(|e| Error::io(&ppath, e))
}

pub fn load_model<D: DeserializeOwned>(dir: &Path) -> Result<(D, Vec<f32>)> {
    let mpath = dir.join(MODEL_DESCRIPTOR);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let d = serde_json::from_str(&text).map_err(|e| Error::parse(mpath.display().to_string(), e))?;
    let ppath = dir.join(MODEL_PAYLOAD);
    let bytes = std::fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(ppath.display().to_string(), "payload is not a whole number of float32 values"));
    }
    Ok((d, le_bytes_to_f32(&bytes)))
}

pub fn f32_to_le_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn le_bytes_to_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prov() -> Provenance {
        Provenance::new("vgg16", "conv4_3", Encoding::Raw)
    }

    fn store_with(n: usize, dim: usize) -> FeatureStore {
        let mut s = FeatureStore::new(prov(), dim).unwrap();
        for i in 0..n {
            let v: Vec<f32> = (0..dim).map(|j| (i * dim + j) as f32 * 0.37 - 3.0).collect();
            s.push_raw(format!("r{i}"), &v).unwrap();
        }
        s
    }

    #[test]
    fn ten_record_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s = store_with(10, 7);
        s.save(dir.path()).unwrap();
        let back = FeatureStore::load(dir.path()).unwrap();
        assert_eq!(back, s);
        let bytes = std::fs::read(dir.path().join(STORE_PAYLOAD)).unwrap();
        assert_eq!(bytes, f32_to_le_bytes(&s.data));
    }

    #[test]
    fn truncated_payload_reports_record_count() {
        let dir = tempfile::tempdir().unwrap();
        store_with(10, 7).save(dir.path()).unwrap();
        let p = dir.path().join(STORE_PAYLOAD);
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 7 * 4]).unwrap();
        let err = FeatureStore::load(dir.path()).unwrap_err();
        match &err {
            Error::PayloadSize { expected_records, .. } => assert_eq!(*expected_records, 10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("10 records"));
    }

    #[test]
    fn empty_store_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let s = store_with(0, 3);
        s.save(dir.path()).unwrap();
        assert_eq!(FeatureStore::load(dir.path()).unwrap(), s);
    }

    #[test]
    fn missing_payload_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        store_with(2, 3).save(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join(STORE_PAYLOAD)).unwrap();
        assert!(matches!(FeatureStore::load(dir.path()), Err(Error::Io { .. })));
    }

    #[test]
    fn rejects_bad_records() {
        let mut s = store_with(1, 3);
        assert!(matches!(s.push_raw("x", &[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(s.push_raw("r0", &[1.0, 2.0, 3.0]), Err(Error::DuplicateId(_))));
        assert!(s.push_raw("y", &[1.0, f32::INFINITY, 3.0]).is_err());
        let other = FeatureVector::new(vec![1.0; 3], Provenance::new("vgg16", "conv3_3", Encoding::Raw)).unwrap();
        assert!(matches!(s.push("z", &other), Err(Error::ProvenanceMismatch(_))));
    }

    proptest! {
        #[test]
        fn arbitrary_finite_payloads_round_trip(
            rows in proptest::collection::vec(proptest::collection::vec(-1e30f32..1e30, 5), 0..12)
        ) {
            let dir = tempfile::tempdir().unwrap();
            let mut s = FeatureStore::new(prov(), 5).unwrap();
            for (i, r) in rows.iter().enumerate() {
                s.push_raw(format!("id-{i}"), r).unwrap();
            }
            s.save(dir.path()).unwrap();
            let back = FeatureStore::load(dir.path()).unwrap();
            prop_assert_eq!(f32_to_le_bytes(&back.data), f32_to_le_bytes(&s.data));
            prop_assert_eq!(back, s);
        }
    }
}
