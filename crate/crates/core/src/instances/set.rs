use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One object: its pixels (sorted raster indices) and derived geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u32,
    pixels: Vec<usize>,
    /// Inclusive `(row₀, col₀, row₁, col₁)`.
    pub bbox: (usize, usize, usize, usize),
    /// `(row, col)` mean.
    pub centroid: (f64, f64),
}

impl Instance {
    fn new(id: u32, mut pixels: Vec<usize>, width: usize) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::invalid(format!("instance {id} has no pixels")));
        }
        pixels.sort_unstable();
        pixels.dedup();
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        let (mut sr, mut sc) = (0.0, 0.0);
        for &p in &pixels {
            let (r, c) = (p / width, p % width);
            r0 = r0.min(r);
            c0 = c0.min(c);
            r1 = r1.max(r);
            c1 = c1.max(c);
            sr += r as f64;
            sc += c as f64;
        }
        let n = pixels.len() as f64;
        Ok(Self {
            id,
            bbox: (r0, c0, r1, c1),
            centroid: (sr / n, sc / n),
            pixels,
        })
    }

    pub fn pixels(&self) -> &[usize] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.pixels.binary_search(&index).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    pub height: usize,
    pub width: usize,
    pub instances: Vec<Instance>,
}

impl InstanceSet {
    /// Builds a set from `(id, raster indices)` pairs.
    pub fn new(height: usize, width: usize, parts: Vec<(u32, Vec<usize>)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut instances = Vec::with_capacity(parts.len());
        for (id, pixels) in parts {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            if let Some(&p) = pixels.iter().find(|&&p| p >= height * width) {
                return Err(Error::invalid(format!("instance {id} has pixel {p} outside the {height}x{width} image")));
            }
            instances.push(Instance::new(id, pixels, width)?);
        }
        Ok(Self {
            height,
            width,
            instances,
        })
    }

    /// Instances from a label raster; 0 is background and each positive label
    /// becomes one instance with that id.
    pub fn from_label_image(height: usize, width: usize, labels: &[u32]) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimensionMismatch {
                expected: height * width,
                actual: labels.len(),
            });
        }
        let mut groups: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            if l > 0 {
                groups.entry(l).or_default().push(i);
            }
        }
        Self::new(height, width, groups.into_iter().collect())
    }

    /// Label raster with each instance's id; later instances win on overlap.
    pub fn label_image(&self) -> Vec<u32> {
        let mut out = vec![0; self.height * self.width];
        for inst in &self.instances {
            for &p in &inst.pixels {
                out[p] = inst.id;
            }
        }
        out
    }

    /// Union of all instance masks.
    pub fn foreground(&self) -> Vec<bool> {
        let mut out = vec![false; self.height * self.width];
        for inst in &self.instances {
            for &p in &inst.pixels {
                out[p] = true;
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn is_disjoint(&self) -> bool {
        let total: usize = self.instances.iter().map(Instance::area).sum();
        total == self.foreground().iter().filter(|&&b| b).count()
    }

    /// Writes `<path>` (JSON) and the run-length encoded masks next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rle = Vec::new();
        let mut records = Vec::with_capacity(self.instances.len());
        for inst in &self.instances {
            let pairs = encode_rle(&inst.pixels);
            for (skip, run) in &pairs {
                rle.extend_from_slice(&skip.to_le_bytes());
                rle.extend_from_slice(&run.to_le_bytes());
            }
            records.push(InstanceRecord {
                id: inst.id,
                bbox: [inst.bbox.0, inst.bbox.1, inst.bbox.2, inst.bbox.3],
                area: inst.area(),
                centroid: [inst.centroid.0, inst.centroid.1],
                rle_pairs: pairs.len(),
            });
        }
        let doc = InstanceDocument {
            height: self.height,
            width: self.width,
            masks: rle_path(path).file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            instances: records,
        };
        let json = serde_json::to_string_pretty(&doc).map_err(|e| Error::parse("instance set", e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
        let side = rle_path(path);
        std::fs::write(&side, rle).map_err(|e| Error::io(&side, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: InstanceDocument = serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let side = rle_path(path);
        let bytes = std::fs::read(&side).map_err(|e| Error::io(&side, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::parse(side.display().to_string(), "length is not a multiple of 4"));
        }
        let counts: Vec<u32> = bytes
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let needed: usize = doc.instances.iter().map(|r| 2 * r.rle_pairs).sum();
        if needed != counts.len() {
            return Err(Error::DimensionMismatch {
                expected: needed,
                actual: counts.len(),
            });
        }
        let mut offset = 0;
        let mut parts = Vec::with_capacity(doc.instances.len());
        for r in &doc.instances {
            let pairs: Vec<(u32, u32)> = counts[offset..offset + 2 * r.rle_pairs]
                .chunks_exact(2)
                .map(|c| (c[0], c[1]))
                .collect();
            offset += 2 * r.rle_pairs;
            parts.push((r.id, decode_rle(&pairs)));
        }
        Self::new(doc.height, doc.width, parts)
    }
}

/// Mask sidecar: `<stem>.rle`.
pub fn rle_path(json: &Path) -> PathBuf {
    json.with_extension("rle")
}

/// Alternating `(skip, run)` counts over sorted raster indices.
pub fn encode_rle(sorted: &[usize]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut cursor = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let start = sorted[i];
        let mut end = start + 1;
        i += 1;
        while i < sorted.len() && sorted[i] == end {
            end += 1;
            i += 1;
        }
        out.push(((start - cursor) as u32, (end - start) as u32));
        cursor = end;
    }
    out
}

pub fn decode_rle(pairs: &[(u32, u32)]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut cursor = 0usize;
    for &(skip, run) in pairs {
        cursor += skip as usize;
        out.extend(cursor..cursor + run as usize);
        cursor += run as usize;
    }
    out
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: u32,
    bbox: [usize; 4],
    area: usize,
    centroid: [f64; 2],
    rle_pairs: usize,
}

#[derive(Serialize, Deserialize)]
struct InstanceDocument {
    height: usize,
    width: usize,
    masks: String,
    instances: Vec<InstanceRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn geometry_is_tight() {
        let s = InstanceSet::new(5, 6, vec![(3, vec![7, 8, 14, 20])]).unwrap();
        let i = &s.instances[0];
        assert_eq!(i.bbox, (1, 1, 3, 2));
        assert_eq!(i.area(), 4);
        assert_eq!(i.centroid, (1.75, 1.75));
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(InstanceSet::new(2, 2, vec![(1, vec![0]), (1, vec![1])]).is_err());
        assert!(InstanceSet::new(2, 2, vec![(1, vec![4])]).is_err());
        assert!(InstanceSet::new(2, 2, vec![(1, vec![])]).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let labels = vec![0, 1, 1, 0, 2, 2, 0, 1, 3];
        let s = InstanceSet::from_label_image(3, 3, &labels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("inst.json");
        s.save(&p).unwrap();
        assert_eq!(InstanceSet::load(&p).unwrap(), s);
        assert_eq!(s.label_image(), labels);
    }

    proptest! {
        #[test]
        fn rle_round_trip(bits in prop::collection::vec(any::<bool>(), 0..300)) {
            let idx: Vec<usize> = bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect();
            let pairs = encode_rle(&idx);
            prop_assert!(pairs.iter().skip(1).all(|p| p.0 > 0 && p.1 > 0));
            prop_assert_eq!(decode_rle(&pairs), idx);
        }
    }
}
