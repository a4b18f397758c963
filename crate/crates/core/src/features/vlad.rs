//! VLAD encoding of local descriptors (one activation cell = one descriptor).

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans::{kmeans_fit, nearest, KMeansConfig};
use crate::dataio::store::{load_model, save_model};
use crate::error::{Error, Result};
use crate::features::extract::Activation;
use crate::features::vector::{Encoding, FeatureVector, Provenance};

pub const DEFAULT_K: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct VladCodebook {
    /// `k × c`.
    pub centroids: Array2<f32>,
    /// Provenance of the layer whose cells were clustered.
    pub source: Provenance,
}

/// Cells of an activation map as rows of a `(h·w) × c` matrix.
pub fn local_descriptors(a: &Activation) -> ArrayView2<'_, f32> {
    ArrayView2::from_shape((a.height * a.width, a.channels), &a.data).expect("activation layout")
}

/// Fits the codebook by k-means over pooled descriptors.
pub fn fit_vlad_codebook(
    descriptors: ArrayView2<f32>,
    k: usize,
    seed: u64,
    source: Provenance,
) -> Result<VladCodebook> {
    let x = descriptors.mapv(f64::from);
    let config = KMeansConfig {
        restarts: 3,
        max_iter: 100,
        ..KMeansConfig::new(k, seed)
    };
    let model = kmeans_fit(x.view(), &config)?;
    Ok(VladCodebook {
        centroids: model.centroids.mapv(|v| v as f32),
        source,
    })
}

impl VladCodebook {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn width(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let desc = VladDescriptor {
            kind: "vlad".into(),
            source: self.source.clone(),
            k: self.k(),
            width: self.width(),
        };
        save_model(dir, &desc, self.centroids.as_slice().expect("standard layout"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (desc, payload): (VladDescriptor, Vec<f32>) = load_model(dir)?;
        if desc.kind != "vlad" {
            return Err(Error::parse("model.json", format!("expected a vlad model, found '{}'", desc.kind)));
        }
        if payload.len() != desc.k * desc.width {
            return Err(Error::DimensionMismatch {
                expected: desc.k * desc.width,
                actual: payload.len(),
            });
        }
        Ok(Self {
            centroids: Array2::from_shape_vec((desc.k, desc.width), payload).map_err(|e| Error::invalid(e.to_string()))?,
            source: desc.source,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct VladDescriptor {
    kind: String,
    source: Provenance,
    k: usize,
    width: usize,
}

/// Residual sums per nearest centroid, signed square root, then L2 normalized.
pub fn vlad_encode(descriptors: ArrayView2<f32>, codebook: &VladCodebook) -> Result<FeatureVector> {
    if descriptors.nrows() == 0 {
        return Err(Error::invalid("VLAD needs at least one descriptor"));
    }
    let c = codebook.width();
    if descriptors.ncols() != c {
        return Err(Error::DimensionMismatch {
            expected: c,
            actual: descriptors.ncols(),
        });
    }
    let centroids = codebook.centroids.mapv(f64::from);
    let mut acc = vec![0.0f64; codebook.k() * c];
    for row in descriptors.rows() {
        let x = row.mapv(f64::from);
        let (j, _) = nearest(centroids.view(), x.view());
        for (a, (xv, cv)) in acc[j * c..(j + 1) * c].iter_mut().zip(x.iter().zip(centroids.row(j))) {
            *a += xv - cv;
        }
    }
    for v in &mut acc {
        *v = v.signum() * v.abs().sqrt();
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    let values = acc
        .iter()
        .map(|v| if norm > 0.0 { (v / norm) as f32 } else { 0.0 })
        .collect();
    FeatureVector::new(
        values,
        Provenance {
            encoding: Encoding::Vlad(codebook.k()),
            ..codebook.source.clone()
        },
    )
}
