//! Particle fingerprints: per-patch features, PCA, k-means cluster histogram
//! and a t-SNE occupancy grid, with a histogram distance between materials.

use std::path::Path;

use image::imageops::{resize, FilterType};
use image::{GrayImage, RgbImage};
use ndarray::{Array1, Array2, Array3, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans::{distinct_rows, kmeans_fit_weighted, nearest, KMeansConfig};
use crate::cluster::tsne::{tsne_embed, TsneConfig};
use crate::dataio::store::{load_model, save_model};
use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::features::{fit_pca_matrix, Backbone, Encoding, PcaModel, Provenance};
use crate::rng::derive_named;

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_PCA_DIM: usize = 32;
pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_PATCH_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintConfig {
    /// Layer to encode; the backbone default when `None`.
    pub layer: Option<String>,
    pub pca_dim: usize,
    pub k: usize,
    pub grid: usize,
    /// Patches are resized to this square side before encoding.
    pub patch_size: usize,
    pub perplexity: f64,
    pub tsne_epochs: usize,
    pub seed: u64,
}

impl Default for FingerprintConfig {
    fn default() -> Self {
        Self {
            layer: None,
            pca_dim: DEFAULT_PCA_DIM,
            k: DEFAULT_K,
            grid: DEFAULT_GRID,
            patch_size: DEFAULT_PATCH_SIZE,
            perplexity: 30.0,
            tsne_epochs: 1000,
            seed: 0,
        }
    }
}

/// The PCA basis and canonically ordered centroids shared by comparable fingerprints.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub backbone: String,
    pub layer: String,
    pub patch_size: usize,
    pub pca: PcaModel<f64>,
    /// `k' × d` with `k' ≤ k`, ordered by descending training mass.
    pub centroids: Array2<f64>,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelIds {
    pub pca: String,
    pub kmeans: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowderFingerprint {
    pub particle_count: usize,
    pub k: usize,
    /// Fraction of particles per cluster; sums to 1.
    pub histogram: Vec<f64>,
    pub models: ModelIds,
    pub grid: usize,
    /// `grid × grid` row-major occupancy of the embedding; sums to 1.
    pub density: Vec<f64>,
    /// Embedding bounding box `[x_min, y_min, x_max, y_max]`.
    pub bounds: [f64; 4],
    pub backbone: String,
    pub layer: String,
    pub seed: u64,
}

/// 64-bit FNV-1a over the little-endian bytes of `values`.
fn content_id(prefix: &str, values: impl Iterator<Item = f64>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{prefix}-{h:016x}")
}

impl ClusterModel {
    pub fn ids(&self) -> ModelIds {
        ModelIds {
            pca: content_id("pca", self.pca.mean.iter().chain(self.pca.components.iter()).copied()),
            kmeans: content_id("kmeans", self.centroids.iter().copied()),
        }
    }

    /// Stores the PCA under `dir/pca` and the centroids under `dir/kmeans`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.pca.save(&dir.join("pca"))?;
        let desc = CentroidDescriptor {
            kind: "centroids".into(),
            backbone: self.backbone.clone(),
            layer: self.layer.clone(),
            patch_size: self.patch_size,
            k: self.k,
            rows: self.centroids.nrows(),
            dim: self.centroids.ncols(),
        };
        let payload: Vec<f32> = self.centroids.iter().map(|&v| v as f32).collect();
        save_model(&dir.join("kmeans"), &desc, &payload)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let pca = PcaModel::<f64>::load(&dir.join("pca"))?;
        let (desc, payload): (CentroidDescriptor, Vec<f32>) = load_model(&dir.join("kmeans"))?;
        if desc.kind != "centroids" {
            return Err(Error::parse("model.json", format!("expected centroids, found '{}'", desc.kind)));
        }
        if payload.len() != desc.rows * desc.dim || desc.dim != pca.dim() {
            return Err(Error::DimensionMismatch {
                expected: desc.rows * pca.dim(),
                actual: payload.len(),
            });
        }
        Ok(Self {
            backbone: desc.backbone,
            layer: desc.layer,
            patch_size: desc.patch_size,
            pca,
            centroids: Array2::from_shape_vec((desc.rows, desc.dim), payload.into_iter().map(f64::from).collect())
                .map_err(|e| Error::invalid(e.to_string()))?,
            k: desc.k,
        })
    }

    /// Row-wise projection in a fixed summation order.
    fn project(&self, x: &[f32]) -> Result<Array1<f64>> {
        if x.len() != self.pca.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.pca.input_dim(),
                actual: x.len(),
            });
        }
        let centred: Vec<f64> = x.iter().zip(self.pca.mean.iter()).map(|(v, m)| f64::from(*v) - m).collect();
        Ok(Array1::from_iter(self.pca.components.rows().into_iter().map(|c| {
            c.iter().zip(&centred).map(|(a, b)| a * b).sum::<f64>()
        })))
    }

    fn assign_row(&self, z: ArrayView1<f64>) -> usize {
        nearest(self.centroids.view(), z).0
    }

    fn histogram(&self, assignments: &[usize]) -> Vec<f64> {
        let mut h = vec![0.0; self.k];
        for &a in assignments {
            h[a] += 1.0;
        }
        let n = assignments.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }
}

#[derive(Serialize, Deserialize)]
struct CentroidDescriptor {
    kind: String,
    backbone: String,
    layer: String,
    patch_size: usize,
    k: usize,
    rows: usize,
    dim: usize,
}

/// Bilinear resize to a square of side `size`.
pub fn resize_square(m: &Micrograph, size: usize) -> Result<Micrograph> {
    let (h, w, c) = (m.height() as u32, m.width() as u32, m.channels());
    let s = size as u32;
    let bytes = m.as_bytes().to_vec();
    let out = if c == 1 {
        let img = GrayImage::from_raw(w, h, bytes).expect("buffer matches dimensions");
        resize(&img, s, s, FilterType::Triangle).into_raw()
    } else {
        let img = RgbImage::from_raw(w, h, bytes).expect("buffer matches dimensions");
        resize(&img, s, s, FilterType::Triangle).into_raw()
    };
    let pixels = Array3::from_shape_vec((size, size, c), out).map_err(|e| Error::invalid(e.to_string()))?;
    Micrograph::new_unchecked_size(m.id(), pixels)
}

fn encode_patches(backbone: &Backbone, patches: &[Micrograph], layer: &str, size: usize) -> Result<Vec<Vec<f32>>> {
    patches
        .iter()
        .map(|p| Ok(backbone.feature_vector(&resize_square(p, size)?, layer)?.values))
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn round_f32(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = f64::from(*v as f32));
}

/// Canonical cluster order: descending mass, then ascending centroid norm,
/// then lexicographic centroid coordinates.
fn canonical_order(centroids: &Array2<f64>, mass: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..centroids.nrows()).collect();
    let norm = |j: usize| centroids.row(j).iter().map(|v| v * v).sum::<f64>();
    order.sort_by(|&a, &b| {
        mass[b]
            .total_cmp(&mass[a])
            .then(norm(a).total_cmp(&norm(b)))
            .then_with(|| {
                centroids
                    .row(a)
                    .iter()
                    .zip(centroids.row(b).iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    order
}

/// Occupancy of `coords` on a `grid × grid` lattice over their bounding box.
pub fn density_grid(coords: &Array2<f64>, grid: usize) -> (Vec<f64>, [f64; 4]) {
    let n = coords.nrows();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for r in coords.rows() {
        x0 = x0.min(r[0]);
        x1 = x1.max(r[0]);
        y0 = y0.min(r[1]);
        y1 = y1.max(r[1]);
    }
    let cell = |v: f64, lo: f64, hi: f64| -> usize {
        if hi > lo {
            (((v - lo) / (hi - lo) * grid as f64) as usize).min(grid - 1)
        } else {
            0
        }
    };
    let mut counts = vec![0usize; grid * grid];
    for r in coords.rows() {
        counts[cell(r[1], y0, y1) * grid + cell(r[0], x0, x1)] += 1;
    }
    let density = counts.iter().map(|&c| c as f64 / n as f64).collect();
    (density, [x0, y0, x1, y1])
}

/// t-SNE of the projected patches summarized as an occupancy grid. Fewer
/// than four points are placed at the origin.
fn embedding_density(z: &Array2<f64>, config: &FingerprintConfig) -> Result<(Vec<f64>, [f64; 4])> {
    let n = z.nrows();
    let coords = if n >= 5 {
        let perplexity = config.perplexity.min((n - 1) as f64 / 2.0);
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let tsne = TsneConfig::new(perplexity, config.tsne_epochs, derive_named(config.seed, "tsne"));
        tsne_embed(z.view(), &ids, &tsne)?.coords
    } else {
        Array2::zeros((n, 2))
    };
    Ok(density_grid(&coords, config.grid))
}

/// Builds a fingerprint and the cluster model it references. Identical
/// feature vectors are pooled with multiplicity weights and sorted, so the
/// result does not depend on patch order or on uniform duplication.
pub fn build_fingerprint(
    backbone: &Backbone,
    patches: &[Micrograph],
    config: &FingerprintConfig,
) -> Result<(PowderFingerprint, ClusterModel)> {
    if config.k == 0 || config.pca_dim == 0 || config.grid == 0 {
        return Err(Error::invalid("k, PCA dimension and grid must be positive"));
    }
    if patches.len() < config.k {
        return Err(Error::invalid(format!(
            "{} patches are fewer than k = {}",
            patches.len(),
            config.k
        )));
    }
    let layer = config.layer.clone().unwrap_or_else(|| backbone.default_layer().name.clone());
    let vectors = encode_patches(backbone, patches, &layer, config.patch_size)?;
    let dim = vectors[0].len();

    let mut keyed: Vec<(Vec<u32>, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (v.iter().map(|x| (x + 0.0).to_bits()).collect(), i))
        .collect();
    keyed.sort();
    let mut unique: Vec<usize> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut group_of: Vec<usize> = Vec::with_capacity(keyed.len());
    for (j, (key, i)) in keyed.iter().enumerate() {
        if j > 0 && *key == keyed[j - 1].0 {
            *counts.last_mut().expect("nonempty") += 1;
        } else {
            unique.push(*i);
            counts.push(1);
        }
        group_of.push(unique.len() - 1);
    }
    let g = counts.iter().fold(0, |a, &b| gcd(a, b));
    let weights: Vec<f64> = counts.iter().map(|&c| (c / g) as f64).collect();
    let x = Array2::from_shape_fn((unique.len(), dim), |(r, c)| f64::from(vectors[unique[r]][c]));

    let source = Provenance::new(backbone.id(), layer.clone(), Encoding::Raw);
    let mut pca = if unique.len() >= 2 {
        let total: f64 = weights.iter().sum();
        let max_d = unique.len().min(dim).min((total - 1.0).floor() as usize);
        fit_pca_matrix(x.view(), Some(&weights), config.pca_dim.min(max_d), source)?
    } else {
        let mut basis = Array2::zeros((1, dim));
        basis[[0, 0]] = 1.0;
        PcaModel {
            mean: x.row(0).to_owned(),
            components: basis,
            explained_variance: Array1::zeros(1),
            explained_variance_ratio: Array1::zeros(1),
            source,
        }
    };
    round_f32(pca.mean.as_slice_mut().expect("contiguous"));
    round_f32(pca.components.as_slice_mut().expect("contiguous"));
    let mut model = ClusterModel {
        backbone: backbone.id().to_string(),
        layer: layer.clone(),
        patch_size: config.patch_size,
        pca,
        centroids: Array2::zeros((0, 0)),
        k: config.k,
    };
    let z_rows: Vec<Array1<f64>> = unique.iter().map(|&i| model.project(&vectors[i])).collect::<Result<_>>()?;
    let z = Array2::from_shape_fn((unique.len(), model.pca.dim()), |(r, c)| z_rows[r][c]);

    let k_fit = config.k.min(distinct_rows(z.view()));
    let km = kmeans_fit_weighted(z.view(), Some(&weights), &KMeansConfig::new(k_fit, derive_named(config.seed, "kmeans")))?;
    let mut centroids = km.centroids;
    round_f32(centroids.as_slice_mut().expect("contiguous"));
    let mut mass = vec![0.0; k_fit];
    for (row, w) in z.rows().into_iter().zip(&weights) {
        mass[nearest(centroids.view(), row).0] += w;
    }
    let order = canonical_order(&centroids, &mass);
    model.centroids = Array2::from_shape_fn((k_fit, z.ncols()), |(r, c)| centroids[[order[r], c]]);

    let unique_assign: Vec<usize> = z.rows().into_iter().map(|r| model.assign_row(r)).collect();
    let mut assignments = Vec::with_capacity(patches.len());
    for (a, &c) in unique_assign.iter().zip(&counts) {
        assignments.extend(std::iter::repeat_n(*a, c));
    }
    let histogram = model.histogram(&assignments);

    // every patch, in canonical order
    let all = Array2::from_shape_fn((keyed.len(), z.ncols()), |(r, c)| z[[group_of[r], c]]);
    let (density, bounds) = embedding_density(&all, config)?;

    Ok((
        PowderFingerprint {
            particle_count: patches.len(),
            k: config.k,
            histogram,
            models: model.ids(),
            grid: config.grid,
            density,
            bounds,
            backbone: backbone.id().to_string(),
            layer,
            seed: config.seed,
        },
        model,
    ))
}

/// Cluster index of each patch under `model`.
pub fn assign_patches(model: &ClusterModel, backbone: &Backbone, patches: &[Micrograph]) -> Result<Vec<usize>> {
    if backbone.id() != model.backbone {
        return Err(Error::ProvenanceMismatch(format!(
            "cluster model built on '{}', backbone is '{}'",
            model.backbone,
            backbone.id()
        )));
    }
    encode_patches(backbone, patches, &model.layer, model.patch_size)?
        .iter()
        .map(|v| Ok(model.assign_row(model.project(v)?.view())))
        .collect()
}

/// Normalized histogram of new patches over the clusters of `fp`.
pub fn assign_to_fingerprint(
    fp: &PowderFingerprint,
    model: &ClusterModel,
    backbone: &Backbone,
    patches: &[Micrograph],
) -> Result<Vec<f64>> {
    if model.ids() != fp.models {
        return Err(Error::ProvenanceMismatch(format!(
            "fingerprint references {}/{}, model is {}/{}",
            fp.models.pca,
            fp.models.kmeans,
            model.ids().pca,
            model.ids().kmeans
        )));
    }
    if patches.is_empty() {
        return Err(Error::invalid("no patches to assign"));
    }
    Ok(model.histogram(&assign_patches(model, backbone, patches)?))
}

/// Histogram-intersection distance `1 − Σ min(aᵢ, bᵢ)`.
pub fn fingerprint_distance(a: &PowderFingerprint, b: &PowderFingerprint) -> Result<f64> {
    if a.models != b.models || a.k != b.k {
        return Err(Error::ProvenanceMismatch(format!(
            "fingerprints use different cluster models ({} vs {})",
            a.models.kmeans, b.models.kmeans
        )));
    }
    Ok(histogram_distance(&a.histogram, &b.histogram))
}

/// One minus the histogram intersection, computed as half the L1 distance so
/// that identical histograms are exactly zero.
pub fn histogram_distance(a: &[f64], b: &[f64]) -> f64 {
    let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    (0.5 * l1).clamp(0.0, 1.0)
}

/// Fingerprint of another material expressed in a reference cluster model,
/// so that its distance to the reference is defined.
pub fn fingerprint_against(
    model: &ClusterModel,
    backbone: &Backbone,
    patches: &[Micrograph],
    config: &FingerprintConfig,
) -> Result<PowderFingerprint> {
    if patches.is_empty() {
        return Err(Error::invalid("no patches to assign"));
    }
    if backbone.id() != model.backbone {
        return Err(Error::ProvenanceMismatch(format!(
            "cluster model built on '{}', backbone is '{}'",
            model.backbone,
            backbone.id()
        )));
    }
    let vectors = encode_patches(backbone, patches, &model.layer, model.patch_size)?;
    let mut keyed: Vec<(Vec<u32>, usize)> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (v.iter().map(|x| (x + 0.0).to_bits()).collect(), i))
        .collect();
    keyed.sort();
    let rows: Vec<Array1<f64>> = keyed.iter().map(|(_, i)| model.project(&vectors[*i])).collect::<Result<_>>()?;
    let z = Array2::from_shape_fn((rows.len(), model.pca.dim()), |(r, c)| rows[r][c]);
    let assignments: Vec<usize> = z.rows().into_iter().map(|r| model.assign_row(r)).collect();
    let (density, bounds) = embedding_density(&z, config)?;
    Ok(PowderFingerprint {
        particle_count: patches.len(),
        k: model.k,
        histogram: model.histogram(&assignments),
        models: model.ids(),
        grid: config.grid,
        density,
        bounds,
        backbone: model.backbone.clone(),
        layer: model.layer.clone(),
        seed: config.seed,
    })
}

impl PowderFingerprint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::parse("fingerprint", e))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests;
