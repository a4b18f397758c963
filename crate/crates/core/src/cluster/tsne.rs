use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub epochs: usize,
    pub exaggeration: f64,
    /// Defaults to a quarter of `epochs`.
    pub exaggeration_epochs: Option<usize>,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TsneConfig {
    pub fn new(perplexity: f64, epochs: usize, seed: u64) -> Self {
        Self {
            perplexity,
            epochs,
            exaggeration: 12.0,
            exaggeration_epochs: None,
            learning_rate: 200.0,
            seed,
        }
    }

    fn early_epochs(&self) -> usize {
        self.exaggeration_epochs.unwrap_or(self.epochs / 4)
    }
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self::new(30.0, 1000, 0)
    }
}

/// Joint affinities with the per-row calibration used to build them.
#[derive(Debug, Clone)]
pub struct Affinities {
    /// Symmetric, zero diagonal, total mass 1.
    pub p: Array2<f64>,
    /// Precision `1 / (2σ²)` of each row's Gaussian.
    pub betas: Vec<f64>,
    /// Entropy in bits of each conditional row.
    pub entropies: Vec<f64>,
}

fn squared_distances<T: Scalar>(x: ArrayView2<T>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let mut s = 0.0;
            for (a, b) in x.row(i).iter().zip(x.row(j).iter()) {
                let t = a.as_f64() - b.as_f64();
                s += t * t;
            }
            d[[i, j]] = s;
            d[[j, i]] = s;
        }
    }
    d
}

/// Conditional row `p_{j|i}` for precision `beta`, with its entropy in bits.
fn conditional_row(d: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o = if j == i { 0.0 } else { (-beta * (d[j] - min)).exp() };
        z += *o;
    }
    let mut weighted = 0.0;
    for (j, o) in out.iter_mut().enumerate() {
        *o /= z;
        if j != i {
            weighted += *o * (d[j] - min);
        }
    }
    (z.ln() + beta * weighted) / std::f64::consts::LN_2
}

pub fn compute_affinities<T: Scalar>(x: ArrayView2<T>, perplexity: f64) -> Result<Affinities> {
    let n = x.nrows();
    if !(perplexity > 1.0) || perplexity > (n as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} outside (1, {}] for {n} points",
            n.saturating_sub(1)
        )));
    }
    let d = squared_distances(x);
    let target = perplexity.log2();
    let mut cond = Array2::<f64>::zeros((n, n));
    let mut betas = vec![0.0; n];
    let mut entropies = vec![0.0; n];
    for i in 0..n {
        let row = d.row(i).to_vec();
        let mut out = vec![0.0; n];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let spread = row.iter().sum::<f64>() / (n - 1) as f64;
        if spread > 0.0 {
            beta = 1.0 / spread;
        }
        let mut h = conditional_row(&row, i, beta, &mut out);
        for _ in 0..200 {
            if (h - target).abs() <= 1e-10 {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = conditional_row(&row, i, beta, &mut out);
        }
        if (h - target).abs() > 1e-5 {
            log::warn!("affinity row {i}: entropy {h:.6} bits, target {target:.6}");
        }
        betas[i] = beta;
        entropies[i] = h;
        cond.row_mut(i).assign(&ndarray::Array1::from(out));
    }
    let mut p = Array2::<f64>::zeros((n, n));
    let denom = 2.0 * n as f64;
    for i in 0..n {
        for j in 0..n {
            p[[i, j]] = (cond[[i, j]] + cond[[j, i]]) / denom;
        }
    }
    Ok(Affinities { p, betas, entropies })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMap {
    pub ids: Vec<String>,
    /// `N × 2`.
    #[serde(skip)]
    pub coords: Array2<f64>,
    pub kl_divergence: f64,
    /// KL divergence after the last exaggerated epoch.
    pub kl_after_exaggeration: f64,
    pub perplexity: f64,
    pub epochs: usize,
    pub seed: u64,
}

/// KL(P‖Q) for the current layout.
fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = p.nrows();
    let mut num = Array2::<f64>::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[[i, j]] = q;
            num[[j, i]] = q;
            z += 2.0 * q;
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            let pij = p[[i, j]];
            if i != j && pij > 0.0 {
                kl += pij * (pij / (num[[i, j]] / z).max(1e-300)).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE with early exaggeration, momentum and per-coordinate gains.
pub fn tsne_embed<T: Scalar>(x: ArrayView2<T>, ids: &[String], config: &TsneConfig) -> Result<EmbeddingMap> {
    let n = x.nrows();
    if n < 5 {
        return Err(Error::invalid(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if ids.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: ids.len(),
        });
    }
    if config.epochs == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::invalid("epochs and learning rate must be positive"));
    }
    let aff = compute_affinities(x, config.perplexity)?;
    let p = aff.p;
    let early = config.early_epochs().min(config.epochs);

    let normal = Normal::new(0.0, 1e-4).expect("valid std");
    let mut r = rng(config.seed);
    let mut y = Array2::<f64>::from_shape_fn((n, 2), |_| normal.sample(&mut r));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut grad = Array2::<f64>::zeros((n, 2));
    let mut num = Array2::<f64>::zeros((n, n));
    let mut kl_after_exaggeration = kl_divergence(&p, &y);

    for epoch in 0..config.epochs {
        let exaggerate = if epoch < early { config.exaggeration } else { 1.0 };
        let momentum = if epoch < early { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[[i, 0]] - y[[j, 0]];
                let dy = y[[i, 1]] - y[[j, 1]];
                let q = 1.0 / (1.0 + dx * dx + dy * dy);
                num[[i, j]] = q;
                num[[j, i]] = q;
                z += 2.0 * q;
            }
        }
        grad.fill(0.0);
        for i in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = num[[i, j]];
                let m = (exaggerate * p[[i, j]] - q / z) * q;
                gx += m * (y[[i, 0]] - y[[j, 0]]);
                gy += m * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = 4.0 * gx;
            grad[[i, 1]] = 4.0 * gy;
        }
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            *u = momentum * *u - config.learning_rate * *gain * *g;
        }
        y += &update;
        let mean = y.mean_axis(ndarray::Axis(0)).expect("nonempty");
        y -= &mean.insert_axis(ndarray::Axis(0));
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        if epoch + 1 == early {
            kl_after_exaggeration = kl_divergence(&p, &y);
        }
    }
    let kl = kl_divergence(&p, &y);
    if !kl.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs });
    }
    Ok(EmbeddingMap {
        ids: ids.to_vec(),
        coords: y,
        kl_divergence: kl,
        kl_after_exaggeration,
        perplexity: config.perplexity,
        epochs: config.epochs,
        seed: config.seed,
    })
}

impl EmbeddingMap {
    /// Writes `id,x,y` rows to `csv_path` and the summary to `json_path`.
    pub fn save(&self, csv_path: &Path, json_path: &Path, run_config: Option<&serde_json::Value>) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::parse(csv_path.display().to_string(), e))?;
        w.write_record(["id", "x", "y"])
            .map_err(|e| Error::parse(csv_path.display().to_string(), e))?;
        for (id, row) in self.ids.iter().zip(self.coords.rows()) {
            w.write_record([id.clone(), row[0].to_string(), row[1].to_string()])
                .map_err(|e| Error::parse(csv_path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(csv_path, e))?;
        let mut v = serde_json::to_value(self).map_err(|e| Error::parse("embedding summary", e))?;
        if let Some(rc) = run_config {
            v["run_config"] = rc.clone();
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| Error::parse("embedding summary", e))?;
        std::fs::write(json_path, text + "\n").map_err(|e| Error::io(json_path, e))
    }

    pub fn load(csv_path: &Path, json_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
        let mut map: EmbeddingMap =
            serde_json::from_str(&text).map_err(|e| Error::parse(json_path.display().to_string(), e))?;
        let mut r = csv::Reader::from_path(csv_path).map_err(|e| Error::parse(csv_path.display().to_string(), e))?;
        let mut ids = Vec::new();
        let mut coords = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::parse(csv_path.display().to_string(), e))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::parse(csv_path.display().to_string(), "bad coordinate"))
            };
            ids.push(rec.get(0).unwrap_or_default().to_string());
            coords.push(num(1)?);
            coords.push(num(2)?);
        }
        if ids != map.ids {
            return Err(Error::parse(csv_path.display().to_string(), "ids disagree with the summary"));
        }
        map.coords = Array2::from_shape_vec((ids.len(), 2), coords).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(map)
    }
}

/// Mean distance between group centroids over the mean distance of points to
/// their own group centroid.
pub fn separation_ratio(coords: &Array2<f64>, groups: &[usize]) -> f64 {
    let g = groups.iter().max().map_or(0, |m| m + 1);
    let mut centers = vec![[0.0f64; 2]; g];
    let mut counts = vec![0usize; g];
    for (row, &l) in coords.rows().into_iter().zip(groups) {
        centers[l][0] += row[0];
        centers[l][1] += row[1];
        counts[l] += 1;
    }
    for (c, &n) in centers.iter_mut().zip(&counts) {
        c[0] /= n.max(1) as f64;
        c[1] /= n.max(1) as f64;
    }
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let intra = coords
        .rows()
        .into_iter()
        .zip(groups)
        .map(|(r, &l)| dist([r[0], r[1]], centers[l]))
        .sum::<f64>()
        / groups.len() as f64;
    let mut inter = 0.0;
    let mut pairs = 0;
    for a in 0..g {
        for b in a + 1..g {
            inter += dist(centers[a], centers[b]);
            pairs += 1;
        }
    }
    inter / pairs.max(1) as f64 / intra
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = rng(seed);
        Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0))
    }

    pub(crate) fn blobs(per: usize, dim: usize, sep: f64, seed: u64) -> Array2<f64> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng(seed);
        Array2::from_shape_fn((3 * per, dim), |(i, j)| {
            let b = i / per;
            let center = if j == b { sep } else { 0.0 };
            center + normal.sample(&mut r)
        })
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn simplex_affinities_are_uniform() {
        let x = ndarray::array![[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let a = compute_affinities(x.view(), 2.0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert!((a.p[[i, j]] - 1.0 / 12.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rows_are_calibrated_and_p_is_a_distribution() {
        let x = random(50, 8, 3);
        let a = compute_affinities(x.view(), 10.0).unwrap();
        for h in &a.entropies {
            assert!((h - 10f64.log2()).abs() <= 1e-5);
        }
        assert!((a.p.sum() - 1.0).abs() <= 1e-9);
        for i in 0..50 {
            assert_eq!(a.p[[i, i]], 0.0);
            for j in 0..50 {
                assert!((a.p[[i, j]] - a.p[[j, i]]).abs() <= 1e-12);
                assert!(a.p[[i, j]] >= 0.0);
            }
        }
    }

    #[test]
    fn affinities_match_independent_dense_oracle() {
        let x = random(50, 8, 9);
        let perp = 12.0;
        let a = compute_affinities(x.view(), perp).unwrap();
        let n = 50;
        let mut cond = vec![vec![0.0; n]; n];
        for i in 0..n {
            let d: Vec<f64> = (0..n)
                .map(|j| (0..8).map(|k| (x[[i, k]] - x[[j, k]]).powi(2)).sum())
                .collect();
            let row = |sigma: f64| -> (Vec<f64>, f64) {
                let e: Vec<f64> = (0..n).map(|j| if j == i { 0.0 } else { (-d[j] / (2.0 * sigma * sigma)).exp() }).collect();
                let z: f64 = e.iter().sum();
                let p: Vec<f64> = e.iter().map(|v| v / z).collect();
                let h = -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.log2()).sum::<f64>();
                (p, h)
            };
            let (mut lo, mut hi) = (1e-3f64, 1e3f64);
            for _ in 0..200 {
                let mid = (lo * hi).sqrt();
                if row(mid).1 > perp.log2() {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            cond[i] = row((lo * hi).sqrt()).0;
        }
        for i in 0..n {
            for j in 0..n {
                let want = (cond[i][j] + cond[j][i]) / (2.0 * n as f64);
                assert!((a.p[[i, j]] - want).abs() <= 1e-7, "{} vs {want}", a.p[[i, j]]);
            }
        }
    }

    #[test]
    fn perplexity_range_is_enforced() {
        let x = random(10, 3, 1);
        assert!(compute_affinities(x.view(), 1.0).is_err());
        assert!(compute_affinities(x.view(), 9.5).is_err());
        assert!(compute_affinities(x.view(), 9.0).is_ok());
    }

    #[test]
    fn embedding_shape_determinism_and_kl_drop() {
        let x = random(40, 5, 2);
        let cfg = TsneConfig::new(10.0, 300, 7);
        let a = tsne_embed(x.view(), &ids(40), &cfg).unwrap();
        let b = tsne_embed(x.view(), &ids(40), &cfg).unwrap();
        assert_eq!(a.coords.dim(), (40, 2));
        assert!(a.coords.iter().all(|v| v.is_finite()));
        assert_eq!(a.coords, b.coords);
        assert!(a.kl_divergence < a.kl_after_exaggeration);
    }

    #[test]
    fn blobs_separate_in_the_embedding() {
        let x = blobs(15, 10, 20.0, 4);
        let m = tsne_embed(x.view(), &ids(45), &TsneConfig::new(10.0, 500, 1)).unwrap();
        let ratio = separation_ratio(&m.coords, &[0; 15].iter().chain(&[1; 15]).chain(&[2; 15]).copied().collect::<Vec<_>>());
        assert!(ratio >= 3.0, "ratio {ratio}");
    }

    #[test]
    fn csv_and_json_round_trip() {
        let x = random(6, 3, 5);
        let m = tsne_embed(x.view(), &ids(6), &TsneConfig::new(2.0, 50, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (c, j) = (dir.path().join("e.csv"), dir.path().join("e.json"));
        m.save(&c, &j, None).unwrap();
        assert_eq!(EmbeddingMap::load(&c, &j).unwrap(), m);
        let text = std::fs::read_to_string(&c).unwrap();
        assert!(text.starts_with("id,x,y\n"));
    }
}
