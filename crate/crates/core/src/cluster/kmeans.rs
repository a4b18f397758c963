use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    pub restarts: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            restarts: 10,
            tol: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansModel<T> {
    /// `k × D`.
    pub centroids: Array2<T>,
    pub inertia: T,
    pub iterations: usize,
    pub seed: u64,
    /// Inertia after seeding, then after every Lloyd iteration, of the
    /// returned restart.
    pub history: Vec<T>,
}

impl<T: Scalar> KMeansModel<T> {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }
}

fn sq_dist<T: Scalar>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let d = *x - *y;
        s += d * d;
    }
    s
}

/// Nearest centroid and its squared distance; ties go to the lowest index.
pub fn nearest<T: Scalar>(centroids: ArrayView2<T>, x: ArrayView1<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Number of distinct rows (bitwise comparison after normalizing `-0`).
pub fn distinct_rows<T: Scalar>(x: ArrayView2<T>) -> usize {
    let mut keys: Vec<Vec<u64>> = x
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| (v.as_f64() + 0.0).to_bits()).collect())
        .collect();
    keys.sort();
    keys.dedup();
    keys.len()
}

pub fn kmeans_fit<T: Scalar>(x: ArrayView2<T>, config: &KMeansConfig) -> Result<KMeansModel<T>> {
    kmeans_fit_weighted(x, None, config)
}

/// Lloyd iterations from weighted k-means++ seeding, best of `restarts`.
pub fn kmeans_fit_weighted<T: Scalar>(
    x: ArrayView2<T>,
    weights: Option<&[T]>,
    config: &KMeansConfig,
) -> Result<KMeansModel<T>> {
    let n = x.nrows();
    if config.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if config.max_iter == 0 || config.restarts == 0 {
        return Err(Error::invalid("max iterations and restarts must be at least 1"));
    }
    let w: Vec<T> = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: w.len(),
            })
        }
        Some(w) if w.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) => {
            return Err(Error::invalid("weights must be positive and finite"))
        }
        Some(w) => w.to_vec(),
        None => vec![T::one(); n],
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("k-means input contains non-finite values"));
    }
    let distinct = distinct_rows(x);
    if config.k > distinct {
        return Err(Error::invalid(format!(
            "k = {} exceeds the {distinct} distinct vectors",
            config.k
        )));
    }
    let mut best: Option<KMeansModel<T>> = None;
    for r in 0..config.restarts {
        let seed = derive_seed(config.seed, r as u64);
        let model = lloyd(x, &w, config, seed);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
    }
    let mut best = best.expect("at least one restart");
    best.seed = config.seed;
    Ok(best)
}

fn plus_plus<T: Scalar>(x: ArrayView2<T>, w: &[T], k: usize, seed: u64) -> Array2<T> {
    let mut r = rng(seed);
    let n = x.nrows();
    let mut centroids = Array2::<T>::zeros((k, x.ncols()));
    let pick = |r: &mut crate::rng::Rng, mass: &[f64]| -> usize {
        let total: f64 = mass.iter().sum();
        let u = r.random::<f64>() * total;
        let mut acc = 0.0;
        let mut last = 0;
        for (i, &m) in mass.iter().enumerate() {
            if m > 0.0 {
                last = i;
                acc += m;
                if u < acc {
                    return i;
                }
            }
        }
        last
    };
    let mass: Vec<f64> = w.iter().map(|v| v.as_f64()).collect();
    let first = pick(&mut r, &mass);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first)).as_f64()).collect();
    for j in 1..k {
        let mass: Vec<f64> = d2.iter().zip(w).map(|(d, wi)| d * wi.as_f64()).collect();
        let next = pick(&mut r, &mass);
        centroids.row_mut(j).assign(&x.row(next));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)).as_f64());
        }
    }
    centroids
}

/// Σ w_i · ‖x_i − c_{label_i}‖², summed in index order.
fn inertia<T: Scalar>(x: ArrayView2<T>, w: &[T], c: &Array2<T>, labels: &[usize]) -> T {
    let mut s = T::zero();
    for (i, &l) in labels.iter().enumerate() {
        s += w[i] * sq_dist(x.row(i), c.row(l));
    }
    s
}

fn lloyd<T: Scalar>(x: ArrayView2<T>, w: &[T], config: &KMeansConfig, seed: u64) -> KMeansModel<T> {
    let (n, dim) = x.dim();
    let k = config.k;
    let mut centroids = plus_plus(x, w, k, seed);
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(centroids.view(), x.row(i)).0).collect();
    let mut current = inertia(x, w, &centroids, &labels);
    let mut history = vec![current];
    let tol = T::of(config.tol);
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        iterations += 1;
        let mut sums = Array2::<T>::zeros((k, dim));
        let mut mass = vec![T::zero(); k];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(w[i], &x.row(i));
            mass[l] += w[i];
        }
        let mut updated = centroids.clone();
        for j in 0..k {
            if mass[j] > T::zero() {
                let m = mass[j];
                updated.row_mut(j).assign(&sums.row(j).mapv(|v| v / m));
            }
        }
        // a rounding-level increase means the means are already optimal
        let moved = inertia(x, w, &updated, &labels);
        let shift = if moved <= current {
            let s = centroids
                .rows()
                .into_iter()
                .zip(updated.rows())
                .map(|(a, b)| sq_dist(a, b).sqrt())
                .fold(T::zero(), |m, v| m.max(v));
            centroids = updated;
            s
        } else {
            T::zero()
        };
        let mut changed = false;
        for (i, l) in labels.iter_mut().enumerate() {
            let (j, d) = nearest(centroids.view(), x.row(i));
            if j != *l && d < sq_dist(x.row(i), centroids.row(*l)) {
                *l = j;
                changed = true;
            }
        }
        current = inertia(x, w, &centroids, &labels);
        history.push(current);
        if !changed && shift <= tol {
            break;
        }
    }
    KMeansModel {
        centroids,
        inertia: current,
        iterations,
        seed,
        history,
    }
}

/// Nearest-centroid labels.
pub fn kmeans_assign<T: Scalar>(model: &KMeansModel<T>, x: ArrayView2<T>) -> Result<Vec<usize>> {
    if x.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x.ncols(),
        });
    }
    Ok(x.rows().into_iter().map(|r| nearest(model.centroids.view(), r).0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(per: usize, centers: &[[f64; 2]], sigma: f64, seed: u64) -> Array2<f64> {
        let mut r = rng(seed);
        let nrm = Normal::new(0.0, sigma).unwrap();
        let mut x = Array2::zeros((per * centers.len(), 2));
        for (b, c) in centers.iter().enumerate() {
            for i in 0..per {
                x[[b * per + i, 0]] = c[0] + nrm.sample(&mut r);
                x[[b * per + i, 1]] = c[1] + nrm.sample(&mut r);
            }
        }
        x
    }

    fn optimal_two_partition(x: &Array2<f64>) -> f64 {
        let n = x.nrows();
        let sse = |members: &[usize]| {
            if members.is_empty() {
                return 0.0;
            }
            let mut m = Array1::<f64>::zeros(x.ncols());
            for &i in members {
                m += &x.row(i);
            }
            m /= members.len() as f64;
            members.iter().map(|&i| (&x.row(i) - &m).mapv(|v| v * v).sum()).sum::<f64>()
        };
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << (n - 1)) {
            let a: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let b: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
            best = best.min(sse(&a) + sse(&b));
        }
        best
    }

    #[test]
    fn k_equals_n_reproduces_points() {
        let x = blobs(4, &[[0.0, 0.0]], 1.0, 1);
        let m = kmeans_fit(x.view(), &KMeansConfig::new(4, 3)).unwrap();
        assert_eq!(m.inertia, 0.0);
        let mut got: Vec<Vec<u64>> = m.centroids.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        let mut want: Vec<Vec<u64>> = x.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn k_one_gives_mean_and_total_scatter() {
        let x = blobs(10, &[[1.0, 2.0]], 3.0, 2);
        let m = kmeans_fit(x.view(), &KMeansConfig::new(1, 0)).unwrap();
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        assert!((m.centroids[[0, 0]] - mean[0]).abs() < 1e-12);
        let scatter: f64 = x.rows().into_iter().map(|r| (&r - &mean).mapv(|v| v * v).sum()).sum();
        assert!((m.inertia - scatter).abs() < 1e-9);
    }

    #[test]
    fn separated_blobs_match_exhaustive_optimum() {
        let x = blobs(6, &[[0.0, 0.0], [10.0, 0.0]], 1.0, 4);
        let m = kmeans_fit(x.view(), &KMeansConfig::new(2, 9)).unwrap();
        let labels = kmeans_assign(&m, x.view()).unwrap();
        assert!(labels[..6].iter().all(|&l| l == labels[0]));
        assert!(labels[6..].iter().all(|&l| l == labels[6] && l != labels[0]));
        assert!((m.inertia - optimal_two_partition(&x)).abs() <= 1e-9);
    }

    #[test]
    fn rejects_k_above_distinct_count() {
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!(kmeans_fit(x.view(), &KMeansConfig::new(3, 0)).is_err());
        assert!(kmeans_fit(x.view(), &KMeansConfig::new(2, 0)).is_ok());
    }

    #[test]
    fn weights_equal_duplication() {
        let x = blobs(5, &[[0.0, 0.0], [4.0, 4.0]], 1.0, 8);
        let w = [1.0, 2.0, 1.0, 1.0, 3.0, 1.0, 1.0, 2.0, 1.0, 1.0];
        let a = kmeans_fit_weighted(x.view(), Some(&w), &KMeansConfig::new(2, 5)).unwrap();
        let mut rows = Vec::new();
        for (i, &c) in w.iter().enumerate() {
            for _ in 0..c as usize {
                rows.push(x.row(i));
            }
        }
        let dup = ndarray::stack(ndarray::Axis(0), &rows).unwrap();
        let b = kmeans_fit(dup.view(), &KMeansConfig::new(2, 5)).unwrap();
        assert!((a.inertia - b.inertia).abs() < 1e-9);
    }

    #[test]
    fn assignment_ties_go_to_lowest_index() {
        let m = KMeansModel {
            centroids: Array2::from_shape_vec((2, 1), vec![-1.0, 1.0]).unwrap(),
            inertia: 0.0,
            iterations: 0,
            seed: 0,
            history: vec![],
        };
        let x = Array2::from_shape_vec((1, 1), vec![0.0]).unwrap();
        assert_eq!(kmeans_assign(&m, x.view()).unwrap(), vec![0]);
    }

    #[test]
    fn same_seed_same_model() {
        let x = blobs(20, &[[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]], 1.0, 2);
        let a = kmeans_fit(x.view(), &KMeansConfig::new(3, 42)).unwrap();
        let b = kmeans_fit(x.view(), &KMeansConfig::new(3, 42)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn inertia_never_increases(seed in 0u64..10_000, k in 1usize..6) {
            let x = blobs(15, &[[0.0, 0.0], [2.0, 1.0], [5.0, 5.0]], 1.5, seed);
            let cfg = KMeansConfig { restarts: 1, ..KMeansConfig::new(k, seed) };
            let m = kmeans_fit(x.view(), &cfg).unwrap();
            for w in m.history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }

        #[test]
        fn power_of_two_scaling_preserves_assignments(seed in 0u64..10_000, e in -4i32..5) {
            let x = blobs(10, &[[0.0, 0.0], [3.0, 3.0]], 1.0, seed);
            let c = 2f64.powi(e);
            let xs = x.mapv(|v| v * c);
            let cfg = KMeansConfig::new(3, seed);
            let a = kmeans_fit(x.view(), &cfg).unwrap();
            let b = kmeans_fit(xs.view(), &cfg).unwrap();
            prop_assert_eq!(kmeans_assign(&a, x.view()).unwrap(), kmeans_assign(&b, xs.view()).unwrap());
            prop_assert_eq!(a.centroids.mapv(|v| v * c), b.centroids);
        }
    }
}
