//! Closed-form ridge regression on frozen features.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::classify::cv::shuffled_folds;
use crate::classify::eval::relative_rmse;
use crate::dataio::store::{load_model, save_model};
use crate::error::{Error, Result};
use crate::features::Provenance;
use crate::linalg::{cholesky, cholesky_solve};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Identity,
    Log,
}

impl Transform {
    fn forward(self, y: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(y),
            Transform::Log if y > 0.0 => Ok(y.ln()),
            Transform::Log => Err(Error::invalid(format!("log transform needs positive targets, got {y}"))),
        }
    }

    fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Identity => "identity",
            Transform::Log => "log",
        })
    }
}

impl FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Transform::Identity),
            "log" => Ok(Transform::Log),
            _ => Err(Error::invalid(format!("unknown transform '{s}' (identity or log)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Regressor<T> {
    pub weights: Array1<T>,
    pub bias: f64,
    pub transform: Transform,
    pub lambda: f64,
    pub source: Option<Provenance>,
}

fn column_mean<T: Scalar>(x: ArrayView2<T>) -> Array1<f64> {
    let mut m = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        for (a, v) in m.iter_mut().zip(row.iter()) {
            *a += v.as_f64();
        }
    }
    m / x.nrows() as f64
}

/// Minimizes `‖y − Xw − b‖² + λ‖w‖²` on transformed targets. Uses the primal
/// normal equations when `D ≤ N` and the dual (Gram) system otherwise.
pub fn train_regressor<T: Scalar>(
    x: ArrayView2<T>,
    targets: &[f64],
    lambda: f64,
    transform: Transform,
) -> Result<Regressor<T>> {
    let (n, dim) = x.dim();
    if n != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: targets.len(),
        });
    }
    if n == 0 || dim == 0 {
        return Err(Error::invalid("regression needs at least one sample and feature"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("ridge strength must be finite and non-negative"));
    }
    let z = targets.iter().map(|&y| transform.forward(y)).collect::<Result<Vec<f64>>>()?;
    let z_mean = z.iter().sum::<f64>() / n as f64;
    let zc = Array1::from_iter(z.iter().map(|v| v - z_mean));
    let mean = column_mean(x);
    let mean_t = mean.mapv(T::of);
    let xc = &x - &mean_t.view().insert_axis(Axis(0));

    let w: Array1<f64> = if dim <= n {
        let mut a = xc.t().dot(&xc).mapv(|v| v.as_f64());
        for i in 0..dim {
            a[[i, i]] += lambda;
        }
        let rhs = xc.t().mapv(|v| v.as_f64()).dot(&zc);
        let l = cholesky(a.view())?;
        cholesky_solve(&l, rhs.insert_axis(Axis(1)).view()).column(0).to_owned()
    } else {
        let mut g = xc.dot(&xc.t()).mapv(|v| v.as_f64());
        for i in 0..n {
            g[[i, i]] += lambda;
        }
        let l = cholesky(g.view())?;
        let alpha = cholesky_solve(&l, zc.view().insert_axis(Axis(1))).column(0).to_owned();
        let mut w = Array1::<f64>::zeros(dim);
        for (row, &a) in xc.rows().into_iter().zip(alpha.iter()) {
            for (wi, v) in w.iter_mut().zip(row.iter()) {
                *wi += a * v.as_f64();
            }
        }
        w
    };
    let bias = z_mean - w.dot(&mean);
    Ok(Regressor {
        weights: w.mapv(T::of),
        bias,
        transform,
        lambda,
        source: None,
    })
}

impl<T: Scalar> Regressor<T> {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Prediction in the transformed space.
    pub fn decision(&self, x: ArrayView1<T>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        let mut s = self.bias;
        for (w, v) in self.weights.iter().zip(x.iter()) {
            s += w.as_f64() * v.as_f64();
        }
        Ok(s)
    }

    pub fn predict_rows(&self, x: ArrayView2<T>) -> Result<Vec<f64>> {
        x.rows().into_iter().map(|r| predict_value(self, r)).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let desc = RidgeDescriptor {
            kind: "ridge".into(),
            dim: self.dim(),
            lambda: self.lambda,
            transform: self.transform,
            bias: self.bias,
            source: self.source.clone(),
        };
        let payload: Vec<f32> = self.weights.iter().map(|v| v.as_f32()).collect();
        save_model(dir, &desc, &payload)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (d, payload): (RidgeDescriptor, Vec<f32>) = load_model(dir)?;
        if d.kind != "ridge" {
            return Err(Error::parse("model.json", format!("expected a ridge model, found '{}'", d.kind)));
        }
        if payload.len() != d.dim {
            return Err(Error::DimensionMismatch {
                expected: d.dim,
                actual: payload.len(),
            });
        }
        Ok(Self {
            weights: payload.iter().map(|&v| T::of(f64::from(v))).collect(),
            bias: d.bias,
            transform: d.transform,
            lambda: d.lambda,
            source: d.source,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RidgeDescriptor {
    kind: String,
    dim: usize,
    lambda: f64,
    transform: Transform,
    bias: f64,
    source: Option<Provenance>,
}

/// Prediction with the target transform inverted.
pub fn predict_value<T: Scalar>(r: &Regressor<T>, x: ArrayView1<T>) -> Result<f64> {
    Ok(r.transform.inverse(r.decision(x)?))
}

/// Cross-validated relative RMSE for each candidate ridge strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSearch {
    pub lambdas: Vec<f64>,
    pub relative_rmse: Vec<f64>,
    pub best: f64,
}

/// Picks the ridge strength with the lowest k-fold relative RMSE. Works from
/// one Gram matrix, so it is cheap for wide features.
pub fn select_lambda<T: Scalar>(
    x: ArrayView2<T>,
    targets: &[f64],
    lambdas: &[f64],
    folds: usize,
    seed: u64,
    transform: Transform,
) -> Result<LambdaSearch> {
    let n = x.nrows();
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::invalid("candidate ridge strengths must be positive"));
    }
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: targets.len(),
        });
    }
    let z = targets.iter().map(|&y| transform.forward(y)).collect::<Result<Vec<f64>>>()?;
    let assignment = shuffled_folds(n, folds, seed)?;
    // any common shift cancels under per-fold centering; the global mean
    // keeps the Gram entries small
    let shift = column_mean(x).mapv(T::of);
    let xs = &x - &shift.view().insert_axis(Axis(0));
    let gram: Array2<f64> = xs.dot(&xs.t()).mapv(|v| v.as_f64());
    let mut errors = Vec::with_capacity(lambdas.len());
    'lambdas: for &lambda in lambdas {
        let mut pred = vec![0.0; n];
        for f in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let m = train.len();
            // centered Gram of the training rows
            let row_mean: Vec<f64> = (0..n)
                .map(|i| train.iter().map(|&j| gram[[i, j]]).sum::<f64>() / m as f64)
                .collect();
            let grand = train.iter().map(|&i| row_mean[i]).sum::<f64>() / m as f64;
            let mut g = Array2::<f64>::zeros((m, m));
            for (a, &i) in train.iter().enumerate() {
                for (b, &j) in train.iter().enumerate() {
                    g[[a, b]] = gram[[i, j]] - row_mean[i] - row_mean[j] + grand;
                }
                g[[a, a]] += lambda;
            }
            let z_mean = train.iter().map(|&i| z[i]).sum::<f64>() / m as f64;
            let zc = Array1::from_iter(train.iter().map(|&i| z[i] - z_mean));
            // too weak to regularize a rank-deficient Gram in working precision
            let Ok(l) = cholesky(g.view()) else {
                errors.push(f64::INFINITY);
                continue 'lambdas;
            };
            let alpha = cholesky_solve(&l, zc.view().insert_axis(Axis(1))).column(0).to_owned();
            for &t in &test {
                let mut s = z_mean;
                for (a, &i) in train.iter().enumerate() {
                    s += alpha[a] * (gram[[t, i]] - row_mean[t] - row_mean[i] + grand);
                }
                pred[t] = transform.inverse(s);
            }
        }
        errors.push(relative_rmse(&pred, targets)?);
    }
    if errors.iter().all(|e| e.is_infinite()) {
        return Err(Error::Singular("every candidate ridge strength gave a singular system".into()));
    }
    let best_i = errors
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    Ok(LambdaSearch {
        lambdas: lambdas.to_vec(),
        relative_rmse: errors,
        best: lambdas[best_i],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng as _;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut r = crate::rng::rng(seed);
        Array2::from_shape_fn((n, d), |_| r.random_range(-1.0..1.0))
    }

    #[test]
    fn exact_linear_targets_are_interpolated() {
        let x = random(30, 4, 1);
        let w = [0.5, -1.0, 2.0, 0.25];
        let y: Vec<f64> = x.rows().into_iter().map(|r| 3.0 + r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect();
        let m = train_regressor(x.view(), &y, 0.0, Transform::Identity).unwrap();
        for (row, t) in x.rows().into_iter().zip(&y) {
            assert!((predict_value(&m, row).unwrap() - t).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_targets_predict_the_constant() {
        let x = random(10, 20, 2);
        let y = vec![7.5; 10];
        let m = train_regressor(x.view(), &y, 1.0, Transform::Log).unwrap();
        let probe = random(3, 20, 3);
        for row in probe.rows() {
            assert!((predict_value(&m, row).unwrap() - 7.5).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_normal_equation_oracle() {
        for (n, d, seed) in [(40, 6, 4), (8, 25, 5)] {
            let x = random(n, d, seed);
            let y: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
            let lambda = 0.3;
            let m = train_regressor(x.view(), &y, lambda, Transform::Identity).unwrap();
            // augmented system with an unpenalized intercept column
            let a = DMatrix::from_fn(n, d + 1, |i, j| if j == d { 1.0 } else { x[[i, j]] });
            let mut lhs = a.transpose() * &a;
            for j in 0..d {
                lhs[(j, j)] += lambda;
            }
            let rhs = a.transpose() * DVector::from_vec(y.clone());
            let sol = lhs.lu().solve(&rhs).unwrap();
            for j in 0..d {
                assert!((m.weights[j] - sol[j]).abs() <= 1e-6 * sol[j].abs().max(1e-3), "{} vs {}", m.weights[j], sol[j]);
            }
            assert!((m.bias - sol[d]).abs() <= 1e-6 * sol[d].abs().max(1.0));
        }
    }

    #[test]
    fn weight_norm_shrinks_with_lambda() {
        let x = random(30, 5, 6);
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut last = f64::INFINITY;
        for l in [0.1, 10.0, 1000.0] {
            let m = train_regressor(x.view(), &y, l, Transform::Identity).unwrap();
            let norm = m.weights.dot(&m.weights).sqrt();
            assert!(norm < last);
            last = norm;
        }
    }

    #[test]
    fn log_transform_rejects_non_positive_targets() {
        let x = random(4, 2, 7);
        assert!(train_regressor(x.view(), &[1.0, 2.0, 0.0, 3.0], 1.0, Transform::Log).is_err());
    }

    #[test]
    fn lambda_search_matches_explicit_refits() {
        let x = random(24, 40, 8);
        let y: Vec<f64> = (0..24).map(|i| 2.0 + x[[i, 0]] + 0.5 * x[[i, 3]]).collect();
        let s = select_lambda(x.view(), &y, &[0.01, 1.0], 4, 3, Transform::Log).unwrap();
        let folds = shuffled_folds(24, 4, 3).unwrap();
        for (k, &lambda) in s.lambdas.iter().enumerate() {
            let mut pred = vec![0.0; 24];
            for f in 0..4 {
                let tr: Vec<usize> = (0..24).filter(|&i| folds[i] != f).collect();
                let xt = x.select(Axis(0), &tr);
                let yt: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
                let m = train_regressor(xt.view(), &yt, lambda, Transform::Log).unwrap();
                for i in (0..24).filter(|&i| folds[i] == f) {
                    pred[i] = predict_value(&m, x.row(i)).unwrap();
                }
            }
            let e = relative_rmse(&pred, &y).unwrap();
            assert!((e - s.relative_rmse[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let x = random(10, 3, 9);
        let y: Vec<f64> = (1..=10).map(f64::from).collect();
        let m = train_regressor(x.mapv(|v| v as f32).view(), &y, 0.5, Transform::Log).unwrap();
        let dir = tempfile::tempdir().unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(Regressor::<f32>::load(dir.path()).unwrap(), m);
    }
}
