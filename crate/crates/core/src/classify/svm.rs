//! One-vs-rest linear SVM trained by mini-batch subgradient descent.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::Classifier;
use crate::dataio::store::{load_model, save_model};
use crate::error::{Error, Result};
use crate::features::Provenance;
use crate::rng::{derive_seed, rng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Inverse regularization: `λ = 1 / (C · N)`.
    pub c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Scale each feature to unit variance instead of one global scale.
    #[serde(default)]
    pub standardize: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.5,
            standardize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier<T> {
    /// Class names, sorted; row `k` of `weights` scores class `k`.
    pub labels: Vec<String>,
    pub weights: Array2<T>,
    pub bias: Vec<f64>,
    pub config: SvmConfig,
    pub seed: u64,
    pub training_accuracy: f64,
    /// Objective after each accepted epoch, per class, starting at the initial value.
    pub objective_history: Vec<Vec<f64>>,
    pub source: Option<Provenance>,
}

/// Training coordinates `x̃ = (x − μ) ⊙ s`.
struct Prepared<'a, T> {
    x: ArrayView2<'a, T>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl<T: Scalar> Prepared<'_, T> {
    /// Maps prepared-space weights to raw-space weights `w ⊙ s` and the
    /// offset `−(w ⊙ s) · μ`.
    fn unfold(&self, w: &[f64]) -> (Vec<f64>, f64) {
        let raw: Vec<f64> = w.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        let offset = -raw.iter().zip(&self.mean).map(|(a, m)| a * m).sum::<f64>();
        (raw, offset)
    }

    /// `w · x̃_i`, given the unfolded weights.
    fn dot(&self, i: usize, raw: &(Vec<f64>, f64)) -> f64 {
        let row = self.x.row(i);
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(&raw.0) {
            acc += a.as_f64() * b;
        }
        acc + raw.1
    }

    fn axpy(&self, i: usize, alpha: f64, out: &mut [f64]) {
        let row = self.x.row(i);
        for (((o, v), m), s) in out.iter_mut().zip(row.iter()).zip(&self.mean).zip(&self.scale) {
            *o += alpha * s * (v.as_f64() - m);
        }
    }
}

fn objective<T: Scalar>(p: &Prepared<T>, y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let raw = p.unfold(w);
    let hinge: f64 = (0..y.len()).map(|i| (1.0 - y[i] * (p.dot(i, &raw) + b)).max(0.0)).sum();
    0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>() + hinge / y.len() as f64
}

/// Binary problem with labels in {−1, +1}. Returns weights and bias in the
/// prepared coordinates plus the objective history.
fn train_binary<T: Scalar>(p: &Prepared<T>, y: &[f64], config: &SvmConfig, seed: u64) -> (Vec<f64>, f64, Vec<f64>) {
    let n = y.len();
    let dim = p.x.ncols();
    let lambda = 1.0 / (config.c * n as f64);
    let batch = config.batch_size.clamp(1, n);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = objective(p, y, &w, b, lambda);
    let mut history = vec![best];
    let mut lr = config.learning_rate;
    let mut r = rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; dim];
    for _ in 0..config.epochs {
        let (w0, b0) = (w.clone(), b);
        order.shuffle(&mut r);
        for chunk in order.chunks(batch) {
            let raw = p.unfold(&w);
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            let scale = 1.0 / chunk.len() as f64;
            for &i in chunk {
                if y[i] * (p.dot(i, &raw) + b) < 1.0 {
                    p.axpy(i, y[i] * scale, &mut grad);
                    gb += y[i] * scale;
                }
            }
            for (wv, g) in w.iter_mut().zip(&grad) {
                *wv += lr * (g - lambda * *wv);
            }
            b += lr * gb;
        }
        let f = objective(p, y, &w, b, lambda);
        if f <= best {
            best = f;
        } else {
            w = w0;
            b = b0;
            lr *= 0.5;
        }
        history.push(best);
    }
    (w, b, history)
}

/// Trains one binary machine per class (sorted label order). Features are
/// centred and rescaled before training, either globally to unit mean squared
/// norm or per feature to unit variance; the stored weights act on raw features.
pub fn train_svm<T: Scalar>(
    x: ArrayView2<T>,
    labels: &[String],
    config: &SvmConfig,
    seed: u64,
) -> Result<LinearClassifier<T>> {
    let (n, dim) = x.dim();
    if n != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if dim == 0 {
        return Err(Error::invalid("cannot train on zero-width features"));
    }
    if !(config.c > 0.0) || !(config.learning_rate > 0.0) || config.batch_size == 0 {
        return Err(Error::invalid("C, learning rate and batch size must be positive"));
    }
    let mut classes: Vec<String> = labels.to_vec();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("classification needs at least two classes"));
    }

    let mut mean = vec![0.0; dim];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row.iter()) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = vec![0.0; dim];
    for row in x.rows() {
        for ((s, v), m) in ss.iter_mut().zip(row.iter()).zip(&mean) {
            *s += (v.as_f64() - m).powi(2);
        }
    }
    let inv = |ms: f64| if ms > 0.0 { 1.0 / ms.sqrt() } else { 1.0 };
    let scale = if config.standardize {
        ss.iter().map(|s| inv(s / n as f64)).collect()
    } else {
        vec![inv(ss.iter().sum::<f64>() / n as f64); dim]
    };
    let p = Prepared { x, mean, scale };

    let k = classes.len();
    let mut weights = Array2::<T>::zeros((k, dim));
    let mut bias = vec![0.0; k];
    let mut objective_history = Vec::with_capacity(k);
    for (ci, c) in classes.iter().enumerate() {
        let y: Vec<f64> = labels.iter().map(|l| if l == c { 1.0 } else { -1.0 }).collect();
        let (w, b, hist) = train_binary(&p, &y, config, derive_seed(seed, ci as u64));
        let (raw, offset) = p.unfold(&w);
        for (dst, v) in weights.row_mut(ci).iter_mut().zip(&raw) {
            *dst = T::of(*v);
        }
        bias[ci] = b + offset;
        objective_history.push(hist);
    }
    let mut model = LinearClassifier {
        labels: classes,
        weights,
        bias,
        config: *config,
        seed,
        training_accuracy: 0.0,
        objective_history,
        source: None,
    };
    let pred = model.predict(x)?;
    let correct = pred.iter().zip(labels).filter(|(p, l)| model.labels[**p] == **l).count();
    model.training_accuracy = correct as f64 / n as f64;
    Ok(model)
}

#[derive(Debug, Serialize, Deserialize)]
struct SvmDescriptor {
    kind: String,
    labels: Vec<String>,
    dim: usize,
    bias: Vec<f64>,
    config: SvmConfig,
    seed: u64,
    training_accuracy: f64,
    objective_history: Vec<Vec<f64>>,
    source: Option<Provenance>,
}

impl<T: Scalar> LinearClassifier<T> {
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    /// `w_k · x + b_k` for one sample.
    pub fn scores(&self, x: ArrayView1<T>) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(Array1::from_iter(self.weights.rows().into_iter().zip(&self.bias).map(|(w, b)| {
            w.iter().zip(x.iter()).map(|(a, v)| a.as_f64() * v.as_f64()).sum::<f64>() + b
        })))
    }

    pub fn decision_scores(&self, x: ArrayView2<T>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.labels.len()));
        for (i, row) in x.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&self.scores(row)?);
        }
        Ok(out)
    }

    /// Index of the top score per row; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        let s = self.decision_scores(x)?;
        Ok(s.rows().into_iter().map(|r| argmax(r.as_slice().expect("row"))).collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let desc = SvmDescriptor {
            kind: "svm".into(),
            labels: self.labels.clone(),
            dim: self.dim(),
            bias: self.bias.clone(),
            config: self.config,
            seed: self.seed,
            training_accuracy: self.training_accuracy,
            objective_history: self.objective_history.clone(),
            source: self.source.clone(),
        };
        let payload: Vec<f32> = self.weights.iter().map(|v| v.as_f32()).collect();
        save_model(dir, &desc, &payload)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (desc, payload): (SvmDescriptor, Vec<f32>) = load_model(dir)?;
        if desc.kind != "svm" {
            return Err(Error::parse("model.json", format!("expected an svm model, found '{}'", desc.kind)));
        }
        let k = desc.labels.len();
        if payload.len() != k * desc.dim || desc.bias.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k * desc.dim,
                actual: payload.len(),
            });
        }
        Ok(Self {
            weights: Array2::from_shape_vec((k, desc.dim), payload.into_iter().map(|v| T::of(f64::from(v))).collect())
                .map_err(|e| Error::invalid(e.to_string()))?,
            labels: desc.labels,
            bias: desc.bias,
            config: desc.config,
            seed: desc.seed,
            training_accuracy: desc.training_accuracy,
            objective_history: desc.objective_history,
            source: desc.source,
        })
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Classifier<T> for LinearClassifier<T> {
    type Config = SvmConfig;

    fn fit(x: ArrayView2<T>, labels: &[String], config: &SvmConfig, seed: u64) -> Result<Self> {
        train_svm(x, labels, config, seed)
    }

    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn predict_indices(&self, x: ArrayView2<T>) -> Result<Vec<usize>> {
        self.predict(x)
    }
}
