use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::classify::eval::{evaluate, relative_rmse, EvalReport};
use crate::classify::ridge::{predict_value, train_regressor, Transform};
use crate::classify::Classifier;
use crate::error::{Error, Result};
use crate::rng::{derive_named, derive_seed, rng};
use crate::scalar::Scalar;

fn check_folds(n: usize, folds: usize) -> Result<()> {
    if folds < 2 || folds > n {
        return Err(Error::invalid(format!("folds = {folds} must lie in 2..={n}")));
    }
    Ok(())
}

/// Fold index per sample: a seeded shuffle dealt round-robin.
pub fn shuffled_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    check_folds(n, folds)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(derive_named(seed, "folds")));
    let mut out = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

/// Fold index per sample: each class shuffled, classes concatenated in label
/// order, then dealt round-robin, so every fold sees every class and fold
/// sizes differ by at most one.
pub fn stratified_folds<L: Ord>(labels: &[L], folds: usize, seed: u64) -> Result<Vec<usize>> {
    check_folds(labels.len(), folds)?;
    let mut classes: Vec<&L> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let mut r = rng(derive_named(seed, "folds"));
    let mut order = Vec::with_capacity(labels.len());
    for c in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == *c).collect();
        members.shuffle(&mut r);
        order.extend(members);
    }
    let mut out = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: Vec<EvalReport>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// Stratified k-fold cross-validation of any classifier backend.
pub fn cross_validate<T: Scalar, C: Classifier<T>>(
    x: ArrayView2<T>,
    labels: &[String],
    folds: usize,
    seed: u64,
    config: &C::Config,
) -> Result<CvSummary> {
    if labels.len() != x.nrows() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            actual: labels.len(),
        });
    }
    let assignment = stratified_folds(labels, folds, seed)?;
    let mut reports = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let train_labels: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
        let model = C::fit(x.select(Axis(0), &train).view(), &train_labels, config, derive_seed(seed, f as u64))?;
        let pred = model.predict_labels(x.select(Axis(0), &test).view())?;
        let truth: Vec<String> = test.iter().map(|&i| labels[i].clone()).collect();
        reports.push(evaluate(&pred, &truth)?);
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&acc);
    Ok(CvSummary {
        folds: reports,
        mean_accuracy,
        std_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCv {
    pub fold_relative_rmse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Shuffled k-fold cross-validation of ridge regression.
pub fn cross_validate_regressor<T: Scalar>(
    x: ArrayView2<T>,
    targets: &[f64],
    folds: usize,
    seed: u64,
    lambda: f64,
    transform: Transform,
) -> Result<RegressionCv> {
    let assignment = shuffled_folds(targets.len(), folds, seed)?;
    let mut errors = Vec::with_capacity(folds);
    for f in 0..folds {
        let train: Vec<usize> = (0..targets.len()).filter(|&i| assignment[i] != f).collect();
        let test: Vec<usize> = (0..targets.len()).filter(|&i| assignment[i] == f).collect();
        let ty: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
        let m = train_regressor(x.select(Axis(0), &train).view(), &ty, lambda, transform)?;
        let pred = test
            .iter()
            .map(|&i| predict_value(&m, x.row(i)))
            .collect::<Result<Vec<f64>>>()?;
        let truth: Vec<f64> = test.iter().map(|&i| targets[i]).collect();
        errors.push(relative_rmse(&pred, &truth)?);
    }
    let (mean, std) = mean_std(&errors);
    Ok(RegressionCv {
        fold_relative_rmse: errors,
        mean,
        std,
    })
}
