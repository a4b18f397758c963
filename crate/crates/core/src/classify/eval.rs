use std::collections::BTreeSet;
use std::fmt::Display;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub support: Vec<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Report from a confusion matrix.
    pub fn from_confusion(labels: Vec<String>, confusion: Vec<Vec<usize>>) -> Result<Self> {
        let k = labels.len();
        if confusion.len() != k || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square over the label table"));
        }
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
        let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
        let col: Vec<usize> = (0..k).map(|j| confusion.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            accuracy: ratio(trace, total),
            precision: (0..k).map(|c| ratio(confusion[c][c], col[c])).collect(),
            recall: (0..k).map(|c| ratio(confusion[c][c], support[c])).collect(),
            labels,
            confusion,
            support,
        })
    }
}

/// Compares predictions with truth over the sorted union of their labels.
pub fn evaluate<L: Ord + Display>(predicted: &[L], truth: &[L]) -> Result<EvalReport> {
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::invalid("cannot evaluate zero predictions"));
    }
    let table: Vec<&L> = predicted.iter().chain(truth).collect::<BTreeSet<_>>().into_iter().collect();
    let index = |l: &L| table.binary_search(&l).expect("label in table");
    let k = table.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, t) in predicted.iter().zip(truth) {
        confusion[index(t)][index(p)] += 1;
    }
    EvalReport::from_confusion(table.iter().map(|l| l.to_string()).collect(), confusion)
}

/// Root mean square of `(prediction − truth) / truth`.
pub fn relative_rmse(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    if truth.contains(&0.0) {
        return Err(Error::invalid("relative error undefined for zero targets"));
    }
    let ms = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| ((p - t) / t).powi(2))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(ms.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn all_correct() {
        let r = evaluate(&["a", "b", "b"], &["a", "b", "b"]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0], vec![0, 2]]);
    }

    #[test]
    fn binary_all_wrong() {
        let r = evaluate(&[1, 0, 0], &[0, 1, 1]).unwrap();
        assert_eq!(r.accuracy, 0.0);
        assert_eq!(r.confusion, vec![vec![0, 1], vec![2, 0]]);
    }

    #[test]
    fn nine_of_ten() {
        let truth = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let mut pred = truth;
        pred[3] = 1;
        let r = evaluate(&pred, &truth).unwrap();
        assert!((r.accuracy - 0.9).abs() < 1e-15);
        assert_eq!(r.precision[1], 5.0 / 6.0);
        assert_eq!(r.recall[0], 0.8);
    }

    #[test]
    fn vacuous_precision_is_one() {
        let r = EvalReport::from_confusion(vec!["a".into(), "b".into()], vec![vec![2, 0], vec![1, 0]]).unwrap();
        assert_eq!(r.precision[1], 1.0);
        assert_eq!(r.recall[1], 0.0);
        assert!(evaluate::<u8>(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn relative_rmse_values() {
        assert!((relative_rmse(&[1.1, 0.9], &[1.0, 1.0]).unwrap() - 0.1).abs() < 1e-12);
        assert!((relative_rmse(&[3.0], &[2.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..60)) {
            let (pred, truth): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let r = evaluate(&pred, &truth).unwrap();
            let k = r.labels.len();
            let total: usize = r.confusion.iter().flatten().sum();
            let trace: usize = (0..k).map(|i| r.confusion[i][i]).sum();
            prop_assert_eq!(r.accuracy, trace as f64 / total as f64);
            for c in 0..k {
                let label: u8 = r.labels[c].parse().unwrap();
                let tp = pred.iter().zip(&truth).filter(|(p, t)| **p == label && **t == label).count();
                let pp = pred.iter().filter(|p| **p == label).count();
                let tt = truth.iter().filter(|t| **t == label).count();
                prop_assert_eq!(r.support[c], tt);
                prop_assert_eq!(r.precision[c], if pp == 0 { 1.0 } else { tp as f64 / pp as f64 });
                prop_assert_eq!(r.recall[c], if tt == 0 { 1.0 } else { tp as f64 / tt as f64 });
            }
        }
    }
}
