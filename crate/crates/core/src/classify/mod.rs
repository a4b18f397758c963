//! Supervised models on frozen features: linear SVM, ridge regression,
//! cross-validation and evaluation.

pub mod cv;
pub mod eval;
pub mod ridge;
pub mod svm;

use ndarray::ArrayView2;

use crate::error::Result;
use crate::scalar::Scalar;

pub use cv::{cross_validate, cross_validate_regressor, shuffled_folds, stratified_folds, CvSummary, RegressionCv};
pub use eval::{evaluate, relative_rmse, EvalReport};
pub use ridge::{predict_value, select_lambda, train_regressor, LambdaSearch, Regressor, Transform};
pub use svm::{train_svm, LinearClassifier, SvmConfig};

/// A multi-class backend usable by [`cross_validate`].
pub trait Classifier<T: Scalar>: Sized {
    type Config;

    fn fit(x: ArrayView2<T>, labels: &[String], config: &Self::Config, seed: u64) -> Result<Self>;

    /// Sorted class names; predictions index into this table.
    fn labels(&self) -> &[String];

    fn predict_indices(&self, x: ArrayView2<T>) -> Result<Vec<usize>>;

    fn predict_labels(&self, x: ArrayView2<T>) -> Result<Vec<String>> {
        Ok(self
            .predict_indices(x)?
            .into_iter()
            .map(|i| self.labels()[i].clone())
            .collect())
    }
}
