//! Principal component analysis of feature vectors.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataio::store::{load_model, save_model};
use crate::error::{Error, Result};
use crate::features::vector::{uniform_provenance, Encoding, FeatureVector, Provenance};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    pub mean: Array1<T>,
    /// `d × D`, orthonormal rows.
    pub components: Array2<T>,
    /// Variance along each component.
    pub explained_variance: Array1<T>,
    pub explained_variance_ratio: Array1<T>,
    /// Provenance of the vectors the model was fit on.
    pub source: Provenance,
}

/// Fits `d` components to vectors of uniform provenance.
pub fn fit_pca<T: Scalar>(vectors: &[FeatureVector], d: usize) -> Result<PcaModel<T>> {
    let prov = uniform_provenance(vectors)?.clone();
    let dim = vectors[0].dim();
    let mut x = Array2::<T>::zeros((vectors.len(), dim));
    for (mut row, v) in x.rows_mut().into_iter().zip(vectors) {
        for (o, &val) in row.iter_mut().zip(&v.values) {
            *o = T::of(f64::from(val));
        }
    }
    fit_pca_matrix(x.view(), None, d, prov)
}

/// Fits on the rows of `x`, optionally weighting each row (a weight of 2 is
/// the same as including the row twice).
pub fn fit_pca_matrix<T: Scalar>(
    x: ArrayView2<T>,
    weights: Option<&[T]>,
    d: usize,
    source: Provenance,
) -> Result<PcaModel<T>> {
    let (n, dim) = x.dim();
    let w: Vec<T> = match weights {
        Some(w) if w.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: w.len(),
            })
        }
        Some(w) if w.iter().any(|v| !(*v > T::zero())) => {
            return Err(Error::invalid("weights must be positive"))
        }
        Some(w) => w.to_vec(),
        None => vec![T::one(); n],
    };
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two vectors"));
    }
    let total_w: T = w.iter().copied().sum();
    let max_d = n.min(dim).min((total_w.as_f64() - 1.0).floor().max(0.0) as usize);
    if d == 0 || d > max_d {
        return Err(Error::invalid(format!(
            "PCA dimension {d} must lie in 1..={max_d} for {n} vectors of dimension {dim}"
        )));
    }
    let mut mean = Array1::<T>::zeros(dim);
    for (row, &wi) in x.rows().into_iter().zip(&w) {
        mean.scaled_add(wi, &row);
    }
    mean.mapv_inplace(|v| v / total_w);
    // rows scaled by sqrt(w) so that XᵀX is the weighted scatter
    let mut xc = x.to_owned();
    for (mut row, &wi) in xc.rows_mut().into_iter().zip(&w) {
        let s = wi.sqrt();
        row.zip_mut_with(&mean, |v, &m| *v = (*v - m) * s);
    }
    let denom = total_w - T::one();
    let total_var: T = xc.iter().map(|v| *v * *v).sum::<T>() / denom;

    let (values, mut components) = if dim <= n {
        let scatter = xc.t().dot(&xc);
        let eig = symmetric_eigen(scatter.view())?;
        (
            eig.values.slice(ndarray::s![..d]).to_owned(),
            eig.vectors.slice(ndarray::s![..d, ..]).to_owned(),
        )
    } else {
        let gram = xc.dot(&xc.t());
        let eig = symmetric_eigen(gram.view())?;
        let mut comps = Array2::<T>::zeros((d, dim));
        let floor = eig.values[0].abs() * T::epsilon() * T::of_usize(n) * T::of(16.0);
        for i in 0..d {
            let lambda = eig.values[i];
            if lambda > floor {
                let v = xc.t().dot(&eig.vectors.row(i)) / lambda.sqrt();
                comps.row_mut(i).assign(&v);
            }
        }
        (eig.values.slice(ndarray::s![..d]).to_owned(), comps)
    };
    orthonormalize(&mut components);
    canonicalize_signs(&mut components);

    let explained_variance = values.mapv(|v| v.max(T::zero()) / denom);
    let explained_variance_ratio = if total_var > T::zero() {
        explained_variance.mapv(|v| v / total_var)
    } else {
        Array1::zeros(d)
    };
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        explained_variance_ratio,
        source,
    })
}

/// Modified Gram-Schmidt, applied twice; rows that vanish are replaced by the
/// standard basis vector with the largest residual.
fn orthonormalize<T: Scalar>(c: &mut Array2<T>) {
    let (d, dim) = c.dim();
    let project_out = |c: &mut Array2<T>, i: usize| {
        for _ in 0..2 {
            for j in 0..i {
                let proj = c.row(i).dot(&c.row(j));
                let rj = c.row(j).to_owned();
                c.row_mut(i).scaled_add(-proj, &rj);
            }
        }
        c.row(i).dot(&c.row(i)).sqrt()
    };
    for i in 0..d {
        let mut norm = project_out(c, i);
        if !(norm > T::of(1e-3)) {
            let mut best = (T::neg_infinity(), 0);
            for k in 0..dim {
                let resid = T::one() - (0..i).map(|j| c[[j, k]] * c[[j, k]]).sum::<T>();
                if resid > best.0 {
                    best = (resid, k);
                }
            }
            c.row_mut(i).fill(T::zero());
            c[[i, best.1]] = T::one();
            norm = project_out(c, i);
        }
        c.row_mut(i).mapv_inplace(|v| v / norm);
    }
}

/// Makes the largest-magnitude entry of every row positive.
fn canonicalize_signs<T: Scalar>(c: &mut Array2<T>) {
    for mut row in c.rows_mut() {
        let mut best = (T::zero(), T::zero());
        for &v in row.iter() {
            if v.abs() > best.0 {
                best = (v.abs(), v);
            }
        }
        if best.1 < T::zero() {
            row.mapv_inplace(|v| -v);
        }
    }
}

impl<T: Scalar> PcaModel<T> {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn encoding(&self) -> Encoding {
        Encoding::Pca(self.dim())
    }

    /// `(x − mean) · componentsᵀ`.
    pub fn project(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(self.components.dot(&(&x - &self.mean)))
    }

    pub fn project_rows(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let centered = &x - &self.mean.view().insert_axis(Axis(0));
        Ok(centered.dot(&self.components.t()))
    }

    /// `mean + projᵀ · components`.
    pub fn reconstruct(&self, proj: ArrayView1<T>) -> Array1<T> {
        &self.mean + &self.components.t().dot(&proj)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let desc = PcaDescriptor {
            kind: "pca".into(),
            source: self.source.clone(),
            input_dim: self.input_dim(),
            dim: self.dim(),
            explained_variance: self.explained_variance.iter().map(|v| v.as_f64()).collect(),
            explained_variance_ratio: self.explained_variance_ratio.iter().map(|v| v.as_f64()).collect(),
        };
        let payload: Vec<f32> = self.mean.iter().chain(self.components.iter()).map(|v| v.as_f32()).collect();
        save_model(dir, &desc, &payload)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (desc, payload): (PcaDescriptor, Vec<f32>) = load_model(dir)?;
        if desc.kind != "pca" {
            return Err(Error::parse("model.json", format!("expected a pca model, found '{}'", desc.kind)));
        }
        let expected = desc.input_dim * (desc.dim + 1);
        if payload.len() != expected || desc.explained_variance.len() != desc.dim {
            return Err(Error::DimensionMismatch {
                expected,
                actual: payload.len(),
            });
        }
        let conv = |v: &[f32]| v.iter().map(|&x| T::of(f64::from(x))).collect::<Vec<T>>();
        Ok(Self {
            mean: Array1::from(conv(&payload[..desc.input_dim])),
            components: Array2::from_shape_vec((desc.dim, desc.input_dim), conv(&payload[desc.input_dim..]))
                .map_err(|e| Error::invalid(e.to_string()))?,
            explained_variance: desc.explained_variance.iter().map(|&v| T::of(v)).collect(),
            explained_variance_ratio: desc.explained_variance_ratio.iter().map(|&v| T::of(v)).collect(),
            source: desc.source,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PcaDescriptor {
    kind: String,
    source: Provenance,
    input_dim: usize,
    dim: usize,
    explained_variance: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
}

/// Projects one vector; the result carries encoding `pca-d`.
pub fn apply_pca<T: Scalar>(model: &PcaModel<T>, v: &FeatureVector) -> Result<FeatureVector> {
    if v.provenance != model.source {
        return Err(Error::ProvenanceMismatch(format!(
            "model was fit on {}/{}/{}, vector is {}/{}/{}",
            model.source.backbone,
            model.source.layer,
            model.source.encoding,
            v.provenance.backbone,
            v.provenance.layer,
            v.provenance.encoding
        )));
    }
    let x: Array1<T> = v.values.iter().map(|&x| T::of(f64::from(x))).collect();
    let p = model.project(x.view())?;
    FeatureVector::new(
        p.iter().map(|v| v.as_f32()).collect(),
        Provenance {
            encoding: model.encoding(),
            ..model.source.clone()
        },
    )
}
