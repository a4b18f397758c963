//! Small dense linear algebra: symmetric eigen-decomposition and Cholesky solves.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigen-decomposition of a real symmetric matrix.
///
/// Values are sorted in descending order; `vectors` holds the matching unit
/// eigenvectors as rows.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Array1<T>,
    pub vectors: Array2<T>,
}

/// Householder tridiagonalization followed by implicit QL iterations.
pub fn symmetric_eigen<T: Scalar>(a: ArrayView2<T>) -> Result<SymmetricEigen<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid(format!(
            "eigen-decomposition needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(SymmetricEigen {
            values: Array1::zeros(0),
            vectors: Array2::zeros((0, 0)),
        });
    }
    let mut v = a.to_owned();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let mut values = Array1::zeros(n);
    let mut vectors = Array2::zeros((n, n));
    for (row, &src) in order.iter().enumerate() {
        values[row] = d[src];
        for k in 0..n {
            vectors[[row, k]] = v[[k, src]];
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn tridiagonalize<T: Scalar>(v: &mut Array2<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = T::zero();
                v[[j, i]] = T::zero();
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in j + 1..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[[k, j]] -= upd;
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = T::zero();
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[[k, j]] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = T::zero();
    }
    v[[n - 1, n - 1]] = T::one();
    e[0] = T::zero();
}

fn ql_implicit<T: Scalar>(v: &mut Array2<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    const MAX_ITER: usize = 200;
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let two = T::of(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] is zero, so m < n always holds here
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITER {
                    return Err(Error::Singular(
                        "eigenvalue iteration did not converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Scalar>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::invalid("cholesky needs a square matrix"));
    }
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > T::zero()) || !diag.is_finite() {
            return Err(Error::Singular(format!(
                "matrix is not positive definite (pivot {j})"
            )));
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `A X = B` for SPD `A` given its Cholesky factor; `B` is n×m.
pub fn cholesky_solve<T: Scalar>(l: &Array2<T>, b: ArrayView2<T>) -> Array2<T> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for col in 0..x.ncols() {
        for i in 0..n {
            let mut s = x[[i, col]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[[i, col]];
            for k in i + 1..n {
                s -= l[[k, i]] * x[[k, col]];
            }
            x[[i, col]] = s / l[[i, i]];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal_matrix() {
        let a: Array2<f64> = array![[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let eig = symmetric_eigen(a.view()).unwrap();
        assert_eq!(eig.values.to_vec(), vec![3.0, 2.0, 1.0]);
        assert!((eig.vectors[[0, 1]].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a: Array2<f64> = array![[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]];
        let eig = symmetric_eigen(a.view()).unwrap();
        let mut rec = Array2::<f64>::zeros((3, 3));
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    rec[[i, j]] += eig.values[k] * eig.vectors[[k, i]] * eig.vectors[[k, j]];
                }
            }
        }
        for (x, y) in rec.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn one_by_one() {
        let a = array![[5.0f32]];
        let eig = symmetric_eigen(a.view()).unwrap();
        assert_eq!(eig.values[0], 5.0);
        assert_eq!(eig.vectors[[0, 0]].abs(), 1.0);
    }

    #[test]
    fn cholesky_solves_spd_system() {
        let a: Array2<f64> = array![[4.0, 2.0], [2.0, 3.0]];
        let b = array![[2.0], [1.0]];
        let l = cholesky(a.view()).unwrap();
        let x = cholesky_solve(&l, b.view());
        assert!((4.0 * x[[0, 0]] + 2.0 * x[[1, 0]] - 2.0).abs() < 1e-12);
        assert!((2.0 * x[[0, 0]] + 3.0 * x[[1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(cholesky(a.view()), Err(Error::Singular(_))));
    }
}
