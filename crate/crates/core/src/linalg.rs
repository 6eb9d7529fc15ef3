//! Small dense linear algebra on `(p+1)`-sized systems.
//!
//! Everything that touches `n` goes through ndarray's GEMM; what remains here
//! are factorizations of matrices whose side is the number of regressors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Condition numbers above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Cholesky factorization of a symmetric positive-definite matrix together
/// with its spectral condition number.
#[derive(Debug, Clone)]
pub struct SpdSolver<T> {
    lower: Array2<T>,
    condition: f64,
}

impl<T: Scalar> SpdSolver<T> {
    /// Factors `a`, failing with [`Error::Singular`] labelled by `what` when the
    /// matrix is indefinite or its condition number exceeds [`MAX_CONDITION`].
    pub fn new(a: ArrayView2<T>, what: &str) -> Result<Self> {
        let p = a.nrows();
        if a.ncols() != p {
            return Err(Error::DimensionMismatch { expected: p, found: a.ncols() });
        }
        let singular = |condition: f64| Error::Singular { what: what.to_string(), condition };
        if p == 0 {
            return Ok(Self { lower: Array2::zeros((0, 0)), condition: 1.0 });
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(singular(f64::INFINITY));
        }
        let (eig, _) = sym_eigen(a);
        let max = eig.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        let min = eig.iter().fold(T::infinity(), |m, &v| m.min(v));
        let condition = if min <= T::zero() { f64::INFINITY } else { (max / min).as_f64() };
        if !(condition <= MAX_CONDITION) {
            return Err(singular(condition));
        }
        let lower = cholesky(a).ok_or_else(|| singular(condition))?;
        Ok(Self { lower, condition })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve_vec(&self, b: ArrayView1<T>) -> Array1<T> {
        let mut x = b.to_owned();
        self.solve_in_place(x.view_mut());
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: ArrayView2<T>) -> Array2<T> {
        let mut x = b.to_owned();
        for col in x.axis_iter_mut(Axis(1)) {
            self.solve_in_place(col);
        }
        x
    }

    pub fn inverse(&self) -> Array2<T> {
        let mut inv = self.solve_mat(Array2::eye(self.dim()).view());
        symmetrize(&mut inv);
        inv
    }

    fn solve_in_place(&self, mut x: ndarray::ArrayViewMut1<T>) {
        let l = &self.lower;
        let p = l.nrows();
        for i in 0..p {
            let mut s = x[i];
            for k in 0..i {
                s -= l[[i, k]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        for i in (0..p).rev() {
            let mut s = x[i];
            for k in i + 1..p {
                s -= l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
    }
}

/// Lower Cholesky factor, `None` if a pivot falls below `1e-12` relative to
/// the largest diagonal entry.
pub fn cholesky<T: Scalar>(a: ArrayView2<T>) -> Option<Array2<T>> {
    let p = a.nrows();
    let scale = (0..p).fold(T::zero(), |m, i| m.max(a[[i, i]].abs()));
    let tol = T::lit(1e-12) * scale;
    let mut l = Array2::<T>::zeros((p, p));
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// columns.
pub fn sym_eigen<T: Scalar>(a: ArrayView2<T>) -> (Array1<T>, Array2<T>) {
    let p = a.nrows();
    let mut m = a.to_owned();
    symmetrize(&mut m);
    let mut v = Array2::<T>::eye(p);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let off: T = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let diag: T = (0..p).map(|i| m[[i, i]] * m[[i, i]]).sum();
        if off <= T::epsilon() * T::epsilon() * diag || off == T::zero() {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                let aij = m[[i, j]];
                if aij == T::zero() {
                    continue;
                }
                let theta = (m[[j, j]] - m[[i, i]]) / (two * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - s * mkj;
                    m[[k, j]] = s * mki + c * mkj;
                }
                for k in 0..p {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - s * mjk;
                    m[[j, k]] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| m[[x, x]].partial_cmp(&m[[y, y]]).unwrap_or(std::cmp::Ordering::Equal));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = Array2::from_shape_fn((p, p), |(r, c)| v[[r, order[c]]]);
    (values, vectors)
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize<T: Scalar>(m: &mut Array2<T>) {
    let p = m.nrows();
    let half = T::lit(0.5);
    for i in 0..p {
        for j in i + 1..p {
            let avg = (m[[i, j]] + m[[j, i]]) * half;
            m[[i, j]] = avg;
            m[[j, i]] = avg;
        }
    }
}

/// Symmetric square-root factor `L = U S^{1/2}` of a PSD matrix with negative
/// eigenvalues clipped, so that `L Lᵀ ≈ a`.
pub fn psd_factor<T: Scalar>(a: ArrayView2<T>) -> Array2<T> {
    let (vals, mut vecs) = sym_eigen(a);
    for (mut col, &v) in vecs.axis_iter_mut(Axis(1)).zip(vals.iter()) {
        col *= v.max(T::zero()).sqrt();
    }
    vecs
}
