//! Small symmetric-matrix routines: covariance, Jacobi eigensolver, PSD square root.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor2;

/// Square row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::shape(format!("{} values for a {n}x{n} matrix", data.len())));
        }
        Ok(SquareMatrix { n, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max(math::abs(self.get(i, j) - self.get(j, i)));
            }
        }
        worst
    }

    pub fn frobenius(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn scaled(&self, s: f64) -> Self {
        SquareMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn mul(&self, other: &SquareMatrix) -> SquareMatrix {
        let n = self.n;
        let mut out = SquareMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> SquareMatrix {
        let mut out = SquareMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }
}

/// Biased (divide-by-N) covariance, computed as the mean of outer products
/// of centered rows.
pub fn covariance(x: &Tensor2) -> Result<SquareMatrix> {
    if x.rows() < 2 {
        return Err(Error::shape("covariance needs at least two rows"));
    }
    let d = x.cols();
    let mean = x.column_means();
    let mut cov = SquareMatrix::zeros(d);
    let mut centered = vec![0.0; d];
    for row in x.row_iter() {
        for ((c, v), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = v - m;
        }
        for i in 0..d {
            for j in i..d {
                cov.data[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    let n = x.rows() as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov.get(i, j) / n;
            cov.set(i, j, v);
            cov.set(j, i, v);
        }
    }
    Ok(cov)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: SquareMatrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.dim()).map(|i| self.vectors.get(i, k)).collect()
    }
}

/// Cyclic Jacobi rotations until the off-diagonal mass is negligible.
pub fn symmetric_eigen(a: &SquareMatrix) -> Result<SymmetricEigen> {
    let n = a.dim();
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    if a.max_asymmetry() > 1e-9 * scale.max(1.0) {
        return Err(Error::numeric("matrix is not symmetric"));
    }
    let mut m = a.clone();
    let mut v = SquareMatrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum();
        if math::sqrt(off) <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if math::abs(apq) <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, k, v.get(i, src));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Symmetric factor `L` with `L·Lᵀ = C` for a PSD matrix.
///
/// Eigenvalues in `[-1e-9·scale, 0)` are clamped to zero; anything more
/// negative is rejected as indefinite.
pub fn psd_sqrt(c: &SquareMatrix) -> Result<SquareMatrix> {
    let eig = symmetric_eigen(c)?;
    let n = c.dim();
    let scale = eig.values.first().copied().unwrap_or(0.0).abs().max(1.0);
    if let Some(&neg) = eig.values.iter().find(|&&l| l < -1e-9 * scale) {
        return Err(Error::numeric(format!("covariance is indefinite (eigenvalue {neg:e})")));
    }
    let mut out = SquareMatrix::zeros(n);
    for k in 0..n {
        let s = math::sqrt(eig.values[k].max(0.0));
        if s == 0.0 {
            continue;
        }
        for i in 0..n {
            let vik = eig.vectors.get(i, k) * s;
            for j in 0..n {
                out.data[i * n + j] += vik * eig.vectors.get(j, k);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_of_two_points() {
        let x = Tensor2::from_vec(2, 1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(covariance(&x).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn eigen_of_diagonalizable_2x2() {
        let a = SquareMatrix::from_vec(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let v0 = e.vector(0);
        assert!((v0[0].abs() - v0[1].abs()).abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = SquareMatrix::from_vec(3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        let l = psd_sqrt(&a).unwrap();
        let back = l.mul(&l.transpose());
        for (x, y) in back.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = SquareMatrix::from_vec(2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(psd_sqrt(&a), Err(Error::Numeric(_))));
    }

    #[test]
    fn zero_matrix_gives_identity_vectors() {
        let e = symmetric_eigen(&SquareMatrix::zeros(3)).unwrap();
        assert_eq!(e.vectors, SquareMatrix::identity(3));
    }
}
