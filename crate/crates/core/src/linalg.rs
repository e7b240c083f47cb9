//! Dense helpers shared by the design and recovery code.
//!
//! Everything here works on `nalgebra` dynamic matrices. Eigendecompositions
//! are always returned sorted by descending eigenvalue with each eigenvector
//! sign-canonicalized (largest-magnitude entry positive, first index on ties),
//! so results are reproducible regardless of the order the solver emits.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Symmetric eigendecomposition sorted by descending eigenvalue.
#[derive(Debug, Clone)]
pub struct SortedEigen {
    pub values: DVector<f64>,
    /// Eigenvectors as columns, in the same order as `values`.
    pub vectors: DMatrix<f64>,
}

impl SortedEigen {
    pub fn new(sym: &DMatrix<f64>) -> Self {
        let n = sym.nrows();
        let eig = SymmetricEigen::new(symmetrize(sym));
        let mut order: Vec<usize> = (0..n).collect();
        // stable sort keeps the solver's order on exact ties
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (k, &i) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(i).clone_owned();
            canonicalize_sign(&mut col);
            vectors.set_column(k, &col);
        }
        Self { values, vectors }
    }

    pub fn largest(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0]
        }
    }

    pub fn smallest(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[self.values.len() - 1]
        }
    }
}

/// Flip `v` so its largest-magnitude entry is positive.
pub fn canonicalize_sign(v: &mut DVector<f64>) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc: f64, x| acc.max(x.abs()))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Solve `s * X = rhs` for symmetric positive definite `s`.
pub fn spd_solve(s: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("Cholesky factorization failed".into()))?;
    Ok(chol.solve(rhs))
}

/// `Σ^{p}` for symmetric PSD `Σ` via its eigendecomposition. Negative
/// powers require strictly positive eigenvalues.
pub fn sym_power(eig: &SortedEigen, power: f64) -> Result<DMatrix<f64>> {
    let n = eig.values.len();
    // eigenvalues at roundoff level are treated as exact zeros
    let floor = n as f64 * f64::EPSILON * eig.largest().max(0.0);
    let mut scaled = eig.vectors.clone();
    for k in 0..n {
        let lam = if eig.values[k] <= floor { 0.0 } else { eig.values[k] };
        let f = if power < 0.0 {
            if lam <= 0.0 {
                return Err(Error::Singular {
                    smallest: eig.smallest(),
                    largest: eig.largest(),
                });
            }
            libm::pow(lam, power)
        } else if lam == 0.0 {
            0.0
        } else {
            libm::pow(lam, power)
        };
        scaled.column_mut(k).scale_mut(f);
    }
    Ok(symmetrize(&(&scaled * eig.vectors.transpose())))
}

/// Largest squared singular value of `m`, by power iteration on `m'm`.
pub fn spectral_norm_sq(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let p = m.ncols();
    if p == 0 || m.nrows() == 0 {
        return 0.0;
    }
    let gram = m.transpose() * m;
    // deterministic start with no special alignment to coordinate axes
    let mut v = DVector::from_iterator(p, (0..p).map(|i| 1.0 + (i as f64) * 1e-3));
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - est).abs() <= rel_tol * next.abs() {
            // Rayleigh quotient converges from below; pad by the tolerance
            return next.max(norm) * (1.0 + rel_tol);
        }
        est = next;
    }
    est.max(0.0) * (1.0 + rel_tol)
}

pub(crate) fn check_square(m: &DMatrix<f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(invalid!("{what} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    Ok(m.nrows())
}
