//! Dense Gaussian elimination with an explicit tolerance policy.
//!
//! Everything here is deterministic: partial pivoting picks the first row
//! attaining the largest magnitude, so identical inputs give bit-identical
//! outputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{axpy, max_abs, DenseMatrix};
use crate::tolerance::TolerancePolicy;

/// Reduced row echelon form together with the pivot columns, in order.
#[derive(Debug, Clone)]
pub(crate) struct Echelon {
    pub reduced: DenseMatrix,
    pub pivots: Vec<usize>,
}

pub(crate) fn reduced_row_echelon(m: &DenseMatrix, rank_tol: f64) -> Echelon {
    let mut a = m.clone();
    let (rows, cols) = (a.rows(), a.cols());
    let threshold = rank_tol * a.max_abs();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let mut best = r;
        let mut best_abs = libm::fabs(a[(r, c)]);
        for i in r + 1..rows {
            let v = libm::fabs(a[(i, c)]);
            if v > best_abs {
                best = i;
                best_abs = v;
            }
        }
        if best_abs <= threshold || best_abs == 0.0 {
            for i in r..rows {
                a[(i, c)] = 0.0;
            }
            continue;
        }
        a.swap_rows(r, best);
        let inv = 1.0 / a[(r, c)];
        for x in &mut a.row_mut(r)[c..] {
            *x *= inv;
        }
        a[(r, c)] = 1.0;
        let pivot_row: Vec<f64> = a.row(r)[c..].to_vec();
        for i in 0..rows {
            if i == r {
                continue;
            }
            let f = a[(i, c)];
            if f != 0.0 {
                axpy(-f, &pivot_row, &mut a.row_mut(i)[c..]);
                a[(i, c)] = 0.0;
            }
        }
        pivots.push(c);
        r += 1;
    }
    // rows below the rank are numerically zero
    for i in r..rows {
        a.row_mut(i).iter_mut().for_each(|x| *x = 0.0);
    }
    Echelon { reduced: a, pivots }
}

/// Numerical rank by Gaussian elimination with partial pivoting.
///
/// A pivot counts iff `|pivot| > rank_tol * max|M|` (the maximum taken over
/// the input, before elimination).
pub fn rank(m: &DenseMatrix, tol: &TolerancePolicy) -> Result<usize> {
    if m.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(reduced_row_echelon(m, tol.rank_tol).pivots.len())
}

/// Basis of `{v : M v = 0}`, one row per free column of the reduced echelon
/// form. Each row is rescaled so its largest-magnitude entry is `1`.
pub fn null_space(m: &DenseMatrix, tol: &TolerancePolicy) -> Result<DenseMatrix> {
    if m.is_empty() {
        return Err(Error::EmptyInput);
    }
    let ech = reduced_row_echelon(m, tol.rank_tol);
    Ok(null_space_from_echelon(&ech, m.cols()))
}

fn null_space_from_echelon(ech: &Echelon, cols: usize) -> DenseMatrix {
    let mut is_pivot = vec![false; cols];
    for &p in &ech.pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = (0..cols).filter(|&c| !is_pivot[c]).collect();
    let mut basis = DenseMatrix::zeros(free.len(), cols);
    for (k, &f) in free.iter().enumerate() {
        let row = basis.row_mut(k);
        row[f] = 1.0;
        for (r, &p) in ech.pivots.iter().enumerate() {
            row[p] = -ech.reduced[(r, f)];
        }
        let scale = max_abs(row);
        row.iter_mut().for_each(|x| *x /= scale);
    }
    basis
}

/// Orthogonal complement of the span of sample rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalComplement {
    /// `m̂ × n`; every row is orthogonal to every sample.
    pub basis: DenseMatrix,
    /// Set when an expected dimension was given and `m̂` differs from it.
    pub insufficient_samples: bool,
}

impl OrthogonalComplement {
    pub fn dimension(&self) -> usize {
        self.basis.rows()
    }
}

/// Builds `A` with `A xᵀ ≈ 0` for every sample row `x`.
///
/// A dimension mismatch against `expected_dim` is reported through
/// [`OrthogonalComplement::insufficient_samples`] so callers can draw more
/// samples and retry.
pub fn orthogonal_complement_from_samples(
    samples: &DenseMatrix,
    expected_dim: Option<usize>,
    tol: &TolerancePolicy,
) -> Result<OrthogonalComplement> {
    if samples.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let basis = null_space(samples, tol)?;
    let insufficient_samples = expected_dim.is_some_and(|e| e != basis.rows());
    Ok(OrthogonalComplement {
        basis,
        insufficient_samples,
    })
}

/// Solves `A X = B` for square `A` by partial pivoting.
pub fn solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let k = a.rows();
    if a.cols() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: a.cols(),
        });
    }
    if b.rows() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: b.rows(),
        });
    }
    let mut lhs = a.clone();
    let mut rhs = b.clone();
    let threshold = 1e-14 * lhs.max_abs();
    for c in 0..k {
        let mut best = c;
        for i in c + 1..k {
            if libm::fabs(lhs[(i, c)]) > libm::fabs(lhs[(best, c)]) {
                best = i;
            }
        }
        if libm::fabs(lhs[(best, c)]) <= threshold {
            return Err(Error::Singular);
        }
        lhs.swap_rows(c, best);
        rhs.swap_rows(c, best);
        let piv = lhs[(c, c)];
        for i in c + 1..k {
            let f = lhs[(i, c)] / piv;
            if f == 0.0 {
                continue;
            }
            for j in c..k {
                lhs[(i, j)] -= f * lhs[(c, j)];
            }
            for j in 0..rhs.cols() {
                rhs[(i, j)] -= f * rhs[(c, j)];
            }
        }
    }
    for c in (0..k).rev() {
        let piv = lhs[(c, c)];
        for j in 0..rhs.cols() {
            let mut s = rhs[(c, j)];
            for t in c + 1..k {
                s -= lhs[(c, t)] * rhs[(t, j)];
            }
            rhs[(c, j)] = s / piv;
        }
    }
    Ok(rhs)
}

/// Inverse of a square matrix.
pub fn inverse(a: &DenseMatrix) -> Result<DenseMatrix> {
    solve(a, &DenseMatrix::identity(a.rows()))
}

/// Row space grown one vector at a time, answering "does this vector
/// increase the rank?".
///
/// Stored rows are kept in echelon form: row `k` is `1` at its pivot and
/// `0` at the pivots of all earlier rows.
#[derive(Debug, Clone)]
pub struct IncrementalBasis {
    dim: usize,
    rank_tol: f64,
    rows: Vec<Vec<f64>>,
    pivots: Vec<usize>,
}

impl IncrementalBasis {
    pub fn new(dim: usize, rank_tol: f64) -> Self {
        IncrementalBasis {
            dim,
            rank_tol,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Residual of `v` after eliminating the stored rows.
    pub fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let f = r[p];
            if f != 0.0 {
                axpy(-f, row, &mut r);
                r[p] = 0.0;
            }
        }
        r
    }

    /// Adds `v` if it is independent of the stored rows. Independence means
    /// some residual entry exceeds `rank_tol * max|v|`.
    pub fn try_push(&mut self, v: &[f64]) -> bool {
        assert_eq!(v.len(), self.dim, "vector length must match basis dimension");
        let scale = max_abs(v);
        if scale == 0.0 {
            return false;
        }
        let mut r = self.residual(v);
        let (p, mag) = r
            .iter()
            .enumerate()
            .fold((0, 0.0), |(bi, bv), (i, x)| {
                let a = libm::fabs(*x);
                if a > bv {
                    (i, a)
                } else {
                    (bi, bv)
                }
            });
        if mag <= self.rank_tol * scale {
            return false;
        }
        let inv = 1.0 / r[p];
        r.iter_mut().for_each(|x| *x *= inv);
        r[p] = 1.0;
        self.rows.push(r);
        self.pivots.push(p);
        true
    }
}
