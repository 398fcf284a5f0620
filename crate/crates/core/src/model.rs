//! Seeded generators for the sparse-sub-Gaussian constraint model.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{null_space, orthogonal_complement_from_samples, OrthogonalComplement};
use crate::matrix::{max_abs, DenseMatrix};
use crate::seed::RngSeed;
use crate::tolerance::TolerancePolicy;

/// Largest `d / m` accepted by [`generate_b`].
const MAX_DRAWS_PER_ROW: usize = 64;
/// Largest `n` accepted by [`enumerate_binary_nullspace`].
pub const MAX_ENUMERATION_LEN: usize = 24;

const STREAM_DATASET_ROUND: u64 = 0x5A;

/// Distribution of the nonzero weights of `B` (and of dataset coefficients).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum WeightLaw {
    /// Uniform over `{-L, ..., -1, 1, ..., L}`.
    UniformIntegerSet { max: u32 },
    Gaussian { sigma: f64 },
    /// Uniform over `{+1, -1}`.
    Rademacher,
}

impl WeightLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightLaw::UniformIntegerSet { max: 0 } => {
                Err(Error::DegenerateParameters("uniform-integer-set needs L >= 1"))
            }
            WeightLaw::Gaussian { sigma } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(Error::DegenerateParameters("gaussian needs a positive finite sigma"))
            }
            _ => Ok(()),
        }
    }

    /// Draws one nonzero value.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightLaw::UniformIntegerSet { max } => signed_magnitude(rng, max),
            WeightLaw::Gaussian { sigma } => loop {
                let z: f64 = rng.sample(StandardNormal);
                if z != 0.0 {
                    break sigma * z;
                }
            },
            WeightLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn is_integer(&self) -> bool {
        !matches!(self, WeightLaw::Gaussian { .. })
    }
}

fn signed_magnitude<R: Rng + ?Sized>(rng: &mut R, max: u32) -> f64 {
    let mag = rng.random_range(1..=max) as f64;
    if rng.random::<bool>() {
        mag
    } else {
        -mag
    }
}

/// The `m × n` constraint matrix stored column-wise: column `j` holds its
/// neighbor rows `N_j` (sorted, distinct) with one nonzero weight each.
///
/// The same structure is the adjacency of the bipartite graph between
/// message coordinates (left) and constraints (right). `d` is the number of
/// draws used to generate each column; after duplicate draws collapse,
/// `1 <= |N_j| <= d`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SparseConstraintMatrix {
    m: usize,
    n: usize,
    d: usize,
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseConstraintMatrix {
    /// Validates and sorts each column.
    pub fn new(m: usize, n: usize, d: usize, mut columns: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if m == 0 || n == 0 || d == 0 {
            return Err(Error::DegenerateParameters("m, n and d must be positive"));
        }
        if columns.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: columns.len(),
            });
        }
        for (j, col) in columns.iter_mut().enumerate() {
            col.sort_by_key(|&(i, _)| i);
            if col.is_empty() {
                return Err(Error::InvalidColumn {
                    column: j,
                    reason: "column has no neighbors",
                });
            }
            if col.len() > d {
                return Err(Error::InvalidColumn {
                    column: j,
                    reason: "column has more than d neighbors",
                });
            }
            for w in col.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::InvalidColumn {
                        column: j,
                        reason: "duplicate neighbor row",
                    });
                }
            }
            for &(i, w) in col.iter() {
                if i >= m {
                    return Err(Error::InvalidColumn {
                        column: j,
                        reason: "neighbor row out of range",
                    });
                }
                if w == 0.0 || !w.is_finite() {
                    return Err(Error::InvalidColumn {
                        column: j,
                        reason: "weight must be nonzero and finite",
                    });
                }
            }
        }
        Ok(SparseConstraintMatrix { m, n, d, columns })
    }

    /// Builds the matrix from `(row, col, weight)` triplets.
    pub fn from_triplets(
        m: usize,
        n: usize,
        d: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut columns = vec![Vec::new(); n];
        for (i, j, w) in entries {
            if j >= n {
                return Err(Error::DimensionMismatch { expected: n, found: j + 1 });
            }
            columns[j].push((i, w));
        }
        Self::new(m, n, d, columns)
    }

    /// Keeps entries with `|x| > zero_tol * max|M|`.
    pub fn from_dense(dense: &DenseMatrix, d: usize, zero_tol: f64) -> Result<Self> {
        let cut = zero_tol * dense.max_abs();
        let mut columns = vec![Vec::new(); dense.cols()];
        for i in 0..dense.rows() {
            for (j, &x) in dense.row(i).iter().enumerate() {
                if libm::fabs(x) > cut {
                    columns[j].push((i, x));
                }
            }
        }
        Self::new(dense.rows(), dense.cols(), d, columns)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Draws per column used at generation time.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<(usize, f64)>] {
        &self.columns
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// `(row, col, weight)` in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(j, col)| col.iter().map(move |&(i, w)| (i, j, w)))
    }

    pub fn has_integer_weights(&self) -> bool {
        self.triplets()
            .all(|(_, _, w)| w == libm::trunc(w) && libm::fabs(w) < 1e9)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.m, self.n);
        for (i, j, w) in self.triplets() {
            out[(i, j)] = w;
        }
        out
    }

    /// `B y`.
    pub fn mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: y.len(),
            });
        }
        let mut z = vec![0.0; self.m];
        for (col, &yj) in self.columns.iter().zip(y) {
            if yj == 0.0 {
                continue;
            }
            for &(i, w) in col {
                z[i] += w * yj;
            }
        }
        Ok(z)
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.triplets().fold(0.0, |m, (_, _, w)| m.max(libm::fabs(w)))
    }

    /// FNV-1a over the shape and the entry bit patterns.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |x: u64| {
            for b in x.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(self.m as u64);
        feed(self.n as u64);
        feed(self.d as u64);
        for (i, j, w) in self.triplets() {
            feed(i as u64);
            feed(j as u64);
            feed(w.to_bits());
        }
        h
    }
}

/// Draws `B` column by column: `d` rows uniformly with replacement from
/// `[m]`, duplicates collapsed, one independent weight per distinct row.
pub fn generate_b(
    m: usize,
    n: usize,
    d: usize,
    law: WeightLaw,
    seed: RngSeed,
) -> Result<SparseConstraintMatrix> {
    if m == 0 || n == 0 || d == 0 {
        return Err(Error::DegenerateParameters("m, n and d must be positive"));
    }
    if d > m.saturating_mul(MAX_DRAWS_PER_ROW) {
        return Err(Error::DegenerateParameters("d exceeds 64 draws per row"));
    }
    law.validate()?;
    let mut rng = seed.rng();
    let mut columns = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(d);
    for _ in 0..n {
        rows.clear();
        rows.extend((0..d).map(|_| rng.random_range(0..m)));
        rows.sort_unstable();
        rows.dedup();
        let col: Vec<(usize, f64)> = rows.iter().map(|&i| (i, law.sample(&mut rng))).collect();
        columns.push(col);
    }
    SparseConstraintMatrix::new(m, n, d, columns)
}

/// `count` random vectors of the null space of `B`: each is a combination
/// of a null-space basis with i.i.d. coefficients from `coeff_law`.
pub fn sample_dataset(
    b: &SparseConstraintMatrix,
    count: usize,
    coeff_law: WeightLaw,
    seed: RngSeed,
    tol: &TolerancePolicy,
) -> Result<DenseMatrix> {
    coeff_law.validate()?;
    let basis = null_space(&b.to_dense(), tol)?;
    if basis.rows() == 0 {
        return Err(Error::TrivialDataset);
    }
    let mut rng = seed.rng();
    let mut out = DenseMatrix::zeros(count, b.n());
    let mut coeffs = vec![0.0; basis.rows()];
    for s in 0..count {
        coeffs.iter_mut().for_each(|c| *c = coeff_law.sample(&mut rng));
        let x = basis.left_mul_vec(&coeffs)?;
        out.row_mut(s).copy_from_slice(&x);
    }
    Ok(out)
}

/// Draws dataset samples for the learning phase.
///
/// Starts from `N = (n - rank) + 10` samples and doubles `N` until the
/// complement has the expected dimension (or, without one, until the
/// sample rank stops growing), capped at `4n` samples.
pub fn sample_for_learning(
    b: &SparseConstraintMatrix,
    expected_dim: Option<usize>,
    coeff_law: WeightLaw,
    seed: RngSeed,
    tol: &TolerancePolicy,
) -> Result<(DenseMatrix, OrthogonalComplement)> {
    let n = b.n();
    let m_guess = expected_dim.unwrap_or(b.m()).min(n);
    let cap = 4 * n;
    let mut count = ((n - m_guess) + 10).min(cap);
    let mut round = 0;
    let mut last_dim = usize::MAX;
    loop {
        let samples = sample_dataset(
            b,
            count,
            coeff_law,
            seed.derive(STREAM_DATASET_ROUND, round),
            tol,
        )?;
        let comp = orthogonal_complement_from_samples(&samples, expected_dim, tol)?;
        let settled = match expected_dim {
            Some(_) => !comp.insufficient_samples,
            None => comp.dimension() == last_dim,
        };
        if settled || count >= cap {
            return Ok((samples, comp));
        }
        last_dim = comp.dimension();
        count = (count * 2).min(cap);
        round += 1;
    }
}

/// Error vector with exactly `weight` nonzeros: the support is the first
/// `weight` entries of a uniform permutation of `[n]`, each value uniform
/// over `{±1, ..., ±magnitude}`.
pub fn generate_error(n: usize, weight: usize, magnitude: u32, seed: RngSeed) -> Result<Vec<f64>> {
    if weight > n {
        return Err(Error::ErrorWeightTooLarge { weight, n });
    }
    if magnitude == 0 {
        return Err(Error::DegenerateParameters("error magnitude must be >= 1"));
    }
    let mut rng = seed.rng();
    let mut perm: Vec<usize> = (0..n).collect();
    let (support, _) = perm.partial_shuffle(&mut rng, weight);
    let mut e = vec![0.0; n];
    for &j in support.iter() {
        e[j] = signed_magnitude(&mut rng, magnitude);
    }
    Ok(e)
}

/// Every `x ∈ {+1, -1}ⁿ` with `B x = 0`, in lexicographic order
/// (`-1 < +1`).
///
/// Integer weights are checked exactly; otherwise `|Bx|_∞ <= zero_tol`
/// scaled by the largest weight and `n`.
pub fn enumerate_binary_nullspace(
    b: &SparseConstraintMatrix,
    tol: &TolerancePolicy,
) -> Result<Vec<Vec<i8>>> {
    let n = b.n();
    if n > MAX_ENUMERATION_LEN {
        return Err(Error::InstanceTooLarge("enumeration"));
    }
    let mut x = vec![1i8; n];
    let mut found = Vec::new();
    if b.has_integer_weights() {
        let cols: Vec<Vec<(usize, i64)>> = b
            .columns()
            .iter()
            .map(|c| c.iter().map(|&(i, w)| (i, w as i64)).collect())
            .collect();
        let mut z = vec![0i64; b.m()];
        for col in &cols {
            for &(i, w) in col {
                z[i] += w;
            }
        }
        let start = z.iter().all(|&v| v == 0);
        gray_walk(n, &mut x, &mut found, start, |j, xj| {
            for &(i, w) in &cols[j] {
                z[i] += 2 * w * i64::from(xj);
            }
            z.iter().all(|&v| v == 0)
        });
    } else {
        let cut = tol.zero_tol * b.max_abs_weight() * n as f64;
        let mut z = b.mul_vec(&vec![1.0; n])?;
        let start = max_abs(&z) <= cut;
        gray_walk(n, &mut x, &mut found, start, |j, xj| {
            for &(i, w) in b.column(j) {
                z[i] += 2.0 * w * f64::from(xj);
            }
            max_abs(&z) <= cut
        });
    }
    found.sort();
    Ok(found)
}

/// Visits all sign vectors starting from all `+1`, flipping one coordinate
/// at a time. `flip(j, new_xj)` updates the caller's running `Bx` and says
/// whether it is zero.
fn gray_walk(
    n: usize,
    x: &mut [i8],
    found: &mut Vec<Vec<i8>>,
    start_is_zero: bool,
    mut flip: impl FnMut(usize, i8) -> bool,
) {
    if start_is_zero {
        found.push(x.to_vec());
    }
    for step in 1..(1u64 << n) {
        let j = step.trailing_zeros() as usize;
        x[j] = -x[j];
        if flip(j, x[j]) {
            found.push(x.to_vec());
        }
    }
}
