//! Constraint learning: pairwise-L1 square dictionary learning on the
//! orthogonal complement of the samples, an exhaustive sparse-basis search
//! for tiny instances, and row matching against a known reference.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::linalg::{
    null_space, orthogonal_complement_from_samples, solve, IncrementalBasis,
};
use crate::lp::{solve_l1_row, L1RowProblem, LpStatus, LpTolerances};
use crate::matrix::{dot, max_abs, DenseMatrix};
use crate::seed::RngSeed;
use crate::tolerance::TolerancePolicy;

/// Residual below which a learned row counts as an exact recovery, and the
/// distance under which two canonical candidates are duplicates.
pub const MATCH_TOL: f64 = 1e-7;

/// Largest number of supports the exhaustive search will visit.
pub const MAX_EXHAUSTIVE_SUPPORTS: f64 = 1e6;

/// Which column pairs `(i, j)`, `i < j`, feed the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum PairBudget {
    /// Every one of the `n(n−1)/2` pairs.
    #[default]
    All,
    /// A uniform sample of `count` distinct pairs, visited in pair order.
    /// Counts above `n(n−1)/2` mean all pairs.
    Sampled { count: usize, seed: RngSeed },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErSpudConfig {
    pub pair_budget: PairBudget,
    /// Entries with `|v_k| ≤ sparsity_tol · ‖v‖∞` are treated as zero.
    pub sparsity_tol: f64,
    /// Relative residual a candidate must keep after elimination against
    /// the accepted rows to count as rank increasing.
    pub rank_tol: f64,
    pub lp: LpTolerances,
}

impl Default for ErSpudConfig {
    fn default() -> Self {
        ErSpudConfig {
            pair_budget: PairBudget::All,
            sparsity_tol: 1e-8,
            rank_tol: 1e-6,
            lp: LpTolerances::default(),
        }
    }
}

/// Runs the per-pair LPs. Implementations may parallelise but must return
/// results in the order of `pairs`.
pub trait PairSolver {
    fn solve_pairs(
        &self,
        pairs: &[(usize, usize)],
        solve: &(dyn Fn((usize, usize)) -> Option<Vec<f64>> + Sync),
    ) -> Vec<Option<Vec<f64>>>;
}

/// Solves pairs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PairSolver for Sequential {
    fn solve_pairs(
        &self,
        pairs: &[(usize, usize)],
        solve: &(dyn Fn((usize, usize)) -> Option<Vec<f64>> + Sync),
    ) -> Vec<Option<Vec<f64>>> {
        pairs.iter().map(|&p| solve(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErSpudOutput {
    /// `V̂`, `m × n`, canonical rows in selection order.
    pub v_hat: DenseMatrix,
    /// `D̂`, `m × m`, the least-squares mix with `D̂ V̂ ≈ U`.
    pub d_hat: DenseMatrix,
    pub lp_count: usize,
    /// Pairs whose LP did not reach an optimum.
    pub failed_pairs: usize,
}

pub fn er_spud(u: &DenseMatrix, cfg: &ErSpudConfig) -> Result<ErSpudOutput> {
    er_spud_with(u, cfg, &Sequential)
}

/// Recovers the sparse rows spanning the row space of `u` (`m × n`, rank
/// `m`).
///
/// Every pair of columns gives `r = u_i + u_j`; the minimiser `w` of
/// `‖wᵀU‖₁` under `rᵀw = 1` yields the candidate `wᵀU`. Candidates are
/// canonicalised and then taken sparsest first (pool order breaks ties),
/// keeping only those that raise the rank, until `m` rows are found.
pub fn er_spud_with(
    u: &DenseMatrix,
    cfg: &ErSpudConfig,
    solver: &dyn PairSolver,
) -> Result<ErSpudOutput> {
    let (m, n) = (u.rows(), u.cols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput);
    }
    let pairs = select_pairs(n, cfg.pair_budget);
    let cols = u.transpose();
    let lp = cfg.lp;
    let sparsity_tol = cfg.sparsity_tol;
    let solve_pair = move |(i, j): (usize, usize)| -> Option<Vec<f64>> {
        let r: Vec<f64> = cols.row(i).iter().zip(cols.row(j)).map(|(a, b)| a + b).collect();
        // opposite columns cancel; the constraint is then rounding noise
        if max_abs(&r) <= 1e-9 * max_abs(cols.row(i)).max(max_abs(cols.row(j))) {
            return None;
        }
        let sol = solve_l1_row(
            &L1RowProblem {
                observations: u,
                constraint: &r,
            },
            &lp,
        )
        .ok()?;
        if sol.status != LpStatus::Optimal {
            return None;
        }
        let mut s = u.left_mul_vec(&sol.w).ok()?;
        canonicalize(&mut s, sparsity_tol).then_some(s)
    };
    let results = solver.solve_pairs(&pairs, &solve_pair);
    let failed_pairs = results.iter().filter(|r| r.is_none()).count();
    let pool: Vec<Vec<f64>> = results.into_iter().flatten().collect();

    let v_hat = select_rows(&pool, m, n, cfg)?;
    let d_hat = least_squares_mix(u, &v_hat)?;
    Ok(ErSpudOutput {
        v_hat,
        d_hat,
        lp_count: pairs.len(),
        failed_pairs,
    })
}

/// Pairs in lexicographic order.
fn select_pairs(n: usize, budget: PairBudget) -> Vec<(usize, usize)> {
    let total = n * (n - 1) / 2;
    let all = || {
        let mut v = Vec::with_capacity(total);
        for i in 0..n {
            for j in i + 1..n {
                v.push((i, j));
            }
        }
        v
    };
    match budget {
        PairBudget::Sampled { count, seed } if count < total => {
            let mut picks = index::sample(&mut seed.rng(), total, count).into_vec();
            picks.sort_unstable();
            let mut out = Vec::with_capacity(count);
            // walk rows of the triangle alongside the sorted linear indices
            let (mut i, mut row_start) = (0usize, 0usize);
            for k in picks {
                while k >= row_start + (n - 1 - i) {
                    row_start += n - 1 - i;
                    i += 1;
                }
                out.push((i, i + 1 + (k - row_start)));
            }
            out
        }
        _ => all(),
    }
}

fn select_rows(pool: &[Vec<f64>], m: usize, n: usize, cfg: &ErSpudConfig) -> Result<DenseMatrix> {
    let mut order: Vec<(usize, usize)> = pool
        .iter()
        .enumerate()
        .map(|(k, v)| (l0_count(v, cfg.sparsity_tol), k))
        .collect();
    order.sort_unstable();
    let mut basis = IncrementalBasis::new(n, cfg.rank_tol);
    let mut chosen: Vec<&[f64]> = Vec::with_capacity(m);
    for (_, k) in order {
        if chosen.len() == m {
            break;
        }
        let v = &pool[k];
        if chosen.iter().any(|c| linf_distance(c, v) <= MATCH_TOL) {
            continue;
        }
        if basis.try_push(v) {
            chosen.push(v);
        }
    }
    if chosen.len() < m {
        return Err(Error::LearningFailed {
            found: chosen.len(),
            needed: m,
        });
    }
    DenseMatrix::from_rows(&chosen)
}

/// `D̂ = U V̂ᵀ (V̂ V̂ᵀ)⁻¹`.
fn least_squares_mix(u: &DenseMatrix, v_hat: &DenseMatrix) -> Result<DenseMatrix> {
    let vt = v_hat.transpose();
    let gram = v_hat.matmul(&vt)?;
    let cross = u.matmul(&vt)?;
    // the Gram matrix is symmetric, so D̂ᵀ = G⁻¹ (U V̂ᵀ)ᵀ
    Ok(solve(&gram, &cross.transpose())?.transpose())
}

/// Snaps entries below `sparsity_tol · ‖v‖∞` to zero, scales the largest
/// magnitude to 1 and makes the first nonzero positive. Returns `false` for
/// a zero (or non-finite) vector.
pub fn canonicalize(v: &mut [f64], sparsity_tol: f64) -> bool {
    let scale = max_abs(v);
    if scale == 0.0 || !scale.is_finite() {
        return false;
    }
    let cut = sparsity_tol * scale;
    let first = v.iter().copied().find(|x| libm::fabs(*x) > cut).unwrap_or(1.0);
    let f = if first < 0.0 { -1.0 / scale } else { 1.0 / scale };
    for x in v.iter_mut() {
        *x = if libm::fabs(*x) > cut { *x * f } else { 0.0 };
    }
    true
}

/// Entries with `|v_k| > sparsity_tol · ‖v‖∞`.
pub fn l0_count(v: &[f64], sparsity_tol: f64) -> usize {
    let cut = sparsity_tol * max_abs(v);
    v.iter().filter(|x| libm::fabs(**x) > cut).count()
}

fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max(libm::fabs(x - y)))
}

/// A matching of learned rows to reference rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RowMatch {
    /// `permutation[k]` is the reference row matched to learned row `k`.
    pub permutation: Vec<Option<usize>>,
    /// `scales[k] · b̂_k` best approximates its reference row in `ℓ₂`.
    pub scales: Vec<f64>,
    /// Largest `‖scale · b̂ − b‖∞` over matched pairs; infinite if some row
    /// stayed unmatched.
    pub max_residual: f64,
}

impl RowMatch {
    pub fn is_exact(&self) -> bool {
        self.max_residual <= MATCH_TOL
    }
}

/// Greedy matching by absolute cosine similarity, best pairs first, ties to
/// the smaller `(learned, reference)` index pair.
pub fn match_rows(b_hat: &DenseMatrix, b_ref: &DenseMatrix) -> Result<RowMatch> {
    if b_hat.cols() != b_ref.cols() {
        return Err(Error::DimensionMismatch {
            expected: b_ref.cols(),
            found: b_hat.cols(),
        });
    }
    if b_hat.rows() != b_ref.rows() {
        return Err(Error::DimensionMismatch {
            expected: b_ref.rows(),
            found: b_hat.rows(),
        });
    }
    let k = b_hat.rows();
    let norm = |r: &[f64]| libm::sqrt(dot(r, r));
    let hat_norms: Vec<f64> = b_hat.row_iter().map(norm).collect();
    let ref_norms: Vec<f64> = b_ref.row_iter().map(norm).collect();
    let mut sims = Vec::with_capacity(k * k);
    for (a, ra) in b_hat.row_iter().enumerate() {
        for (p, rp) in b_ref.row_iter().enumerate() {
            let den = hat_norms[a] * ref_norms[p];
            let c = if den > 0.0 { libm::fabs(dot(ra, rp)) / den } else { 0.0 };
            sims.push((c, a, p));
        }
    }
    sims.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut permutation = vec![None; k];
    let mut taken = vec![false; k];
    for (_, a, p) in sims {
        if permutation[a].is_none() && !taken[p] {
            permutation[a] = Some(p);
            taken[p] = true;
        }
    }
    let mut scales = vec![0.0; k];
    let mut max_residual: f64 = 0.0;
    for a in 0..k {
        let Some(p) = permutation[a] else {
            max_residual = f64::INFINITY;
            continue;
        };
        let (bh, br) = (b_hat.row(a), b_ref.row(p));
        let hh = dot(bh, bh);
        let s = if hh > 0.0 { dot(bh, br) / hh } else { 0.0 };
        scales[a] = s;
        let res = bh.iter().zip(br).fold(0.0, |m: f64, (x, y)| m.max(libm::fabs(s * x - y)));
        max_residual = max_residual.max(res);
    }
    Ok(RowMatch {
        permutation,
        scales,
        max_residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnReport {
    /// Learned constraints, `m × n`, canonical rows.
    pub b_hat: DenseMatrix,
    pub d_hat: DenseMatrix,
    /// Present when a reference was supplied.
    pub matching: Option<RowMatch>,
    pub lp_count: usize,
    pub failed_pairs: usize,
}

impl LearnReport {
    /// `None` without a reference.
    pub fn exact(&self) -> Option<bool> {
        self.matching.as_ref().map(RowMatch::is_exact)
    }
}

pub fn learn_constraints(
    samples: &DenseMatrix,
    m: usize,
    cfg: &ErSpudConfig,
    tol: &TolerancePolicy,
    reference: Option<&DenseMatrix>,
) -> Result<LearnReport> {
    learn_constraints_with(samples, m, cfg, tol, reference, &Sequential)
}

/// Learns `m` constraints from dataset samples (one per row).
///
/// The orthogonal complement of the samples must have dimension exactly
/// `m`; otherwise the samples do not pin down the dataset and
/// [`Error::InsufficientSamples`] is returned.
pub fn learn_constraints_with(
    samples: &DenseMatrix,
    m: usize,
    cfg: &ErSpudConfig,
    tol: &TolerancePolicy,
    reference: Option<&DenseMatrix>,
    solver: &dyn PairSolver,
) -> Result<LearnReport> {
    if m == 0 {
        return Err(Error::DegenerateParameters("m must be positive"));
    }
    let complement = orthogonal_complement_from_samples(samples, Some(m), tol)?;
    if complement.dimension() != m {
        return Err(Error::InsufficientSamples {
            expected: m,
            found: complement.dimension(),
        });
    }
    let out = er_spud_with(&complement.basis, cfg, solver)?;
    let matching = reference.map(|b| match_rows(&out.v_hat, b)).transpose()?;
    Ok(LearnReport {
        b_hat: out.v_hat,
        d_hat: out.d_hat,
        matching,
        lp_count: out.lp_count,
        failed_pairs: out.failed_pairs,
    })
}

/// Brute-force sparse basis of the row space of `a` (`m × n`).
///
/// Supports `T` are visited by size `1..=d`, lexicographically within a
/// size. A support qualifies when some nonzero combination of the rows of
/// `a` vanishes off `T`; each qualifying support contributes its sparsest
/// such combination if it has exactly `|T|` nonzeros and raises the rank.
/// Rows come back canonicalised, in discovery order.
pub fn exhaustive_sparse_basis(
    a: &DenseMatrix,
    d: usize,
    tol: &TolerancePolicy,
) -> Result<DenseMatrix> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput);
    }
    if d == 0 {
        return Err(Error::DegenerateParameters("support size must be positive"));
    }
    let d = d.min(n);
    let visits: f64 = (1..=d).map(|s| binomial(n, s)).sum();
    if visits > MAX_EXHAUSTIVE_SUPPORTS {
        return Err(Error::InstanceTooLarge("more than 10^6 candidate supports"));
    }
    let mut basis = IncrementalBasis::new(n, 1e-6);
    let mut found: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut in_support = vec![false; n];
    'sizes: for s in 1..=d {
        let mut t: Vec<usize> = (0..s).collect();
        loop {
            in_support.iter_mut().for_each(|x| *x = false);
            t.iter().for_each(|&j| in_support[j] = true);
            if let Some(v) = sparsest_on_support(a, &in_support, tol) {
                if l0_count(&v, tol.sparsity_tol) == s && basis.try_push(&v) {
                    found.push(v);
                    if found.len() == m {
                        break 'sizes;
                    }
                }
            }
            if !next_combination(&mut t, n) {
                break;
            }
        }
    }
    if found.len() < m {
        return Err(Error::NoSparseBasis {
            found: found.len(),
            needed: m,
        });
    }
    DenseMatrix::from_rows(&found)
}

/// Sparsest canonical `wᵀA` vanishing outside the support mask, if any.
fn sparsest_on_support(a: &DenseMatrix, in_support: &[bool], tol: &TolerancePolicy) -> Option<Vec<f64>> {
    let off: Vec<usize> = (0..a.cols()).filter(|&j| !in_support[j]).collect();
    let ws = if off.is_empty() {
        DenseMatrix::identity(a.rows())
    } else {
        null_space(&a.select_columns(&off).transpose(), tol).ok()?
    };
    ws.row_iter()
        .filter_map(|w| {
            let mut v = a.left_mul_vec(w).ok()?;
            canonicalize(&mut v, tol.sparsity_tol).then_some(v)
        })
        .min_by_key(|v| l0_count(v, tol.sparsity_tol))
}

/// Advances `t` to the next `|t|`-subset of `0..n` in lexicographic order.
fn next_combination(t: &mut [usize], n: usize) -> bool {
    let k = t.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if t[i] < n - k + i {
            t[i] += 1;
            for j in i + 1..k {
                t[j] = t[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
