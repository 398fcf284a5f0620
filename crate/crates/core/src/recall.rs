//! Recall: syndromes, the iterative expander decoder, a brute-force
//! expansion checker and the union bound on expansion failure.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::learn::binomial;
use crate::matrix::max_abs;
use crate::model::SparseConstraintMatrix;

/// Largest number of subsets [`check_expansion`] will enumerate.
pub const MAX_EXPANSION_SUBSETS: f64 = 1e7;

/// `z = B y`. Exact for integer weights and integer `y` of moderate size.
pub fn syndrome(b: &SparseConstraintMatrix, y: &[f64]) -> Result<Vec<f64>> {
    b.mul_vec(y)
}

/// Decoder parameters.
///
/// A column votes with the ratios `g_i / B_ij` over its neighbours with a
/// nonzero gap; it qualifies once `⌈(1 − 2ε) d⌉` of them agree. The
/// threshold uses the nominal `d`, so a column whose duplicate draws
/// collapsed below the threshold can never qualify.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DecoderConfig {
    /// Expansion slack, in `(0, 1/4]`.
    pub epsilon: f64,
    /// `None` means `2 · max(⌈m² / (2d²n)⌉, 16)`.
    pub max_iterations: Option<usize>,
    /// Relative tolerance under which two ratios are equal.
    pub ratio_tol: f64,
    /// Gaps with `|g_i| ≤ zero_tol · max(1, ‖z‖∞)` count as zero.
    pub zero_tol: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            epsilon: 0.25,
            max_iterations: None,
            ratio_tol: 1e-9,
            zero_tol: 1e-9,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 0.25) {
            return Err(Error::DegenerateParameters("epsilon must lie in (0, 1/4]"));
        }
        for t in [self.ratio_tol, self.zero_tol] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidTolerance);
            }
        }
        Ok(())
    }

    pub fn vote_threshold(&self, d: usize) -> usize {
        let t = libm::ceil((1.0 - 2.0 * self.epsilon) * d as f64 - 1e-12);
        (t as usize).max(1)
    }

    pub fn iteration_limit(&self, b: &SparseConstraintMatrix) -> usize {
        self.max_iterations
            .unwrap_or_else(|| 2 * correction_budget(b.m(), b.n(), b.d()).max(16))
    }
}

/// `⌈m² / (2 d² n)⌉`, the number of errors the recall guarantee covers.
pub fn correction_budget(m: usize, n: usize, d: usize) -> usize {
    let (m, n, d) = (m as u128, n as u128, d as u128);
    let den = 2 * d * d * n;
    if den == 0 {
        return 0;
    }
    (m * m).div_ceil(den) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub e_hat: Vec<f64>,
    /// `z − B ê`, maintained incrementally.
    pub gaps: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum DecodeStatus {
    Success,
    /// No column qualified while the residual was still nonzero.
    Stalled,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub e_hat: Vec<f64>,
    pub status: DecodeStatus,
    pub iterations: usize,
    /// `‖z − B ê‖∞` at exit.
    pub residual: f64,
}

/// Step-by-step expander decoder over a fixed syndrome.
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    b: &'a SparseConstraintMatrix,
    cfg: DecoderConfig,
    state: DecoderState,
    zero_cut: f64,
    threshold: usize,
    limit: usize,
    ratios: Vec<f64>,
}

impl<'a> Decoder<'a> {
    pub fn new(b: &'a SparseConstraintMatrix, z: &[f64], cfg: DecoderConfig) -> Result<Self> {
        cfg.validate()?;
        if z.len() != b.m() {
            return Err(Error::DimensionMismatch {
                expected: b.m(),
                found: z.len(),
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Decoder {
            b,
            cfg,
            state: DecoderState {
                e_hat: vec![0.0; b.n()],
                gaps: z.to_vec(),
                iterations: 0,
            },
            zero_cut: cfg.zero_tol * max_abs(z).max(1.0),
            threshold: cfg.vote_threshold(b.d()),
            limit: cfg.iteration_limit(b),
            ratios: Vec::with_capacity(b.d()),
        })
    }

    pub fn state(&self) -> &DecoderState {
        &self.state
    }

    pub fn residual(&self) -> f64 {
        max_abs(&self.state.gaps)
    }

    pub fn is_solved(&self) -> bool {
        self.residual() <= self.zero_cut
    }

    /// Votes and value for column `j`: the largest cluster of agreeing
    /// ratios and its lower median.
    fn vote(&mut self, j: usize) -> (usize, f64) {
        let gaps = &self.state.gaps;
        let cut = self.zero_cut;
        self.ratios.clear();
        self.ratios.extend(
            self.b
                .column(j)
                .iter()
                .filter(|&&(i, _)| libm::fabs(gaps[i]) > cut)
                .map(|&(i, w)| gaps[i] / w),
        );
        if self.ratios.len() < self.threshold {
            return (0, 0.0);
        }
        self.ratios.sort_unstable_by(f64::total_cmp);
        let tol = self.cfg.ratio_tol;
        let (mut best_len, mut best_start) = (0, 0);
        let mut start = 0;
        for k in 1..=self.ratios.len() {
            let splits = k == self.ratios.len() || {
                let (a, b) = (self.ratios[start], self.ratios[k]);
                libm::fabs(b - a) > tol * libm::fabs(a).max(libm::fabs(b))
            };
            if splits {
                if k - start > best_len {
                    best_len = k - start;
                    best_start = start;
                }
                start = k;
            }
        }
        (best_len, self.ratios[best_start + (best_len - 1) / 2])
    }

    /// Applies one update and returns `(column, δ)`, or `None` when no
    /// column reaches the vote threshold.
    pub fn step(&mut self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..self.b.n() {
            let (votes, delta) = self.vote(j);
            if votes >= self.threshold && best.is_none_or(|(v, _, _)| votes > v) {
                best = Some((votes, j, delta));
            }
        }
        let (_, j, delta) = best?;
        self.state.e_hat[j] += delta;
        for &(i, w) in self.b.column(j) {
            self.state.gaps[i] -= w * delta;
        }
        self.state.iterations += 1;
        Some((j, delta))
    }

    pub fn run(mut self) -> DecodeOutcome {
        let status = loop {
            if self.is_solved() {
                break DecodeStatus::Success;
            }
            if self.state.iterations >= self.limit {
                break DecodeStatus::IterationLimit;
            }
            if self.step().is_none() {
                break DecodeStatus::Stalled;
            }
        };
        let residual = self.residual();
        DecodeOutcome {
            e_hat: self.state.e_hat,
            status,
            iterations: self.state.iterations,
            residual,
        }
    }
}

/// Recovers the sparse error behind syndrome `z`.
pub fn decode(b: &SparseConstraintMatrix, z: &[f64], cfg: &DecoderConfig) -> Result<DecodeOutcome> {
    Ok(Decoder::new(b, z, *cfg)?.run())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecallOutcome {
    /// `y − ê`.
    pub x_hat: Vec<f64>,
    pub e_hat: Vec<f64>,
    pub status: DecodeStatus,
    pub iterations: usize,
    pub residual: f64,
}

/// Cleans a noisy query `y = x + e` with `x` in the dataset.
pub fn recall(b: &SparseConstraintMatrix, y: &[f64], cfg: &DecoderConfig) -> Result<RecallOutcome> {
    let z = syndrome(b, y)?;
    let out = decode(b, &z, cfg)?;
    let x_hat = y.iter().zip(&out.e_hat).map(|(a, e)| a - e).collect();
    Ok(RecallOutcome {
        x_hat,
        e_hat: out.e_hat,
        status: out.status,
        iterations: out.iterations,
        residual: out.residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExpansionReport {
    pub t: usize,
    pub l: f64,
    pub is_expander: bool,
    /// First violating set: smallest size, then lexicographic.
    pub witness: Option<Vec<usize>>,
}

/// Checks `|N(S)| ≥ l·|S|` for every column set with `1 ≤ |S| ≤ t`.
pub fn check_expansion(b: &SparseConstraintMatrix, t: usize, l: f64) -> Result<ExpansionReport> {
    if !l.is_finite() {
        return Err(Error::NonFinite);
    }
    let n = b.n();
    let t_eff = t.min(n);
    let subsets: f64 = (1..=t_eff).map(|s| binomial(n, s)).sum();
    if subsets > MAX_EXPANSION_SUBSETS {
        return Err(Error::InstanceTooLarge("more than 10^7 column subsets"));
    }
    let mut walk = UnionWalk {
        b,
        counts: vec![0u32; b.m()],
        union: 0,
        chosen: Vec::with_capacity(t_eff),
    };
    for s in 1..=t_eff {
        let bound = l * s as f64;
        if walk.search(0, s, bound) {
            return Ok(ExpansionReport {
                t,
                l,
                is_expander: false,
                witness: Some(walk.chosen),
            });
        }
    }
    Ok(ExpansionReport {
        t,
        l,
        is_expander: true,
        witness: None,
    })
}

/// Depth-first enumeration of column sets with per-row multiplicities.
struct UnionWalk<'a> {
    b: &'a SparseConstraintMatrix,
    counts: Vec<u32>,
    union: usize,
    chosen: Vec<usize>,
}

impl UnionWalk<'_> {
    /// Leaves the first violator of size `size` in `chosen` and returns
    /// `true`, or restores the state and returns `false`.
    fn search(&mut self, from: usize, size: usize, bound: f64) -> bool {
        if self.chosen.len() == size {
            return (self.union as f64) < bound;
        }
        let remaining = size - self.chosen.len();
        for j in from..=self.b.n() - remaining {
            self.add(j);
            if self.search(j + 1, size, bound) {
                return true;
            }
            self.remove(j);
        }
        false
    }

    fn add(&mut self, j: usize) {
        for &(i, _) in self.b.column(j) {
            if self.counts[i] == 0 {
                self.union += 1;
            }
            self.counts[i] += 1;
        }
        self.chosen.push(j);
    }

    fn remove(&mut self, j: usize) {
        for &(i, _) in self.b.column(j) {
            self.counts[i] -= 1;
            if self.counts[i] == 0 {
                self.union -= 1;
            }
        }
        self.chosen.pop();
    }
}

fn ln_binomial(n: f64, k: f64) -> f64 {
    libm::lgamma(n + 1.0) - libm::lgamma(k + 1.0) - libm::lgamma(n - k + 1.0)
}

/// Per-size union-bound terms
/// `P_s = C(n, s) · C(m, (1−ε)ds) · ((1−ε)ds / m)^{ds}` for `s = 1..=s_max`,
/// evaluated in log space and not clamped. A term with `(1−ε)ds > m` has no
/// binomial and is reported as `1`.
pub fn expansion_failure_terms(n: usize, m: usize, d: usize, epsilon: f64, s_max: usize) -> Result<Vec<f64>> {
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::DegenerateParameters("n, m and d must be positive"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::DegenerateParameters("epsilon must lie in (0, 1)"));
    }
    let (nf, mf, df) = (n as f64, m as f64, d as f64);
    Ok((1..=s_max)
        .map(|s| {
            let sf = s as f64;
            let k = (1.0 - epsilon) * df * sf;
            if k > mf || s > n {
                return 1.0;
            }
            let log_p = ln_binomial(nf, sf) + ln_binomial(mf, k) + df * sf * libm::log(k / mf);
            libm::exp(log_p)
        })
        .collect())
}

/// Probability bound that a random `B` fails to be an
/// `(s_max, (1−ε)d)`-expander: the sum of [`expansion_failure_terms`], each
/// term capped at 1 and the total clamped to `[0, 1]`.
pub fn expansion_failure_bound(n: usize, m: usize, d: usize, epsilon: f64, s_max: usize) -> Result<f64> {
    let terms = expansion_failure_terms(n, m, d, epsilon, s_max)?;
    Ok(terms.iter().map(|p| p.min(1.0)).sum::<f64>().clamp(0.0, 1.0))
}
