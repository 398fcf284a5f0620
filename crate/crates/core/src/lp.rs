//! Exact solver for the pairwise L1 row problem
//!
//! ```text
//! minimize ‖wᵀU‖₁  subject to  rᵀw = 1,     w ∈ ℝᵐ
//! ```
//!
//! This is a least-absolute-deviations fit in disguise, so we run an
//! active-set simplex directly in `w`-space. A vertex is pinned by `m`
//! independent equalities: the normalisation `rᵀw = 1`, some columns with
//! `u_jᵀw = 0`, and, until they are pivoted out, artificial equalities
//! `w_i = 0` that cost nothing to release. Each step releases the equality
//! whose multiplier proves a descent edge and walks that edge to the
//! minimiser of the convex piecewise-linear objective (a weighted median
//! over the breakpoints), so one pivot can pass many sign changes at once.
//!
//! Optima are highly degenerate here: the rows we look for vanish on far
//! more than `m − 1` columns. To avoid cycling, the walk runs on residuals
//! shifted by tiny fixed offsets, and the final basis is then certified
//! against the unshifted problem (shrinking the offsets if it fails).

#![allow(clippy::needless_range_loop)]

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{inverse, null_space};
use crate::matrix::{axpy, dot, max_abs, DenseMatrix};
use crate::tolerance::TolerancePolicy;

/// Consecutive degenerate pivots before switching to Bland's rule.
const BLAND_AFTER: usize = 30;
const REFACTOR_EVERY: usize = 32;
/// Initial size of the residual offsets that break degenerate ties.
const PERTURBATION: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct L1RowProblem<'a> {
    /// `U`, `m × n`.
    pub observations: &'a DenseMatrix,
    /// `r`, length `m`.
    pub constraint: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum LpStatus {
    Optimal,
    Infeasible,
    /// Numerical breakdown: no finite breakpoint stopped a descent edge.
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub w: Vec<f64>,
    /// `‖wᵀU‖₁` re-evaluated from `w`.
    pub objective: f64,
    pub status: LpStatus,
    pub iterations: usize,
}

impl LpSolution {
    fn failed(m: usize, status: LpStatus, iterations: usize) -> Self {
        LpSolution {
            w: vec![0.0; m],
            objective: 0.0,
            status,
            iterations,
        }
    }
}

/// Solver tolerances. `U` and `r` are scaled to unit max-abs internally, so
/// these are all relative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpTolerances {
    /// Slack allowed on the multiplier bounds at optimality.
    pub optimality: f64,
    /// Once the tie-breaking offsets are gone, `|u_jᵀw| ≤ zero · ‖w‖₁`
    /// counts as a zero residual.
    pub zero: f64,
    /// Smallest edge slope `|u_jᵀd|` accepted for an entering column.
    pub pivot: f64,
    /// Required `|rᵀw − 1|` at an optimal answer.
    pub feasibility: f64,
    /// `None` means `20 (m + n) + 1000`.
    pub max_iterations: Option<usize>,
}

impl Default for LpTolerances {
    fn default() -> Self {
        LpTolerances {
            optimality: 1e-9,
            zero: 1e-12,
            pivot: 1e-9,
            feasibility: 1e-9,
            max_iterations: None,
        }
    }
}

impl LpTolerances {
    pub fn from_policy(_tol: &TolerancePolicy) -> Self {
        Self::default()
    }
}

/// Solves the L1 row problem to optimality.
///
/// `r = 0` yields [`LpStatus::Infeasible`]; exceeding the pivot budget
/// yields [`LpStatus::IterationLimit`]. Shape errors are returned as `Err`.
pub fn solve_l1_row(p: &L1RowProblem<'_>, tol: &LpTolerances) -> Result<LpSolution> {
    let u = p.observations;
    let (m, n) = (u.rows(), u.cols());
    if m == 0 || n == 0 {
        return Err(Error::EmptyInput);
    }
    if p.constraint.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: p.constraint.len(),
        });
    }
    if p.constraint.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let r_scale = max_abs(p.constraint);
    if r_scale == 0.0 {
        return Ok(LpSolution::failed(m, LpStatus::Infeasible, 0));
    }
    let u_scale = u.max_abs();
    if u_scale == 0.0 {
        // every feasible w gives objective 0
        let rr = dot(p.constraint, p.constraint);
        let w: Vec<f64> = p.constraint.iter().map(|x| x / rr).collect();
        return Ok(LpSolution {
            w,
            objective: 0.0,
            status: LpStatus::Optimal,
            iterations: 0,
        });
    }

    let mut ut = u.transpose();
    ut.scale_mut(1.0 / u_scale);
    let r: Vec<f64> = p.constraint.iter().map(|x| x / r_scale).collect();
    let max_iterations = tol.max_iterations.unwrap_or(20 * (m + n) + 1000);
    let mut solver = ActiveSet::new(&ut, &r, *tol);
    let status = solver.run(max_iterations);
    let iterations = solver.iterations;
    let mut w = match status {
        LpStatus::Optimal => solver.w,
        other => return Ok(LpSolution::failed(m, other, iterations)),
    };
    w.iter_mut().for_each(|x| *x /= r_scale);
    let objective = l1_of_combination(u, &w);
    if objective <= 1e-12 * u_scale * max_abs(&w) {
        // a zero optimum is better certified by the null space of Uᵀ
        if let Some(v) = zero_objective_point(u, p.constraint) {
            w = v;
        }
    }
    let objective = l1_of_combination(u, &w);
    let feasible = libm::fabs(dot(p.constraint, &w) - 1.0) <= tol.feasibility;
    Ok(LpSolution {
        w,
        objective,
        status: if feasible {
            LpStatus::Optimal
        } else {
            LpStatus::IterationLimit
        },
        iterations,
    })
}

/// `‖wᵀU‖₁`.
pub fn l1_of_combination(u: &DenseMatrix, w: &[f64]) -> f64 {
    u.left_mul_vec(w)
        .map(|s| s.iter().map(|x| libm::fabs(*x)).sum())
        .unwrap_or(f64::NAN)
}

/// When the optimum is zero, a `w` with `wᵀU = 0` and `rᵀw = 1`.
fn zero_objective_point(u: &DenseMatrix, r: &[f64]) -> Option<Vec<f64>> {
    let ns = null_space(&u.transpose(), &TolerancePolicy::default()).ok()?;
    let best = ns
        .row_iter()
        .max_by(|a, b| libm::fabs(dot(a, r)).total_cmp(&libm::fabs(dot(b, r))))?;
    let rv = dot(best, r);
    if libm::fabs(rv) < 1e-12 * max_abs(r) {
        return None;
    }
    Some(best.iter().map(|x| x / rv).collect())
}

/// Deterministic offset in `±[0.5, 1.5)`, different for every column.
fn offset(j: usize) -> f64 {
    let mut z = (j as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let frac = (z >> 11) as f64 / (1u64 << 53) as f64;
    if z & 1 == 0 {
        0.5 + frac
    } else {
        -0.5 - frac
    }
}

/// What pins one row of the vertex matrix `M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pin {
    /// `rᵀw = 1`; never released.
    Normalisation,
    /// `w_i = 0`; free to release, never re-enters.
    Artificial(usize),
    /// `u_jᵀw = 0`; releasing it costs `|u_jᵀd|`.
    Column(usize),
}

struct ActiveSet<'a> {
    m: usize,
    n: usize,
    /// `Uᵀ`, one column of `U` per row.
    ut: &'a DenseMatrix,
    r: &'a [f64],
    tol: LpTolerances,
    pins: Vec<Pin>,
    /// `M⁻¹`, row-major. `w` is its column at the normalisation row.
    minv: Vec<f64>,
    active: Vec<bool>,
    w: Vec<f64>,
    /// `a_j = u_jᵀw`.
    a: Vec<f64>,
    /// Sign of each residual: `0` for active or numerically zero columns.
    sign: Vec<i8>,
    /// `g = Σ sign_j u_j`.
    g: Vec<f64>,
    /// Residual offsets: the walk minimises `Σ |u_jᵀw + ξ_j|`.
    xi: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> ActiveSet<'a> {
    fn new(ut: &'a DenseMatrix, r: &'a [f64], tol: LpTolerances) -> Self {
        let (n, m) = (ut.rows(), ut.cols());
        // M is the identity with the normalisation row in place of the
        // largest entry of r, which keeps it invertible
        let lead = (0..m).fold(0, |b, i| if libm::fabs(r[i]) > libm::fabs(r[b]) { i } else { b });
        let pins: Vec<Pin> = (0..m)
            .map(|i| if i == lead { Pin::Normalisation } else { Pin::Artificial(i) })
            .collect();
        let mut s = ActiveSet {
            m,
            n,
            ut,
            r,
            tol,
            pins,
            minv: vec![0.0; m * m],
            active: vec![false; n],
            w: vec![0.0; m],
            a: vec![0.0; n],
            sign: vec![0; n],
            g: vec![0.0; m],
            xi: (0..n).map(|j| PERTURBATION * offset(j)).collect(),
            iterations: 0,
            since_refactor: 0,
        };
        s.refactor();
        s
    }

    fn pin_row(&self, pin: Pin) -> Vec<f64> {
        match pin {
            Pin::Normalisation => self.r.to_vec(),
            Pin::Artificial(i) => {
                let mut e = vec![0.0; self.m];
                e[i] = 1.0;
                e
            }
            Pin::Column(j) => self.ut.row(j).to_vec(),
        }
    }

    fn minv_column(&self, p: usize) -> Vec<f64> {
        (0..self.m).map(|i| self.minv[i * self.m + p]).collect()
    }

    fn normalisation_row(&self) -> usize {
        self.pins.iter().position(|&p| p == Pin::Normalisation).unwrap_or(0)
    }

    /// Rebuilds `M⁻¹` and every derived quantity from the pins alone.
    fn refactor(&mut self) -> bool {
        self.since_refactor = 0;
        let rows: Vec<Vec<f64>> = self.pins.iter().map(|&p| self.pin_row(p)).collect();
        let Ok(mm) = DenseMatrix::from_rows(&rows) else {
            return false;
        };
        let Ok(inv) = inverse(&mm) else {
            return false;
        };
        self.minv.copy_from_slice(inv.as_slice());
        // w solves M w = (1 at the normalisation, −ξ_j at columns, 0 else)
        self.w = vec![0.0; self.m];
        for p in 0..self.m {
            let rhs = match self.pins[p] {
                Pin::Normalisation => 1.0,
                Pin::Artificial(_) => 0.0,
                Pin::Column(j) => -self.xi[j],
            };
            if rhs != 0.0 {
                axpy(rhs, &self.minv_column(p), &mut self.w);
            }
        }
        for j in 0..self.n {
            self.a[j] = if self.active[j] {
                0.0
            } else {
                dot(self.ut.row(j), &self.w) + self.xi[j]
            };
        }
        self.g.iter_mut().for_each(|x| *x = 0.0);
        self.sign.iter_mut().for_each(|s| *s = 0);
        self.resign();
        true
    }

    /// Re-derives residual signs, patching `g` for every change.
    fn resign(&mut self) {
        // with offsets in place only exact zeros are ties; near-ties get a
        // sign, which is as good as a slightly different offset
        let cut = if self.xi.iter().any(|&x| x != 0.0) {
            0.0
        } else {
            self.tol.zero * self.w.iter().map(|x| libm::fabs(*x)).sum::<f64>()
        };
        for j in 0..self.n {
            let s = if self.active[j] || libm::fabs(self.a[j]) <= cut {
                0
            } else if self.a[j] > 0.0 {
                1
            } else {
                -1
            };
            if s != self.sign[j] {
                axpy(f64::from(s - self.sign[j]), self.ut.row(j), &mut self.g);
                self.sign[j] = s;
            }
        }
    }

    fn run(&mut self, max_iterations: usize) -> LpStatus {
        let m = self.m;
        let mut b = vec![0.0; self.n];
        let mut breaks: Vec<(f64, usize)> = Vec::with_capacity(self.n);
        let mut degenerate_streak = 0usize;
        loop {
            if self.iterations >= max_iterations {
                return LpStatus::IterationLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY && !self.refactor() {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate_streak >= BLAND_AFTER;

            // multipliers y = −M⁻ᵀ g; a pin whose |y| exceeds its release
            // cost opens a descent edge
            let mut leaving: Option<(usize, f64, f64)> = None;
            for p in 0..m {
                let cost = match self.pins[p] {
                    Pin::Normalisation => continue,
                    Pin::Artificial(_) => 0.0,
                    Pin::Column(_) => 1.0,
                };
                let (mut y, mut norm2) = (0.0, 0.0);
                for i in 0..m {
                    let c = self.minv[i * m + p];
                    y -= c * self.g[i];
                    norm2 += c * c;
                }
                if libm::fabs(y) - cost <= self.tol.optimality {
                    continue;
                }
                // descent per unit length of the edge
                let violation = (libm::fabs(y) - cost) / libm::sqrt(norm2);
                let better = match leaving {
                    None => true,
                    Some((q, _, _)) if bland => self.pin_order(p) < self.pin_order(q),
                    Some((_, _, v)) => violation > v,
                };
                if better {
                    leaving = Some((p, y, violation));
                }
            }
            let Some((p, y, _)) = leaving else {
                if self.certify() {
                    return LpStatus::Optimal;
                }
                if !self.shrink_offsets() {
                    return LpStatus::IterationLimit;
                }
                continue;
            };
            let sigma = if y > 0.0 { 1.0 } else { -1.0 };
            let d: Vec<f64> = self.minv_column(p).iter().map(|x| sigma * x).collect();
            for j in 0..self.n {
                b[j] = if self.active[j] { 0.0 } else { dot(self.ut.row(j), &d) };
            }

            // slope of the objective just past t = 0 along d
            let release_cost = if matches!(self.pins[p], Pin::Column(_)) { 1.0 } else { 0.0 };
            let mut slope = release_cost;
            for j in 0..self.n {
                if self.active[j] {
                    continue;
                }
                slope += match self.sign[j] {
                    0 => libm::fabs(b[j]),
                    s => f64::from(s) * b[j],
                };
            }

            let (entering, step) = if slope >= -self.tol.optimality {
                // degenerate: swap in a zero residual column without moving
                let mut pick: Option<usize> = None;
                for j in 0..self.n {
                    if self.active[j] || self.sign[j] != 0 || libm::fabs(b[j]) <= self.tol.pivot {
                        continue;
                    }
                    if pick.is_none_or(|q| !bland && libm::fabs(b[j]) > libm::fabs(b[q])) {
                        pick = Some(j);
                    }
                }
                match pick {
                    Some(j) => (j, 0.0),
                    None if self.certify() => return LpStatus::Optimal,
                    None => {
                        if !self.shrink_offsets() {
                            return LpStatus::IterationLimit;
                        }
                        continue;
                    }
                }
            } else {
                breaks.clear();
                for j in 0..self.n {
                    if self.active[j] || self.sign[j] == 0 || libm::fabs(b[j]) <= self.tol.pivot {
                        continue;
                    }
                    let t = -self.a[j] / b[j];
                    if t > 0.0 {
                        breaks.push((t, j));
                    }
                }
                breaks.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                let mut stop = None;
                for &(t, j) in &breaks {
                    slope += 2.0 * libm::fabs(b[j]);
                    if slope >= 0.0 {
                        stop = Some((j, t));
                        break;
                    }
                }
                match stop {
                    Some(s) => s,
                    None => return LpStatus::Unbounded,
                }
            };

            if !self.pivot(p, entering, step, &d, &b) {
                return LpStatus::IterationLimit;
            }
            if step <= 1e-14 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }
            self.iterations += 1;
        }
    }

    /// Checks the current basis against the unshifted problem. The signs
    /// the walk used form a valid subgradient, and hence an optimality
    /// certificate, as long as no nonzero unshifted residual disagrees with
    /// them. On success `w` becomes the unshifted vertex.
    fn certify(&mut self) -> bool {
        let w0 = self.minv_column(self.normalisation_row());
        let cut = 1e-9 * w0.iter().map(|x| libm::fabs(*x)).sum::<f64>();
        for j in 0..self.n {
            if self.active[j] {
                continue;
            }
            let a0 = dot(self.ut.row(j), &w0);
            if libm::fabs(a0) > cut && (a0 > 0.0) != (self.sign[j] > 0) {
                return false;
            }
        }
        self.w = w0;
        true
    }

    /// Shrinks the offsets by 1000 (dropping them once negligible) and
    /// rebuilds; `false` if they are already gone.
    fn shrink_offsets(&mut self) -> bool {
        if self.xi.iter().all(|&x| x == 0.0) {
            return false;
        }
        let tiny = self.xi.iter().all(|x| libm::fabs(*x) < 1e-15);
        self.xi.iter_mut().for_each(|x| *x = if tiny { 0.0 } else { *x * 1e-3 });
        self.refactor()
    }

    /// Stable ordering of pins for Bland's rule.
    fn pin_order(&self, p: usize) -> usize {
        match self.pins[p] {
            Pin::Normalisation => usize::MAX,
            Pin::Artificial(i) => i,
            Pin::Column(j) => self.m + j,
        }
    }

    /// Moves `w` by `step · d` and replaces pin `p` with column `q`.
    fn pivot(&mut self, p: usize, q: usize, step: f64, d: &[f64], b: &[f64]) -> bool {
        let m = self.m;
        let uq = self.ut.row(q);
        let cp = self.minv_column(p);
        let denom = dot(uq, &cp);
        if libm::fabs(denom) <= 1e-14 {
            return false;
        }
        // Sherman–Morrison for a replaced row of M
        let mut vt_minv = vec![0.0; m];
        for i in 0..m {
            axpy(uq[i], &self.minv[i * m..(i + 1) * m], &mut vt_minv);
        }
        vt_minv[p] -= 1.0;
        for i in 0..m {
            let f = cp[i] / denom;
            if f != 0.0 {
                axpy(-f, &vt_minv, &mut self.minv[i * m..(i + 1) * m]);
            }
        }
        let released = match self.pins[p] {
            Pin::Column(k) => Some(k),
            _ => None,
        };
        self.pins[p] = Pin::Column(q);
        self.active[q] = true;
        self.since_refactor += 1;

        axpy(step, d, &mut self.w);
        for j in 0..self.n {
            self.a[j] += step * b[j];
        }
        self.a[q] = 0.0;
        if let Some(k) = released {
            self.active[k] = false;
            self.a[k] = dot(self.ut.row(k), &self.w) + self.xi[k];
        }
        self.resign();
        true
    }
}
