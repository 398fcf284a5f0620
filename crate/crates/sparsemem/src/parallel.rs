//! Rayon-backed pair solving for the learner.

use rayon::prelude::*;
use sparsemem_core::PairSolver;

/// Solves the per-pair LPs on the current rayon pool. Results come back in
/// pair order, so the learned rows match [`sparsemem_core::Sequential`]
/// bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl PairSolver for Rayon {
    fn solve_pairs(
        &self,
        pairs: &[(usize, usize)],
        solve: &(dyn Fn((usize, usize)) -> Option<Vec<f64>> + Sync),
    ) -> Vec<Option<Vec<f64>>> {
        pairs.par_iter().map(|&p| solve(p)).collect()
    }
}
