//! Neural associative memories over sparsely-constrained subspaces.
//!
//! A dataset is the null space of a sparse random `m × n` constraint matrix
//! `B`. The learning phase recovers `B` exactly (up to row scaling and
//! order) from dataset samples by pairwise-L1 square dictionary learning;
//! the recall phase removes sparse adversarial errors by iterative expander
//! decoding over the bipartite graph of `B`.
//!
//! The crate is `no_std` and only needs `alloc`. IO, file formats and the
//! command-line harness live in the `sparsemem` companion crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod learn;
pub mod linalg;
pub mod lp;
pub mod matrix;
pub mod model;
pub mod recall;
pub mod seed;
pub mod tolerance;

pub use error::{Error, Result};
pub use learn::{
    er_spud, er_spud_with, exhaustive_sparse_basis, learn_constraints, learn_constraints_with,
    match_rows, ErSpudConfig, ErSpudOutput, LearnReport, PairBudget, PairSolver, RowMatch,
    Sequential,
};
pub use linalg::{null_space, orthogonal_complement_from_samples, rank, OrthogonalComplement};
pub use lp::{solve_l1_row, L1RowProblem, LpSolution, LpStatus, LpTolerances};
pub use matrix::DenseMatrix;
pub use model::{
    enumerate_binary_nullspace, generate_b, generate_error, sample_dataset, SparseConstraintMatrix,
    WeightLaw,
};
pub use recall::{
    check_expansion, decode, expansion_failure_bound, recall, syndrome, DecodeOutcome,
    DecodeStatus, Decoder, DecoderConfig, DecoderState, ExpansionReport, RecallOutcome,
};
pub use seed::RngSeed;
pub use tolerance::TolerancePolicy;
