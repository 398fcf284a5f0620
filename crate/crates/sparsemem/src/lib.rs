//! File formats, parallel pair solving and the experiment harness around
//! `sparsemem-core`.

pub mod experiment;
pub mod format;
pub mod parallel;

pub use experiment::{
    crossing_threshold, emit_csv, isotonic_non_decreasing, parse_csv, run_learning_sweep,
    run_recall_experiment, ExperimentConfig, ExperimentMetadata, ExperimentResult, ExperimentRow,
    HarnessError, SweepConfig, SweepRow,
};
pub use format::FormatError;
pub use parallel::Rayon;
