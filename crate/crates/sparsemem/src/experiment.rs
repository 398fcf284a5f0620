//! Recall experiments and learning sweeps.
//!
//! Every random object is drawn from a seed derived from the master seed
//! and a fixed `(stream, index)` pair, so adding error counts or trials
//! never perturbs the draws of existing ones, and parallel runs equal
//! serial runs bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sparsemem_core::model::sample_for_learning;
use sparsemem_core::{
    decode, generate_b, generate_error, learn_constraints_with, syndrome, DecodeStatus,
    DecoderConfig, ErSpudConfig, PairBudget, RngSeed, SparseConstraintMatrix, TolerancePolicy,
    WeightLaw,
};

use crate::parallel::Rayon;

/// Seed streams shared with the CLI, so `gen`, `learn` and `simulate` draw
/// the same instance for the same master seed.
pub const STREAM_B: u64 = 1;
pub const STREAM_SAMPLES: u64 = 2;
pub const STREAM_PAIRS: u64 = 3;
/// Trial streams are `STREAM_TRIAL_BASE + E`, indexed by trial number.
const STREAM_TRIAL_BASE: u64 = 1 << 32;

/// Relative tolerance for calling a decoded error equal to the planted one.
pub const RECOVERY_TOL: f64 = 1e-9;

pub const CSV_HEADER: [&str; 6] = [
    "E",
    "trials",
    "failures",
    "failure_fraction",
    "mean_iterations",
    "mean_decode_ms",
];

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] sparsemem_core::Error),
}

type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub weight_law: WeightLaw,
    /// Planted error values are uniform over `{±1, …, ±error_magnitude}`.
    pub error_magnitude: u32,
    pub error_counts: Vec<usize>,
    #[serde(rename = "trials_per_E")]
    pub trials_per_e: usize,
    pub seed: RngSeed,
    pub epsilon: f64,
    /// Decode with constraints learned from samples instead of the true
    /// `B`.
    #[serde(rename = "use_learned_B")]
    pub use_learned_b: bool,
    /// Caps the learner's pair count; `None` runs all pairs.
    pub learn_pair_budget: Option<usize>,
    /// Off by default so that results are byte-for-byte reproducible.
    pub record_timing: bool,
    pub tolerances: TolerancePolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            m: 100,
            n: 800,
            d: 3,
            weight_law: WeightLaw::UniformIntegerSet { max: 3 },
            error_magnitude: 4,
            error_counts: (1..=30).collect(),
            trials_per_e: 100,
            seed: RngSeed(0),
            epsilon: 0.25,
            use_learned_b: true,
            learn_pair_budget: None,
            record_timing: false,
            tolerances: TolerancePolicy::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(HarnessError::Config(s.to_string()));
        if self.m == 0 || self.n == 0 || self.d == 0 {
            return bad("m, n and d must be positive");
        }
        if self.trials_per_e == 0 {
            return bad("trials_per_e must be at least 1");
        }
        if let Some(&e) = self.error_counts.iter().find(|&&e| e > self.n) {
            return bad(&format!("error count {e} exceeds n = {}", self.n));
        }
        if self.error_magnitude == 0 {
            return bad("error_magnitude must be at least 1");
        }
        self.weight_law.validate()?;
        self.tolerances.validate()?;
        self.decoder().validate()?;
        Ok(())
    }

    pub fn decoder(&self) -> DecoderConfig {
        DecoderConfig {
            epsilon: self.epsilon,
            ratio_tol: self.tolerances.ratio_tol,
            zero_tol: self.tolerances.zero_tol,
            ..DecoderConfig::default()
        }
    }

    pub fn learner(&self) -> ErSpudConfig {
        ErSpudConfig {
            pair_budget: match self.learn_pair_budget {
                None => PairBudget::All,
                Some(count) => PairBudget::Sampled {
                    count,
                    seed: self.seed.derive(STREAM_PAIRS, 0),
                },
            },
            sparsity_tol: self.tolerances.sparsity_tol,
            ..ErSpudConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    #[serde(rename = "E")]
    pub e: usize,
    pub trials: usize,
    pub failures: usize,
    pub failure_fraction: f64,
    pub mean_iterations: f64,
    pub mean_decode_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetadata {
    pub config: ExperimentConfig,
    /// FNV-1a of the generated `B`, hex.
    pub b_checksum: String,
    /// Learning outcome against the generated `B`, when learning ran.
    pub learn_exact: Option<bool>,
    pub learn_max_residual: Option<f64>,
    pub learn_error: Option<String>,
    /// Set when learning failed and no trials ran.
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub metadata: ExperimentMetadata,
}

struct Trial {
    failed: bool,
    iterations: usize,
    millis: f64,
}

/// Plants an error of weight `e`, decodes its syndrome and compares.
fn run_trial(b: &SparseConstraintMatrix, cfg: &ExperimentConfig, e: usize, t: usize) -> Result<Trial> {
    let seed = cfg.seed.derive(STREAM_TRIAL_BASE + e as u64, t as u64);
    let planted = generate_error(cfg.n, e, cfg.error_magnitude, seed)?;
    let z = syndrome(b, &planted)?;
    let start = cfg.record_timing.then(Instant::now);
    let out = decode(b, &z, &cfg.decoder())?;
    let millis = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
    let recovered = out.status == DecodeStatus::Success
        && out
            .e_hat
            .iter()
            .zip(&planted)
            .all(|(a, b)| (a - b).abs() <= RECOVERY_TOL * b.abs().max(1.0));
    Ok(Trial {
        failed: !recovered,
        iterations: out.iterations,
        millis,
    })
}

/// Runs the recall experiment described by `cfg`.
///
/// Learning failures do not raise: they come back as an aborted result
/// with the reason in the metadata.
pub fn run_recall_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let b = generate_b(cfg.m, cfg.n, cfg.d, cfg.weight_law, cfg.seed.derive(STREAM_B, 0))?;
    let mut metadata = ExperimentMetadata {
        config: cfg.clone(),
        b_checksum: format!("{:016x}", b.checksum()),
        learn_exact: None,
        learn_max_residual: None,
        learn_error: None,
        aborted: false,
    };

    let decode_with = if cfg.use_learned_b {
        match learn_b(&b, cfg) {
            Ok((b_hat, exact, residual)) => {
                metadata.learn_exact = Some(exact);
                metadata.learn_max_residual = Some(residual);
                b_hat
            }
            Err(e) => {
                metadata.learn_error = Some(e.to_string());
                metadata.aborted = true;
                return Ok(ExperimentResult {
                    rows: Vec::new(),
                    metadata,
                });
            }
        }
    } else {
        b
    };

    let jobs: Vec<(usize, usize)> = cfg
        .error_counts
        .iter()
        .flat_map(|&e| (0..cfg.trials_per_e).map(move |t| (e, t)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(e, t)| run_trial(&decode_with, cfg, e, t))
        .collect::<Result<Vec<Trial>>>()?;

    let rows = cfg
        .error_counts
        .iter()
        .zip(trials.chunks(cfg.trials_per_e))
        .map(|(&e, chunk)| {
            let count = chunk.len();
            let failures = chunk.iter().filter(|t| t.failed).count();
            let iterations: usize = chunk.iter().map(|t| t.iterations).sum();
            let millis: f64 = chunk.iter().map(|t| t.millis).sum();
            ExperimentRow {
                e,
                trials: count,
                failures,
                failure_fraction: failures as f64 / count as f64,
                mean_iterations: iterations as f64 / count as f64,
                mean_decode_ms: millis / count as f64,
            }
        })
        .collect();
    Ok(ExperimentResult { rows, metadata })
}

/// Learns `B̂` from fresh samples of the dataset of `b`.
fn learn_b(b: &SparseConstraintMatrix, cfg: &ExperimentConfig) -> Result<(SparseConstraintMatrix, bool, f64)> {
    let tol = &cfg.tolerances;
    let (samples, _) = sample_for_learning(
        b,
        Some(cfg.m),
        WeightLaw::Gaussian { sigma: 1.0 },
        cfg.seed.derive(STREAM_SAMPLES, 0),
        tol,
    )?;
    let reference = b.to_dense();
    let report = learn_constraints_with(&samples, cfg.m, &cfg.learner(), tol, Some(&reference), &Rayon)?;
    let matching = report.matching.as_ref().expect("reference was supplied");
    let b_hat = SparseConstraintMatrix::from_dense(&report.b_hat, cfg.d, tol.sparsity_tol)?;
    Ok((b_hat, matching.is_exact(), matching.max_residual))
}

/// Writes the result rows as CSV and the metadata as a JSON sidecar next to
/// it (same path, `.json` extension).
pub fn emit_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for row in &result.rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let sidecar = sidecar_path(path);
    let io_err = |source| HarnessError::Io {
        path: sidecar.clone(),
        source,
    };
    let mut f = BufWriter::new(File::create(&sidecar).map_err(io_err)?);
    serde_json::to_writer_pretty(&mut f, &result.metadata)?;
    f.write_all(b"\n").and_then(|_| f.flush()).map_err(io_err)?;
    Ok(())
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

pub fn parse_csv(path: &Path) -> Result<Vec<ExperimentRow>> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(HarnessError::Config(format!("{}: unexpected header", path.display())));
    }
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Pool-adjacent-violators fit: the non-decreasing sequence closest to `y`
/// in least squares.
pub fn isotonic_non_decreasing(y: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (s2, c2) = blocks[blocks.len() - 1];
            let (s1, c1) = blocks[blocks.len() - 2];
            if s1 / c1 as f64 <= s2 / c2 as f64 {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s1 + s2, c1 + c2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

/// First error count whose isotonic-smoothed failure fraction exceeds
/// `level`; `None` if the curve never does.
pub fn crossing_threshold(rows: &[ExperimentRow], level: f64) -> Option<usize> {
    let smooth = isotonic_non_decreasing(&rows.iter().map(|r| r.failure_fraction).collect::<Vec<_>>());
    rows.iter().zip(smooth).find(|(_, f)| *f > level).map(|(r, _)| r.e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub c: f64,
    pub n: usize,
    pub trials: usize,
    pub exact: usize,
    pub exact_frequency: f64,
    /// Trials where learning returned an error.
    pub errors: usize,
    pub median_wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub m_list: Vec<usize>,
    pub c_list: Vec<f64>,
    pub d: usize,
    pub law: WeightLaw,
    pub trials: usize,
    pub seed: RngSeed,
    pub pair_budget: Option<usize>,
    pub tolerances: TolerancePolicy,
}

/// `n = ⌈c · m · ln m⌉`, at least `m + 1`.
pub fn sweep_n(m: usize, c: f64) -> usize {
    let n = (c * m as f64 * (m as f64).ln()).ceil();
    (n as usize).max(m + 1)
}

/// Exact-recovery frequency of the learner over a grid of `(m, c)`.
pub fn run_learning_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.m_list.is_empty() || cfg.c_list.is_empty() {
        return Err(HarnessError::Config("m and c lists must be nonempty".into()));
    }
    if cfg.trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    cfg.law.validate()?;
    let mut rows = Vec::new();
    for (mi, &m) in cfg.m_list.iter().enumerate() {
        for (ci, &c) in cfg.c_list.iter().enumerate() {
            let n = sweep_n(m, c);
            let cell = ((mi as u64) << 16) | ci as u64;
            let mut exact = 0;
            let mut errors = 0;
            let mut times = Vec::with_capacity(cfg.trials);
            for t in 0..cfg.trials {
                let seed = cfg.seed.derive(cell, t as u64);
                let start = Instant::now();
                match learn_trial(m, n, cfg, seed) {
                    Ok(true) => exact += 1,
                    Ok(false) => {}
                    Err(_) => errors += 1,
                }
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            times.sort_by(f64::total_cmp);
            rows.push(SweepRow {
                m,
                c,
                n,
                trials: cfg.trials,
                exact,
                exact_frequency: exact as f64 / cfg.trials as f64,
                errors,
                median_wall_ms: times[(times.len() - 1) / 2],
            });
        }
    }
    Ok(rows)
}

fn learn_trial(m: usize, n: usize, cfg: &SweepConfig, seed: RngSeed) -> Result<bool> {
    let tol = &cfg.tolerances;
    let b = generate_b(m, n, cfg.d, cfg.law, seed.derive(STREAM_B, 0))?;
    let (samples, _) = sample_for_learning(
        &b,
        Some(m),
        WeightLaw::Gaussian { sigma: 1.0 },
        seed.derive(STREAM_SAMPLES, 0),
        tol,
    )?;
    let learner = ErSpudConfig {
        pair_budget: match cfg.pair_budget {
            None => PairBudget::All,
            Some(count) => PairBudget::Sampled {
                count,
                seed: seed.derive(STREAM_PAIRS, 0),
            },
        },
        sparsity_tol: tol.sparsity_tol,
        ..ErSpudConfig::default()
    };
    let report = learn_constraints_with(&samples, m, &learner, tol, Some(&b.to_dense()), &Rayon)?;
    Ok(report.exact() == Some(true))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotonic_pools_violators() {
        let close = |a: Vec<f64>, b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
        };
        assert!(close(isotonic_non_decreasing(&[0.0, 0.2, 0.1, 0.5]), &[0.0, 0.15, 0.15, 0.5]));
        assert!(close(isotonic_non_decreasing(&[1.0, 0.0, 0.0]), &[1.0 / 3.0; 3]));
        assert!(isotonic_non_decreasing(&[]).is_empty());
    }

    #[test]
    fn sweep_sizes() {
        assert_eq!(sweep_n(8, 1.0), 17);
        assert_eq!(sweep_n(1, 5.0), 2);
    }
}
