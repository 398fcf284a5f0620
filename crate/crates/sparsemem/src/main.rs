use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sparsemem::experiment::{self, ExperimentConfig, SweepConfig, STREAM_B, STREAM_PAIRS, STREAM_SAMPLES};
use sparsemem::{format, Rayon};
use sparsemem_core::model::sample_for_learning;
use sparsemem_core::{
    check_expansion, enumerate_binary_nullspace, exhaustive_sparse_basis, generate_b,
    learn_constraints_with, recall, DecoderConfig, DenseMatrix, ErSpudConfig, PairBudget, RngSeed,
    SparseConstraintMatrix, TolerancePolicy, WeightLaw,
};

/// Associative memories over sparsely constrained subspaces.
#[derive(Parser)]
#[command(name = "sparsemem", version)]
struct Cli {
    /// Master seed for every random draw (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance override, e.g. `--tol rank_tol=1e-10`. Repeatable.
    #[arg(long = "tol", global = true, value_name = "KEY=VALUE")]
    tol: Vec<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primary output file (stdout when omitted, where that makes sense).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Generator {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// `uniform:<L>`, `gaussian:<sigma>` or `rademacher`.
    #[arg(long, default_value = "uniform:3", value_parser = parse_law)]
    law: WeightLaw,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random constraint matrix B in sparse format.
    Gen {
        #[command(flatten)]
        gen: Generator,
        /// Also write dataset samples (dense, one per row) here.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Learn B from dataset samples, or from a freshly generated instance.
    Learn {
        /// Dense sample file; without it an instance is generated from
        /// `--m --n --d --law` and used as the reference.
        #[arg(long, conflicts_with_all = ["n", "law"])]
        samples: Option<PathBuf>,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, value_parser = parse_law)]
        law: Option<WeightLaw>,
        /// Reference B (sparse) to match the learned rows against.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Solve only this many seeded random pairs instead of all.
        #[arg(long)]
        pairs: Option<usize>,
        /// Where to write the JSON report (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Decode a corrupted message `y` against B.
    Decode {
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Check (t, l)-expansion of the graph of B.
    ExpandCheck {
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        l: f64,
    },
    /// Run a recall experiment and write CSV plus a JSON sidecar.
    Simulate {
        /// JSON experiment configuration; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Decode with the generated B instead of a learned one.
        #[arg(long = "true-b", alias = "true-B")]
        true_b: bool,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Exact-learning frequency over a grid of m and n = ceil(c m ln m).
    SweepLearning {
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        c: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value = "uniform:3", value_parser = parse_law)]
        law: WeightLaw,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Brute-force sparse basis of the row space of a dense matrix.
    SparseSearch {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        d: usize,
    },
    /// List the ±1 vectors in the null space of B.
    EnumerateBinary {
        #[arg(long)]
        b: PathBuf,
    },
}

fn parse_law(s: &str) -> std::result::Result<WeightLaw, String> {
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let law = match name {
        "uniform" => WeightLaw::UniformIntegerSet {
            max: arg.parse().map_err(|_| format!("bad uniform bound {arg:?}"))?,
        },
        "gaussian" => WeightLaw::Gaussian {
            sigma: if arg.is_empty() {
                1.0
            } else {
                arg.parse().map_err(|_| format!("bad sigma {arg:?}"))?
            },
        },
        "rademacher" if arg.is_empty() => WeightLaw::Rademacher,
        _ => return Err(format!("unknown law {s:?}")),
    };
    law.validate().map_err(|e| e.to_string())?;
    Ok(law)
}

fn tolerances(overrides: &[String]) -> Result<TolerancePolicy> {
    let mut tol = TolerancePolicy::default();
    for kv in overrides {
        let (key, value) = kv
            .split_once('=')
            .with_context(|| format!("--tol expects KEY=VALUE, got {kv:?}"))?;
        let value: f64 = value.parse().with_context(|| format!("bad value in {kv:?}"))?;
        let slot = match key {
            "rank_tol" => &mut tol.rank_tol,
            "zero_tol" => &mut tol.zero_tol,
            "ratio_tol" => &mut tol.ratio_tol,
            "sparsity_tol" => &mut tol.sparsity_tol,
            _ => bail!("unknown tolerance {key:?}"),
        };
        *slot = value;
    }
    tol.validate()?;
    Ok(tol)
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).map_err(Into::into),
    }
}

fn required_out(out: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    out.clone().with_context(|| format!("{what} needs --out"))
}

fn learner(pairs: Option<usize>, seed: RngSeed, tol: &TolerancePolicy) -> ErSpudConfig {
    ErSpudConfig {
        pair_budget: match pairs {
            None => PairBudget::All,
            Some(count) => PairBudget::Sampled { count, seed },
        },
        sparsity_tol: tol.sparsity_tol,
        ..ErSpudConfig::default()
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let tol = tolerances(&cli.tol)?;
    let seed = RngSeed(cli.seed.unwrap_or(0));
    let out = cli.out.as_deref();

    match cli.command {
        Command::Gen { gen, samples } => {
            let b = generate_b(gen.m, gen.n, gen.d, gen.law, seed.derive(STREAM_B, 0))?;
            match out {
                Some(p) => format::save_sparse(p, &b)?,
                None => format::write_sparse(io::stdout().lock(), &b)?,
            }
            if let Some(path) = samples {
                let (s, _) = sample_for_learning(&b, None, WeightLaw::Gaussian { sigma: 1.0 }, seed.derive(STREAM_SAMPLES, 0), &tol)?;
                format::save_dense(&path, &s)?;
            }
        }
        Command::Learn {
            samples,
            m,
            n,
            d,
            law,
            reference,
            pairs,
            report,
        } => {
            let (data, generated) = match samples {
                Some(path) => (format::load_dense(&path)?, None),
                None => {
                    let n = n.context("learn needs --samples or --n")?;
                    let law = law.unwrap_or(WeightLaw::UniformIntegerSet { max: 3 });
                    let b = generate_b(m, n, d, law, seed.derive(STREAM_B, 0))?;
                    let (s, _) = sample_for_learning(&b, Some(m), WeightLaw::Gaussian { sigma: 1.0 }, seed.derive(STREAM_SAMPLES, 0), &tol)?;
                    (s, Some(b))
                }
            };
            let reference = match reference {
                Some(p) => Some(format::load_sparse(&p)?),
                None => generated,
            };
            let ref_dense = reference.as_ref().map(SparseConstraintMatrix::to_dense);
            let start = Instant::now();
            let cfg = learner(pairs, seed.derive(STREAM_PAIRS, 0), &tol);
            let rep = learn_constraints_with(&data, m, &cfg, &tol, ref_dense.as_ref(), &Rayon)?;
            let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            let b_hat = SparseConstraintMatrix::from_dense(&rep.b_hat, max_column_nnz(&rep.b_hat, tol.sparsity_tol).max(d), tol.sparsity_tol)?;
            match out {
                Some(p) => format::save_sparse(p, &b_hat)?,
                None => format::write_sparse(io::stdout().lock(), &b_hat)?,
            }
            let m_ = rep.matching.as_ref();
            write_json(
                report.as_deref(),
                &json!({
                    "exact": rep.exact(),
                    "max_residual": m_.map(|r| r.max_residual),
                    "permutation": m_.map(|r| &r.permutation),
                    "scales": m_.map(|r| &r.scales),
                    "wall_time_ms": wall_time_ms,
                    "lp_count": rep.lp_count,
                    "failed_pairs": rep.failed_pairs,
                }),
            )?;
        }
        Command::Decode {
            b,
            y,
            epsilon,
            max_iters,
        } => {
            let b = format::load_sparse(&b)?;
            let y = format::load_vector(&y)?;
            let cfg = DecoderConfig {
                epsilon,
                max_iterations: max_iters,
                ratio_tol: tol.ratio_tol,
                zero_tol: tol.zero_tol,
            };
            let r = recall(&b, &y, &cfg)?;
            if let Some(p) = out {
                format::save_vector(p, &r.x_hat)?;
            }
            write_json(
                None,
                &json!({ "status": r.status, "iterations": r.iterations, "residual": r.residual }),
            )?;
        }
        Command::ExpandCheck { b, t, l } => {
            let b = format::load_sparse(&b)?;
            write_json(out, &check_expansion(&b, t, l)?)?;
        }
        Command::Simulate {
            config,
            true_b,
            trials,
        } => {
            let mut cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default(),
            };
            if true_b {
                cfg.use_learned_b = false;
            }
            if let Some(t) = trials {
                cfg.trials_per_e = t;
            }
            if cli.seed.is_some() {
                cfg.seed = seed;
            }
            if !cli.tol.is_empty() {
                cfg.tolerances = tol;
            }
            let path = required_out(&cli.out, "simulate")?;
            let result = experiment::run_recall_experiment(&cfg)?;
            experiment::emit_csv(&result, &path)?;
            if result.metadata.aborted {
                eprintln!(
                    "learning failed, experiment aborted: {}",
                    result.metadata.learn_error.as_deref().unwrap_or("unknown")
                );
                std::process::exit(2);
            }
        }
        Command::SweepLearning {
            m,
            c,
            d,
            law,
            trials,
            pairs,
        } => {
            let rows = experiment::run_learning_sweep(&SweepConfig {
                m_list: m,
                c_list: c,
                d,
                law,
                trials,
                seed,
                pair_budget: pairs,
                tolerances: tol,
            })?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(match out {
                    Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?) as Box<dyn Write>,
                    None => Box::new(io::stdout()),
                });
            for row in rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        Command::SparseSearch { input, d } => {
            let a = format::load_dense(&input)?;
            let basis = exhaustive_sparse_basis(&a, d, &tol)?;
            match out {
                Some(p) => format::save_dense(p, &basis)?,
                None => format::write_dense(io::stdout().lock(), &basis)?,
            }
        }
        Command::EnumerateBinary { b } => {
            let b = format::load_sparse(&b)?;
            let found = enumerate_binary_nullspace(&b, &tol)?;
            write_json(out, &found)?;
        }
    }
    Ok(())
}

fn max_column_nnz(b: &DenseMatrix, sparsity_tol: f64) -> usize {
    let cut = sparsity_tol * b.max_abs();
    (0..b.cols())
        .map(|j| (0..b.rows()).filter(|&i| b.row(i)[j].abs() > cut).count())
        .max()
        .unwrap_or(0)
}
