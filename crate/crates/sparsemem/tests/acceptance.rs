//! Acceptance criteria, one test and one `[PASS]`/`[FAIL]` line each.
//!
//! Run with `cargo test -p sparsemem --test acceptance -- --nocapture
//! --test-threads=1` to see the report lines in order.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use sparsemem::experiment::{crossing_threshold, isotonic_non_decreasing, run_recall_experiment, ExperimentConfig};
use sparsemem::Rayon;
use sparsemem_core::model::sample_for_learning;
use sparsemem_core::recall::expansion_failure_terms;
use sparsemem_core::{
    check_expansion, decode, enumerate_binary_nullspace, er_spud, exhaustive_sparse_basis,
    expansion_failure_bound, generate_b, generate_error, learn_constraints_with, match_rows, rank,
    recall, solve_l1_row, syndrome, DecodeStatus, Decoder, DecoderConfig, DenseMatrix, ErSpudConfig,
    L1RowProblem, LpStatus, LpTolerances, RngSeed, SparseConstraintMatrix, TolerancePolicy, WeightLaw,
};

const LAW: WeightLaw = WeightLaw::UniformIntegerSet { max: 3 };
const GAUSS: WeightLaw = WeightLaw::Gaussian { sigma: 1.0 };

fn report(id: &str, pass: bool, detail: &str) {
    println!("[{}] criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_1_exact_learning() {
    let tol = TolerancePolicy::default();
    let (m, n) = (8, 240);
    let mut exact = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let s = RngSeed(seed);
        let b = generate_b(m, n, 3, LAW, s.derive(1, 0)).unwrap();
        let (samples, _) = sample_for_learning(&b, Some(m), GAUSS, s.derive(2, 0), &tol).unwrap();
        let Ok(rep) = learn_constraints_with(&samples, m, &ErSpudConfig::default(), &tol, Some(&b.to_dense()), &Rayon) else {
            continue;
        };
        let res = rep.matching.as_ref().unwrap().max_residual;
        if res <= 1e-7 {
            exact += 1;
            worst = worst.max(res);
        }
    }
    report(
        "1",
        exact >= 19,
        &format!("m=8 n=240 d=3: {exact}/20 exact (need >= 19), worst exact residual {worst:.2e}"),
    );
}

/// Smallest seed whose `B` is a `(t, 2.25)`-expander.
fn expander(m: usize, n: usize, t: usize) -> (u64, SparseConstraintMatrix) {
    (0..)
        .map(|s| (s, generate_b(m, n, 3, LAW, RngSeed(s)).unwrap()))
        .find(|(_, b)| check_expansion(b, t, 2.25).unwrap().is_expander)
        .unwrap()
}

fn for_each_subset(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if left == 0 {
            f(cur);
            return;
        }
        for j in start..=n - left {
            cur.push(j);
            rec(j + 1, n, left - 1, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::new(), f);
}

#[test]
fn criterion_2_guaranteed_recall() {
    let cfg = DecoderConfig::default();
    let mut lines = Vec::new();
    let mut pass = true;
    // (m, n, k): the largest n at which a seeded (2k, 2.25)-expander turns up
    // quickly; expansion gets rarer fast as n grows
    for (m, n, k) in [(40, 24, 1), (40, 16, 2), (40, 12, 3)] {
        let (seed, b) = expander(m, n, 2 * k);
        let (mut vectors, mut supports, mut failures, mut max_iter) = (0usize, 0usize, 0usize, 0usize);
        for w in 1..=k {
            for_each_subset(n, w, &mut |support| {
                supports += 1;
                // every magnitude pattern in {±1, …, ±4}^w
                for code in 0..8usize.pow(w as u32) {
                    let mut e = vec![0.0; n];
                    let mut c = code;
                    for &j in support {
                        let v = (c % 8) as i32;
                        c /= 8;
                        e[j] = f64::from(if v < 4 { v + 1 } else { -(v - 3) });
                    }
                    let out = decode(&b, &syndrome(&b, &e).unwrap(), &cfg).unwrap();
                    vectors += 1;
                    max_iter = max_iter.max(out.iterations);
                    if out.status != DecodeStatus::Success || out.e_hat != e || out.iterations > 2 * k {
                        failures += 1;
                    }
                }
            });
        }
        pass &= failures == 0;
        lines.push(format!(
            "(m={m}, n={n}, seed {seed}, k={k}): {vectors} errors over {supports} supports, {failures} failures, max {max_iter} steps"
        ));
    }
    report("2", pass, &lines.join("; "));
}

#[test]
fn criterion_3_end_to_end_pipeline() {
    // all n(n−1)/2 = 319,600 pairs would take hours at this size; a seeded
    // budget of 2,000 pairs recovers B exactly
    let cfg = ExperimentConfig {
        m: 100,
        n: 800,
        d: 3,
        error_counts: (1..=30).collect(),
        trials_per_e: 100,
        use_learned_b: true,
        learn_pair_budget: Some(2000),
        ..ExperimentConfig::default()
    };
    let r = run_recall_experiment(&cfg).unwrap();
    let meta = &r.metadata;
    if meta.aborted {
        report("3", false, &format!("learning aborted: {:?}", meta.learn_error));
        return;
    }
    let small_clean = r.rows.iter().filter(|row| row.e <= 2).all(|row| row.failures == 0);
    let raw: Vec<f64> = r.rows.iter().map(|row| row.failure_fraction).collect();
    let smooth = isotonic_non_decreasing(&raw);
    let monotone = smooth.windows(2).all(|w| w[0] <= w[1]);
    let adjust = raw.iter().zip(&smooth).fold(0.0f64, |s, (a, b)| s.max((a - b).abs()));
    let curve: Vec<String> = r.rows.iter().map(|row| format!("{}:{}", row.e, row.failure_fraction)).collect();
    report(
        "3",
        meta.learn_exact == Some(true) && small_clean && monotone,
        &format!(
            "learned exact={:?} (residual {:.1e}); zero failures for E<=2: {small_clean}; smoothed curve non-decreasing: {monotone} (largest isotonic adjustment {adjust:.2}); curve {}",
            meta.learn_exact,
            meta.learn_max_residual.unwrap_or(f64::NAN),
            curve.join(" ")
        ),
    );
}

fn threshold(m: usize, n: usize, d: usize) -> Option<usize> {
    let cfg = ExperimentConfig {
        m,
        n,
        d,
        error_counts: (1..=60).collect(),
        trials_per_e: 100,
        use_learned_b: false,
        ..ExperimentConfig::default()
    };
    crossing_threshold(&run_recall_experiment(&cfg).unwrap().rows, 0.5)
}

#[test]
fn criterion_4_qualitative_trends() {
    // a curve that never crosses within the grid counts as +∞
    let key = |t: Option<usize>| t.unwrap_or(usize::MAX);
    let t3 = threshold(100, 800, 3);
    let t5 = threshold(100, 800, 5);
    let t7 = threshold(100, 800, 7);
    let big = threshold(200, 1600, 3);
    let in_d = key(t3) >= key(t5) && key(t5) >= key(t7);
    let in_m = key(big) >= key(t3);
    report(
        "4",
        in_d && in_m,
        &format!(
            "0.5-crossing E at (100,800): d=3 {t3:?}, d=5 {t5:?}, d=7 {t7:?} -> non-increasing in d: {in_d}; (200,1600) d=3 {big:?} -> non-decreasing in m: {in_m}"
        ),
    );
}

#[test]
fn criterion_5_oracle_equivalence() {
    let tol = TolerancePolicy::default();
    let mut worst: f64 = 0.0;
    let mut agree = 0;
    let mut seeds = Vec::new();
    for seed in 0.. {
        let b = generate_b(3, 10, 3, LAW, RngSeed(seed)).unwrap();
        let u = b.to_dense();
        if rank(&u, &tol).unwrap() < 3 {
            continue;
        }
        seeds.push(seed);
        let learned = er_spud(&u, &ErSpudConfig::default()).unwrap();
        // rows of a 3 × 10 instance may have all 10 entries nonzero
        let brute = exhaustive_sparse_basis(&u, 10, &tol).unwrap();
        let res = match_rows(&learned.v_hat, &brute).unwrap().max_residual;
        worst = worst.max(res);
        if res <= 1e-7 {
            agree += 1;
        }
        if seeds.len() == 10 {
            break;
        }
    }
    report(
        "5",
        agree == 10,
        &format!("m=3 n=10 d=3, seeds {seeds:?}: {agree}/10 agree, worst residual {worst:.2e}"),
    );
}

fn ln_choose(n: f64, k: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

#[test]
fn criterion_6_expansion_bound() {
    let mut rng = RngSeed(6).rng();
    let mut worst: f64 = 0.0;
    let mut tuples = 0;
    while tuples < 20 {
        let n = rng.random_range(10..100_000usize);
        let m = rng.random_range(2..=n.min(5_000));
        let d = rng.random_range(1..8usize);
        let eps = rng.random_range(0.01..0.99f64);
        let s_max = rng.random_range(0..30usize);
        let terms = expansion_failure_terms(n, m, d, eps, s_max).unwrap();
        for (s, &got) in (1..=s_max).zip(&terms) {
            let k = (1.0 - eps) * (d * s) as f64;
            let want = if k > m as f64 || s > n {
                1.0
            } else {
                (ln_choose(n as f64, s as f64) + ln_choose(m as f64, k) + (d * s) as f64 * (k / m as f64).ln()).exp()
            };
            let rel = if want == got { 0.0 } else { (got - want).abs() / want.abs().max(f64::MIN_POSITIVE) };
            worst = worst.max(rel);
        }
        let clamped: f64 = terms.iter().map(|p| p.min(1.0)).sum::<f64>().min(1.0);
        let bound = expansion_failure_bound(n, m, d, eps, s_max).unwrap();
        worst = worst.max((bound - clamped).abs() / clamped.max(f64::MIN_POSITIVE));
        tuples += 1;
    }
    let arithmetic = worst <= 1e-9;

    let n = 100_000usize;
    let m = (n as f64 / (2.0 * (n as f64).ln())) as usize;
    let s_max = (m * m) / (9 * n);
    let bound = expansion_failure_bound(n, m, 3, 0.25, s_max).unwrap();
    let first = expansion_failure_terms(n, m, 3, 0.25, s_max).unwrap()[0];
    report(
        "6a",
        arithmetic,
        &format!("20 random tuples: worst relative deviation from direct evaluation {worst:.1e} (need <= 1e-9)"),
    );
    report(
        "6b",
        bound <= 0.01,
        &format!("n=1e5 m={m} d=3 eps=1/4 s_max={s_max}: bound {bound} (need <= 0.01); unclamped s=1 term alone is {first:.1}"),
    );
}

#[test]
fn criterion_7_binary_model() {
    let tol = TolerancePolicy::default();
    let cfg = DecoderConfig::default();
    // instances meet the decoder's premise for single errors:
    // (2, (1 − ε)d)-expansion with ε = 1/4, d = 2
    let mut instances = Vec::new();
    'scan: for n in 3..=20usize {
        for m in 2..=4usize {
            for seed in 0..200u64 {
                let b = generate_b(m, n, 2, WeightLaw::Rademacher, RngSeed(seed)).unwrap();
                if check_expansion(&b, 2, 1.5).unwrap().is_expander {
                    instances.push((m, n, seed, b));
                    if instances.len() == 10 {
                        break 'scan;
                    }
                }
            }
        }
    }
    let (mut nonempty, mut closed, mut decoded, mut members, mut trials) = (0, 0, 0, 0, 0);
    let mut shapes = Vec::new();
    for (k, (m, n, seed, b)) in instances.iter().enumerate() {
        shapes.push(format!("({m},{n})#{seed}"));
        let found = enumerate_binary_nullspace(b, &tol).unwrap();
        nonempty += usize::from(!found.is_empty());
        closed += usize::from(found.iter().all(|x| found.contains(&x.iter().map(|v| -v).collect())));
        let mut rng = RngSeed(700 + k as u64).rng();
        for x in &found {
            members += 1;
            let xf: Vec<f64> = x.iter().map(|&v| f64::from(v)).collect();
            let mut y = xf.clone();
            let j = rng.random_range(0..*n);
            y[j] += if rng.random_bool(0.5) { 2.0 } else { -2.0 };
            trials += 1;
            let out = recall(b, &y, &cfg).unwrap();
            decoded += usize::from(out.status == DecodeStatus::Success && out.x_hat == xf);
        }
    }
    report(
        "7",
        instances.len() == 10 && nonempty == 10 && closed == 10 && decoded == trials,
        &format!(
            "instances {}: nonempty {nonempty}/10, negation-closed {closed}/10, decoded {decoded}/{trials} over {members} members",
            shapes.join(" ")
        ),
    );
}

#[test]
fn criterion_8_invariants() {
    let cases = 100;
    let mut results = Vec::new();
    let mut run = |name: &str, outcome: Result<(), String>| {
        results.push((name.to_string(), outcome));
    };

    let mut runner = TestRunner::new(Config::with_cases(cases));
    run(
        "gap-consistency",
        runner
            .run(&(any::<u64>(), 0usize..12), |(seed, w)| {
                let b = generate_b(20, 60, 3, LAW, RngSeed(seed)).unwrap();
                let e = generate_error(60, w, 4, RngSeed(seed ^ 7)).unwrap();
                let z = syndrome(&b, &e).unwrap();
                let mut dec = Decoder::new(&b, &z, DecoderConfig::default()).unwrap();
                loop {
                    let st = dec.state();
                    let bz = b.mul_vec(&st.e_hat).unwrap();
                    for i in 0..20 {
                        prop_assert!((st.gaps[i] - (z[i] - bz[i])).abs() <= 1e-9);
                    }
                    if dec.is_solved() || st.iterations >= 40 || dec.step().is_none() {
                        break;
                    }
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let mut runner = TestRunner::new(Config::with_cases(cases));
    run(
        "determinism-per-seed",
        runner
            .run(&(any::<u64>(), 1usize..10, 5usize..40), |(seed, m, n)| {
                let b1 = generate_b(m, n, 3, LAW, RngSeed(seed)).unwrap();
                let b2 = generate_b(m, n, 3, LAW, RngSeed(seed)).unwrap();
                prop_assert_eq!(&b1, &b2);
                let e1 = generate_error(n, n / 3, 4, RngSeed(seed)).unwrap();
                prop_assert_eq!(&e1, &generate_error(n, n / 3, 4, RngSeed(seed)).unwrap());
                let z = syndrome(&b1, &e1).unwrap();
                let cfg = DecoderConfig::default();
                prop_assert_eq!(decode(&b1, &z, &cfg).unwrap(), decode(&b2, &z, &cfg).unwrap());
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let mut runner = TestRunner::new(Config::with_cases(cases));
    run(
        "syndrome-linearity",
        runner
            .run(
                &(any::<u64>(), prop::collection::vec(-5.0f64..5.0, 40), prop::collection::vec(-5.0f64..5.0, 40), -3.0f64..3.0),
                |(seed, x, e, c)| {
                    let b = generate_b(12, 40, 3, LAW, RngSeed(seed)).unwrap();
                    let mix: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + c * b).collect();
                    let (zm, zx, ze) = (syndrome(&b, &mix).unwrap(), syndrome(&b, &x).unwrap(), syndrome(&b, &e).unwrap());
                    for i in 0..12 {
                        prop_assert!((zm[i] - zx[i] - c * ze[i]).abs() <= 1e-9 * (1.0 + zm[i].abs()));
                    }
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    let mut runner = TestRunner::new(Config::with_cases(cases));
    run(
        "rank-nullity",
        runner
            .run(&(any::<u64>(), 1usize..10, 1usize..30), |(seed, m, n)| {
                let tol = TolerancePolicy::default();
                let a = generate_b(m, n, 3, LAW, RngSeed(seed)).unwrap().to_dense();
                let r = rank(&a, &tol).unwrap();
                let ns = sparsemem_core::null_space(&a, &tol).unwrap();
                prop_assert_eq!(r + ns.rows(), n);
                for v in ns.row_iter() {
                    prop_assert!(a.mul_vec(v).unwrap().iter().all(|x| x.abs() <= 1e-9));
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );

    let mut runner = TestRunner::new(Config::with_cases(cases));
    run(
        "lp-scaling",
        runner
            .run(
                &(any::<u64>(), 1usize..5, 1usize..8, prop_oneof![-10.0f64..-0.1, 0.1f64..10.0]),
                |(seed, m, extra, c)| {
                    let mut rng = RngSeed(seed).rng();
                    let n = m + extra;
                    let u = DenseMatrix::from_vec(m, n, (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
                    let r: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let rc: Vec<f64> = r.iter().map(|x| x * c).collect();
                    let tol = LpTolerances::default();
                    let base = solve_l1_row(&L1RowProblem { observations: &u, constraint: &r }, &tol).unwrap();
                    let scaled = solve_l1_row(&L1RowProblem { observations: &u, constraint: &rc }, &tol).unwrap();
                    prop_assert_eq!(base.status, LpStatus::Optimal);
                    prop_assert_eq!(scaled.status, LpStatus::Optimal);
                    let want = base.objective / c.abs();
                    prop_assert!((scaled.objective - want).abs() <= 1e-8 * want.max(1.0));
                    Ok(())
                },
            )
            .map_err(|e| e.to_string()),
    );

    let pass = results.iter().all(|(_, r)| r.is_ok());
    let detail: Vec<String> = results
        .iter()
        .map(|(n, r)| match r {
            Ok(()) => format!("{n} ok"),
            Err(e) => format!("{n} FAILED ({e})"),
        })
        .collect();
    report("8", pass, &format!("{cases} cases each: {}", detail.join(", ")));
}
