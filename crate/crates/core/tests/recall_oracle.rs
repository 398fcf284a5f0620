//! Decoder, syndrome and expansion checks against direct computation.

mod common;

use common::max_abs;
use proptest::prelude::*;
use sparsemem_core::recall::expansion_failure_terms;
use sparsemem_core::{
    check_expansion, decode, expansion_failure_bound, generate_b, generate_error, recall,
    sample_dataset, syndrome, DecodeStatus, Decoder, DecoderConfig, RngSeed, SparseConstraintMatrix,
    TolerancePolicy, WeightLaw,
};

const LAW: WeightLaw = WeightLaw::UniformIntegerSet { max: 3 };

fn dense_mul(b: &SparseConstraintMatrix, x: &[f64]) -> Vec<f64> {
    let d = b.to_dense();
    d.row_iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

/// Union sizes of every column subset of size `1..=t`, by plain bitmask
/// enumeration.
fn brute_expansion(b: &SparseConstraintMatrix, t: usize, l: f64) -> bool {
    let n = b.n();
    fn rec(b: &SparseConstraintMatrix, start: usize, left: usize, chosen: &mut Vec<usize>, l: f64) -> bool {
        if !chosen.is_empty() {
            let mut rows: Vec<usize> = chosen.iter().flat_map(|&j| b.column(j).iter().map(|&(i, _)| i)).collect();
            rows.sort_unstable();
            rows.dedup();
            if (rows.len() as f64) < l * chosen.len() as f64 {
                return false;
            }
        }
        if left == 0 {
            return true;
        }
        for j in start..b.n() {
            chosen.push(j);
            let ok = rec(b, j + 1, left - 1, chosen, l);
            chosen.pop();
            if !ok {
                return false;
            }
        }
        true
    }
    let _ = n;
    rec(b, 0, t, &mut Vec::new(), l)
}

#[test]
fn dataset_vectors_have_zero_syndrome() {
    let tol = TolerancePolicy::default();
    let b = generate_b(10, 40, 3, LAW, RngSeed(1)).unwrap();
    let s = sample_dataset(&b, 5, WeightLaw::Gaussian { sigma: 1.0 }, RngSeed(2), &tol).unwrap();
    for x in s.row_iter() {
        assert!(max_abs(&syndrome(&b, x).unwrap()) < 1e-9 * max_abs(x));
        let out = recall(&b, x, &DecoderConfig::default()).unwrap();
        assert_eq!(out.status, DecodeStatus::Success);
        assert_eq!(out.x_hat, x);
    }
}

#[test]
fn expansion_report_matches_reenumeration() {
    for seed in 0..6 {
        let b = generate_b(40, 60, 3, LAW, RngSeed(seed)).unwrap();
        let rep = check_expansion(&b, 3, 2.25).unwrap();
        assert_eq!(rep.is_expander, brute_expansion(&b, 3, 2.25), "seed {seed}");
        if let Some(w) = &rep.witness {
            let mut rows: Vec<usize> = w.iter().flat_map(|&j| b.column(j).iter().map(|&(i, _)| i)).collect();
            rows.sort_unstable();
            rows.dedup();
            assert!((rows.len() as f64) < 2.25 * w.len() as f64);
        }
    }
}

#[test]
fn single_errors_decode_at_scale() {
    // at n = 1000, m = 250 about a dozen columns collapse to two neighbors,
    // so (t, 2.25)-expansion fails already for singletons; a single error on
    // a column with d distinct neighbors still wins the vote unanimously
    let b = generate_b(250, 1000, 3, LAW, RngSeed(0)).unwrap();
    assert!(!check_expansion(&b, 1, 2.25).unwrap().is_expander);
    let cfg = DecoderConfig::default();
    let mut tried = 0;
    for t in 0..400 {
        let e = generate_error(1000, 1, 4, RngSeed(t)).unwrap();
        let j = e.iter().position(|&x| x != 0.0).unwrap();
        if b.column(j).len() < 3 {
            continue;
        }
        tried += 1;
        let out = decode(&b, &syndrome(&b, &e).unwrap(), &cfg).unwrap();
        assert_eq!(out.status, DecodeStatus::Success);
        assert_eq!(out.e_hat, e);
        assert_eq!(out.iterations, 1);
    }
    assert!(tried > 300);
}

#[test]
fn budgeted_errors_decode_on_a_verified_expander() {
    // a smaller instance where (4, 2.25)-expansion can be checked; then every
    // error of weight <= 2 must decode
    let b = (0..)
        .map(|s| generate_b(40, 16, 3, LAW, RngSeed(s)).unwrap())
        .find(|b| check_expansion(b, 4, 2.25).unwrap().is_expander)
        .unwrap();
    let cfg = DecoderConfig::default();
    for t in 0..300 {
        let e = generate_error(16, 1 + t as usize % 2, 4, RngSeed(t)).unwrap();
        let out = decode(&b, &syndrome(&b, &e).unwrap(), &cfg).unwrap();
        assert_eq!(out.status, DecodeStatus::Success);
        assert_eq!(out.e_hat, e);
        assert!(out.iterations <= 4);
    }
}

#[test]
fn overload_never_reports_false_success() {
    let b = generate_b(30, 120, 3, LAW, RngSeed(4)).unwrap();
    let cfg = DecoderConfig::default();
    for t in 0..50 {
        let e = generate_error(120, 40, 4, RngSeed(t)).unwrap();
        let z = syndrome(&b, &e).unwrap();
        let out = decode(&b, &z, &cfg).unwrap();
        if out.status == DecodeStatus::Success {
            let r: Vec<f64> = dense_mul(&b, &out.e_hat).iter().zip(&z).map(|(a, b)| a - b).collect();
            assert!(max_abs(&r) <= 1e-9 * max_abs(&z).max(1.0));
        } else {
            assert!(out.residual > 0.0);
        }
    }
}

#[test]
fn failure_bound_terms_along_a_ray() {
    assert_eq!(expansion_failure_bound(100, 10, 3, 0.25, 0).unwrap(), 0.0);
    // with m = n / (2 ln n), d = 3 and ε = 1/4 the first term scales like
    // n · m^{(1−ε)d − d} = n · m^{−0.75}, which grows without bound: the
    // union bound only closes when εd > 2
    let mut last = 0.0;
    for n in [20_000usize, 40_000, 60_000, 80_000, 100_000] {
        let m = (n as f64 / (2.0 * (n as f64).ln())) as usize;
        let s_max = (m * m) / (9 * n);
        let terms = expansion_failure_terms(n, m, 3, 0.25, s_max).unwrap();
        assert_eq!(terms.len(), s_max);
        assert!(terms[0] > last && terms[0] > 1.0, "n = {n}: {}", terms[0]);
        last = terms[0];
        assert_eq!(expansion_failure_bound(n, m, 3, 0.25, s_max).unwrap(), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// After every update the maintained gaps equal `z − B ê`.
    #[test]
    fn gap_consistency(seed in any::<u64>(), w in 0usize..12) {
        let b = generate_b(20, 60, 3, LAW, RngSeed(seed)).unwrap();
        let e = generate_error(60, w, 4, RngSeed(seed ^ 1)).unwrap();
        let z = syndrome(&b, &e).unwrap();
        let mut dec = Decoder::new(&b, &z, DecoderConfig::default()).unwrap();
        for _ in 0..30 {
            let st = dec.state();
            let expect: Vec<f64> = z.iter().zip(dense_mul(&b, &st.e_hat)).map(|(a, b)| a - b).collect();
            for (g, x) in st.gaps.iter().zip(&expect) {
                prop_assert!((g - x).abs() <= 1e-9 * max_abs(&z).max(1.0));
            }
            if dec.is_solved() || dec.step().is_none() {
                break;
            }
        }
    }

    /// `B(x + c·e) = Bx + c·Be`.
    #[test]
    fn syndrome_linearity(seed in any::<u64>(), c in -5.0f64..5.0) {
        let b = generate_b(15, 50, 3, LAW, RngSeed(seed)).unwrap();
        let mut r = common::rng(seed);
        let x: Vec<f64> = (0..50).map(|_| rand::Rng::random_range(&mut r, -3.0..3.0)).collect();
        let e: Vec<f64> = (0..50).map(|_| rand::Rng::random_range(&mut r, -3.0..3.0)).collect();
        let sum: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + c * b).collect();
        let lhs = syndrome(&b, &sum).unwrap();
        let (zx, ze) = (syndrome(&b, &x).unwrap(), syndrome(&b, &e).unwrap());
        for i in 0..15 {
            prop_assert!((lhs[i] - (zx[i] + c * ze[i])).abs() <= 1e-9 * (1.0 + lhs[i].abs()));
        }
    }

    /// Decoding the same syndrome twice gives bit-identical outcomes.
    #[test]
    fn decoder_determinism(seed in any::<u64>(), w in 0usize..10) {
        let b = generate_b(20, 80, 3, LAW, RngSeed(seed)).unwrap();
        let e = generate_error(80, w, 4, RngSeed(seed)).unwrap();
        let z = syndrome(&b, &e).unwrap();
        let cfg = DecoderConfig::default();
        prop_assert_eq!(decode(&b, &z, &cfg).unwrap(), decode(&b, &z, &cfg).unwrap());
    }
}
