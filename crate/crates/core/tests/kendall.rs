//! The O(n log n) τ-b against explicit pair counting.

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use progeval_core::analysis::{kendall_tau, kendall_tau_b, AnalysisError};

use common::tau_b_quadratic;

fn agree(x: &[f64], y: &[f64]) {
    match (kendall_tau_b(x, y), tau_b_quadratic(x, y)) {
        (Ok(fast), Ok(slow)) => assert!((fast - slow).abs() <= 1e-12, "{fast} vs {slow} for {x:?} / {y:?}"),
        (Err(AnalysisError::DegenerateRanking), Err(AnalysisError::DegenerateRanking)) => {}
        other => panic!("disagreement {other:?} for {x:?} / {y:?}"),
    }
}

#[test]
fn thousand_random_pairs_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..1000 {
        let n = rng.random_range(2..=64);
        // Few distinct levels inject ties; every fourth case is tie-free.
        let levels = if case % 4 == 0 { u32::MAX } else { rng.random_range(2..=8) };
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| (rng.random_range(0..levels) as f64) / 7.0).collect()
        };
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        agree(&x, &y);
    }
}

#[test]
fn identity_and_reversal() {
    let r: Vec<String> = (0..30).map(|i| format!("sys{i}")).collect();
    let mut rev = r.clone();
    rev.reverse();
    assert_eq!(kendall_tau(&r, &r).unwrap(), 1.0);
    assert_eq!(kendall_tau(&r, &rev).unwrap(), -1.0);
}

proptest! {
    #[test]
    fn matches_pair_counting(xs in prop::collection::vec(0u8..6, 2..40), ys in prop::collection::vec(0u8..6, 2..40)) {
        let n = xs.len().min(ys.len());
        let x: Vec<f64> = xs[..n].iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = ys[..n].iter().map(|&v| v as f64).collect();
        agree(&x, &y);
    }

    #[test]
    fn symmetric(xs in prop::collection::vec(-5i32..5, 2..30), ys in prop::collection::vec(-5i32..5, 2..30)) {
        let n = xs.len().min(ys.len());
        let x: Vec<f64> = xs[..n].iter().map(|&v| v as f64).collect();
        let y: Vec<f64> = ys[..n].iter().map(|&v| v as f64).collect();
        if let (Ok(a), Ok(b)) = (kendall_tau_b(&x, &y), kendall_tau_b(&y, &x)) {
            prop_assert_eq!(a, b);
        }
    }
}
