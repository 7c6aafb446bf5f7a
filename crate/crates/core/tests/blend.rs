use lazyfolio::blend::{
    blend_weights, combine_delta, compute_beta, compute_gamma, compute_rsi,
    gamma_from_relative_slope, Indicators, LazinessCoefficients, DELTA1_CAP,
};
use lazyfolio::error::Error;
use lazyfolio::optimizer::WeightVector;
use lazyfolio::trend::exponential_ma;
use proptest::prelude::*;

fn ind(rsi: f64, beta: f64, gamma: f64) -> Indicators {
    Indicators {
        rsi,
        beta,
        gamma,
        window: 14,
    }
}

/// Builds a price path from a list of daily changes.
fn path(changes: &[f64]) -> Vec<f64> {
    let mut p = vec![100.0];
    for c in changes {
        p.push(p.last().unwrap() + c);
    }
    p
}

#[test]
fn rsi_examples() {
    let up: Vec<f64> = (0..20).map(|i| 10.0 + i as f64).collect();
    assert_eq!(compute_rsi(&up, 14).unwrap(), 100.0);
    let down: Vec<f64> = up.iter().rev().copied().collect();
    assert_eq!(compute_rsi(&down, 14).unwrap(), 0.0);
    let mixed = path(&[2.0, -1.0, 2.0, -1.0]);
    assert!((compute_rsi(&mixed, 4).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    assert_eq!(compute_rsi(&[5.0; 20], 14).unwrap(), 50.0);
    assert!(compute_rsi(&up[..14], 14).is_err());
}

#[test]
fn beta_examples() {
    assert_eq!(compute_beta(&path(&[1.0; 14]), 14).unwrap(), 100.0);
    let seven: Vec<f64> = (0..14)
        .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    assert_eq!(compute_beta(&path(&seven), 14).unwrap(), 50.0);
    let mut ten_four = vec![1.0; 10];
    ten_four.extend([-0.5; 4]);
    assert!((compute_beta(&path(&ten_four), 14).unwrap() - 1000.0 / 14.0).abs() < 1e-12);
    let mut with_flat = vec![1.0; 3];
    with_flat.extend([0.0; 10]);
    with_flat.push(-1.0);
    assert_eq!(compute_beta(&path(&with_flat), 14).unwrap(), 75.0);
    assert_eq!(compute_beta(&[3.0; 15], 14).unwrap(), 50.0);
}

#[test]
fn gamma_examples() {
    assert_eq!(gamma_from_relative_slope(0.0, 0.005), 50.0);
    assert!(gamma_from_relative_slope(10.0, 0.005) > 99.999);
    let expected = 100.0 * (1.0 + 1f64.tanh()) / 2.0;
    assert!((gamma_from_relative_slope(0.005, 0.005) - expected).abs() < 1e-12);
    assert!((expected - 88.08).abs() < 0.01);
    let flat = exponential_ma(&[7.0; 30], 20).unwrap();
    assert_eq!(compute_gamma(&flat, 29, 0.005).unwrap(), 50.0);
    assert!(compute_gamma(&flat, 0, 0.005).is_err());
}

#[test]
fn delta_examples() {
    let d = combine_delta(&ind(50.0, 10.0, 10.0)).unwrap();
    assert!((d.delta1 - 0.8 * 50.0 / 70.0).abs() < 1e-12);
    assert!((d.delta1 + d.delta2 - 1.0).abs() < 1e-15);
    assert_eq!(combine_delta(&ind(40.0, 0.0, 0.0)).unwrap().delta1, 0.8);
    assert!(matches!(
        combine_delta(&ind(0.0, 0.0, 0.0)),
        Err(Error::DegenerateIndicators { fallback }) if fallback == 0.7
    ));
    assert!(LazinessCoefficients::new(1.2).is_err());
}

#[test]
fn blend_examples() {
    let ideal = WeightVector::new(0.2, 0.5, 0.3).unwrap();
    let equal = blend_weights(&ideal, &LazinessCoefficients::new(1.0).unwrap());
    assert!(equal.max_abs_diff(&WeightVector::EQUAL) < 1e-15);
    let same = blend_weights(&ideal, &LazinessCoefficients::new(0.0).unwrap());
    assert!(same.max_abs_diff(&ideal) < 1e-15);
    let cash = blend_weights(
        &WeightVector::ALL_CASH,
        &LazinessCoefficients::new(0.7).unwrap(),
    );
    let want = [0.7 / 3.0 + 0.3, 0.7 / 3.0, 0.7 / 3.0];
    for (a, b) in cash.as_array().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn simplex() -> impl Strategy<Value = WeightVector> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        WeightVector::new(lo, hi - lo, 1.0 - hi).unwrap()
    })
}

proptest! {
    #[test]
    fn blend_stays_on_simplex(w in simplex(), d in 0.0f64..=1.0) {
        let b = blend_weights(&w, &LazinessCoefficients::new(d).unwrap());
        prop_assert!((b.sum() - 1.0).abs() <= 1e-12);
        prop_assert!(b.as_array().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn blend_contracts_toward_equal(w in simplex(), d in 0.0f64..=1.0) {
        let b = blend_weights(&w, &LazinessCoefficients::new(d).unwrap());
        let lhs = b.max_abs_diff(&WeightVector::EQUAL);
        let rhs = (1.0 - d) * w.max_abs_diff(&WeightVector::EQUAL);
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn delta1_is_bounded(r in 0.0f64..=100.0, b in 0.0f64..=100.0, g in 0.0f64..=100.0) {
        prop_assume!(r + b + g > 0.0);
        let d = combine_delta(&ind(r, b, g)).unwrap();
        prop_assert!((0.0..=DELTA1_CAP).contains(&d.delta1));
    }

    #[test]
    fn delta1_rises_with_rsi(r in 0.0f64..99.0, step in 0.01f64..1.0, b in 0.01f64..=100.0, g in 0.0f64..=100.0) {
        let lo = combine_delta(&ind(r, b, g)).unwrap().delta1;
        let hi = combine_delta(&ind(r + step, b, g)).unwrap().delta1;
        prop_assert!(hi > lo);
    }
}
