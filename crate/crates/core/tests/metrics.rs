use lgrad_core::metrics::{diversity, frechet_distance, reconstruction_error, SampleSet};
use proptest::prelude::*;

fn set(v: Vec<Vec<f64>>) -> SampleSet {
    SampleSet::new(v, None).unwrap()
}

fn shifted(v: &[Vec<f64>], by: &[f64]) -> Vec<Vec<f64>> {
    v.iter()
        .map(|e| e.iter().zip(by).map(|(a, b)| a + b).collect())
        .collect()
}

fn points(n: std::ops::Range<usize>, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n)
}

proptest! {
    #[test]
    fn frechet_is_symmetric_and_zero_on_itself(a in points(2..12, 3), b in points(2..12, 3)) {
        let (sa, sb) = (set(a), set(b));
        let ab = frechet_distance(&sa, &sb).unwrap();
        let ba = frechet_distance(&sb, &sa).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab));
        prop_assert!(frechet_distance(&sa, &sa).unwrap() < 1e-9);
    }

    #[test]
    fn frechet_ignores_common_translation(
        a in points(5..12, 3),
        b in points(5..12, 3),
        by in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let base = frechet_distance(&set(a.clone()), &set(b.clone())).unwrap();
        let moved = frechet_distance(&set(shifted(&a, &by)), &set(shifted(&b, &by))).unwrap();
        prop_assert!((base - moved).abs() <= 1e-7 * (1.0 + base));
    }

    #[test]
    fn frechet_mean_shift_adds_squared_norm(a in points(2..10, 4), by in prop::collection::vec(-3.0f64..3.0, 4)) {
        let moved = frechet_distance(&set(a.clone()), &set(shifted(&a, &by))).unwrap();
        let norm2: f64 = by.iter().map(|v| v * v).sum();
        prop_assert!((moved - norm2).abs() <= 1e-7 * (1.0 + norm2));
    }

    #[test]
    fn diversity_is_translation_invariant_and_scales(
        a in points(2..10, 4),
        by in prop::collection::vec(-5.0f64..5.0, 4),
        c in -4.0f64..4.0,
    ) {
        let base = diversity(&set(a.clone())).unwrap();
        prop_assert!((diversity(&set(shifted(&a, &by))).unwrap() - base).abs() <= 1e-9 * (1.0 + base));
        let scaled: Vec<Vec<f64>> = a.iter().map(|e| e.iter().map(|v| v * c).collect()).collect();
        prop_assert!((diversity(&set(scaled)).unwrap() - c.abs() * base).abs() <= 1e-9 * (1.0 + base));
    }

    #[test]
    fn diversity_is_permutation_invariant(a in points(2..8, 3).prop_shuffle()) {
        let mut sorted = a.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (p, q) = (diversity(&set(a)).unwrap(), diversity(&set(sorted)).unwrap());
        prop_assert!((p - q).abs() <= 1e-12 * (1.0 + p));
    }
}

#[test]
fn full_covariance_branch_matches_closed_form_for_scaled_sets() {
    let base = vec![
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ];
    let doubled: Vec<Vec<f64>> = base
        .iter()
        .map(|e| e.iter().map(|v| 2.0 * v).collect())
        .collect();
    let cov: f64 = 2.0 / 3.0;
    let expected = 2.0 * (cov.sqrt() - (4.0 * cov).sqrt()).powi(2);
    let got = frechet_distance(&set(base), &set(doubled)).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
}

#[test]
fn reconstruction_error_is_mean_squared_difference() {
    assert_eq!(reconstruction_error(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 2.5);
    assert!(reconstruction_error(&[1.0], &[1.0, 2.0]).is_err());
}
