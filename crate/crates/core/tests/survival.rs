mod common;

use approx::assert_abs_diff_eq;
use dense_rsf::survival::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn km_hand_examples() {
    let all_censored = km_estimate(&[1.0, 2.0, 3.0], &[false; 3]).unwrap();
    for t in [0.0, 1.5, 10.0] {
        assert_eq!(all_censored.survival_at(t), 1.0);
    }

    let km = km_estimate(&[1.0, 2.0, 3.0], &[true; 3]).unwrap();
    assert_abs_diff_eq!(km.survival_at(1.0), 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(km.survival_at(2.0), 1.0 / 3.0, epsilon = 1e-15);
    assert_eq!(km.survival_at(3.0), 0.0);

    let km = km_estimate(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
    assert_abs_diff_eq!(km.survival_at(1.0), 2.0 / 3.0, epsilon = 1e-15);
    assert_abs_diff_eq!(km.survival_at(2.5), 2.0 / 3.0, epsilon = 1e-15);
    assert_eq!(km.survival_at(3.0), 0.0);

    assert!(matches!(km_estimate(&[], &[]), Err(dense_rsf::Error::EmptyDataset)));
}

#[test]
fn logrank_identical_groups() {
    let t = [3.0, 5.0, 7.0, 9.0];
    let e = [true, false, true, true];
    let lr = logrank_test(&t, &e, &t, &e).unwrap();
    assert_abs_diff_eq!(lr.statistic, 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(lr.p_value, 1.0, epsilon = 1e-12);
}

#[test]
fn logrank_six_patient_hand_computation() {
    // A: 1, 3+, 4 ; B: 2, 4, 6
    // t=1: nA=3 nB=3 d=1 dA=1 -> E=1/2, V=1/4
    // t=2: nA=2 nB=3 d=1 dA=0 -> E=2/5, V=6/25
    // t=4: nA=1 nB=2 d=2 dA=1 -> E=2/3, V=2*(1/3)(2/3)(1)/2 = 2/9
    // t=6: nA=0 -> no contribution
    let o = 2.0;
    let e = 0.5 + 0.4 + 2.0 / 3.0;
    let v = 0.25 + 6.0 / 25.0 + 2.0 / 9.0;
    let want = (o - e) * (o - e) / v;
    let lr = logrank_test(&[1.0, 3.0, 4.0], &[true, false, true], &[2.0, 4.0, 6.0], &[true, true, true]).unwrap();
    assert_abs_diff_eq!(lr.statistic, want, epsilon = 1e-9);
    let oracle = common::brute_logrank(&[1.0, 3.0, 4.0], &[true, false, true], &[2.0, 4.0, 6.0], &[true, true, true]);
    assert_abs_diff_eq!(lr.statistic, oracle, epsilon = 1e-9);
}

#[test]
fn logrank_no_events_errors() {
    let r = logrank_test(&[1.0, 2.0], &[false, false], &[3.0], &[false]);
    assert!(matches!(r, Err(dense_rsf::Error::NoEvents)));
}

#[test]
fn logrank_matches_textbook_on_random_groups() {
    let mut rng = common::rng(31);
    for _ in 0..50 {
        let (ta, ea) = common::censored_sample(&mut rng, 12);
        let (tb, eb) = common::censored_sample(&mut rng, 9);
        if !ea.iter().chain(&eb).any(|&e| e) {
            continue;
        }
        let lr = logrank_test(&ta, &ea, &tb, &eb).unwrap();
        let want = common::brute_logrank(&ta, &ea, &tb, &eb);
        assert_abs_diff_eq!(lr.statistic, want, epsilon = 1e-9);
        let p = ChiSquared::new(1.0).unwrap().sf(want);
        assert_abs_diff_eq!(lr.p_value, p, epsilon = 1e-9);
    }
}

#[test]
fn cox_matches_brute_force_grid() {
    let mut rng = common::rng(5);
    let mut checked = 0;
    while checked < 10 {
        let n = rng.random_range(12..=30);
        let (times, events) = common::censored_sample(&mut rng, n);
        let x = Array2::from_shape_fn((n, 1), |(i, _)| 0.3 * (times[i] / n as f64) + rng.random::<f64>());
        let Ok(fit) = cox_fit(&times, &events, x.view()) else { continue };
        if !fit.converged {
            continue;
        }
        let grid = common::grid_argmax(&times, &events, &x, 1e-4);
        assert!((fit.coefficients[0] - grid).abs() < 1e-3, "newton {} grid {}", fit.coefficients[0], grid);
        let ll = common::breslow_loglik(&times, &events, &x, &fit.coefficients);
        assert_abs_diff_eq!(fit.loglik_at_estimate, ll, epsilon = 1e-8);
        assert_abs_diff_eq!(fit.loglik_at_zero, common::breslow_loglik(&times, &events, &x, &[0.0]), epsilon = 1e-8);
        checked += 1;
    }
}

#[test]
fn cox_three_column_likelihood_is_maximal() {
    let mut rng = common::rng(77);
    let n = 60;
    let (times, events) = common::censored_sample(&mut rng, n);
    let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
    let fit = cox_fit(&times, &events, x.view()).unwrap();
    assert!(fit.converged);
    let at = common::breslow_loglik(&times, &events, &x, &fit.coefficients);
    for j in 0..3 {
        for d in [-1e-3, 1e-3] {
            let mut b = fit.coefficients.clone();
            b[j] += d;
            assert!(common::breslow_loglik(&times, &events, &x, &b) <= at + 1e-12);
        }
    }
    for j in 0..3 {
        assert_abs_diff_eq!(fit.z_scores[j], fit.coefficients[j] / fit.standard_errors[j], epsilon = 1e-12);
    }
    let eta: Vec<f64> = (0..n).map(|i| linear_predictor(x.row(i).iter().copied(), &fit.coefficients)).collect();
    assert_abs_diff_eq!(fit.concordance, concordance_index(&eta, &times, &events).unwrap(), epsilon = 1e-12);
}

#[test]
fn cox_degenerate_inputs() {
    let times = [1.0, 2.0, 3.0, 4.0];
    let zeros = Array2::zeros((4, 1));
    assert!(matches!(
        cox_fit(&times, &[true; 4], zeros.view()),
        Err(dense_rsf::Error::NonIdentifiable(0))
    ));
    let x = Array2::from_shape_vec((4, 1), vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    assert!(matches!(cox_fit(&times, &[false; 4], x.view()), Err(dense_rsf::Error::NoEvents)));
    // x = 1 fails strictly first: the likelihood keeps increasing in beta
    let fit = cox_fit(&times, &[true; 4], x.view()).unwrap();
    assert!(!fit.converged);
    assert!(fit.diagnostic.is_some());
}

#[test]
fn concordance_extremes_and_errors() {
    let t = [1.0, 2.0, 3.0, 4.0, 5.0];
    let neg: Vec<f64> = t.iter().map(|v| -v).collect();
    assert_eq!(concordance_index(&neg, &t, &[true; 5]).unwrap(), 1.0);
    assert_eq!(concordance_index(&t, &t, &[true; 5]).unwrap(), 0.0);
    assert!(matches!(
        concordance_index(&[1.0, 2.0], &[1.0, 2.0], &[false, false]),
        Err(dense_rsf::Error::NoComparablePairs)
    ));
}

#[test]
fn concordance_matches_pair_enumeration() {
    let mut rng = common::rng(12);
    for _ in 0..200 {
        let n = rng.random_range(2..=50);
        let (times, events) = common::censored_sample(&mut rng, n);
        // coarse risks force ties
        let risk: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let (credit, comparable) = common::brute_concordance(&risk, &times, &events);
        match concordance(&risk, &times, &events) {
            Ok(c) => {
                assert_eq!(c.comparable, comparable);
                assert_eq!(c.index, credit / comparable);
            }
            Err(dense_rsf::Error::NoComparablePairs) => assert_eq!(comparable, 0.0),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn chi2_reference_values() {
    assert_abs_diff_eq!(chi2_sf(3.841, 1).unwrap(), 0.05, epsilon = 1e-3);
    assert_abs_diff_eq!(chi2_sf(5.991, 2).unwrap(), 0.05, epsilon = 1e-3);
    assert_abs_diff_eq!(chi2_sf(1.0, 1).unwrap(), common::normal_two_sided(1.0), epsilon = 1e-10);
    assert_abs_diff_eq!(chi2_sf(1.0, 1).unwrap(), 0.3173, epsilon = 1e-4);
    for k in 1..20 {
        assert_eq!(chi2_sf(0.0, k).unwrap(), 1.0);
    }
    for x in [0.1, 1.0, 7.5, 40.0] {
        assert_abs_diff_eq!(chi2_sf(x, 2).unwrap(), (-x / 2.0).exp(), epsilon = 1e-15);
    }
    assert!(chi2_sf(-1.0, 1).is_err());
}

#[test]
fn chi2_agrees_with_reference_crate() {
    for df in [1u32, 2, 3, 5, 8, 13, 30] {
        let reference = ChiSquared::new(df as f64).unwrap();
        for x in [0.01, 0.5, 1.0, 2.5, 6.0, 12.0, 25.0, 60.0] {
            assert_abs_diff_eq!(chi2_sf(x, df).unwrap(), reference.sf(x), epsilon = 1e-10);
        }
    }
}

#[test]
fn likelihood_ratio_reference_values() {
    assert_eq!(likelihood_ratio_test(-12.0, -12.0, 1).unwrap(), 1.0);
    assert_abs_diff_eq!(likelihood_ratio_test(0.0, 5.991 / 2.0, 2).unwrap(), 0.05, epsilon = 1e-3);
    assert_abs_diff_eq!(likelihood_ratio_test(0.0, 3.841 / 2.0, 1).unwrap(), 0.05, epsilon = 1e-3);
}

fn sample_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, Vec<f64>)> {
    (3usize..25).prop_flat_map(|n| {
        (
            prop::collection::vec(1u32..15, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

proptest! {
    #[test]
    fn km_is_non_increasing((times, events, _) in sample_strategy()) {
        let km = km_estimate(&times, &events).unwrap();
        let mut last = 1.0;
        for s in &km.steps {
            prop_assert!(s.survival <= last + 1e-15);
            prop_assert!(s.survival >= 0.0);
            last = s.survival;
        }
        let max_t = times.iter().cloned().fold(0.0, f64::max);
        // the curve reaches zero only when nobody is censored at the last time
        let all_fail_last = times.iter().zip(&events).all(|(&t, &e)| t < max_t || e);
        if all_fail_last {
            prop_assert_eq!(km.survival_at(max_t), 0.0);
        }
    }

    #[test]
    fn concordance_invariant_under_monotone_transform((times, events, risk) in sample_strategy()) {
        let a = concordance_index(&risk, &times, &events);
        let transformed: Vec<f64> = risk.iter().map(|r| (2.0 * r).exp() + 1.0).collect();
        let b = concordance_index(&transformed, &times, &events);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one side errored"),
        }
    }

    #[test]
    fn logrank_is_symmetric((times, events, _) in sample_strategy(), cut in 1usize..3) {
        let (a, b) = times.split_at(cut);
        let (ea, eb) = events.split_at(cut);
        prop_assume!(events.iter().any(|&e| e));
        let ab = logrank_test(a, ea, b, eb).unwrap();
        let ba = logrank_test(b, eb, a, ea).unwrap();
        prop_assert!((ab.statistic - ba.statistic).abs() < 1e-9);
    }

    #[test]
    fn chi2_decreasing(x in 0.0f64..50.0, dx in 0.01f64..5.0, df in 1u32..12) {
        prop_assert!(chi2_sf(x + dx, df).unwrap() < chi2_sf(x, df).unwrap() || chi2_sf(x, df).unwrap() == 0.0);
    }

    #[test]
    fn cox_row_order_invariant((times, events, risk) in sample_strategy(), seed in any::<u64>()) {
        let n = times.len();
        let x = Array2::from_shape_vec((n, 1), risk.clone()).unwrap();
        let Ok(fit) = cox_fit(&times, &events, x.view()) else { return Ok(()) };
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut common::rng(seed));
        let t2: Vec<f64> = perm.iter().map(|&i| times[i]).collect();
        let e2: Vec<bool> = perm.iter().map(|&i| events[i]).collect();
        let x2 = Array2::from_shape_fn((n, 1), |(i, _)| risk[perm[i]]);
        let fit2 = cox_fit(&t2, &e2, x2.view()).unwrap();
        prop_assert!((fit.coefficients[0] - fit2.coefficients[0]).abs() < 1e-9);
        prop_assert_eq!(fit.converged, fit2.converged);
    }
}
