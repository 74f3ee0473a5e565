use memaudit::stats::{
    correlation, gap_standard_error, min_detectable_gap, normal_cdf, normal_quantile, power_two_prop, williams_t,
    CorrTriple, PowerSpec,
};
use proptest::prelude::*;

// Reference values evaluated with 40-digit arithmetic (mpmath).
const WILLIAMS_FIXTURE_T: f64 = 13.578_571_353_423_010;
const MDG_N17_P05: f64 = 0.301_529_367_217_205_52;
const POWER_D010_N17: f64 = 0.206_041_788_429_008_35;

fn power(delta: f64, p_post: f64, n_post: usize, alpha: f64) -> f64 {
    power_two_prop(&PowerSpec { delta, p_post, n_post, alpha }).unwrap()
}

#[test]
fn williams_fixture() {
    let w = williams_t(&CorrTriple { r12: 0.9, r13: 0.3, r23: 0.5, n: 100 }).unwrap();
    assert!((w.t - WILLIAMS_FIXTURE_T).abs() <= 1e-9);
    assert_eq!(w.df, 97);
    assert!(w.p_two_sided < 1e-20);
}

#[test]
fn power_fixtures() {
    assert!((min_detectable_gap(17, 0.5, 0.05, 0.8).unwrap() - MDG_N17_P05).abs() <= 1e-9);
    assert!((power(0.10, 0.5, 17, 0.05) - POWER_D010_N17).abs() <= 1e-9);
    assert!((gap_standard_error(0.5, 17) - 0.121_267_812_518_166_49).abs() <= 1e-15);
}

#[test]
fn power_grid_is_strictly_increasing() {
    let deltas: Vec<f64> = (1..=20).map(|i| i as f64 * 0.015).collect();
    let ns: Vec<usize> = (1..=20).map(|i| i * 10).collect();
    for &n in &ns {
        for w in deltas.windows(2) {
            assert!(power(w[1], 0.5, n, 0.05) > power(w[0], 0.5, n, 0.05), "delta at n={n}");
        }
    }
    for &d in &deltas {
        for w in ns.windows(2) {
            assert!(power(d, 0.5, w[1], 0.05) > power(d, 0.5, w[0], 0.05), "n at delta={d}");
        }
    }
}

proptest! {
    #[test]
    fn williams_is_zero_for_equal_correlations(r in -0.95f64..0.95, r23 in -0.9f64..0.9, n in 4usize..500) {
        if let Some(w) = williams_t(&CorrTriple { r12: r, r13: r, r23, n }) {
            prop_assert_eq!(w.t, 0.0);
        }
    }

    #[test]
    fn williams_is_antisymmetric(r12 in -0.9f64..0.9, r13 in -0.9f64..0.9, r23 in -0.9f64..0.9, n in 10usize..500) {
        let a = williams_t(&CorrTriple { r12, r13, r23, n });
        let b = williams_t(&CorrTriple { r12: r13, r13: r12, r23, n });
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!((a.t + b.t).abs() <= 1e-9 * a.t.abs().max(1.0));
            prop_assert!((a.p_two_sided - b.p_two_sided).abs() <= 1e-12);
        }
    }

    #[test]
    fn power_at_zero_gap_is_alpha(p in 0.01f64..0.99, n in 1usize..5000, alpha in 0.001f64..0.5) {
        prop_assert!((power(0.0, p, n, alpha) - alpha).abs() <= 1e-9);
    }

    #[test]
    fn min_detectable_gap_inverts_power(p in 0.01f64..0.99, n in 1usize..5000, alpha in 0.001f64..0.3, target in 0.05f64..0.99) {
        let gap = min_detectable_gap(n, p, alpha, target).unwrap();
        prop_assert!((power(gap, p, n, alpha) - target).abs() <= 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf(p in 1e-12f64..(1.0 - 1e-12)) {
        let x = normal_quantile(p);
        prop_assert!((normal_cdf(x) - p).abs() <= 1e-13 * p.max(1e-3));
    }

    #[test]
    fn correlation_is_bounded_and_symmetric(xs in prop::collection::vec(-1e3f64..1e3, 3..30), shift in -10f64..10.0) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * 0.5 + (i as f64).sin() + shift).collect();
        if let Some(r) = correlation(&xs, &ys) {
            prop_assert!((-1.0..=1.0).contains(&r));
            prop_assert!((correlation(&ys, &xs).unwrap() - r).abs() <= 1e-12);
        }
    }
}
