use insilico_core::seed::rng_for;
use insilico_core::stats::{icc_a1, ks_two_sample, levene, mann_whitney_u, spearman, Center, MwuMethod};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn as_f64(v: &[u8]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn shuffled<T: Clone>(v: &[T], seed: u64) -> Vec<T> {
    let mut out = v.to_vec();
    out.shuffle(&mut rng_for(seed, "shuffle", 0));
    out
}

proptest! {
    #[test]
    fn row_order_does_not_matter(
        pairs in prop::collection::vec((1u8..8, 1u8..8), 6..40),
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let perm = shuffled(&pairs, seed);
        let xs: Vec<f64> = perm.iter().map(|p| p.0 as f64).collect();
        let ys: Vec<f64> = perm.iter().map(|p| p.1 as f64).collect();

        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs()) || (a.is_nan() && b.is_nan());
        if let (Ok(a), Ok(b)) = (spearman(&x, &y), spearman(&xs, &ys)) {
            prop_assert!(close(a, b));
        }
        let (a, b) = (mann_whitney_u(&x, &y, MwuMethod::Auto).unwrap(), mann_whitney_u(&xs, &ys, MwuMethod::Auto).unwrap());
        prop_assert!(close(a.u, b.u) && close(a.p, b.p));
        let (a, b) = (ks_two_sample(&x, &y).unwrap(), ks_two_sample(&xs, &ys).unwrap());
        prop_assert!(close(a.d, b.d) && close(a.p, b.p));
        let (a, b) = (levene(&[&x, &y], Center::Median).unwrap(), levene(&[&xs, &ys], Center::Median).unwrap());
        prop_assert!(close(a.f, b.f) && close(a.p, b.p));
        let pa: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
        let pb: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        if let (Ok(a), Ok(b)) = (icc_a1(&pa, 0.05), icc_a1(&pb, 0.05)) {
            prop_assert!(close(a.value, b.value) && close(a.p, b.p));
        }
    }

    #[test]
    fn ks_statistic_survives_increasing_maps(
        x in prop::collection::vec(0u8..9, 1..30),
        y in prop::collection::vec(0u8..9, 1..30),
    ) {
        let f = |v: &[u8]| v.iter().map(|&a| (a as f64 * 0.7).exp() - 3.0).collect::<Vec<_>>();
        let a = ks_two_sample(&as_f64(&x), &as_f64(&y)).unwrap();
        let b = ks_two_sample(&f(&x), &f(&y)).unwrap();
        prop_assert!((a.d - b.d).abs() < 1e-12);
    }

    #[test]
    fn p_values_are_probabilities(
        x in prop::collection::vec(1u8..6, 5..40),
        y in prop::collection::vec(1u8..6, 5..40),
    ) {
        let (x, y) = (as_f64(&x), as_f64(&y));
        for method in [MwuMethod::Exact, MwuMethod::Asymptotic] {
            let p = mann_whitney_u(&x, &y, method).unwrap().p;
            prop_assert!((0.0..=1.0).contains(&p));
        }
        let p = ks_two_sample(&x, &y).unwrap().p;
        prop_assert!((0.0..=1.0).contains(&p));
        for c in [Center::Median, Center::Mean] {
            let p = levene(&[&x, &y], c).unwrap().p;
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}

#[test]
fn exact_and_asymptotic_mwu_agree_at_fifteen() {
    let mut rng = rng_for(5, "mwu_paths", 0);
    for _ in 0..200 {
        let x: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..1.0)).collect();
        let shift = rng.random_range(0.0..0.4);
        let y: Vec<f64> = (0..15).map(|_| rng.random_range(0.0..1.0) + shift).collect();
        let e = mann_whitney_u(&x, &y, MwuMethod::Exact).unwrap().p;
        let a = mann_whitney_u(&x, &y, MwuMethod::Asymptotic).unwrap().p;
        assert!((e - a).abs() < 0.01, "exact {e} vs asymptotic {a}");
    }
}
