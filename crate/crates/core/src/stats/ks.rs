use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsTest {
    pub d: f64,
    /// Asymptotic, also under ties.
    pub p: f64,
    /// The pooled sample has ties, so the p-value is approximate.
    pub ties: bool,
}

/// Kolmogorov survival function Q(λ) = P(K > λ).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|k| (-((2 * k - 1) as f64).powi(2) * c).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov–Smirnov test.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> Result<KsTest, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: x.len().min(y.len()) });
    }
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n1, n2) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] == v {
            i += 1;
        }
        while j < ys.len() && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let mut pooled: Vec<f64> = xs.iter().chain(&ys).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let ties = pooled.windows(2).any(|w| w[0] == w[1]);
    let en = n1 * n2 / (n1 + n2);
    Ok(KsTest {
        d,
        p: kolmogorov_q(en.sqrt() * d),
        ties,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_d(x: &[f64], y: &[f64]) -> f64 {
        let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        x.iter().chain(y).map(|&t| (ecdf(x, t) - ecdf(y, t)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn trivial_cases() {
        let x = [1.0, 2.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&x, &[3.0, 2.0, 1.0, 2.0]).unwrap().d, 0.0);
        let t = ks_two_sample(&[1.0, 2.0], &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(t.d, 1.0);
        assert!(ks_two_sample(&x, &x).unwrap().ties);
    }

    #[test]
    fn q_is_continuous_across_branches() {
        let a = kolmogorov_q(1.18 - 1e-9);
        let b = kolmogorov_q(1.18 + 1e-9);
        assert!((a - b).abs() < 1e-8);
        // familiar 5% critical value
        assert!((kolmogorov_q(1.3581) - 0.05).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn matches_naive_sweep(x in prop::collection::vec(0u8..7, 1..40), y in prop::collection::vec(0u8..7, 1..40)) {
            let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
            let t = ks_two_sample(&xf, &yf).unwrap();
            prop_assert!((t.d - naive_d(&xf, &yf)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&t.d) && (0.0..=1.0).contains(&t.p));
            let g: Vec<f64> = xf.iter().map(|v| v.exp()).collect();
            let h: Vec<f64> = yf.iter().map(|v| v.exp()).collect();
            prop_assert_eq!(ks_two_sample(&g, &h).unwrap().d, t.d);
        }
    }
}
