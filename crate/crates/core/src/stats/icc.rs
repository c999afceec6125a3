use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::StatsError;

/// Single-measure, absolute-agreement intraclass correlation with its
/// two-way ANOVA ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Icc {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// MSR / MSE.
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
    /// Satterthwaite df used for the confidence interval.
    pub ci_df2: f64,
    pub msr: f64,
    pub msc: f64,
    pub mse: f64,
}

/// ICC(A,1) for `n` subjects rated twice (real score, simulated score).
pub fn icc_a1(pairs: &[(f64, f64)], alpha: f64) -> Result<Icc, StatsError> {
    let n = pairs.len();
    if n < 5 {
        return Err(StatsError::InsufficientPairs(n));
    }
    let k = 2.0;
    let nf = n as f64;
    let grand = pairs.iter().map(|(a, b)| a + b).sum::<f64>() / (k * nf);
    let col = [
        pairs.iter().map(|p| p.0).sum::<f64>() / nf,
        pairs.iter().map(|p| p.1).sum::<f64>() / nf,
    ];
    let ssr: f64 = pairs.iter().map(|(a, b)| k * ((a + b) / k - grand).powi(2)).sum();
    let ssc: f64 = col.iter().map(|c| nf * (c - grand).powi(2)).sum();
    let sst: f64 = pairs.iter().map(|(a, b)| (a - grand).powi(2) + (b - grand).powi(2)).sum();
    let sse = (sst - ssr - ssc).max(0.0);
    let df1 = n - 1;
    let df2 = n - 1;
    let msr = ssr / df1 as f64;
    let msc = ssc / (k - 1.0);
    let mse = sse / df2 as f64;
    if msr <= 0.0 {
        return Err(StatsError::Undefined("ICC (no between-subject variance)"));
    }
    let value = (msr - mse) / (msr + (k - 1.0) * mse + k / nf * (msc - mse));
    let tiny = 1e-13 * msr;
    if mse <= tiny && msc <= tiny {
        return Ok(Icc {
            value: 1.0,
            ci_lo: 1.0,
            ci_hi: 1.0,
            f: f64::INFINITY,
            df1,
            df2,
            p: 0.0,
            ci_df2: df2 as f64,
            msr,
            msc,
            mse,
        });
    }
    let f = if mse > 0.0 { msr / mse } else { f64::INFINITY };
    let p = if f.is_finite() {
        1.0 - FisherSnedecor::new(df1 as f64, df2 as f64).expect("df > 0").cdf(f)
    } else {
        0.0
    };
    let a = k * value / (nf * (1.0 - value));
    let b = 1.0 + k * value * (nf - 1.0) / (nf * (1.0 - value));
    let v = (a * msc + b * mse).powi(2) / ((a * msc).powi(2) / (k - 1.0) + (b * mse).powi(2) / ((nf - 1.0) * (k - 1.0)));
    let q = 1.0 - alpha / 2.0;
    let (ci_lo, ci_hi) = if v.is_finite() && v > 0.0 {
        let fl = FisherSnedecor::new(nf - 1.0, v).expect("df > 0").inverse_cdf(q);
        let fu = FisherSnedecor::new(v, nf - 1.0).expect("df > 0").inverse_cdf(q);
        let c = k * nf - k - nf;
        let lo = nf * (msr - fl * mse) / (fl * (k * msc + c * mse) + nf * msr);
        let hi = nf * (fu * msr - k * mse) / (k * msc + c * mse + nf * fu * msr);
        (lo, hi)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Icc {
        value,
        ci_lo,
        ci_hi,
        f,
        df1,
        df2,
        p: p.clamp(0.0, 1.0),
        ci_df2: v,
        msr,
        msc,
        mse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_agreement() {
        let pairs: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, i as f64)).collect();
        let r = icc_a1(&pairs, 0.05).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.mse, 0.0);
    }

    #[test]
    fn offset_is_penalized() {
        let xs = [1.0, 2.0, 4.0, 5.0, 7.0, 9.0];
        let pairs: Vec<(f64, f64)> = xs.iter().map(|&x| (x, x + 2.0)).collect();
        let r = icc_a1(&pairs, 0.05).unwrap();
        // hand ANOVA: the residual is zero, the column effect is 2 per subject
        let n = 6.0;
        let grand = xs.iter().sum::<f64>() / n + 1.0;
        let msr = xs.iter().map(|x| 2.0 * (x + 1.0 - grand).powi(2)).sum::<f64>() / 5.0;
        let msc = n * (1.0f64.powi(2) + 1.0f64.powi(2));
        let expected = msr / (msr + 2.0 / n * msc);
        assert!((r.value - expected).abs() < 1e-12);
        assert!(r.value < 1.0);
        assert!(r.mse.abs() < 1e-12);
    }

    #[test]
    fn too_few_pairs() {
        assert_eq!(icc_a1(&[(1.0, 2.0); 4], 0.05), Err(StatsError::InsufficientPairs(4)));
        assert!(matches!(icc_a1(&[(1.0, 2.0); 6], 0.05), Err(StatsError::Undefined(_))));
    }
}
