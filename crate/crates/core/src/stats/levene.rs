use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use super::{median, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Center {
    /// Brown–Forsythe variant.
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for Center {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "median" => Ok(Center::Median),
            "mean" => Ok(Center::Mean),
            o => Err(format!("unknown center {o:?} (expected median or mean)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeveneTest {
    /// `+inf` when every group has zero spread in |deviation| but the group
    /// means of |deviation| differ.
    pub f: f64,
    pub df1: usize,
    pub df2: usize,
    pub p: f64,
    pub center: Center,
}

pub fn levene(groups: &[&[f64]], center: Center) -> Result<LeveneTest, StatsError> {
    let k = groups.len();
    if k < 2 {
        return Err(StatsError::InvalidInput("Levene needs at least 2 groups".into()));
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(StatsError::InsufficientData { needed: 2, got: g.len() });
    }
    let z: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let c = match center {
                Center::Median => median(g),
                Center::Mean => g.iter().sum::<f64>() / g.len() as f64,
            };
            g.iter().map(|v| (v - c).abs()).collect()
        })
        .collect();
    let n: usize = z.iter().map(Vec::len).sum();
    let grand = z.iter().flatten().sum::<f64>() / n as f64;
    let means: Vec<f64> = z.iter().map(|g| g.iter().sum::<f64>() / g.len() as f64).collect();
    let between: f64 = z.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let within: f64 = z
        .iter()
        .zip(&means)
        .map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>())
        .sum();
    let (df1, df2) = (k - 1, n - k);
    let scale = 1e-14 * (1.0 + grand * grand) * n as f64;
    let (f, p) = if within <= scale {
        if between <= scale {
            (0.0, 1.0)
        } else {
            log::warn!("Levene: zero within-group spread of deviations; F reported as infinite");
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (df2 as f64 / df1 as f64) * between / within;
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64).expect("positive df");
        (f, (1.0 - dist.cdf(f)).clamp(0.0, 1.0))
    };
    Ok(LeveneTest { f, df1, df2, p, center })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_groups() {
        let g = [1.0, 2.0, 4.0, 5.0, 5.0];
        let t = levene(&[&g, &g], Center::Median).unwrap();
        assert_eq!((t.f, t.p, t.df1, t.df2), (0.0, 1.0, 1, 8));
    }

    #[test]
    fn zero_within_spread_sentinel() {
        let t = levene(&[&[1.0, 3.0], &[0.0, 10.0]], Center::Mean).unwrap();
        assert!(t.f.is_infinite() && t.p == 0.0);
    }

    #[test]
    fn errors() {
        assert!(levene(&[&[1.0, 2.0]], Center::Median).is_err());
        assert!(levene(&[&[1.0, 2.0], &[1.0]], Center::Median).is_err());
    }

    proptest! {
        #[test]
        fn median_centering_is_location_invariant(a in prop::collection::vec(1u8..6, 3..30), b in prop::collection::vec(1u8..6, 3..30), shift in -3.0f64..3.0) {
            let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let bf: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            let moved: Vec<f64> = bf.iter().map(|v| v + shift).collect();
            let t1 = levene(&[&af, &bf], Center::Median).unwrap();
            let t2 = levene(&[&af, &moved], Center::Median).unwrap();
            if t1.f.is_finite() {
                prop_assert!((t1.f - t2.f).abs() < 1e-8 * (1.0 + t1.f));
            }
        }
    }
}
