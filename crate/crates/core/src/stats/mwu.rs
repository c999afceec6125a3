use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::rank::midranks;
use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMethod {
    /// Exact when n1·n2 ≤ 400, asymptotic otherwise.
    #[default]
    Auto,
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuTest {
    /// min(U_x, U_y).
    pub u: f64,
    /// #{x < y} + ½ #{x = y}.
    pub u_x: f64,
    pub u_y: f64,
    pub p: f64,
    pub exact: bool,
}

const EXACT_LIMIT: usize = 400;

/// Two-sided Mann–Whitney U test.
pub fn mann_whitney_u(x: &[f64], y: &[f64], method: MwuMethod) -> Result<MwuTest, StatsError> {
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::InsufficientData { needed: 1, got: x.len().min(y.len()) });
    }
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let rx: f64 = ranks[..n1].iter().sum();
    let prod = (n1 * n2) as f64;
    // rank sum of x counts pairs with x above y
    let u_y = rx - (n1 * (n1 + 1)) as f64 / 2.0;
    let u_x = prod - u_y;
    let exact = match method {
        MwuMethod::Exact => true,
        MwuMethod::Asymptotic => false,
        MwuMethod::Auto => n1 * n2 <= EXACT_LIMIT,
    };
    let p = if exact {
        exact_p(&ranks, n1, rx)
    } else {
        asymptotic_p(&pooled, n1, n2, u_x)
    };
    Ok(MwuTest {
        u: u_x.min(u_y),
        u_x,
        u_y,
        p: p.clamp(0.0, 1.0),
        exact,
    })
}

/// Permutation distribution of the x rank sum given the pooled mid-ranks,
/// counted over doubled (integer) ranks.
fn exact_p(ranks: &[f64], n1: usize, rx: f64) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // counts[k][s]: subsets of size k with doubled sum s
    let mut counts = vec![vec![0.0f64; max_sum + 1]; n1 + 1];
    counts[0][0] = 1.0;
    for &d in &doubled {
        for k in (1..=n1).rev() {
            let (lower, upper) = counts.split_at_mut(k);
            let prev = &lower[k - 1];
            let cur = &mut upper[0];
            for s in (d..=max_sum).rev() {
                cur[s] += prev[s - d];
            }
        }
    }
    let total: f64 = counts[n1].iter().sum();
    // E[2 R_x] = n1 (n + 1)
    let center = (n1 * (n + 1)) as f64;
    let observed = (2.0 * rx - center).abs();
    let extreme: f64 = counts[n1]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as f64 - center).abs() >= observed - 1e-9)
        .map(|(_, c)| c)
        .sum();
    extreme / total
}

fn asymptotic_p(pooled: &[f64], n1: usize, n2: usize, u: f64) -> f64 {
    let n = (n1 + n2) as f64;
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let prod = (n1 * n2) as f64;
    let var = prod / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0;
    }
    let z = ((u - prod / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    2.0 * (1.0 - Normal::standard().cdf(z))
}
