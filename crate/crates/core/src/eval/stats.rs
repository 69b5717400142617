use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Largest number of non-zero differences handled by the exact null
/// distribution.
pub const EXACT_MAX_N: usize = 25;

/// Minimum number of non-zero differences for a test.
pub const MIN_PAIRS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Mean with a two-sided Student-t confidence interval at `level`.
pub fn mean_ci(xs: &[f64], level: f64) -> Summary {
    let n = xs.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            std: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary {
            n,
            mean,
            std: 0.0,
            ci_low: mean,
            ci_high: mean,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let std = var.sqrt();
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + level / 2.0);
    let half = t * std / (n as f64).sqrt();
    Summary {
        n,
        mean,
        std,
        ci_low: mean - half,
        ci_high: mean + half,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// `min(w_plus, w_minus)`.
    pub statistic: f64,
    /// Rank sum of positive `a - b` differences.
    pub w_plus: f64,
    pub w_minus: f64,
    /// Non-zero differences.
    pub n: usize,
    pub p: f64,
    pub exact: bool,
}

/// Mid-ranks of `xs`, 1-based.
pub fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided Wilcoxon signed-rank test of paired samples. Zero differences
/// are dropped; when nothing is left the test reports `p = 1`.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return Ok(Wilcoxon {
            statistic: 0.0,
            w_plus: 0.0,
            w_minus: 0.0,
            n,
            p: 1.0,
            exact: true,
        });
    }
    if n < MIN_PAIRS {
        return Err(Error::InvalidArgument(format!(
            "Wilcoxon needs at least {MIN_PAIRS} non-zero differences, got {n}"
        )));
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let ranks = midranks(&abs);
    let w_plus: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w_minus = total - w_plus;
    let stat = w_plus.min(w_minus);
    let (p, exact) = if n <= EXACT_MAX_N {
        (exact_p(&ranks, stat), true)
    } else {
        (normal_p(&abs, w_plus, n), false)
    };
    Ok(Wilcoxon {
        statistic: stat,
        w_plus,
        w_minus,
        n,
        p,
        exact,
    })
}

/// `2 P(W <= stat)` under random signs on the given ranks. Mid-ranks are
/// halves at worst, so doubled ranks are integral.
fn exact_p(ranks: &[f64], stat: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let limit = (2.0 * stat).round() as usize;
    let hits: f64 = counts[..=limit].iter().sum();
    (2.0 * hits / 2f64.powi(ranks.len() as i32)).min(1.0)
}

fn normal_p(abs: &[f64], w_plus: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        let t = j as f64;
        tie += t * t * t - t;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie / 48.0;
    let z = (w_plus - mean) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0)
}
