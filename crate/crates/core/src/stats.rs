//! Replicate estimates, comparisons and two-sample tests.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub n: usize,
    pub ci95: (f64, f64),
}

impl Estimate {
    pub fn from_parts(mean: f64, se: f64, n: usize) -> Self {
        Self {
            mean,
            se,
            n,
            ci95: (mean - 1.96 * se, mean + 1.96 * se),
        }
    }

    /// Sample mean with the standard error from the unbiased sample variance.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::from_parts(f64::NAN, f64::NAN, 0);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            f64::NAN
        };
        Self::from_parts(mean, se, n)
    }

    /// Fraction of successes with the binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self::from_parts(p, (p * (1.0 - p) / n as f64).sqrt(), n)
    }

    /// `|mean - target| <= z * se`.
    pub fn consistent_with(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.se
    }

    /// `mean <= bound + z * se`.
    pub fn below(&self, bound: f64, z: f64) -> bool {
        self.mean <= bound + z * self.se
    }
}

pub fn pooled_se(a: &Estimate, b: &Estimate) -> f64 {
    (a.se * a.se + b.se * b.se).sqrt()
}

/// `b` is not significantly below `a`: `b.mean >= a.mean - z * pooled se`.
pub fn not_decreasing(a: &Estimate, b: &Estimate, z: f64) -> bool {
    b.mean >= a.mean - z * pooled_se(a, b)
}

/// Adjacent-pair trend check over a grid, in grid order.
pub fn trend_nondecreasing(xs: &[Estimate], z: f64) -> bool {
    xs.windows(2).all(|w| not_decreasing(&w[0], &w[1], z))
}

pub fn trend_nonincreasing(xs: &[Estimate], z: f64) -> bool {
    xs.windows(2).all(|w| not_decreasing(&w[1], &w[0], z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic 1% critical value `1.628 sqrt((n + m) / (n m))`.
    pub critical: f64,
    pub pass: bool,
}

/// Two-sample Kolmogorov-Smirnov test at the 1% level. Ties are handled by
/// stepping over equal values in both samples at once.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let v = if x[i] <= y[j] { x[i] } else { y[j] };
        while i < n && x[i] == v {
            i += 1;
        }
        while j < m && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let critical = 1.628 * ((n + m) as f64 / (n * m) as f64).sqrt();
    KsResult {
        statistic: d,
        critical,
        pass: d <= critical,
    }
}
