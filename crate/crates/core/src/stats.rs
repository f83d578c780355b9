//! Small mergeable accumulators and textbook tests.
//!
//! Accumulators keep raw sums so that merging is plain addition; callers fix
//! the merge order to get bitwise-reproducible results.

use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Two-sided normal quantiles.
pub const Z95: f64 = 1.959_963_984_540_054;
pub const Z99: f64 = 2.575_829_303_548_901;

/// Kolmogorov distribution quantiles `c(α)`; reject when `D > c/√n`.
pub const KS_C05: f64 = 1.358_098_8;
pub const KS_C01: f64 = 1.627_624;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAcc {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAcc {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &MeanAcc) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn interval(&self, z: f64) -> Interval {
        Interval::around(self.mean(), z * self.std_error())
    }
}

/// Ratio estimator `Σa / Σb` over independent clusters `(a_j, b_j)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RatioAcc {
    pub n: u64,
    pub sa: f64,
    pub sb: f64,
    pub saa: f64,
    pub sbb: f64,
    pub sab: f64,
}

impl RatioAcc {
    #[inline]
    pub fn push(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    pub fn merge(&mut self, o: &RatioAcc) {
        self.n += o.n;
        self.sa += o.sa;
        self.sb += o.sb;
        self.saa += o.saa;
        self.sbb += o.sbb;
        self.sab += o.sab;
    }

    pub fn ratio(&self) -> f64 {
        self.sa / self.sb
    }

    /// Delta-method standard error of the ratio.
    pub fn std_error(&self) -> f64 {
        let n = self.n as f64;
        if self.n < 2 || self.sb == 0.0 {
            return f64::NAN;
        }
        let r = self.ratio();
        let bbar = self.sb / n;
        // Σ (a − r b)² expanded in raw sums
        let ss = (self.saa - 2.0 * r * self.sab + r * r * self.sbb).max(0.0);
        (ss / (n - 1.0)).sqrt() / (bbar * n.sqrt())
    }

    pub fn interval(&self, z: f64) -> Interval {
        Interval::around(self.ratio(), z * self.std_error())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn around(estimate: f64, half_width: f64) -> Self {
        Interval { estimate, low: estimate - half_width, high: estimate + half_width }
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson(k: u64, n: u64, z: f64) -> Interval {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Interval { estimate: p, low: centre - half, high: centre + half }
}

/// Kolmogorov–Smirnov distance of `samples` (values in `[0, 1]`) to the uniform law.
pub fn ks_uniform(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    samples.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let lo = x - i as f64 / n;
        let hi = (i + 1) as f64 / n - x;
        d.max(lo).max(hi)
    })
}

/// Least-squares line `y ≈ slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let slope_std_error = if xs.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    LineFit { slope, intercept, slope_std_error }
}

/// Pearson chi-square statistic of `counts` against equal expected counts.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

/// Upper 1% point of chi-square with `dof` degrees of freedom (Wilson–Hilferty).
pub fn chi_square_upper_1pct(dof: usize) -> f64 {
    let k = dof as f64;
    let a = 2.0 / (9.0 * k);
    k * (1.0 - a + 2.326_347_874 * a.sqrt()).powi(3)
}

pub fn collect_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}
