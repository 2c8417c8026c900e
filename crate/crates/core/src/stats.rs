//! Small numerical helpers shared across the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail, accurate for large positive `x`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn norm_ppf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Independent RNG stream `stream` under a master seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw from N(mean, 1) truncated to `(lo, hi)`.
///
/// Uses inverse-CDF sampling on the side of the interval nearer the mode, and
/// Robert's exponential rejection sampler for intervals deep in a tail.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo < hi, "empty truncation interval ({lo}, {hi})");
    let a = lo - mean;
    let b = hi - mean;
    mean + std_truncated_normal(rng, a, b)
}

fn std_truncated_normal<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a > 0.0 {
        return one_sided_tail(rng, a, b);
    }
    if b < 0.0 {
        return -one_sided_tail(rng, -b, -a);
    }
    // Interval contains zero: plain inverse CDF is stable.
    let pa = norm_cdf(a);
    let pb = norm_cdf(b);
    let u = pa + (pb - pa) * rng.random::<f64>();
    norm_ppf(u).clamp(a, b)
}

// Sample Z ~ N(0,1) restricted to (a, b) with 0 <= a < b.
fn one_sided_tail<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    if a < 4.0 {
        // Work with upper tail probabilities to avoid cancellation.
        let qa = norm_sf(a);
        let qb = norm_sf(b);
        let u = qb + (qa - qb) * rng.random::<f64>();
        let x = -norm_ppf(u);
        return x.clamp(a, b);
    }
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    if (b - a) * alpha < 0.5 {
        // Narrow interval: uniform proposal beats the exponential envelope.
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>() <= (-(z * z - a * a) / 2.0).exp() {
                return z;
            }
        }
    }
    loop {
        let u: f64 = rng.random();
        let e = -(-u).ln_1p() / alpha;
        let z = a + e;
        if z >= b {
            continue;
        }
        let rho = (-(z - alpha).powi(2) / 2.0).exp();
        if rng.random::<f64>() <= rho {
            return z;
        }
    }
}

/// Linear-interpolation quantile of sorted data (Hyndman & Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Tukey boxplot statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub n: usize,
    pub lower_whisker: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub upper_whisker: f64,
    pub mean: f64,
}

impl BoxplotSummary {
    /// Quartiles by type-7 interpolation; whiskers reach the most extreme
    /// observations within 1.5 IQR of the box.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        let lower_whisker = v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(q1);
        let upper_whisker = v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(q3);
        Some(Self {
            n: v.len(),
            lower_whisker,
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            upper_whisker,
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    pub fn contains_in_box(&self, x: f64) -> bool {
        x >= self.q1 && x <= self.q3
    }
}

/// Two-sample Kolmogorov-Smirnov distance for integer-valued samples.
pub fn ks_distance_discrete(a: &[i32], b: &[i32]) -> f64 {
    let mut xs: Vec<i32> = a.iter().chain(b).copied().collect();
    xs.sort_unstable();
    xs.dedup();
    let ecdf = |s: &[i32], x: i32| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    xs.iter()
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}
