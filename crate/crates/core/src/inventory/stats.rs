//! Window statistics. Inputs are never mutated; everything is recomputed
//! from the window on each call.

use alloc::vec::Vec;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n−1); zero below two points.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    libm::sqrt(ss / (xs.len() - 1) as f64)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => v[n / 2],
        _ => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

pub fn median(xs: &[f64]) -> f64 {
    median_sorted(&sorted(xs))
}

/// Median absolute deviation from the median, unscaled.
pub fn mad(xs: &[f64]) -> f64 {
    let m = median(xs);
    let dev: Vec<f64> = xs.iter().map(|x| libm::fabs(x - m)).collect();
    median(&dev)
}

/// Tukey hinges with the median excluded from both halves when n is odd.
pub fn quartiles(xs: &[f64]) -> (f64, f64) {
    let v = sorted(xs);
    let n = v.len();
    if n < 2 {
        let x = v.first().copied().unwrap_or(0.0);
        return (x, x);
    }
    let half = n / 2;
    (median_sorted(&v[..half]), median_sorted(&v[n - half..]))
}

/// Statistics of one trailing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub mad: f64,
    pub q1: f64,
    pub q3: f64,
    /// Set when every value in the window is identical.
    pub constant: bool,
}

impl Baseline {
    pub fn of(window: &[f64]) -> Baseline {
        let (q1, q3) = quartiles(window);
        Baseline {
            n: window.len(),
            mean: mean(window),
            sd: sample_sd(window),
            median: median(window),
            mad: mad(window),
            q1,
            q3,
            constant: window.windows(2).all(|w| w[0] == w[1]),
        }
    }
}
