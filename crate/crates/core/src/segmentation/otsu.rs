use crate::error::{Error, Result};

/// Histogram threshold chosen by maximum between-class variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuThreshold {
    /// Intensity at the chosen bin boundary.
    pub value: f64,
    /// First bin of the upper class; voxels in bins `>= bin` are foreground.
    pub bin: usize,
    pub min: f64,
    pub bin_width: f64,
}

impl OtsuThreshold {
    pub fn bin_of(&self, v: f64, bins: usize) -> usize {
        (((v - self.min) / self.bin_width).floor().max(0.0) as usize).min(bins - 1)
    }

    pub fn is_foreground(&self, v: f64, bins: usize) -> bool {
        self.bin_of(v, bins) >= self.bin
    }
}

/// Equal-width histogram over `[min, max]`; returns (counts, min, width).
pub fn histogram(values: &[f64], bins: usize) -> Result<(Vec<u64>, f64, f64)> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!("otsu needs >= 2 bins, got {bins}")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || !(max > min) {
        return Err(Error::DegenerateInput("ROI has fewer than two distinct values".into()));
    }
    let width = (max - min) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let b = (((v - min) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok((counts, min, width))
}

/// Between-class variance when bins `< t` form class 0, in bin-index units.
pub fn between_class_variance(n0: u64, s0: u64, n: u64, s: u64) -> f64 {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let w0 = n0 as f64 / n as f64;
    let w1 = n1 as f64 / n as f64;
    let mu0 = s0 as f64 / n0 as f64;
    let mu1 = (s - s0) as f64 / n1 as f64;
    w0 * w1 * (mu0 - mu1) * (mu0 - mu1)
}

/// Between-class variance up to the constant factor `1 / n^2`, as an exact
/// fraction `(n1*s0 - n0*s1)^2 / (n0*n1)`.
fn variance_fraction(n0: u64, s0: u64, n: u64, s: u64) -> (u128, u128) {
    let n1 = n - n0;
    if n0 == 0 || n1 == 0 {
        return (0, 1);
    }
    let d = (n1 as i128 * s0 as i128 - n0 as i128 * (s - s0) as i128).unsigned_abs();
    (d * d, n0 as u128 * n1 as u128)
}

/// `a > b` for fractions, exact unless the products overflow.
fn fraction_gt(a: (u128, u128), b: (u128, u128)) -> bool {
    match (a.0.checked_mul(b.1), b.0.checked_mul(a.1)) {
        (Some(x), Some(y)) => x > y,
        _ => a.0 as f64 / a.1 as f64 > b.0 as f64 / b.1 as f64,
    }
}

/// Picks the smallest boundary index `t in 1..bins` maximizing the
/// between-class variance of the histogram.
pub fn best_split(counts: &[u64]) -> usize {
    let n: u64 = counts.iter().sum();
    let s: u64 = counts.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let mut n0 = 0u64;
    let mut s0 = 0u64;
    let mut best = ((0u128, 1u128), 1usize);
    for t in 1..counts.len() {
        n0 += counts[t - 1];
        s0 += (t as u64 - 1) * counts[t - 1];
        let v = variance_fraction(n0, s0, n, s);
        if fraction_gt(v, best.0) {
            best = (v, t);
        }
    }
    best.1
}

pub fn otsu_threshold(values: &[f64], bins: usize) -> Result<OtsuThreshold> {
    let (counts, min, width) = histogram(values, bins)?;
    let bin = best_split(&counts);
    Ok(OtsuThreshold {
        value: min + bin as f64 * width,
        bin,
        min,
        bin_width: width,
    })
}
