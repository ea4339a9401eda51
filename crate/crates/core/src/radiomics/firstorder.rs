use crate::error::{Error, Result};
use crate::radiomics::discretize::DiscretizedRoi;
use crate::stats::{percentile_sorted, sorted_copy};

pub const NAMES: [&str; 16] = [
    "firstorder.mean",
    "firstorder.median",
    "firstorder.minimum",
    "firstorder.maximum",
    "firstorder.range",
    "firstorder.variance",
    "firstorder.skewness",
    "firstorder.kurtosis",
    "firstorder.energy",
    "firstorder.root_mean_squared",
    "firstorder.mean_absolute_deviation",
    "firstorder.entropy",
    "firstorder.uniformity",
    "firstorder.percentile10",
    "firstorder.percentile90",
    "firstorder.interquartile_range",
];

/// Intensity statistics of the masked `values` (population moments) plus
/// entropy/uniformity over the discretized levels.
pub fn firstorder_features(values: &[f64], droi: &DiscretizedRoi) -> Result<[f64; 16]> {
    if values.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = values.len() as f64;
    let sorted = sorted_copy(values);
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4, mut mad, mut energy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        mad += d.abs();
        energy += x * x;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    mad /= n;
    let (skewness, kurtosis) = if values.len() >= 2 && m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };

    let mut counts = vec![0u64; droi.n_levels as usize + 1];
    let mut total = 0u64;
    for l in droi.masked_levels() {
        counts[l as usize] += 1;
        total += 1;
    }
    let (mut entropy, mut uniformity) = (0.0, 0.0);
    for &c in counts.iter().filter(|&&c| c > 0) {
        let p = c as f64 / total as f64;
        entropy -= p * p.log2();
        uniformity += p * p;
    }

    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let p25 = percentile_sorted(&sorted, 0.25);
    let p75 = percentile_sorted(&sorted, 0.75);
    Ok([
        mean,
        percentile_sorted(&sorted, 0.5),
        min,
        max,
        max - min,
        m2,
        skewness,
        kurtosis,
        energy,
        (energy / n).sqrt(),
        mad,
        // -0.0 from a single level reads oddly in tables
        entropy + 0.0,
        uniformity,
        percentile_sorted(&sorted, 0.10),
        percentile_sorted(&sorted, 0.90),
        p75 - p25,
    ])
}
