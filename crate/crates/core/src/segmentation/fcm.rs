use crate::error::{Error, Result};
use crate::stats::{distinct_count_at_least, percentile_sorted, sorted_copy};

/// Converged two-cluster fuzzy c-means state on scalar intensities.
#[derive(Debug, Clone)]
pub struct FcmFit {
    pub centroids: [f64; 2],
    /// Row-major `n x 2` membership matrix from the last update.
    pub memberships: Vec<[f64; 2]>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `|sum_j u_ij - 1|` seen over all iterations.
    pub max_row_sum_error: f64,
}

impl FcmFit {
    /// Index of the higher-centroid cluster.
    pub fn foreground_cluster(&self) -> usize {
        if self.centroids[1] > self.centroids[0] {
            1
        } else {
            0
        }
    }

    pub fn labels(&self) -> Vec<bool> {
        let fg = self.foreground_cluster();
        self.memberships
            .iter()
            .map(|u| {
                let winner = if u[1] > u[0] { 1 } else { 0 };
                winner == fg
            })
            .collect()
    }
}

/// Deterministic starting centroids: 25th/75th percentiles, falling back to
/// min/max when those coincide.
pub(crate) fn quartile_init(values: &[f64]) -> [f64; 2] {
    let sorted = sorted_copy(values);
    let lo = percentile_sorted(&sorted, 0.25);
    let hi = percentile_sorted(&sorted, 0.75);
    if hi > lo {
        [lo, hi]
    } else {
        [sorted[0], sorted[sorted.len() - 1]]
    }
}

fn update_memberships(values: &[f64], v: [f64; 2], exponent: f64, out: &mut [[f64; 2]]) {
    for (u, &x) in out.iter_mut().zip(values) {
        let d = [(x - v[0]).abs(), (x - v[1]).abs()];
        *u = if d[0] == 0.0 && d[1] == 0.0 {
            [0.5, 0.5]
        } else if d[0] == 0.0 {
            [1.0, 0.0]
        } else if d[1] == 0.0 {
            [0.0, 1.0]
        } else {
            let mut row = [0.0; 2];
            for j in 0..2 {
                let s: f64 = (0..2).map(|k| (d[j] / d[k]).powf(exponent)).sum();
                row[j] = 1.0 / s;
            }
            row
        };
    }
}

fn update_centroids(values: &[f64], u: &[[f64; 2]], m: f64, previous: [f64; 2]) -> [f64; 2] {
    let mut v = previous;
    for (j, vj) in v.iter_mut().enumerate() {
        let (num, den) = values
            .iter()
            .zip(u)
            .fold((0.0, 0.0), |(num, den), (&x, row)| {
                let w = row[j].powf(m);
                (num + w * x, den + w)
            });
        if den > 0.0 {
            *vj = num / den;
        }
    }
    v
}

/// Fuzzy c-means with `c = 2` on intensities.
pub fn fit_fcm(values: &[f64], fuzzifier: f64, tol: f64, max_iter: usize) -> Result<FcmFit> {
    if !(fuzzifier > 1.0) || !(tol > 0.0) || max_iter == 0 {
        return Err(Error::InvalidParameter(format!(
            "fcm needs m > 1, tol > 0, max_iter > 0 (m={fuzzifier}, tol={tol}, max_iter={max_iter})"
        )));
    }
    if !distinct_count_at_least(values, 2) {
        return Err(Error::DegenerateInput("ROI has fewer than two distinct values".into()));
    }
    let exponent = 2.0 / (fuzzifier - 1.0);
    let mut centroids = quartile_init(values);
    let mut u = vec![[0.0; 2]; values.len()];
    update_memberships(values, centroids, exponent, &mut u);
    let mut max_row_sum_error = row_sum_error(&u);
    let mut next = u.clone();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        centroids = update_centroids(values, &u, fuzzifier, centroids);
        update_memberships(values, centroids, exponent, &mut next);
        max_row_sum_error = max_row_sum_error.max(row_sum_error(&next));
        let delta = u
            .iter()
            .zip(&next)
            .map(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()))
            .fold(0.0, f64::max);
        std::mem::swap(&mut u, &mut next);
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(FcmFit {
        centroids,
        memberships: u,
        iterations,
        converged,
        max_row_sum_error,
    })
}

fn row_sum_error(u: &[[f64; 2]]) -> f64 {
    u.iter().map(|r| (r[0] + r[1] - 1.0).abs()).fold(0.0, f64::max)
}
