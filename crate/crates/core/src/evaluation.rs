//! ROC analysis: Mann–Whitney AUC, ROC curves and stratified percentile
//! bootstrap intervals.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derived_rng;
use crate::stats::percentile_sorted;

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Rank-sum AUC with midranks for ties.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    Ok(auc_unchecked(scores, labels, n_pos, n_neg))
}

fn auc_unchecked(scores: &[f64], labels: &[u8], n_pos: usize, n_neg: usize) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the positive rank sum keeps midranks integral
    let mut rank2_pos: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j) as u128;
        let pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        rank2_pos += mid2 * pos;
        i = j;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // 2U = 2R - p(p+1)
    let u2 = rank2_pos - p * (p + 1);
    u2 as f64 / (2 * p * n) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Descending; the first entry is `+inf`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        self.fpr
            .windows(2)
            .zip(self.tpr.windows(2))
            .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
            .sum()
    }
}

/// Points for thresholds `score >= t` over each unique score, high to low.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        fpr.push(fp as f64 / n_neg as f64);
        tpr.push(tp as f64 / n_pos as f64);
    }
    Ok(RocCurve { thresholds, fpr, tpr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Stratified percentile bootstrap. Replicate `b` draws from its own derived
/// stream, so the result does not depend on scheduling.
pub fn bootstrap_ci(scores: &[f64], labels: &[u8], n_boot: usize, level: f64, seed: u64) -> Result<AucResult> {
    let (n_pos, n_neg) = class_counts(scores, labels)?;
    if n_boot < 100 {
        return Err(Error::InvalidParameter(format!("n_boot must be >= 100, got {n_boot}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must be in (0, 1), got {level}")));
    }
    let point = auc_unchecked(scores, labels, n_pos, n_neg);
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l != 1).map(|(s, _)| *s).collect();
    let mut lab = vec![1u8; n_pos];
    lab.resize(n_pos + n_neg, 0);
    let mut reps: Vec<f64> = (0..n_boot as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = derived_rng(seed, "bootstrap", b);
            let mut s = Vec::with_capacity(n_pos + n_neg);
            s.extend((0..n_pos).map(|_| pos[rng.random_range(0..n_pos)]));
            s.extend((0..n_neg).map(|_| neg[rng.random_range(0..n_neg)]));
            auc_unchecked(&s, &lab, n_pos, n_neg)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(AucResult {
        auc: point,
        ci_low: percentile_sorted(&reps, alpha),
        ci_high: percentile_sorted(&reps, 1.0 - alpha),
        n_boot,
        seed,
        n_pos,
        n_neg,
    })
}
