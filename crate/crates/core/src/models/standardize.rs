use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns with training variance at or below this are dropped.
pub const MIN_VARIANCE: f64 = 1e-12;

/// Per-feature z-scoring fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerStats {
    pub mean: Vec<f64>,
    /// Population standard deviation.
    pub std: Vec<f64>,
    pub kept: Vec<bool>,
}

impl StandardizerStats {
    pub fn n_input(&self) -> usize {
        self.mean.len()
    }

    pub fn n_kept(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.kept
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_input() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} features, standardizer expects {}",
                row.len(),
                self.n_input()
            )));
        }
        Ok(self
            .kept_indices()
            .into_iter()
            .map(|j| (row[j] - self.mean[j]) / self.std[j])
            .collect())
    }

    pub fn apply(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }
}

pub fn fit_standardizer(rows: &[Vec<f64>]) -> Result<StandardizerStats> {
    if rows.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: rows.len(),
        });
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("ragged feature rows".into()));
    }
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            let c = r[j] - mean[j];
            var[j] += c * c;
        }
    }
    let kept = var.iter().map(|v| v / n > MIN_VARIANCE).collect();
    let std = var.iter().map(|v| (v / n).sqrt()).collect();
    Ok(StandardizerStats { mean, std, kept })
}
