use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<u8>,
    pub k: usize,
}

pub fn train_knn(x: &[Vec<f64>], y: &[u8], k: usize) -> Result<KnnModel> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    if k == 0 || k % 2 == 0 || k > x.len() {
        return Err(Error::InvalidParameter(format!(
            "k must be odd and <= {} training rows, got {k}",
            x.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("ragged feature rows".into()));
    }
    Ok(KnnModel {
        x: x.to_vec(),
        y: y.to_vec(),
        k,
    })
}

impl KnnModel {
    pub fn n_features(&self) -> usize {
        self.x[0].len()
    }

    /// Indices of the k nearest rows, closest first, ties by lower index.
    pub fn neighbors(&self, row: &[f64]) -> Result<Vec<usize>> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features()
            )));
        }
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter()
            .enumerate()
            .map(|(i, t)| (t.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        d.select_nth_unstable_by(self.k - 1, cmp);
        d.truncate(self.k);
        d.sort_by(cmp);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        let nb = self.neighbors(row)?;
        let pos = nb.iter().filter(|&&i| self.y[i] == 1).count();
        Ok(pos as f64 / self.k as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lower_index() {
        let x = vec![vec![1.0], vec![-1.0], vec![1.0]];
        let m = train_knn(&x, &[1, 0, 0], 1).unwrap();
        assert_eq!(m.neighbors(&[0.0]).unwrap(), vec![0]);
        assert_eq!(m.predict_proba(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn even_or_oversized_k_rejected() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(train_knn(&x, &[0, 1], 2).is_err());
        assert!(train_knn(&x, &[0, 1], 3).is_err());
    }
}
