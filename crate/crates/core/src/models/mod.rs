//! Standardization and the three classifiers, bundled as a [`TrainedPipeline`].
//!
//! A saved pipeline is a JSON document:
//!
//! ```text
//! {
//!   "format": "peritumor-model",
//!   "version": 1,
//!   "feature_names": [...],          // input columns, in order
//!   "standardizer": { "mean": [...], "std": [...], "kept": [...] },
//!   "classifier": { "kind": "logistic" | "forest" | "knn", ... },
//!   "seed": 7
//! }
//! ```

pub mod forest;
pub mod knn;
pub mod logistic;
pub mod standardize;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use knn::{train_knn, KnnModel};
pub use logistic::{train_logreg, LogisticModel, LogisticParams};
pub use standardize::{fit_standardizer, StandardizerStats};

pub const MODEL_FORMAT: &str = "peritumor-model";
pub const MODEL_VERSION: u32 = 1;

pub(crate) fn check_training(x: &[Vec<f64>], y: &[u8]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: x.len() });
    }
    if y.iter().any(|&l| l > 1) {
        return Err(Error::InvalidParameter("labels must be 0 or 1".into()));
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClassTraining);
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch("ragged feature rows".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Logistic,
    Forest,
    Knn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Logistic, ClassifierKind::Forest, ClassifierKind::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::Forest => "forest",
            ClassifierKind::Knn => "knn",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logistic" | "logreg" | "lr" => Ok(ClassifierKind::Logistic),
            "forest" | "rf" | "random_forest" => Ok(ClassifierKind::Forest),
            "knn" => Ok(ClassifierKind::Knn),
            _ => Err(Error::InvalidParameter(format!("unknown classifier {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub logistic: LogisticParams,
    pub forest: ForestParams,
    pub knn_k: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            logistic: LogisticParams::default(),
            forest: ForestParams::default(),
            knn_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Logistic(LogisticModel),
    Forest(ForestModel),
    Knn(KnnModel),
}

impl Classifier {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Classifier::Logistic(_) => ClassifierKind::Logistic,
            Classifier::Forest(_) => ClassifierKind::Forest,
            Classifier::Knn(_) => ClassifierKind::Knn,
        }
    }

    pub fn train(kind: ClassifierKind, x: &[Vec<f64>], y: &[u8], params: &ModelParams, seed: u64) -> Result<Self> {
        check_training(x, y)?;
        Ok(match kind {
            ClassifierKind::Logistic => Classifier::Logistic(train_logreg(x, y, params.logistic)?),
            ClassifierKind::Forest => Classifier::Forest(train_random_forest(x, y, params.forest, seed)?),
            ClassifierKind::Knn => Classifier::Knn(train_knn(x, y, params.knn_k)?),
        })
    }

    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        match self {
            Classifier::Logistic(m) => m.predict_proba(row),
            Classifier::Forest(m) => m.predict_proba(row),
            Classifier::Knn(m) => m.predict_proba(row),
        }
    }

    /// Unnormalized per-column scores in the classifier's input space.
    pub fn importance_scores(&self) -> Result<Vec<f64>> {
        match self {
            Classifier::Logistic(m) => Ok(m.weights.iter().map(|w| w.abs()).collect()),
            Classifier::Forest(m) => Ok(m.importance.clone()),
            Classifier::Knn(_) => Err(Error::UnsupportedModel("knn".into())),
        }
    }
}

/// Sorts `(name, score)` by descending score, ties in input order.
pub fn rank_importance(names: &[String], scores: &[f64]) -> Vec<(String, f64)> {
    let mut v: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(i, s)| (names[i].clone(), s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub standardizer: StandardizerStats,
    pub classifier: Classifier,
    pub seed: u64,
}

impl TrainedPipeline {
    pub fn fit(
        kind: ClassifierKind,
        feature_names: &[String],
        x: &[Vec<f64>],
        y: &[u8],
        params: &ModelParams,
        seed: u64,
    ) -> Result<Self> {
        check_training(x, y)?;
        if x[0].len() != feature_names.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                x[0].len()
            )));
        }
        let standardizer = fit_standardizer(x)?;
        let xs = standardizer.apply(x)?;
        let classifier = Classifier::train(kind, &xs, y, params, seed)?;
        Ok(TrainedPipeline {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            feature_names: feature_names.to_vec(),
            standardizer,
            classifier,
            seed,
        })
    }

    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter()
            .map(|r| self.classifier.predict_proba(&self.standardizer.apply_row(r)?))
            .collect()
    }

    pub fn kept_feature_names(&self) -> Vec<String> {
        self.standardizer
            .kept_indices()
            .into_iter()
            .map(|i| self.feature_names[i].clone())
            .collect()
    }

    /// Ranked importance over the kept features.
    pub fn feature_importance(&self) -> Result<Vec<(String, f64)>> {
        let scores = self.classifier.importance_scores()?;
        Ok(rank_importance(&self.kept_feature_names(), &scores))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: TrainedPipeline = serde_json::from_str(s)?;
        if p.format != MODEL_FORMAT || p.version != MODEL_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported model document {} v{}",
                p.format, p.version
            )));
        }
        if p.standardizer.n_input() != p.feature_names.len() {
            return Err(Error::DimensionMismatch("standardizer width vs feature names".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
