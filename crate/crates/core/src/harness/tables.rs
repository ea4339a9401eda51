//! Feature-table, evaluation and importance CSV formats.
//!
//! Feature table: `case_id,label,split,mask_variant,<feature names...>`.
//! Evaluation: `model,mask_variant,split,auc,ci_low,ci_high,n_pos,n_neg,n_boot,seed`.
//! Importance: `model,mask_variant,rank,feature,score`.
//! Floats use Rust's shortest round-trip formatting, so re-reading is exact.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::evaluation::AucResult;
use crate::manifest::Split;

pub const FEATURE_PREFIX: [&str; 4] = ["case_id", "label", "split", "mask_variant"];
pub const EVAL_HEADER: [&str; 10] = [
    "model",
    "mask_variant",
    "split",
    "auc",
    "ci_low",
    "ci_high",
    "n_pos",
    "n_neg",
    "n_boot",
    "seed",
];
pub const IMPORTANCE_HEADER: [&str; 5] = ["model", "mask_variant", "rank", "feature", "score"];

/// `"knn_r8mm"` style tag for a segmentation method and expansion radius.
pub fn mask_variant(method: &str, radius_mm: f64) -> String {
    format!("{method}_r{radius_mm}mm")
}

/// Recovers the radius from a [`mask_variant`] tag.
pub fn variant_radius(variant: &str) -> Option<f64> {
    let (_, tail) = variant.rsplit_once("_r")?;
    tail.strip_suffix("mm")?.parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub case_id: String,
    pub label: u8,
    pub split: Split,
    pub mask_variant: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = FEATURE_PREFIX
            .iter()
            .copied()
            .chain(self.names.iter().map(String::as_str))
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            if r.values.len() != self.names.len() {
                return Err(Error::DimensionMismatch(format!(
                    "case {} has {} values for {} names",
                    r.case_id,
                    r.values.len(),
                    self.names.len()
                )));
            }
            let mut rec = vec![
                r.case_id.clone(),
                r.label.to_string(),
                r.split.to_string(),
                r.mask_variant.clone(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish(w)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| Error::parse(1, "header", e.to_string()))?.clone();
        if header.len() <= FEATURE_PREFIX.len()
            || header.iter().take(4).ne(FEATURE_PREFIX.iter().copied())
        {
            return Err(Error::parse(1, "header", "expected case_id,label,split,mask_variant,<features>"));
        }
        let names: Vec<String> = header.iter().skip(4).map(String::from).collect();
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::parse(row, "record", e.to_string()))?;
            if rec.len() != header.len() {
                return Err(Error::parse(row, "record", format!("{} fields, expected {}", rec.len(), header.len())));
            }
            let label = match rec[1].trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(row, "label", format!("{other:?} is not 0 or 1"))),
            };
            let split: Split = rec[2].parse()?;
            let values = rec
                .iter()
                .skip(4)
                .zip(&names)
                .map(|(v, n)| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::parse(row, n.as_str(), format!("{v:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let key = (rec[0].to_string(), rec[3].to_string());
            if !seen.insert(key) {
                return Err(Error::DuplicateCaseId(rec[0].to_string()));
            }
            rows.push(FeatureRow {
                case_id: rec[0].to_string(),
                label,
                split,
                mask_variant: rec[3].to_string(),
                values,
            });
        }
        if rows.is_empty() {
            return Err(Error::parse(2, "record", "feature table has no rows"));
        }
        Ok(FeatureTable { names, rows })
    }

    /// Rows of one variant and split, sorted by case_id.
    pub fn select(&self, variant: Option<&str>, split: Split) -> (Vec<Vec<f64>>, Vec<u8>, Vec<String>) {
        let mut rows: Vec<&FeatureRow> = self
            .rows
            .iter()
            .filter(|r| r.split == split && variant.is_none_or(|v| r.mask_variant == v))
            .collect();
        rows.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        (
            rows.iter().map(|r| r.values.clone()).collect(),
            rows.iter().map(|r| r.label).collect(),
            rows.iter().map(|r| r.case_id.clone()).collect(),
        )
    }

    pub fn variants(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.mask_variant) {
                v.push(r.mask_variant.clone());
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub model: String,
    pub mask_variant: String,
    pub split: Split,
    pub result: AucResult,
}

pub fn eval_to_csv(rows: &[EvalRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVAL_HEADER).map_err(csv_err)?;
    for r in rows {
        let a = &r.result;
        w.write_record([
            r.model.clone(),
            r.mask_variant.clone(),
            r.split.to_string(),
            a.auc.to_string(),
            a.ci_low.to_string(),
            a.ci_high.to_string(),
            a.n_pos.to_string(),
            a.n_neg.to_string(),
            a.n_boot.to_string(),
            a.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::parse(1, "header", e.to_string()))?.clone();
    if header.iter().ne(EVAL_HEADER.iter().copied()) {
        return Err(Error::parse(1, "header", format!("expected {}", EVAL_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::parse(row, "record", e.to_string()))?;
        let f = |k: usize| -> Result<f64> {
            rec[k]
                .parse()
                .map_err(|e| Error::parse(row, EVAL_HEADER[k], format!("{:?}: {e}", &rec[k])))
        };
        let u = |k: usize| -> Result<u64> {
            rec[k]
                .parse()
                .map_err(|e| Error::parse(row, EVAL_HEADER[k], format!("{:?}: {e}", &rec[k])))
        };
        out.push(EvalRow {
            model: rec[0].to_string(),
            mask_variant: rec[1].to_string(),
            split: rec[2].parse()?,
            result: AucResult {
                auc: f(3)?,
                ci_low: f(4)?,
                ci_high: f(5)?,
                n_pos: u(6)? as usize,
                n_neg: u(7)? as usize,
                n_boot: u(8)? as usize,
                seed: u(9)?,
            },
        });
    }
    if out.is_empty() {
        return Err(Error::parse(2, "record", "evaluation table has no rows"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow {
    pub model: String,
    pub mask_variant: String,
    pub ranked: Vec<(String, f64)>,
}

pub fn importance_to_csv(rows: &[ImportanceRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(IMPORTANCE_HEADER).map_err(csv_err)?;
    for r in rows {
        for (rank, (name, score)) in r.ranked.iter().enumerate() {
            w.write_record([
                r.model.clone(),
                r.mask_variant.clone(),
                (rank + 1).to_string(),
                name.clone(),
                score.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse(0, "csv", e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::parse(0, "csv", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::parse(0, "csv", e.to_string()))
}
