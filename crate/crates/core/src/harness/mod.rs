//! Experiment orchestration: feature tables, the segmentation x classifier
//! grid and the peritumoral expansion sweep.
//!
//! Outputs written to `output_dir`:
//!
//! | file | content |
//! |---|---|
//! | `grid_features.csv` | nodule-only features for every method |
//! | `grid.csv` | validation AUC per (method, classifier) |
//! | `sweep_features.csv` | features per expansion radius |
//! | `sweep.csv` | train and test AUC per radius |
//! | `importance.csv` | ranked feature importance per sweep radius |
//! | `split_audit.log` | every split access by stage |
//! | `*_provenance.json` | config hash, seed, version |
//! | `cache/` | per-(case, method, radius) feature vectors |

pub mod report;
pub mod tables;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::bootstrap_ci;
use crate::manifest::{read_manifest, CaseRecord, Split};
use crate::models::{ClassifierKind, ModelParams, TrainedPipeline};
use crate::morphology::dilate_many;
use crate::nifti::decode;
use crate::phantom::PhantomSpec;
use crate::radiomics::{extract, feature_names, FeatureSpec};
use crate::seeding::sha256_hex;
use crate::segmentation::{segment, SegmentationMethod, SegmentationParams};
use tables::{eval_to_csv, importance_to_csv, mask_variant, EvalRow, FeatureRow, FeatureTable, ImportanceRow};

pub const CONFIG_VERSION: u32 = 1;
pub const THREADS_ENV: &str = "PERITUMOR_THREADS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub manifest: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub phantom: PhantomSpec,
    pub segmentation: SegmentationParams,
    pub features: FeatureSpec,
    pub models: ModelParams,
    pub radii_mm: Vec<f64>,
    pub n_boot: usize,
    pub ci_level: f64,
    /// Worker threads; `None` uses every core. `PERITUMOR_THREADS` wins.
    pub threads: Option<usize>,
    /// Sweep choice; unset means the grid winner.
    pub sweep_method: Option<SegmentationMethod>,
    pub sweep_classifier: Option<ClassifierKind>,
    /// Use ground-truth masks from the phantom layout instead of segmenting.
    pub use_ground_truth: bool,
    /// Reuse per-case feature vectors under `output_dir/cache`.
    pub cache: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            manifest: PathBuf::from("data/manifest.csv"),
            output_dir: PathBuf::from("out"),
            seed: 7,
            phantom: PhantomSpec::default(),
            segmentation: SegmentationParams::default(),
            features: FeatureSpec::default(),
            models: ModelParams::default(),
            radii_mm: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            n_boot: 2000,
            ci_level: 0.95,
            threads: None,
            sweep_method: None,
            sweep_classifier: None,
            use_ground_truth: false,
            cache: true,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidParameter(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let r = &self.radii_mm;
        if r.first() != Some(&0.0) || r.windows(2).any(|w| !(w[0] < w[1])) || r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "radii_mm must start at 0 and be strictly ascending".into(),
            ));
        }
        if self.n_boot < 100 {
            return Err(Error::InvalidParameter("n_boot must be >= 100".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidParameter("ci_level must be in (0, 1)".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidParameter("threads must be >= 1".into()));
        }
        self.segmentation.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file. Relative `manifest` and `output_dir` paths are
    /// taken relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut c.manifest, &mut c.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// SHA-256 of the canonical JSON form, ignoring the thread count.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.threads = None;
        Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
    }

    /// Effective worker count: environment, then config, then all cores.
    pub fn thread_count(&self) -> Result<usize> {
        if let Ok(v) = std::env::var(THREADS_ENV) {
            return match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(Error::InvalidParameter(format!("{THREADS_ENV}={v:?} is not a positive integer"))),
            };
        }
        Ok(self.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
    }

    /// Runs `f` inside a pool sized by [`Self::thread_count`].
    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.thread_count()?)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    }

    pub fn manifest_dir(&self) -> PathBuf {
        self.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }
}

/// Records which split each stage reads so test-set leakage is detectable.
#[derive(Debug, Default)]
pub struct SplitAudit {
    entries: Mutex<Vec<AuditEntry>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub stage: Stage,
    pub split: Split,
    pub context: String,
    pub rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// Model fitting, including standardization.
    Fit,
    /// Choosing a configuration.
    Select,
    /// Reporting a final number.
    Report,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Fit => "fit",
            Stage::Select => "select",
            Stage::Report => "report",
        }
    }
}

impl SplitAudit {
    pub fn record(&self, stage: Stage, split: Split, context: &str, rows: usize) -> Result<()> {
        if split == Split::Test && stage != Stage::Report {
            return Err(Error::InvalidParameter(format!(
                "test split requested for {} ({context})",
                stage.as_str()
            )));
        }
        self.entries.lock().unwrap().push(AuditEntry {
            stage,
            split,
            context: context.to_string(),
            rows,
        });
        Ok(())
    }

    pub fn entries(&self) -> Vec<AuditEntry> {
        self.entries.lock().unwrap().clone()
    }

    pub fn to_log(&self) -> String {
        self.entries()
            .iter()
            .map(|e| format!("{}\t{}\t{}\t{}\n", e.stage.as_str(), e.split, e.rows, e.context))
            .collect()
    }
}

/// A case excluded from a table, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseFailure {
    pub case_id: String,
    pub variant: String,
    pub message: String,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub records: Vec<CaseRecord>,
    pub audit: SplitAudit,
    failures: Mutex<Vec<CaseFailure>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let mut records = read_manifest(&config.manifest)?;
        records.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        for split in Split::ALL {
            if !records.iter().any(|r| r.split == split) {
                return Err(Error::InvalidParameter(format!("manifest has no {split} cases")));
            }
        }
        Ok(Experiment {
            config,
            records,
            audit: SplitAudit::default(),
            failures: Mutex::new(Vec::new()),
        })
    }

    pub fn failures(&self) -> Vec<CaseFailure> {
        self.failures.lock().unwrap().clone()
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        let p = self.out(name);
        if let Some(d) = p.parent() {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn cache_key(&self, image_hash: &str, rec: &CaseRecord, source: &str, radius: f64) -> Result<String> {
        let c = &self.config;
        let key = serde_json::json!({
            "image": image_hash,
            "bbox": rec.bbox,
            "source": source,
            "segmentation": c.segmentation,
            "features": c.features,
            "radius_mm": radius,
            "version": env!("CARGO_PKG_VERSION"),
        });
        Ok(sha256_hex(serde_json::to_string(&key)?.as_bytes()))
    }

    fn cache_path(&self, key: &str) -> PathBuf {
        self.out("cache").join(format!("{key}.json"))
    }

    /// Features of one case for each radius. The nodule mask comes from the
    /// segmentation method, or from the phantom ground truth for `None`.
    /// Data errors abort; numerical failures come back as `Ok(Err(..))`.
    pub fn case_features(
        &self,
        rec: &CaseRecord,
        method: Option<SegmentationMethod>,
        radii: &[f64],
    ) -> Result<std::result::Result<Vec<Vec<f64>>, Error>> {
        let base = self.config.manifest_dir();
        let path = rec.resolve_image(&base);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e).in_case(&rec.case_id))?;
        let source = method.map_or("ground_truth", |m| m.as_str());
        let image_hash = sha256_hex(&bytes);
        let keys = radii
            .iter()
            .map(|&r| self.cache_key(&image_hash, rec, source, r))
            .collect::<Result<Vec<_>>>()?;
        if self.config.cache {
            let cached: Option<Vec<Vec<f64>>> = keys
                .iter()
                .map(|k| {
                    std::fs::read_to_string(self.cache_path(k))
                        .ok()
                        .and_then(|s| serde_json::from_str(&s).ok())
                })
                .collect();
            if let Some(v) = cached {
                return Ok(Ok(v));
            }
        }
        let volume = decode(&bytes).map_err(|e| e.in_case(&rec.case_id))?;
        rec.bbox
            .validate(volume.dims())
            .map_err(|e| e.in_case(&rec.case_id))?;
        let nodule = match method {
            Some(m) => match segment(&volume, &rec.bbox, m, &self.config.segmentation) {
                Ok(s) => s.mask,
                Err(e) if e.is_numerical() => return Ok(Err(e)),
                Err(e) => return Err(e.in_case(&rec.case_id)),
            },
            None => {
                let p = crate::phantom::ground_truth_path(&base, rec);
                crate::nifti::read_mask_nifti(&p).map_err(|e| e.in_case(&rec.case_id))?
            }
        };
        let masks = match dilate_many(&nodule, radii) {
            Ok(m) => m,
            Err(e) if e.is_numerical() => return Ok(Err(e)),
            Err(e) => return Err(e.in_case(&rec.case_id)),
        };
        let mut out = Vec::with_capacity(radii.len());
        for (mask, key) in masks.iter().zip(&keys) {
            match extract(&volume, mask, &self.config.features) {
                Ok(f) => {
                    if self.config.cache {
                        let p = self.cache_path(key);
                        if let Some(d) = p.parent() {
                            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                        }
                        std::fs::write(&p, serde_json::to_string(&f.values)?).map_err(|e| Error::io(&p, e))?;
                    }
                    out.push(f.values);
                }
                Err(e) if e.is_numerical() => return Ok(Err(e)),
                Err(e) => return Err(e.in_case(&rec.case_id)),
            }
        }
        Ok(Ok(out))
    }

    /// Feature table over all cases for one mask source and a radius list.
    /// Cases that fail numerically are excluded and logged.
    pub fn feature_table(&self, method: Option<SegmentationMethod>, radii: &[f64]) -> Result<FeatureTable> {
        let source = method.map_or("gt", |m| m.as_str());
        let per_case: Vec<std::result::Result<Vec<Vec<f64>>, Error>> = self
            .records
            .par_iter()
            .map(|rec| self.case_features(rec, method, radii))
            .collect::<Result<_>>()?;
        let mut rows = Vec::new();
        let mut excluded = 0;
        for (rec, res) in self.records.iter().zip(per_case) {
            match res {
                Ok(vectors) => {
                    for (&r, values) in radii.iter().zip(vectors) {
                        rows.push(FeatureRow {
                            case_id: rec.case_id.clone(),
                            label: rec.label,
                            split: rec.split,
                            mask_variant: mask_variant(source, r),
                            values,
                        });
                    }
                }
                Err(e) => {
                    excluded += 1;
                    log::warn!("case {} excluded for {source}: {e}", rec.case_id);
                    self.failures.lock().unwrap().push(CaseFailure {
                        case_id: rec.case_id.clone(),
                        variant: source.to_string(),
                        message: e.to_string(),
                    });
                }
            }
        }
        if excluded > 0 {
            log::warn!("{excluded} of {} cases excluded for {source}", self.records.len());
        }
        // group by variant, then case
        rows.sort_by(|a, b| {
            let ra = tables::variant_radius(&a.mask_variant).unwrap_or(0.0);
            let rb = tables::variant_radius(&b.mask_variant).unwrap_or(0.0);
            ra.total_cmp(&rb).then_with(|| a.case_id.cmp(&b.case_id))
        });
        Ok(FeatureTable {
            names: feature_names().into_iter().map(String::from).collect(),
            rows,
        })
    }

    /// Fits on the train rows of `variant` and scores the requested splits.
    pub fn fit_and_score(
        &self,
        table: &FeatureTable,
        variant: &str,
        kind: ClassifierKind,
        eval_splits: &[(Split, Stage)],
    ) -> Result<(TrainedPipeline, Vec<EvalRow>)> {
        let c = &self.config;
        let (x, y, _) = table.select(Some(variant), Split::Train);
        let ctx = format!("{kind} {variant}");
        self.audit.record(Stage::Fit, Split::Train, &ctx, x.len())?;
        let model = TrainedPipeline::fit(kind, &table.names, &x, &y, &c.models, c.seed)?;
        let mut rows = Vec::new();
        for &(split, stage) in eval_splits {
            let (xs, ys, _) = table.select(Some(variant), split);
            self.audit.record(stage, split, &ctx, xs.len())?;
            let scores = model.predict_proba(&xs)?;
            let result = bootstrap_ci(&scores, &ys, c.n_boot, c.ci_level, c.seed)?;
            rows.push(EvalRow {
                model: kind.to_string(),
                mask_variant: variant.to_string(),
                split,
                result,
            });
        }
        Ok((model, rows))
    }

    fn provenance(&self, kind: &str, extra: serde_json::Value) -> Result<()> {
        let manifest_bytes = std::fs::read(&self.config.manifest).map_err(|e| Error::io(&self.config.manifest, e))?;
        let doc = serde_json::json!({
            "report": kind,
            "config_hash": self.config.hash()?,
            "manifest_sha256": sha256_hex(&manifest_bytes),
            "seed": self.config.seed,
            "crate_version": env!("CARGO_PKG_VERSION"),
            "config_version": CONFIG_VERSION,
            "excluded_cases": self.failures().iter().map(|f| {
                serde_json::json!({"case_id": f.case_id, "variant": f.variant, "reason": f.message})
            }).collect::<Vec<_>>(),
            "details": extra,
        });
        self.write(&format!("{kind}_provenance.json"), &(serde_json::to_string_pretty(&doc)? + "\n"))
    }

    fn write_audit(&self) -> Result<()> {
        self.write("split_audit.log", &self.audit.to_log())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridReport {
    /// Row-major over methods then classifiers.
    pub cells: Vec<EvalRow>,
    pub winner: (SegmentationMethod, ClassifierKind),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    /// `None` for ground-truth masks.
    pub method: Option<SegmentationMethod>,
    pub classifier: ClassifierKind,
    /// One train and one test row per radius, in radius order.
    pub rows: Vec<EvalRow>,
}

impl SweepReport {
    pub fn auc(&self, radius: f64, split: Split) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.split == split && tables::variant_radius(&r.mask_variant) == Some(radius))
            .map(|r| r.result.auc)
    }
}

impl GridReport {
    pub fn cell(&self, method: SegmentationMethod, kind: ClassifierKind) -> Option<&EvalRow> {
        self.cells
            .iter()
            .find(|c| c.model == kind.as_str() && c.mask_variant == mask_variant(method.as_str(), 0.0))
    }
}

pub fn run_grid(exp: &Experiment) -> Result<GridReport> {
    exp.config.install(|| grid_inner(exp))?
}

fn grid_inner(exp: &Experiment) -> Result<GridReport> {
    let mut tables_out = Vec::new();
    let mut cells = Vec::new();
    for method in SegmentationMethod::ALL {
        let table = exp.feature_table(Some(method), &[0.0])?;
        let variant = mask_variant(method.as_str(), 0.0);
        for kind in ClassifierKind::ALL {
            let (_, rows) = exp.fit_and_score(&table, &variant, kind, &[(Split::Validation, Stage::Select)])?;
            cells.extend(rows);
        }
        tables_out.extend(table.rows);
    }
    // first maximum in row-major order
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.result.auc > cells[best].result.auc {
            best = i;
        }
    }
    let n_cls = ClassifierKind::ALL.len();
    let winner = (SegmentationMethod::ALL[best / n_cls], ClassifierKind::ALL[best % n_cls]);
    log::info!("grid winner: {} + {} (validation AUC {:.3})", winner.0, winner.1, cells[best].result.auc);

    let features = FeatureTable {
        names: feature_names().into_iter().map(String::from).collect(),
        rows: tables_out,
    };
    exp.write("grid_features.csv", &features.to_csv()?)?;
    exp.write("grid.csv", &eval_to_csv(&cells)?)?;
    exp.provenance(
        "grid",
        serde_json::json!({"winner": {"method": winner.0.as_str(), "classifier": winner.1.as_str()}}),
    )?;
    exp.write_audit()?;
    Ok(GridReport { cells, winner })
}

pub fn run_expansion_sweep(
    exp: &Experiment,
    method: Option<SegmentationMethod>,
    classifier: ClassifierKind,
) -> Result<SweepReport> {
    exp.config.install(|| sweep_inner(exp, method, classifier))?
}

fn sweep_inner(exp: &Experiment, method: Option<SegmentationMethod>, kind: ClassifierKind) -> Result<SweepReport> {
    let radii = exp.config.radii_mm.clone();
    let table = exp.feature_table(method, &radii)?;
    let source = method.map_or("gt", |m| m.as_str());
    let mut rows = Vec::new();
    let mut importance = Vec::new();
    for &r in &radii {
        let variant = mask_variant(source, r);
        let (model, eval) = exp.fit_and_score(
            &table,
            &variant,
            kind,
            &[(Split::Train, Stage::Report), (Split::Test, Stage::Report)],
        )?;
        rows.extend(eval);
        match model.feature_importance() {
            Ok(ranked) => importance.push(ImportanceRow {
                model: kind.to_string(),
                mask_variant: variant,
                ranked,
            }),
            Err(Error::UnsupportedModel(_)) => {}
            Err(e) => return Err(e),
        }
    }
    exp.write("sweep_features.csv", &table.to_csv()?)?;
    exp.write("sweep.csv", &eval_to_csv(&rows)?)?;
    if !importance.is_empty() {
        exp.write("importance.csv", &importance_to_csv(&importance)?)?;
    }
    let summary: BTreeMap<String, f64> = rows
        .iter()
        .map(|r| (format!("{}/{}", r.mask_variant, r.split), r.result.auc))
        .collect();
    exp.provenance(
        "sweep",
        serde_json::json!({"method": source, "classifier": kind.as_str(), "auc": summary}),
    )?;
    exp.write_audit()?;
    Ok(SweepReport {
        method,
        classifier: kind,
        rows,
    })
}
