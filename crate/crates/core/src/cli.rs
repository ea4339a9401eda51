//! Command-line front end. Exit codes: 0 success, 1 usage, 2 data error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::report::report;
use crate::harness::tables::{eval_to_csv, mask_variant, EvalRow, FeatureRow, FeatureTable};
use crate::harness::{run_expansion_sweep, run_grid, ExperimentConfig, Experiment};
use crate::manifest::{read_manifest, Split};
use crate::models::{ClassifierKind, TrainedPipeline};
use crate::morphology::dilate_mm;
use crate::nifti::{read_mask_nifti, read_nifti, write_mask_nifti};
use crate::phantom::{generate_cohort, ground_truth_dice};
use crate::radiomics::{extract, feature_names};
use crate::segmentation::{segment, SegmentationMethod};
use crate::volume::BoundingBox;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "peritumor", version, about = "Peritumoral-expansion radiomics pipeline")]
struct Cli {
    /// Experiment config JSON; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress at info level (RUST_LOG also works).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort with ground-truth masks.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_cases: Option<usize>,
    },
    /// Segment one nodule and write its mask.
    Segment {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value = "knn")]
        method: SegmentationMethod,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth mask; prints the Dice overlap.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Grow a mask by a physical radius.
    Dilate {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        radius: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the feature vector of one masked region as a CSV row.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        radius: f64,
        #[arg(long, default_value = "case")]
        case_id: String,
        #[arg(long, default_value_t = 0)]
        label: u8,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a classifier on the train rows of a feature table.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "logistic")]
        classifier: ClassifierKind,
        #[arg(long)]
        mask_variant: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a saved model on one split and report AUC with a bootstrap CI.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        mask_variant: Option<String>,
        #[arg(long)]
        n_boot: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Segmentation x classifier grid on the validation split.
    Grid {
        #[command(flatten)]
        run: RunArgs,
    },
    /// AUC across expansion radii on the train and test splits.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        method: Option<SegmentationMethod>,
        #[arg(long)]
        classifier: Option<ClassifierKind>,
        /// Use the phantom ground-truth masks instead of segmenting.
        #[arg(long)]
        ground_truth: bool,
    },
    /// Render SVG charts and a markdown summary from evaluation CSVs.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct CaseArgs {
    #[arg(long, required_unless_present = "manifest")]
    image: Option<PathBuf>,
    /// x0,y0,z0,x1,y1,z1 (inclusive min, exclusive max).
    #[arg(long, required_unless_present = "manifest", value_parser = parse_bbox)]
    bbox: Option<BoundingBox>,
    #[arg(long, requires = "case")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    n_boot: Option<usize>,
}

fn parse_bbox(s: &str) -> std::result::Result<BoundingBox, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != 6 {
        return Err("expected six comma-separated integers".into());
    }
    BoundingBox::new([v[0], v[1], v[2]], [v[3], v[4], v[5]]).map_err(|e| e.to_string())
}

fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        match e {
            Error::InvalidParameter(_) | Error::InvalidRange(_) | Error::UnsupportedModel(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn apply_run_args(mut c: ExperimentConfig, a: &RunArgs) -> Result<ExperimentConfig> {
    if let Some(m) = &a.manifest {
        c.manifest = m.clone();
    }
    if let Some(o) = &a.out {
        c.output_dir = o.clone();
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if a.threads.is_some() {
        c.threads = a.threads;
    }
    if let Some(n) = a.n_boot {
        c.n_boot = n;
    }
    c.validate()?;
    Ok(c)
}

fn pick_variant(table: &FeatureTable, wanted: Option<&str>) -> Result<String> {
    let variants = table.variants();
    match wanted {
        Some(v) if variants.iter().any(|x| x == v) => Ok(v.to_string()),
        Some(v) => Err(Error::InvalidParameter(format!("mask_variant {v:?} not in table"))),
        None if variants.len() == 1 => Ok(variants[0].clone()),
        None => Err(Error::InvalidParameter(format!(
            "table holds several mask variants ({}); pass --mask-variant",
            variants.join(", ")
        ))),
    }
}

fn read_table(path: &Path) -> Result<FeatureTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FeatureTable::parse(&text)
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = || load_config(cli.config.as_deref());
    match cli.command {
        Command::Phantom { out, seed, n_cases } => {
            let mut c = cfg()?;
            if let Some(s) = seed {
                c.phantom.seed = s;
                c.seed = s;
            }
            if let Some(n) = n_cases {
                c.phantom.n_cases = n;
            }
            let records = generate_cohort(&c.phantom, &out)?;
            // ready-to-run experiment config next to the cohort
            c.manifest = PathBuf::from(crate::phantom::MANIFEST_FILE);
            c.output_dir = PathBuf::from("results");
            let p = out.join("config.json");
            std::fs::write(&p, c.to_json()?).map_err(|e| Error::io(&p, e))?;
            println!("{} cases written to {}", records.len(), out.display());
        }
        Command::Segment {
            case,
            method,
            out,
            truth,
        } => {
            let c = cfg()?;
            let (image, bbox, id) = match (&case.manifest, &case.case) {
                (Some(m), Some(id)) => {
                    let recs = read_manifest(m)?;
                    let rec = recs
                        .iter()
                        .find(|r| &r.case_id == id)
                        .ok_or_else(|| Error::InvalidParameter(format!("case {id:?} not in manifest")))?;
                    (rec.resolve_image(m.parent().unwrap_or(Path::new(""))), rec.bbox, id.clone())
                }
                _ => (case.image.clone().unwrap(), case.bbox.unwrap(), "case".to_string()),
            };
            let volume = read_nifti(&image).map_err(|e| e.in_case(&id))?;
            let seg = segment(&volume, &bbox, method, &c.segmentation).map_err(|e| e.in_case(&id))?;
            write_mask_nifti(&seg.mask, &out)?;
            print!("{id}: {} voxels, {} iterations", seg.mask.count(), seg.iterations);
            if let Some(t) = truth {
                let gt = read_mask_nifti(&t)?;
                print!(", dice {:.4}", ground_truth_dice(&gt, &seg.mask)?);
            }
            println!();
        }
        Command::Dilate { mask, radius, out } => {
            let m = read_mask_nifti(&mask)?;
            let d = dilate_mm(&m, radius)?;
            write_mask_nifti(&d, &out)?;
            println!("{} -> {} voxels", m.count(), d.count());
        }
        Command::Extract {
            image,
            mask,
            radius,
            case_id,
            label,
            split,
            out,
        } => {
            let c = cfg()?;
            if label > 1 {
                return Err(Error::InvalidParameter("label must be 0 or 1".into()));
            }
            let v = read_nifti(&image)?;
            let m = dilate_mm(&read_mask_nifti(&mask)?, radius)?;
            let f = extract(&v, &m, &c.features).map_err(|e| e.in_case(&case_id))?;
            let table = FeatureTable {
                names: feature_names().into_iter().map(String::from).collect(),
                rows: vec![FeatureRow {
                    case_id,
                    label,
                    split,
                    mask_variant: mask_variant("given", radius),
                    values: f.values,
                }],
            };
            write_out(out.as_deref(), &table.to_csv()?)?;
        }
        Command::Train {
            features,
            classifier,
            mask_variant,
            seed,
            out,
        } => {
            let c = cfg()?;
            let table = read_table(&features)?;
            let variant = pick_variant(&table, mask_variant.as_deref())?;
            let (x, y, _) = table.select(Some(&variant), Split::Train);
            let model = TrainedPipeline::fit(classifier, &table.names, &x, &y, &c.models, seed.unwrap_or(c.seed))?;
            model.save(&out)?;
            println!("{classifier} trained on {} rows of {variant}", x.len());
        }
        Command::Eval {
            model,
            features,
            split,
            mask_variant,
            n_boot,
            out,
        } => {
            let c = cfg()?;
            let model = TrainedPipeline::load(&model)?;
            let table = read_table(&features)?;
            if table.names != model.feature_names {
                return Err(Error::DimensionMismatch("feature columns differ from the model's".into()));
            }
            let variant = pick_variant(&table, mask_variant.as_deref())?;
            let (x, y, _) = table.select(Some(&variant), split);
            let scores = model.predict_proba(&x)?;
            let result = crate::evaluation::bootstrap_ci(&scores, &y, n_boot.unwrap_or(c.n_boot), c.ci_level, c.seed)?;
            let row = EvalRow {
                model: model.classifier.kind().to_string(),
                mask_variant: variant,
                split,
                result,
            };
            write_out(out.as_deref(), &eval_to_csv(&[row])?)?;
        }
        Command::Grid { run } => {
            let c = apply_run_args(cfg()?, &run)?;
            let exp = Experiment::new(c)?;
            let g = run_grid(&exp)?;
            println!(
                "grid: {} cells, winner {} + {}; written to {}",
                g.cells.len(),
                g.winner.0,
                g.winner.1,
                exp.config.output_dir.display()
            );
        }
        Command::Sweep {
            run,
            method,
            classifier,
            ground_truth,
        } => {
            let mut c = apply_run_args(cfg()?, &run)?;
            c.use_ground_truth |= ground_truth;
            let exp = Experiment::new(c)?;
            let mut m = method.or(exp.config.sweep_method);
            let mut k = classifier.or(exp.config.sweep_classifier);
            if !exp.config.use_ground_truth && (m.is_none() || k.is_none()) {
                let g = run_grid(&exp)?;
                m = m.or(Some(g.winner.0));
                k = k.or(Some(g.winner.1));
            }
            let source = if exp.config.use_ground_truth { None } else { m };
            let s = run_expansion_sweep(&exp, source, k.unwrap_or(ClassifierKind::Logistic))?;
            for r in &s.rows {
                println!("{} {} {} AUC {:.3} [{:.3}, {:.3}]", r.model, r.mask_variant, r.split, r.result.auc, r.result.ci_low, r.result.ci_high);
            }
        }
        Command::Report { input, out } => {
            for p in report(&input, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
