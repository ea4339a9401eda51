//! Python bindings. Volumes and masks cross the boundary as flat x-fastest
//! lists; feature vectors as `(name, value)` lists.

use std::path::PathBuf;

use peritumor::evaluation::{self, AucResult};
use peritumor::harness::tables::EvalRow;
use peritumor::harness::{self, Experiment, ExperimentConfig};
use peritumor::models::{ClassifierKind, ModelParams, TrainedPipeline};
use peritumor::phantom::{self, PhantomSpec};
use peritumor::radiomics::{self, FeatureSpec};
use peritumor::segmentation::{self, SegmentationMethod, SegmentationParams};
use peritumor::{morphology, nifti, BoundingBox, Error, Mask3D, Volume3D};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(peritumor_py, PeritumorError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_) | Error::InvalidRange(_) | Error::UnsupportedModel(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PeritumorError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

#[pyclass(name = "Volume", frozen)]

pub struct PyVolume(pub Volume3D);

#[pymethods]
impl PyVolume {
    #[new]
    fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<f64>) -> PyResult<Self> {
        Volume3D::new(dims, spacing, data).map(PyVolume).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.0.spacing()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.0.get(x, y, z)
    }

    /// Writes a float32 NIfTI-1 file.
    fn write(&self, path: PathBuf) -> PyResult<()> {
        nifti::write_volume_nifti(&self.0, path, nifti::WriteOptions::default()).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Volume(dims={:?}, spacing={:?})", self.0.dims(), self.0.spacing())
    }
}

#[pyclass(name = "Mask", frozen)]

pub struct PyMask(pub Mask3D);

#[pymethods]
impl PyMask {
    #[new]
    fn new(dims: [usize; 3], spacing: [f64; 3], bits: Vec<bool>) -> PyResult<Self> {
        Mask3D::new(dims, spacing, bits).map(PyMask).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.0.dims()
    }

    #[getter]
    fn spacing(&self) -> [f64; 3] {
        self.0.spacing()
    }

    #[getter]
    fn bits(&self) -> Vec<bool> {
        self.0.bits().to_vec()
    }

    fn count(&self) -> usize {
        self.0.count()
    }

    fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.0.get(x, y, z)
    }

    /// `(min, max)` corners, max exclusive; `None` when empty.
    fn bounding_box(&self) -> Option<([usize; 3], [usize; 3])> {
        self.0.bounding_box().map(|b| (b.min, b.max))
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        nifti::write_mask_nifti(&self.0, path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Mask(dims={:?}, count={})", self.0.dims(), self.0.count())
    }
}

#[pyfunction]
fn read_nifti(path: PathBuf) -> PyResult<PyVolume> {
    nifti::read_nifti(path).map(PyVolume).map_err(to_py)
}

#[pyfunction]
fn read_mask(path: PathBuf) -> PyResult<PyMask> {
    nifti::read_mask_nifti(path).map(PyMask).map_err(to_py)
}

/// Segments the nodule inside `bbox = (x0, y0, z0, x1, y1, z1)`.
#[pyfunction]
#[pyo3(signature = (volume, bbox, method = "knn"))]
fn segment(volume: &PyVolume, bbox: [usize; 6], method: &str) -> PyResult<PyMask> {
    let m: SegmentationMethod = parse(method)?;
    let b = BoundingBox::new([bbox[0], bbox[1], bbox[2]], [bbox[3], bbox[4], bbox[5]]).map_err(to_py)?;
    segmentation::segment(&volume.0, &b, m, &SegmentationParams::default())
        .map(|s| PyMask(s.mask))
        .map_err(to_py)
}

#[pyfunction]
fn dilate_mm(mask: &PyMask, radius_mm: f64) -> PyResult<PyMask> {
    morphology::dilate_mm(&mask.0, radius_mm).map(PyMask).map_err(to_py)
}

/// Distance in mm from every voxel to the mask.
#[pyfunction]
fn edt(mask: &PyMask) -> PyResult<Vec<f64>> {
    morphology::edt(&mask.0).map(|d| d.values().to_vec()).map_err(to_py)
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    radiomics::feature_names()
}

#[pyfunction]
#[pyo3(signature = (volume, mask, bin_width = 25.0))]
fn extract(volume: &PyVolume, mask: &PyMask, bin_width: f64) -> PyResult<Vec<(&'static str, f64)>> {
    let spec = FeatureSpec {
        bin_width,
        ..FeatureSpec::default()
    };
    radiomics::extract(&volume.0, &mask.0, &spec)
        .map(|f| f.pairs())
        .map_err(to_py)
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    evaluation::auc(&scores, &labels).map_err(to_py)
}

/// `(thresholds, fpr, tpr)`.
#[pyfunction]
fn roc_curve(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let c = evaluation::roc_curve(&scores, &labels).map_err(to_py)?;
    Ok((c.thresholds, c.fpr, c.tpr))
}

fn auc_dict<'py>(py: Python<'py>, a: &AucResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("auc", a.auc)?;
    d.set_item("ci_low", a.ci_low)?;
    d.set_item("ci_high", a.ci_high)?;
    d.set_item("n_pos", a.n_pos)?;
    d.set_item("n_neg", a.n_neg)?;
    d.set_item("n_boot", a.n_boot)?;
    d.set_item("seed", a.seed)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (scores, labels, n_boot = 2000, level = 0.95, seed = 7))]
fn bootstrap_ci<'py>(
    py: Python<'py>,
    scores: Vec<f64>,
    labels: Vec<u8>,
    n_boot: usize,
    level: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let a = py
        .detach(|| evaluation::bootstrap_ci(&scores, &labels, n_boot, level, seed))
        .map_err(to_py)?;
    auc_dict(py, &a)
}

/// Generates a phantom cohort and returns its manifest rows as dicts.
#[pyfunction]
#[pyo3(signature = (out_dir, n_cases = None, seed = None))]
fn generate_cohort<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    n_cases: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut spec = PhantomSpec::default();
    if let Some(n) = n_cases {
        spec.n_cases = n;
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    let recs = py.detach(|| phantom::generate_cohort(&spec, &out_dir)).map_err(to_py)?;
    recs.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("case_id", &r.case_id)?;
            d.set_item("image_path", &r.image_path)?;
            d.set_item("bbox", (r.bbox.min, r.bbox.max))?;
            d.set_item("label", r.label)?;
            d.set_item("split", r.split.as_str())?;
            Ok(d)
        })
        .collect()
}

#[pyclass(name = "Model", frozen)]
pub struct PyModel(pub TrainedPipeline);

#[pymethods]
impl PyModel {
    /// Fits standardization plus a classifier ("logistic", "forest" or "knn").
    #[staticmethod]
    #[pyo3(signature = (kind, feature_names, x, y, seed = 7))]
    fn fit(kind: &str, feature_names: Vec<String>, x: Vec<Vec<f64>>, y: Vec<u8>, seed: u64) -> PyResult<Self> {
        let k: ClassifierKind = parse(kind)?;
        TrainedPipeline::fit(k, &feature_names, &x, &y, &ModelParams::default(), seed)
            .map(PyModel)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        TrainedPipeline::from_json(text).map(PyModel).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.classifier.kind().as_str()
    }

    fn predict_proba(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        self.0.predict_proba(&x).map_err(to_py)
    }

    /// Ranked `(feature, score)` pairs; k-NN raises ValueError.
    fn feature_importance(&self) -> PyResult<Vec<(String, f64)>> {
        self.0.feature_importance().map_err(to_py)
    }
}

fn eval_rows<'py>(py: Python<'py>, rows: &[EvalRow]) -> PyResult<Vec<Bound<'py, PyDict>>> {
    rows.iter()
        .map(|r| {
            let d = auc_dict(py, &r.result)?;
            d.set_item("model", &r.model)?;
            d.set_item("mask_variant", &r.mask_variant)?;
            d.set_item("split", r.split.as_str())?;
            Ok(d)
        })
        .collect()
}

fn experiment(config_path: PathBuf) -> PyResult<Experiment> {
    let c = ExperimentConfig::load(&config_path).map_err(to_py)?;
    Experiment::new(c).map_err(to_py)
}

/// Runs the segmentation x classifier grid; returns the validation rows.
#[pyfunction]
fn run_grid<'py>(py: Python<'py>, config_path: PathBuf) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let exp = experiment(config_path)?;
    let g = py.detach(|| harness::run_grid(&exp)).map_err(to_py)?;
    eval_rows(py, &g.cells)
}

/// Runs the expansion sweep; `method=None` uses ground-truth masks.
#[pyfunction]
#[pyo3(signature = (config_path, method = Some("knn"), classifier = "logistic"))]
fn run_sweep<'py>(
    py: Python<'py>,
    config_path: PathBuf,
    method: Option<&str>,
    classifier: &str,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let m = method.map(parse::<SegmentationMethod>).transpose()?;
    let k: ClassifierKind = parse(classifier)?;
    let exp = experiment(config_path)?;
    let s = py.detach(|| harness::run_expansion_sweep(&exp, m, k)).map_err(to_py)?;
    eval_rows(py, &s.rows)
}

#[pymodule]
pub fn peritumor_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PeritumorError", m.py().get_type::<PeritumorError>())?;
    m.add_class::<PyVolume>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(read_nifti, m)?)?;
    m.add_function(wrap_pyfunction!(read_mask, m)?)?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(dilate_mm, m)?)?;
    m.add_function(wrap_pyfunction!(edt, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(generate_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(run_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
