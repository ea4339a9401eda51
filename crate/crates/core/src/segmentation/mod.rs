//! Nodule delineation inside an annotated bounding box.
//!
//! Four interchangeable methods (Otsu, fuzzy c-means, Gaussian mixture, seeded
//! k-NN) produce a raw foreground mask on the HU-clipped crop; a shared
//! post-processing step keeps the component at the box center and fills
//! interior holes. Nothing here draws random numbers.

pub mod fcm;
pub mod gmm;
pub mod knn;
pub mod otsu;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{connected_components, fill_holes, Connectivity};
use crate::volume::{coords, BoundingBox, Mask3D, Volume3D};

pub const HU_CLIP_LOW: f64 = -1000.0;
pub const HU_CLIP_HIGH: f64 = 400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentationMethod {
    Otsu,
    Fcm,
    Gmm,
    Knn,
}

impl SegmentationMethod {
    pub const ALL: [SegmentationMethod; 4] = [
        SegmentationMethod::Otsu,
        SegmentationMethod::Fcm,
        SegmentationMethod::Gmm,
        SegmentationMethod::Knn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentationMethod::Otsu => "otsu",
            SegmentationMethod::Fcm => "fcm",
            SegmentationMethod::Gmm => "gmm",
            SegmentationMethod::Knn => "knn",
        }
    }
}

impl fmt::Display for SegmentationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "otsu" => Ok(SegmentationMethod::Otsu),
            "fcm" => Ok(SegmentationMethod::Fcm),
            "gmm" => Ok(SegmentationMethod::Gmm),
            "knn" => Ok(SegmentationMethod::Knn),
            other => Err(Error::InvalidParameter(format!(
                "unknown segmentation method {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationParams {
    pub fcm_fuzzifier: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
    pub gmm_tol: f64,
    pub gmm_max_iter: usize,
    /// Variance floor as a fraction of the ROI variance.
    pub gmm_var_floor: f64,
    pub knn_k: usize,
    pub knn_seed_quantiles: (f64, f64),
    /// Weight per mm applied to voxel coordinates in the k-NN feature space.
    pub knn_coord_weight: f64,
    pub otsu_bins: usize,
    /// Padding around the annotated box before segmenting.
    pub crop_margin_mm: f64,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        SegmentationParams {
            fcm_fuzzifier: 2.0,
            fcm_tol: 1e-5,
            fcm_max_iter: 300,
            gmm_tol: 1e-6,
            gmm_max_iter: 500,
            gmm_var_floor: 1e-6,
            knn_k: 7,
            knn_seed_quantiles: (0.10, 0.90),
            knn_coord_weight: 0.05,
            otsu_bins: 256,
            crop_margin_mm: 2.0,
        }
    }
}

impl SegmentationParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.fcm_fuzzifier > 1.0) {
            return bad("fcm_fuzzifier must exceed 1");
        }
        if !(self.fcm_tol > 0.0 && self.gmm_tol > 0.0 && self.gmm_var_floor > 0.0) {
            return bad("tolerances and variance floor must be positive");
        }
        if self.knn_k == 0 || self.knn_k % 2 == 0 {
            return bad("knn_k must be odd and >= 1");
        }
        let (lo, hi) = self.knn_seed_quantiles;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
            return bad("knn_seed_quantiles must satisfy 0 <= low < high <= 1");
        }
        if !(self.knn_coord_weight >= 0.0) {
            return bad("knn_coord_weight must be >= 0");
        }
        if self.otsu_bins < 2 {
            return bad("otsu_bins must be >= 2");
        }
        if !(self.crop_margin_mm >= 0.0) {
            return bad("crop_margin_mm must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SegmentationResult {
    /// Mask in the full-volume frame.
    pub mask: Mask3D,
    pub method: SegmentationMethod,
    pub iterations: usize,
    pub converged: bool,
    /// Otsu: threshold. FCM/GMM: the two centroids/means. KNN: seed thresholds.
    pub diagnostics: Vec<f64>,
}

/// Raw method output on a crop, before post-processing.
#[derive(Debug, Clone)]
pub struct RawSegmentation {
    pub mask: Mask3D,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<f64>,
}

fn mask_from(roi: &Volume3D, labels: Vec<bool>) -> Result<Mask3D> {
    Mask3D::new(roi.dims(), roi.spacing(), labels)
}

pub fn segment_otsu(roi: &Volume3D, params: &SegmentationParams) -> Result<RawSegmentation> {
    let t = otsu::otsu_threshold(roi.data(), params.otsu_bins)?;
    let labels = roi
        .data()
        .iter()
        .map(|&v| t.is_foreground(v, params.otsu_bins))
        .collect();
    Ok(RawSegmentation {
        mask: mask_from(roi, labels)?,
        iterations: 1,
        converged: true,
        diagnostics: vec![t.value],
    })
}

pub fn segment_fcm(roi: &Volume3D, params: &SegmentationParams) -> Result<RawSegmentation> {
    let fit = fcm::fit_fcm(
        roi.data(),
        params.fcm_fuzzifier,
        params.fcm_tol,
        params.fcm_max_iter,
    )?;
    if !fit.converged {
        log::warn!("fcm stopped after {} iterations without converging", fit.iterations);
    }
    Ok(RawSegmentation {
        mask: mask_from(roi, fit.labels())?,
        iterations: fit.iterations,
        converged: fit.converged,
        diagnostics: fit.centroids.to_vec(),
    })
}

pub fn segment_gmm(roi: &Volume3D, params: &SegmentationParams) -> Result<RawSegmentation> {
    let fit = gmm::fit_gmm(
        roi.data(),
        params.gmm_tol,
        params.gmm_max_iter,
        params.gmm_var_floor,
    )?;
    if !fit.converged {
        log::warn!("gmm stopped after {} iterations without converging", fit.iterations);
    }
    Ok(RawSegmentation {
        mask: mask_from(roi, fit.labels(roi.data()))?,
        iterations: fit.iterations,
        converged: fit.converged,
        diagnostics: fit.means.to_vec(),
    })
}

pub fn segment_knn(roi: &Volume3D, params: &SegmentationParams) -> Result<RawSegmentation> {
    let out = knn::label_knn(
        roi,
        knn::KnnSegParams {
            k: params.knn_k,
            quantiles: params.knn_seed_quantiles,
            coord_weight: params.knn_coord_weight,
        },
    )?;
    Ok(RawSegmentation {
        mask: mask_from(roi, out.labels)?,
        iterations: 1,
        converged: true,
        diagnostics: vec![out.seed_thresholds.0, out.seed_thresholds.1],
    })
}

pub fn segment_roi(
    roi: &Volume3D,
    method: SegmentationMethod,
    params: &SegmentationParams,
) -> Result<RawSegmentation> {
    match method {
        SegmentationMethod::Otsu => segment_otsu(roi, params),
        SegmentationMethod::Fcm => segment_fcm(roi, params),
        SegmentationMethod::Gmm => segment_gmm(roi, params),
        SegmentationMethod::Knn => segment_knn(roi, params),
    }
}

/// Keeps the 26-connected component holding the box center (or the one whose
/// centroid lies nearest to it) and fills enclosed background.
pub fn postprocess(mask: &Mask3D, bbox: &BoundingBox) -> Result<Mask3D> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    bbox.validate(mask.dims())?;
    let comps = connected_components(mask, Connectivity::TwentySix);
    let center = bbox.center();
    let mut keep = comps.label_at(center);
    if keep == 0 {
        let sp = mask.spacing();
        let mut sums = vec![[0.0f64; 3]; comps.count()];
        for (i, &l) in comps.labels.iter().enumerate() {
            if l > 0 {
                let c = coords(mask.dims(), i);
                for a in 0..3 {
                    sums[l as usize - 1][a] += c[a] as f64;
                }
            }
        }
        let mut best = (f64::INFINITY, 0u32);
        for (k, s) in sums.iter().enumerate() {
            let size = comps.sizes[k] as f64;
            let d2: f64 = (0..3)
                .map(|a| {
                    let d = (s[a] / size - center[a] as f64) * sp[a];
                    d * d
                })
                .sum();
            if d2 < best.0 {
                best = (d2, k as u32 + 1);
            }
        }
        keep = best.1;
    }
    let component = comps.component_mask(keep, mask.spacing())?;
    fill_holes(&component)
}

/// Crop, clip, segment, post-process and re-embed into the volume frame.
pub fn segment(
    volume: &Volume3D,
    bbox: &BoundingBox,
    method: SegmentationMethod,
    params: &SegmentationParams,
) -> Result<SegmentationResult> {
    params.validate()?;
    let (crop, offset) = volume.crop(bbox, params.crop_margin_mm)?;
    let roi = crop.clip_hu(HU_CLIP_LOW, HU_CLIP_HIGH)?;
    let raw = segment_roi(&roi, method, params)?;
    let local_box = BoundingBox::new(
        [0, 1, 2].map(|a| bbox.min[a] - offset[a]),
        [0, 1, 2].map(|a| bbox.max[a] - offset[a]),
    )?;
    let cleaned = postprocess(&raw.mask, &local_box)?;
    let mask = cleaned.embed(volume.dims(), offset)?;
    Ok(SegmentationResult {
        mask,
        method,
        iterations: raw.iterations,
        converged: raw.converged,
        diagnostics: raw.diagnostics,
    })
}
