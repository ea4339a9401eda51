//! Radiomics feature extraction over a masked region.
//!
//! The feature vector has a fixed canonical layout of 39 values: shape (7),
//! first-order intensity (16), GLCM (9) and GLRLM (7). Intensities are taken
//! from the volume as loaded, without HU clipping.

pub mod discretize;
pub mod firstorder;
pub mod shape;
pub mod texture;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

pub use discretize::{discretize, DiscretizedRoi};

pub const FEATURE_COUNT: usize = 39;

/// Canonical feature names in output order.
pub fn feature_names() -> Vec<&'static str> {
    shape::NAMES
        .iter()
        .chain(firstorder::NAMES.iter())
        .chain(texture::GLCM_NAMES.iter())
        .chain(texture::GLRLM_NAMES.iter())
        .copied()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSpec {
    /// Fixed bin width in HU for texture and entropy discretization.
    pub bin_width: f64,
    pub glcm_distance: usize,
    pub shape: bool,
    pub firstorder: bool,
    pub glcm: bool,
    pub glrlm: bool,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec {
            bin_width: 25.0,
            glcm_distance: 1,
            shape: true,
            firstorder: true,
            glcm: true,
            glrlm: true,
        }
    }
}

/// One case's features in canonical order. Disabled families hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Set when a family could not be computed and was zero-filled.
    pub warnings: Vec<String>,
}

impl FeatureVector {
    pub fn names(&self) -> Vec<&'static str> {
        feature_names()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn pairs(&self) -> Vec<(&'static str, f64)> {
        feature_names().into_iter().zip(self.values.iter().copied()).collect()
    }
}

pub fn extract(volume: &Volume3D, mask: &Mask3D, spec: &FeatureSpec) -> Result<FeatureVector> {
    if !(spec.bin_width > 0.0) || spec.glcm_distance == 0 {
        return Err(Error::InvalidParameter(
            "bin_width must be > 0 and glcm_distance >= 1".into(),
        ));
    }
    volume.congruent(mask)?;
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let droi = discretize(volume, mask, spec.bin_width)?;
    let mut values = Vec::with_capacity(FEATURE_COUNT);
    let mut warnings = Vec::new();

    if spec.shape {
        values.extend(shape::shape_features(mask)?);
    } else {
        values.extend([0.0; 7]);
    }
    if spec.firstorder {
        let masked = volume.masked_values(mask)?;
        values.extend(firstorder::firstorder_features(&masked, &droi)?);
    } else {
        values.extend([0.0; 16]);
    }
    if spec.glcm {
        match texture::glcm_features(&droi, spec.glcm_distance) {
            Ok(f) => values.extend(f),
            Err(Error::NoValidPairs) => {
                log::warn!("no co-occurring voxel pairs; glcm features set to 0");
                warnings.push("glcm: no valid voxel pairs, zero-filled".into());
                values.extend([0.0; 9]);
            }
            Err(e) => return Err(e),
        }
    } else {
        values.extend([0.0; 9]);
    }
    if spec.glrlm {
        values.extend(texture::glrlm_features(&droi)?);
    } else {
        values.extend([0.0; 7]);
    }
    debug_assert_eq!(values.len(), FEATURE_COUNT);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput(format!(
            "feature {} is not finite",
            feature_names()[i]
        )));
    }
    Ok(FeatureVector { values, warnings })
}
