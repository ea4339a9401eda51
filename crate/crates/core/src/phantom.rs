//! Synthetic CT cohort with ground-truth nodule masks.
//!
//! Each case is a noisy lung-density background holding one ellipsoidal
//! nodule with a randomly perturbed boundary. Malignant nodules get a rougher
//! boundary and a textured density increase in a shell around the nodule;
//! outside the shell the two classes are drawn from the same distribution.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{write_manifest, CaseRecord, Split};
use crate::morphology::{connected_components, fill_holes, shell_mm, Connectivity};
use crate::nifti::{write_mask_nifti, write_volume_nifti, WriteOptions};
use crate::seeding::derived_rng;
use crate::volume::{coords, linear_index, Dims, Mask3D, SourceDtype, Spacing, Volume3D};

pub const SPEC_FILE: &str = "phantom.json";
pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomSpec {
    pub n_cases: usize,
    pub malignant_fraction: f64,
    pub dims: Dims,
    pub spacing: Spacing,
    pub background_mean: f64,
    pub background_sd: f64,
    pub nodule_mean: f64,
    pub nodule_sd: f64,
    pub radius_range_mm: (f64, f64),
    /// Per-axis semi-axis scale drawn from `1 ± elongation`.
    pub elongation: f64,
    /// Maximum offset of the nodule center from the volume center, in voxels.
    pub center_jitter: f64,
    pub shell_range_mm: (f64, f64),
    pub shell_offset: f64,
    /// Standard deviation of the shell texture relative to `shell_offset`.
    pub shell_texture_rel_sd: f64,
    pub shell_correlation_mm: f64,
    pub irregularity_malignant_mm: f64,
    pub irregularity_benign_mm: f64,
    pub irregularity_correlation_mm: f64,
    pub split_fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            n_cases: 240,
            malignant_fraction: 0.30,
            dims: [64, 64, 64],
            spacing: [1.0, 1.0, 1.0],
            background_mean: -850.0,
            background_sd: 40.0,
            nodule_mean: 20.0,
            nodule_sd: 30.0,
            radius_range_mm: (4.0, 9.0),
            elongation: 0.3,
            center_jitter: 3.0,
            shell_range_mm: (2.0, 8.0),
            shell_offset: 60.0,
            shell_texture_rel_sd: 0.5,
            shell_correlation_mm: 2.0,
            irregularity_malignant_mm: 1.5,
            irregularity_benign_mm: 0.3,
            irregularity_correlation_mm: 6.0,
            split_fractions: (0.7, 0.2, 0.1),
            seed: 7,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_cases < 2 {
            return bad(format!("n_cases must be >= 2, got {}", self.n_cases));
        }
        if !(self.malignant_fraction > 0.0 && self.malignant_fraction < 1.0) {
            return bad(format!("malignant_fraction {} outside (0, 1)", self.malignant_fraction));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0)) {
            return bad("spacing must be positive".into());
        }
        let sds = [
            self.background_sd,
            self.nodule_sd,
            self.shell_correlation_mm,
            self.irregularity_correlation_mm,
        ];
        if sds.iter().any(|&s| !(s > 0.0)) {
            return bad("all standard deviations and correlation lengths must be positive".into());
        }
        let (r0, r1) = self.radius_range_mm;
        if !(r0 > 0.0 && r0 <= r1) {
            return bad(format!("radius range {r0}..{r1}"));
        }
        let (s0, s1) = self.shell_range_mm;
        if !(s0 >= 0.0 && s0 < s1) {
            return bad(format!("shell range {s0}..{s1}"));
        }
        let (a, b, c) = self.split_fractions;
        if a <= 0.0 || b < 0.0 || c < 0.0 || ((a + b + c) - 1.0).abs() > 1e-9 {
            return bad("split fractions must be non-negative and sum to 1".into());
        }
        if !(0.0..1.0).contains(&self.elongation) || self.center_jitter < 0.0 {
            return bad("elongation must be in [0, 1) and center_jitter >= 0".into());
        }
        // nodule plus shell must fit with room to spare
        let reach = self.center_jitter
            + r1 * (1.0 + self.elongation)
            + self.irregularity_malignant_mm.max(self.irregularity_benign_mm)
            + s1;
        for a in 0..3 {
            let half = (self.dims[a] as f64 - 1.0) / 2.0 * self.spacing[a];
            if reach >= half {
                return bad(format!("nodule and shell ({reach:.1} mm) do not fit axis {a}"));
            }
        }
        Ok(())
    }

    pub fn n_malignant(&self) -> usize {
        (self.n_cases as f64 * self.malignant_fraction).round() as usize
    }
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

pub fn image_rel_path(id: &str) -> String {
    format!("images/{id}.nii")
}

pub fn mask_rel_path(id: &str) -> String {
    format!("masks/{id}_gt.nii")
}

/// Class labels and splits per case index. Splits are stratified by class.
pub fn assign_labels_and_splits(spec: &PhantomSpec) -> Vec<(u8, Split)> {
    let n = spec.n_cases;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived_rng(spec.seed, "phantom.labels", 0));
    let mut labels = vec![0u8; n];
    for &i in &order[..spec.n_malignant()] {
        labels[i] = 1;
    }
    let mut out = vec![(0u8, Split::Train); n];
    for class in [0u8, 1] {
        let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut derived_rng(spec.seed, "phantom.split", class as u64));
        let m = members.len() as f64;
        let n_train = (m * spec.split_fractions.0).round() as usize;
        let n_val = ((m * spec.split_fractions.1).round() as usize).min(members.len() - n_train);
        for (k, &i) in members.iter().enumerate() {
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            out[i] = (class, split);
        }
    }
    out
}

fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    let r = (3.0 * sigma_vox).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma_vox * sigma_vox)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// White noise smoothed separably with a Gaussian of standard deviation
/// `corr_mm`, rescaled to zero mean and unit variance.
pub fn smooth_noise<R: Rng>(rng: &mut R, dims: Dims, spacing: Spacing, corr_mm: f64) -> Vec<f64> {
    let n = dims[0] * dims[1] * dims[2];
    let mut field: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let stride = [1, dims[0], dims[0] * dims[1]];
    let mut line = Vec::new();
    for axis in 0..3 {
        let k = gaussian_kernel(corr_mm / spacing[axis]);
        let r = (k.len() / 2) as isize;
        let len = dims[axis];
        let st = stride[axis];
        for start in 0..n {
            if (start / st) % len != 0 {
                continue;
            }
            line.clear();
            line.extend((0..len).map(|i| field[start + i * st]));
            for i in 0..len {
                let mut acc = 0.0;
                for (j, w) in k.iter().enumerate() {
                    // mirror at the edges
                    let mut c = i as isize + j as isize - r;
                    if c < 0 {
                        c = -c - 1;
                    }
                    if c >= len as isize {
                        c = 2 * len as isize - c - 1;
                    }
                    acc += w * line[c.clamp(0, len as isize - 1) as usize];
                }
                field[start + i * st] = acc;
            }
        }
    }
    let mean = field.iter().sum::<f64>() / n as f64;
    let sd = (field.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    field.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    field
}

/// Image and ground-truth mask for one case.
pub fn generate_case(spec: &PhantomSpec, index: usize, label: u8) -> Result<(Volume3D, Mask3D)> {
    let dims = spec.dims;
    let sp = spec.spacing;
    let mut rng = derived_rng(spec.seed, "phantom.case", index as u64);

    let radius = rng.random_range(spec.radius_range_mm.0..=spec.radius_range_mm.1);
    let semi: [f64; 3] =
        std::array::from_fn(|_| radius * (1.0 + spec.elongation * rng.random_range(-1.0..=1.0)));
    let center: [f64; 3] = std::array::from_fn(|a| {
        (dims[a] as f64 - 1.0) / 2.0 + spec.center_jitter * rng.random_range(-1.0..=1.0)
    });
    let amplitude = if label == 1 {
        spec.irregularity_malignant_mm
    } else {
        spec.irregularity_benign_mm
    };
    let rough = smooth_noise(&mut rng, dims, sp, spec.irregularity_correlation_mm);

    let n = dims[0] * dims[1] * dims[2];
    let mut inside = vec![false; n];
    for (i, b) in inside.iter_mut().enumerate() {
        let p = coords(dims, i);
        let rho = (0..3)
            .map(|a| ((p[a] as f64 - center[a]) * sp[a] / semi[a]).powi(2))
            .sum::<f64>()
            .sqrt();
        *b = (rho - 1.0) * radius <= amplitude * rough[i];
    }
    let c = center.map(|v| v.round() as usize);
    inside[linear_index(dims, c[0], c[1], c[2])] = true;
    let raw = Mask3D::new(dims, sp, inside)?;
    let comps = connected_components(&raw, Connectivity::TwentySix);
    let mask = fill_holes(&comps.component_mask(comps.label_at(c), sp)?)?;

    let mut data: Vec<f64> = (0..n)
        .map(|i| {
            let z: f64 = rng.sample(StandardNormal);
            if mask.bits()[i] {
                spec.nodule_mean + spec.nodule_sd * z
            } else {
                spec.background_mean + spec.background_sd * z
            }
        })
        .collect();
    // drawn for both classes so later streams stay aligned
    let texture = smooth_noise(&mut rng, dims, sp, spec.shell_correlation_mm);
    if label == 1 {
        let shell = shell_mm(&mask, spec.shell_range_mm.0, spec.shell_range_mm.1)?;
        for (i, v) in data.iter_mut().enumerate() {
            if shell.bits()[i] {
                *v += spec.shell_offset * (1.0 + spec.shell_texture_rel_sd * texture[i]);
            }
        }
    }
    // stored as int16, so round here to keep memory and disk identical
    data.iter_mut().for_each(|v| *v = v.round());
    let volume = Volume3D::new(dims, sp, data)?.with_dtype(SourceDtype::Int16);
    Ok((volume, mask))
}

/// Writes images, ground-truth masks, the manifest and the spec to `out_dir`.
pub fn generate_cohort(spec: &PhantomSpec, out_dir: &Path) -> Result<Vec<CaseRecord>> {
    spec.validate()?;
    for sub in ["images", "masks"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let assignment = assign_labels_and_splits(spec);
    let opts = WriteOptions {
        dtype: SourceDtype::Int16,
        ..WriteOptions::default()
    };
    let records: Vec<CaseRecord> = assignment
        .par_iter()
        .enumerate()
        .map(|(i, &(label, split))| {
            let id = case_id(i);
            let (volume, mask) = generate_case(spec, i, label).map_err(|e| e.in_case(&id))?;
            write_volume_nifti(&volume, out_dir.join(image_rel_path(&id)), opts)?;
            write_mask_nifti(&mask, out_dir.join(mask_rel_path(&id)))?;
            let bbox = mask.bounding_box().ok_or(Error::EmptyMask)?;
            Ok(CaseRecord {
                image_path: image_rel_path(&id),
                case_id: id,
                bbox,
                label,
                split,
            })
        })
        .collect::<Result<_>>()?;
    write_manifest(&records, out_dir.join(MANIFEST_FILE))?;
    let spec_path = out_dir.join(SPEC_FILE);
    let json = serde_json::to_string_pretty(spec)? + "\n";
    std::fs::write(&spec_path, json).map_err(|e| Error::io(&spec_path, e))?;
    log::info!(
        "wrote {} cases ({} malignant) to {}",
        records.len(),
        spec.n_malignant(),
        out_dir.display()
    );
    Ok(records)
}

/// Location of the ground-truth mask written next to `image_path`.
pub fn ground_truth_path(manifest_dir: &Path, record: &CaseRecord) -> PathBuf {
    manifest_dir.join(mask_rel_path(&record.case_id))
}

pub fn ground_truth_dice(truth: &Mask3D, predicted: &Mask3D) -> Result<f64> {
    if truth.dims() != predicted.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            truth.dims(),
            predicted.dims()
        )));
    }
    let a = truth.count();
    let b = predicted.count();
    if a + b == 0 {
        return Err(Error::BothEmpty);
    }
    let both = truth
        .bits()
        .iter()
        .zip(predicted.bits())
        .filter(|(x, y)| **x && **y)
        .count();
    Ok(2.0 * both as f64 / (a + b) as f64)
}
