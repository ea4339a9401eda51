use crate::error::{Error, Result};
use crate::volume::{Dims, Mask3D, Spacing, Volume3D};

/// Fixed-bin-width gray levels over the masked voxels.
///
/// `levels` spans the whole grid; 0 marks voxels outside the mask and masked
/// voxels carry `floor((x - min_masked) / bin_width) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoi {
    pub dims: Dims,
    pub spacing: Spacing,
    pub levels: Vec<u32>,
    pub n_levels: u32,
    pub bin_width: f64,
    pub min_masked: f64,
}

impl DiscretizedRoi {
    /// Builds a level grid directly; 0 means outside the ROI.
    pub fn from_levels(dims: Dims, levels: Vec<u32>) -> Result<Self> {
        if levels.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::DimensionMismatch(format!(
                "{} levels for dims {dims:?}",
                levels.len()
            )));
        }
        let n_levels = levels.iter().copied().max().unwrap_or(0);
        if n_levels == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(DiscretizedRoi {
            dims,
            spacing: [1.0; 3],
            levels,
            n_levels,
            bin_width: 1.0,
            min_masked: 1.0,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.levels.iter().filter(|&&l| l > 0).count()
    }

    /// Level of each masked voxel in index order.
    pub fn masked_levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.levels.iter().copied().filter(|&l| l > 0)
    }
}

pub fn discretize(volume: &Volume3D, mask: &Mask3D, bin_width: f64) -> Result<DiscretizedRoi> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidParameter(format!("bin width {bin_width}")));
    }
    volume.congruent(mask)?;
    let min_masked = volume
        .data()
        .iter()
        .zip(mask.bits())
        .filter_map(|(&v, &b)| b.then_some(v))
        .fold(f64::INFINITY, f64::min);
    if !min_masked.is_finite() {
        return Err(Error::EmptyMask);
    }
    let levels: Vec<u32> = volume
        .data()
        .iter()
        .zip(mask.bits())
        .map(|(&v, &b)| {
            if b {
                ((v - min_masked) / bin_width).floor() as u32 + 1
            } else {
                0
            }
        })
        .collect();
    let n_levels = levels.iter().copied().max().unwrap_or(1);
    Ok(DiscretizedRoi {
        dims: volume.dims(),
        spacing: volume.spacing(),
        levels,
        n_levels,
        bin_width,
        min_masked,
    })
}
