//! Voxel grids: CT intensity volumes, binary masks and bounding boxes.
//!
//! All grids are stored x-fastest: `index = x + nx * (y + ny * z)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Dims = [usize; 3];
pub type Spacing = [f64; 3];

/// Storage type of the file a volume was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceDtype {
    Uint8,
    Int16,
    Int32,
    Float32,
    Float64,
}

#[inline]
pub fn linear_index(dims: Dims, x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

#[inline]
pub fn coords(dims: Dims, index: usize) -> [usize; 3] {
    let x = index % dims[0];
    let y = (index / dims[0]) % dims[1];
    let z = index / (dims[0] * dims[1]);
    [x, y, z]
}

fn voxel_count(dims: Dims) -> usize {
    dims[0] * dims[1] * dims[2]
}

fn check_geometry(dims: Dims, spacing: Spacing) -> Result<()> {
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::DimensionMismatch(format!(
            "dims must be positive, got {dims:?}"
        )));
    }
    if spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "spacing must be positive and finite, got {spacing:?}"
        )));
    }
    Ok(())
}

/// A 3D scalar grid of Hounsfield units with physical voxel spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    dims: Dims,
    spacing: Spacing,
    origin: [f64; 3],
    data: Vec<f64>,
    dtype: SourceDtype,
}

impl Volume3D {
    pub fn new(dims: Dims, spacing: Spacing, data: Vec<f64>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        if data.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} values for dims {dims:?}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("volume holds non-finite values".into()));
        }
        Ok(Volume3D {
            dims,
            spacing,
            origin: [0.0; 3],
            data,
            dtype: SourceDtype::Float64,
        })
    }

    pub fn filled(dims: Dims, spacing: Spacing, value: f64) -> Result<Self> {
        Self::new(dims, spacing, vec![value; voxel_count(dims)])
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn with_dtype(mut self, dtype: SourceDtype) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn dtype(&self) -> SourceDtype {
        self.dtype
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[linear_index(self.dims, x, y, z)]
    }

    /// Returns a copy with `f` applied to every voxel.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Ok(Volume3D {
            data,
            ..self.clone()
        }
        .validated()?)
    }

    fn validated(self) -> Result<Self> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("volume holds non-finite values".into()));
        }
        Ok(self)
    }

    pub fn congruent(&self, mask: &Mask3D) -> Result<()> {
        if self.dims != mask.dims() {
            return Err(Error::DimensionMismatch(format!(
                "volume dims {:?} vs mask dims {:?}",
                self.dims,
                mask.dims()
            )));
        }
        Ok(())
    }

    /// Clamps every value into `[lo, hi]`.
    pub fn clip_hu(&self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::InvalidRange(format!("clip window [{lo}, {hi}]")));
        }
        self.map(|v| v.clamp(lo, hi))
    }

    /// Extracts the sub-volume around `bbox`, grown by `ceil(margin_mm / spacing)`
    /// voxels per side and clamped to the grid. Returns the sub-volume and its
    /// min corner in parent indices.
    pub fn crop(&self, bbox: &BoundingBox, margin_mm: f64) -> Result<(Volume3D, [usize; 3])> {
        let region = bbox.expanded(self.dims, self.spacing, margin_mm)?;
        let sub_dims = region.extent();
        let mut data = Vec::with_capacity(voxel_count(sub_dims));
        for z in region.min[2]..region.max[2] {
            for y in region.min[1]..region.max[1] {
                let start = linear_index(self.dims, region.min[0], y, z);
                data.extend_from_slice(&self.data[start..start + sub_dims[0]]);
            }
        }
        let origin = [
            self.origin[0] + region.min[0] as f64 * self.spacing[0],
            self.origin[1] + region.min[1] as f64 * self.spacing[1],
            self.origin[2] + region.min[2] as f64 * self.spacing[2],
        ];
        let sub = Volume3D {
            dims: sub_dims,
            spacing: self.spacing,
            origin,
            data,
            dtype: self.dtype,
        };
        Ok((sub, region.min))
    }

    /// Values at the set voxels of `mask`, in index order.
    pub fn masked_values(&self, mask: &Mask3D) -> Result<Vec<f64>> {
        self.congruent(mask)?;
        Ok(mask
            .bits()
            .iter()
            .zip(&self.data)
            .filter_map(|(&b, &v)| b.then_some(v))
            .collect())
    }
}

/// A boolean grid congruent with a [`Volume3D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D {
    dims: Dims,
    spacing: Spacing,
    bits: Vec<bool>,
}

impl Mask3D {
    pub fn new(dims: Dims, spacing: Spacing, bits: Vec<bool>) -> Result<Self> {
        check_geometry(dims, spacing)?;
        if bits.len() != voxel_count(dims) {
            return Err(Error::DimensionMismatch(format!(
                "{} bits for dims {dims:?}",
                bits.len()
            )));
        }
        Ok(Mask3D {
            dims,
            spacing,
            bits,
        })
    }

    pub fn empty(dims: Dims, spacing: Spacing) -> Result<Self> {
        Self::new(dims, spacing, vec![false; voxel_count(dims)])
    }

    pub fn from_fn(
        dims: Dims,
        spacing: Spacing,
        f: impl Fn(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut bits = Vec::with_capacity(voxel_count(dims));
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    bits.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, spacing, bits)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[linear_index(self.dims, x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = linear_index(self.dims, x, y, z);
        self.bits[i] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    fn same_grid(&self, other: &Mask3D) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!(
                "mask dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    pub fn union(&self, other: &Mask3D) -> Result<Mask3D> {
        self.same_grid(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Mask3D::new(self.dims, self.spacing, bits)
    }

    pub fn intersection(&self, other: &Mask3D) -> Result<Mask3D> {
        self.same_grid(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect();
        Mask3D::new(self.dims, self.spacing, bits)
    }

    pub fn difference(&self, other: &Mask3D) -> Result<Mask3D> {
        self.same_grid(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Mask3D::new(self.dims, self.spacing, bits)
    }

    pub fn is_subset_of(&self, other: &Mask3D) -> bool {
        self.dims == other.dims && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Tight bounding box of the set voxels, `None` when empty.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let mut min = [usize::MAX; 3];
        let mut max = [0usize; 3];
        let mut any = false;
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            any = true;
            let c = coords(self.dims, i);
            for a in 0..3 {
                min[a] = min[a].min(c[a]);
                max[a] = max[a].max(c[a] + 1);
            }
        }
        any.then_some(BoundingBox { min, max })
    }

    /// Places `self` (a crop-frame mask) into a zeroed grid of `dims` at `offset`.
    pub fn embed(&self, dims: Dims, offset: [usize; 3]) -> Result<Mask3D> {
        for a in 0..3 {
            if offset[a] + self.dims[a] > dims[a] {
                return Err(Error::DimensionMismatch(format!(
                    "cannot embed {:?} at {offset:?} into {dims:?}",
                    self.dims
                )));
            }
        }
        let mut out = Mask3D::empty(dims, self.spacing)?;
        for z in 0..self.dims[2] {
            for y in 0..self.dims[1] {
                for x in 0..self.dims[0] {
                    if self.get(x, y, z) {
                        out.set(x + offset[0], y + offset[1], z + offset[2], true);
                    }
                }
            }
        }
        Ok(out)
    }

    /// The sub-mask covering `region` (inclusive min, exclusive max).
    pub fn crop_to(&self, region: &BoundingBox) -> Result<Mask3D> {
        region.validate(self.dims)?;
        let sub_dims = region.extent();
        let mut bits = Vec::with_capacity(voxel_count(sub_dims));
        for z in region.min[2]..region.max[2] {
            for y in region.min[1]..region.max[1] {
                let start = linear_index(self.dims, region.min[0], y, z);
                bits.extend_from_slice(&self.bits[start..start + sub_dims[0]]);
            }
        }
        Mask3D::new(sub_dims, self.spacing, bits)
    }
}

/// Voxel-index box with inclusive `min` and exclusive `max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn new(min: [usize; 3], max: [usize; 3]) -> Result<Self> {
        if (0..3).any(|a| min[a] >= max[a]) {
            return Err(Error::InvalidRange(format!(
                "bounding box min {min:?} must be below max {max:?}"
            )));
        }
        Ok(BoundingBox { min, max })
    }

    pub fn whole(dims: Dims) -> Self {
        BoundingBox {
            min: [0; 3],
            max: dims,
        }
    }

    pub fn validate(&self, dims: Dims) -> Result<()> {
        for a in 0..3 {
            if self.min[a] >= self.max[a] || self.max[a] > dims[a] {
                return Err(Error::InvalidRange(format!(
                    "bounding box {:?}-{:?} outside volume {dims:?}",
                    self.min, self.max
                )));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Dims {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    /// Center voxel (rounded down).
    pub fn center(&self) -> [usize; 3] {
        [
            (self.min[0] + self.max[0] - 1) / 2,
            (self.min[1] + self.max[1] - 1) / 2,
            (self.min[2] + self.max[2] - 1) / 2,
        ]
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    /// Grows the box by `ceil(margin_mm / spacing)` voxels per side, clamped to `dims`.
    pub fn expanded(&self, dims: Dims, spacing: Spacing, margin_mm: f64) -> Result<BoundingBox> {
        self.validate(dims)?;
        if !(margin_mm >= 0.0) {
            return Err(Error::InvalidRange(format!("crop margin {margin_mm} mm")));
        }
        let mut min = [0; 3];
        let mut max = [0; 3];
        for a in 0..3 {
            let pad = (margin_mm / spacing[a]).ceil() as usize;
            if self.max[a] + pad > dims[a] || pad > self.min[a] {
                log::debug!("crop margin clamped at volume edge on axis {a}");
            }
            min[a] = self.min[a].saturating_sub(pad);
            max[a] = (self.max[a] + pad).min(dims[a]);
        }
        Ok(BoundingBox { min, max })
    }
}
