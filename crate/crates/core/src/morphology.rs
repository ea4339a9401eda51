//! Exact Euclidean distance transform and millimetre-parameterized dilation.
//!
//! Distances are measured between voxel centers in physical units, so the
//! transform honours anisotropic spacing. The squared transform is separable;
//! each axis pass computes the lower envelope of parabolas, which is exact.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{linear_index, Dims, Mask3D, Spacing};

/// Inclusion slack for `distance <= radius` so integer radii are stable.
pub const RADIUS_EPSILON: f64 = 1e-9;

/// Per-voxel distance in mm to the nearest foreground voxel center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    dims: Dims,
    spacing: Spacing,
    values: Vec<f64>,
}

impl DistanceMap {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[linear_index(self.dims, x, y, z)]
    }

    /// Voxels within `r_mm` of the foreground (foreground included).
    pub fn within(&self, r_mm: f64) -> Result<Mask3D> {
        if !(r_mm >= 0.0) {
            return Err(Error::InvalidRange(format!("dilation radius {r_mm} mm")));
        }
        let limit = r_mm + RADIUS_EPSILON;
        Mask3D::new(
            self.dims,
            self.spacing,
            self.values.iter().map(|&d| d <= limit).collect(),
        )
    }
}

/// One-dimensional squared distance transform of `f` with sample spacing
/// `step`; infinite entries are not sites. Writes into `out`.
fn envelope_1d(f: &[f64], step: f64, sites: &mut Vec<usize>, bounds: &mut Vec<f64>, out: &mut [f64]) {
    let w = step * step;
    sites.clear();
    bounds.clear();
    for (q, &fq) in f.iter().enumerate() {
        if !fq.is_finite() {
            continue;
        }
        loop {
            let Some(&p) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let qf = q as f64;
            let pf = p as f64;
            let s = ((fq + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf));
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
                continue;
            }
            sites.push(q);
            bounds.push(s);
            break;
        }
    }
    if sites.is_empty() {
        out.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while k + 1 < sites.len() && bounds[k + 1] < qf {
            k += 1;
        }
        let p = sites[k];
        let d = qf - p as f64;
        *o = w * d * d + f[p];
    }
}

/// Squared distances (mm²) to the nearest set voxel; infinite when `mask` is empty.
fn squared_edt(mask: &Mask3D) -> Vec<f64> {
    let dims = mask.dims();
    let spacing = mask.spacing();
    let mut grid: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();
    let longest = *dims.iter().max().unwrap();
    let mut line = vec![0.0; longest];
    let mut result = vec![0.0; longest];
    let mut sites = Vec::with_capacity(longest);
    let mut bounds = Vec::with_capacity(longest);
    for axis in 0..3 {
        let n = dims[axis];
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[o2] {
            for i in 0..dims[o1] {
                let mut start = [0usize; 3];
                start[o1] = i;
                start[o2] = j;
                let base = linear_index(dims, start[0], start[1], start[2]);
                for t in 0..n {
                    line[t] = grid[base + t * stride];
                }
                envelope_1d(&line[..n], spacing[axis], &mut sites, &mut bounds, &mut result[..n]);
                for t in 0..n {
                    grid[base + t * stride] = result[t];
                }
            }
        }
    }
    grid
}

/// Exact Euclidean distance transform of `mask` under its own spacing.
pub fn edt(mask: &Mask3D) -> Result<DistanceMap> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let values = squared_edt(mask).into_iter().map(f64::sqrt).collect();
    Ok(DistanceMap {
        dims: mask.dims(),
        spacing: mask.spacing(),
        values,
    })
}

/// Grows `mask` by `r_mm` millimetres (center-to-center distance).
pub fn dilate_mm(mask: &Mask3D, r_mm: f64) -> Result<Mask3D> {
    if !(r_mm >= 0.0) {
        return Err(Error::InvalidRange(format!("dilation radius {r_mm} mm")));
    }
    let out = edt(mask)?.within(r_mm)?;
    debug_assert!(mask.is_subset_of(&out));
    Ok(out)
}

/// Dilations at several radii sharing one distance transform.
pub fn dilate_many(mask: &Mask3D, radii_mm: &[f64]) -> Result<Vec<Mask3D>> {
    let dist = edt(mask)?;
    radii_mm.iter().map(|&r| dist.within(r)).collect()
}

/// The band `dilate(r_outer) \ dilate(r_inner)`.
pub fn shell_mm(mask: &Mask3D, r_inner: f64, r_outer: f64) -> Result<Mask3D> {
    if !(r_inner >= 0.0 && r_inner < r_outer) {
        return Err(Error::InvalidRange(format!(
            "shell [{r_inner}, {r_outer}] mm needs 0 <= inner < outer"
        )));
    }
    let dist = edt(mask)?;
    dist.within(r_outer)?.difference(&dist.within(r_inner)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Result<Self> {
        match n {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 6 or 26, got {other}"
            ))),
        }
    }

    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[inline]
pub(crate) fn step(dims: Dims, p: [usize; 3], d: [isize; 3]) -> Option<[usize; 3]> {
    let mut q = [0usize; 3];
    for a in 0..3 {
        let v = p[a] as isize + d[a];
        if v < 0 || v >= dims[a] as isize {
            return None;
        }
        q[a] = v as usize;
    }
    Some(q)
}

/// Component labels (0 = background, then 1..=C by first voxel in index order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub dims: Dims,
    pub labels: Vec<u32>,
    /// `sizes[c - 1]` is the voxel count of label `c`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    pub fn label_at(&self, p: [usize; 3]) -> u32 {
        self.labels[linear_index(self.dims, p[0], p[1], p[2])]
    }

    /// Mask of one component.
    pub fn component_mask(&self, label: u32, spacing: Spacing) -> Result<Mask3D> {
        Mask3D::new(self.dims, spacing, self.labels.iter().map(|&l| l == label).collect())
    }
}

pub fn connected_components(mask: &Mask3D, connectivity: Connectivity) -> Components {
    let dims = mask.dims();
    let offsets = connectivity.offsets();
    let bits = mask.bits();
    let mut labels = vec![0u32; bits.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let p = crate::volume::coords(dims, i);
            for &d in &offsets {
                if let Some(q) = step(dims, p, d) {
                    let j = linear_index(dims, q[0], q[1], q[2]);
                    if bits[j] && labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    Components {
        dims,
        labels,
        sizes,
    }
}

/// Sets every background voxel that cannot reach the grid border through
/// 6-connected background.
pub fn fill_holes(mask: &Mask3D) -> Result<Mask3D> {
    let dims = mask.dims();
    let bits = mask.bits();
    let mut outside = vec![false; bits.len()];
    let mut queue = VecDeque::new();
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let border = x == 0
                    || y == 0
                    || z == 0
                    || x + 1 == dims[0]
                    || y + 1 == dims[1]
                    || z + 1 == dims[2];
                let i = linear_index(dims, x, y, z);
                if border && !bits[i] {
                    outside[i] = true;
                    queue.push_back([x, y, z]);
                }
            }
        }
    }
    let offsets = Connectivity::Six.offsets();
    while let Some(p) = queue.pop_front() {
        for &d in &offsets {
            if let Some(q) = step(dims, p, d) {
                let j = linear_index(dims, q[0], q[1], q[2]);
                if !bits[j] && !outside[j] {
                    outside[j] = true;
                    queue.push_back(q);
                }
            }
        }
    }
    Mask3D::new(dims, mask.spacing(), outside.into_iter().map(|o| !o).collect())
}
