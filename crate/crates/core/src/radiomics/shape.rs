//! Voxel-based shape descriptors.
//!
//! Surface area counts exposed voxel faces rather than a marching-cubes mesh,
//! so sphericity is lower than mesh-based values for the same object.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::morphology::step;
use crate::volume::{coords, linear_index, Mask3D};

pub const NAMES: [&str; 7] = [
    "shape.volume_mm3",
    "shape.surface_area_mm2",
    "shape.surface_volume_ratio",
    "shape.sphericity",
    "shape.max_3d_diameter",
    "shape.elongation",
    "shape.flatness",
];

const FACE_DIRS: [[isize; 3]; 6] = [
    [1, 0, 0],
    [-1, 0, 0],
    [0, 1, 0],
    [0, -1, 0],
    [0, 0, 1],
    [0, 0, -1],
];

/// Surface area (mm²) from exposed faces, and the indices of surface voxels.
pub fn exposed_faces(mask: &Mask3D) -> (f64, Vec<usize>) {
    let dims = mask.dims();
    let sp = mask.spacing();
    let face_area = [sp[1] * sp[2], sp[0] * sp[2], sp[0] * sp[1]];
    let bits = mask.bits();
    let mut area = 0.0;
    let mut surface = Vec::new();
    for (i, _) in bits.iter().enumerate().filter(|(_, &b)| b) {
        let p = coords(dims, i);
        let mut exposed = 0usize;
        for d in FACE_DIRS {
            let open = match step(dims, p, d) {
                Some(q) => !bits[linear_index(dims, q[0], q[1], q[2])],
                None => true,
            };
            if open {
                let axis = d.iter().position(|&c| c != 0).unwrap();
                area += face_area[axis];
                exposed += 1;
            }
        }
        if exposed > 0 {
            surface.push(i);
        }
    }
    (area, surface)
}

/// Set voxels that are the first or last set voxel on their x-, y- and
/// z-lines. Every convex-hull vertex of the voxel centers is among them.
fn hull_candidates(mask: &Mask3D) -> Vec<[usize; 3]> {
    let dims = mask.dims();
    let bits = mask.bits();
    let mut extreme = vec![0u8; bits.len()];
    for axis in 0..3 {
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[o2] {
            for i in 0..dims[o1] {
                let mut first = None;
                let mut last = None;
                for t in 0..dims[axis] {
                    let mut p = [0usize; 3];
                    p[axis] = t;
                    p[o1] = i;
                    p[o2] = j;
                    let idx = linear_index(dims, p[0], p[1], p[2]);
                    if bits[idx] {
                        first.get_or_insert(idx);
                        last = Some(idx);
                    }
                }
                if let (Some(a), Some(b)) = (first, last) {
                    extreme[a] |= 1 << axis;
                    extreme[b] |= 1 << axis;
                }
            }
        }
    }
    extreme
        .iter()
        .enumerate()
        .filter(|(_, &e)| e == 0b111)
        .map(|(i, _)| coords(dims, i))
        .collect()
}

/// Largest center-to-center distance (mm) between two voxels of the mask.
pub fn max_diameter(mask: &Mask3D) -> f64 {
    let sp = mask.spacing();
    let pts: Vec<[f64; 3]> = hull_candidates(mask)
        .into_iter()
        .map(|c| [c[0] as f64 * sp[0], c[1] as f64 * sp[1], c[2] as f64 * sp[2]])
        .collect();
    let mut best = 0.0f64;
    for (k, a) in pts.iter().enumerate() {
        for b in &pts[k + 1..] {
            let d0 = a[0] - b[0];
            let d1 = a[1] - b[1];
            let d2 = a[2] - b[2];
            best = best.max(d0 * d0 + d1 * d1 + d2 * d2);
        }
    }
    best.sqrt()
}

/// Eigenvalues (descending) of the population covariance of voxel centers in mm.
pub fn principal_moments(mask: &Mask3D) -> [f64; 3] {
    let dims = mask.dims();
    let sp = mask.spacing();
    let pts: Vec<[f64; 3]> = mask
        .bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| {
            let c = coords(dims, i);
            [c[0] as f64 * sp[0], c[1] as f64 * sp[1], c[2] as f64 * sp[2]]
        })
        .collect();
    let n = pts.len() as f64;
    let mut mean = [0.0; 3];
    for p in &pts {
        for a in 0..3 {
            mean[a] += p[a] / n;
        }
    }
    let mut cov = Matrix3::<f64>::zeros();
    for p in &pts {
        for r in 0..3 {
            for c in 0..3 {
                cov[(r, c)] += (p[r] - mean[r]) * (p[c] - mean[c]) / n;
            }
        }
    }
    let mut ev: Vec<f64> = cov
        .symmetric_eigenvalues()
        .iter()
        .map(|&e| e.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    [ev[0], ev[1], ev[2]]
}

pub fn shape_features(mask: &Mask3D) -> Result<[f64; 7]> {
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let sp = mask.spacing();
    let volume = count as f64 * sp[0] * sp[1] * sp[2];
    let (area, _) = exposed_faces(mask);
    let sphericity = std::f64::consts::PI.cbrt() * (6.0 * volume).powf(2.0 / 3.0) / area;
    let lambda = principal_moments(mask);
    let (elongation, flatness) = if lambda[0] > 0.0 {
        ((lambda[1] / lambda[0]).sqrt(), (lambda[2] / lambda[0]).sqrt())
    } else {
        (1.0, 1.0)
    };
    Ok([
        volume,
        area,
        area / volume,
        sphericity,
        max_diameter(mask),
        elongation,
        flatness,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxel() {
        let m = Mask3D::from_fn([3, 3, 3], [1.0; 3], |x, y, z| (x, y, z) == (1, 1, 1)).unwrap();
        let f = shape_features(&m).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 6.0);
        let expected = std::f64::consts::PI.cbrt() * 6f64.powf(2.0 / 3.0) / 6.0;
        assert!((f[3] - expected).abs() < 1e-12);
        assert!((f[3] - 0.8060).abs() < 1e-4);
        assert_eq!(f[4], 0.0);
        assert_eq!((f[5], f[6]), (1.0, 1.0));
    }

    #[test]
    fn rod_of_four() {
        let m = Mask3D::from_fn([3, 3, 6], [1.0; 3], |x, y, z| x == 1 && y == 1 && (1..5).contains(&z))
            .unwrap();
        let f = shape_features(&m).unwrap();
        assert_eq!(f[0], 4.0);
        assert_eq!(f[1], 18.0);
        assert_eq!(f[4], 3.0);
        assert_eq!(f[5], 0.0);
    }

    #[test]
    fn cube_is_isotropic() {
        let m = Mask3D::from_fn([4, 4, 4], [1.0; 3], |x, y, z| {
            (1..3).contains(&x) && (1..3).contains(&y) && (1..3).contains(&z)
        })
        .unwrap();
        let f = shape_features(&m).unwrap();
        assert!((f[5] - 1.0).abs() < 1e-12);
        assert!((f[6] - 1.0).abs() < 1e-12);
        assert!((f[4] - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(f[1], 24.0);
    }

    #[test]
    fn anisotropic_faces_and_volume() {
        let m = Mask3D::from_fn([3, 3, 3], [0.5, 1.0, 2.0], |x, y, z| (x, y, z) == (1, 1, 1)).unwrap();
        let f = shape_features(&m).unwrap();
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 2.0 * (2.0 + 1.0 + 0.5));
    }

    #[test]
    fn diameter_matches_surface_scan() {
        let m = Mask3D::from_fn([9, 9, 9], [1.0, 0.7, 1.3], |x, y, z| {
            let (a, b, c) = (x as f64 - 4.0, y as f64 - 3.5, z as f64 - 4.2);
            a * a / 9.0 + b * b / 6.0 + c * c / 14.0 <= 1.0
        })
        .unwrap();
        let (_, surface) = exposed_faces(&m);
        let sp = m.spacing();
        let mut best = 0.0f64;
        for &i in &surface {
            for &j in &surface {
                let (a, b) = (coords(m.dims(), i), coords(m.dims(), j));
                let d: f64 = (0..3)
                    .map(|k| ((a[k] as f64 - b[k] as f64) * sp[k]).powi(2))
                    .sum();
                best = best.max(d.sqrt());
            }
        }
        assert!((max_diameter(&m) - best).abs() < 1e-12);
    }
}
