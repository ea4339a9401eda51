//! Gray-level co-occurrence (GLCM) and run-length (GLRLM) texture features,
//! averaged over the 13 unique 3D directions.

use crate::error::{Error, Result};
use crate::morphology::step;
use crate::radiomics::discretize::DiscretizedRoi;
use crate::volume::{coords, linear_index};

pub const GLCM_NAMES: [&str; 9] = [
    "glcm.contrast",
    "glcm.dissimilarity",
    "glcm.joint_energy",
    "glcm.joint_entropy",
    "glcm.homogeneity",
    "glcm.inverse_difference_moment",
    "glcm.correlation",
    "glcm.cluster_shade",
    "glcm.cluster_prominence",
];

pub const GLRLM_NAMES: [&str; 7] = [
    "glrlm.short_run_emphasis",
    "glrlm.long_run_emphasis",
    "glrlm.gray_level_nonuniformity",
    "glrlm.run_length_nonuniformity",
    "glrlm.run_percentage",
    "glrlm.low_gray_level_run_emphasis",
    "glrlm.high_gray_level_run_emphasis",
];

/// One representative of each ± pair of 26-neighbour offsets.
pub const DIRECTIONS: [[isize; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// Symmetric co-occurrence counts for one offset; `None` if no pair exists.
/// Entry `(i, j)` lives at `(i - 1) * ng + (j - 1)`.
pub fn cooccurrence(droi: &DiscretizedRoi, offset: [isize; 3]) -> Option<Vec<f64>> {
    let ng = droi.n_levels as usize;
    let mut m = vec![0.0; ng * ng];
    let mut pairs = 0usize;
    for (i, &a) in droi.levels.iter().enumerate() {
        if a == 0 {
            continue;
        }
        let Some(q) = step(droi.dims, coords(droi.dims, i), offset) else {
            continue;
        };
        let b = droi.levels[linear_index(droi.dims, q[0], q[1], q[2])];
        if b == 0 {
            continue;
        }
        let (a, b) = (a as usize - 1, b as usize - 1);
        m[a * ng + b] += 1.0;
        m[b * ng + a] += 1.0;
        pairs += 1;
    }
    if pairs == 0 {
        return None;
    }
    let total = 2.0 * pairs as f64;
    m.iter_mut().for_each(|v| *v /= total);
    Some(m)
}

/// The nine GLCM statistics of one normalized matrix.
pub fn glcm_statistics(p: &[f64], ng: usize) -> [f64; 9] {
    let mut mu_i = 0.0;
    let mut mu_j = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            mu_i += (i + 1) as f64 * v;
            mu_j += (j + 1) as f64 * v;
        }
    }
    let mut var_i = 0.0;
    let mut var_j = 0.0;
    let mut f = [0.0; 9];
    let mut cov = 0.0;
    for i in 0..ng {
        for j in 0..ng {
            let v = p[i * ng + j];
            if v == 0.0 {
                continue;
            }
            let (gi, gj) = ((i + 1) as f64, (j + 1) as f64);
            let diff = gi - gj;
            let adiff = diff.abs();
            f[0] += v * diff * diff;
            f[1] += v * adiff;
            f[2] += v * v;
            f[3] -= v * v.log2();
            f[4] += v / (1.0 + adiff);
            f[5] += v / (1.0 + diff * diff);
            var_i += v * (gi - mu_i) * (gi - mu_i);
            var_j += v * (gj - mu_j) * (gj - mu_j);
            cov += v * (gi - mu_i) * (gj - mu_j);
            let s = gi + gj - mu_i - mu_j;
            f[7] += v * s * s * s;
            f[8] += v * s * s * s * s;
        }
    }
    let sigma = var_i.sqrt() * var_j.sqrt();
    f[6] = if sigma > 0.0 { cov / sigma } else { 0.0 };
    // -0.0 from a single-cell matrix
    f[3] += 0.0;
    f
}

pub fn glcm_features(droi: &DiscretizedRoi, distance: usize) -> Result<[f64; 9]> {
    if distance == 0 {
        return Err(Error::InvalidParameter("glcm distance must be >= 1".into()));
    }
    let ng = droi.n_levels as usize;
    let mut sum = [0.0; 9];
    let mut used = 0usize;
    for d in DIRECTIONS {
        let offset = d.map(|c| c * distance as isize);
        if let Some(p) = cooccurrence(droi, offset) {
            let f = glcm_statistics(&p, ng);
            for k in 0..9 {
                sum[k] += f[k];
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NoValidPairs);
    }
    Ok(sum.map(|s| s / used as f64))
}

/// Run-length matrix for one direction: `r[(g - 1) * max_len + (l - 1)]`.
pub fn run_lengths(droi: &DiscretizedRoi, dir: [isize; 3]) -> (Vec<f64>, usize) {
    let ng = droi.n_levels as usize;
    let max_len = *droi.dims.iter().max().unwrap();
    let mut r = vec![0.0; ng * max_len];
    let back = dir.map(|c| -c);
    let level_at = |p: Option<[usize; 3]>| -> u32 {
        p.map(|q| droi.levels[linear_index(droi.dims, q[0], q[1], q[2])])
            .unwrap_or(0)
    };
    for (i, &g) in droi.levels.iter().enumerate() {
        if g == 0 {
            continue;
        }
        let p = coords(droi.dims, i);
        if level_at(step(droi.dims, p, back)) == g {
            continue;
        }
        let mut len = 1;
        let mut cur = p;
        while let Some(q) = step(droi.dims, cur, dir) {
            if droi.levels[linear_index(droi.dims, q[0], q[1], q[2])] != g {
                break;
            }
            len += 1;
            cur = q;
        }
        r[(g as usize - 1) * max_len + (len - 1)] += 1.0;
    }
    (r, max_len)
}

/// The seven run-length statistics of one matrix over `n_voxels` voxels.
pub fn glrlm_statistics(r: &[f64], ng: usize, max_len: usize, n_voxels: usize) -> [f64; 7] {
    let mut nr = 0.0;
    let mut f = [0.0; 7];
    let mut by_level = vec![0.0; ng];
    let mut by_length = vec![0.0; max_len];
    for g in 0..ng {
        for l in 0..max_len {
            let c = r[g * max_len + l];
            if c == 0.0 {
                continue;
            }
            let (gf, lf) = ((g + 1) as f64, (l + 1) as f64);
            nr += c;
            f[0] += c / (lf * lf);
            f[1] += c * lf * lf;
            f[5] += c / (gf * gf);
            f[6] += c * gf * gf;
            by_level[g] += c;
            by_length[l] += c;
        }
    }
    f[2] = by_level.iter().map(|v| v * v).sum();
    f[3] = by_length.iter().map(|v| v * v).sum();
    for k in [0, 1, 2, 3, 5, 6] {
        f[k] /= nr;
    }
    f[4] = nr / n_voxels as f64;
    f
}

pub fn glrlm_features(droi: &DiscretizedRoi) -> Result<[f64; 7]> {
    let n_voxels = droi.voxel_count();
    if n_voxels == 0 {
        return Err(Error::EmptyMask);
    }
    let ng = droi.n_levels as usize;
    let mut sum = [0.0; 7];
    for d in DIRECTIONS {
        let (r, max_len) = run_lengths(droi, d);
        let f = glrlm_statistics(&r, ng, max_len, n_voxels);
        for k in 0..7 {
            sum[k] += f[k];
        }
    }
    Ok(sum.map(|s| s / DIRECTIONS.len() as f64))
}
