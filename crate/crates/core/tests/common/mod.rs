//! Brute-force oracles and the checks shared by the suites and the
//! acceptance runner. Each check returns a one-line summary or a failure
//! message.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use peritumor::evaluation::{auc, bootstrap_ci, roc_curve};
use peritumor::harness::{run_expansion_sweep, run_grid, Experiment, ExperimentConfig};
use peritumor::models::forest::{train_random_forest, ForestParams};
use peritumor::models::knn::train_knn;
use peritumor::models::logistic::loss_and_gradient;
use peritumor::models::ClassifierKind;
use peritumor::morphology::{dilate_mm, edt};
use peritumor::phantom::{generate_cohort, PhantomSpec};
use peritumor::radiomics::discretize::DiscretizedRoi;
use peritumor::radiomics::texture::{glcm_features, glrlm_features};
use peritumor::radiomics::{extract, FeatureSpec};
use peritumor::segmentation::fcm::fit_fcm;
use peritumor::segmentation::gmm::fit_gmm;
use peritumor::segmentation::knn::{label_knn, seed_roles, voxel_features, KnnSegParams};
use peritumor::segmentation::otsu::{best_split, histogram, otsu_threshold};
use peritumor::segmentation::{segment_knn, SegmentationMethod, SegmentationParams};
use peritumor::volume::{coords, linear_index, Dims, Mask3D, Spacing, Volume3D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

pub fn random_dims(r: &mut impl Rng, max: usize) -> Dims {
    [0, 1, 2].map(|_| r.random_range(1..=max))
}

pub fn random_spacing(r: &mut impl Rng) -> Spacing {
    [0, 1, 2].map(|_| r.random_range(0.3..3.0))
}

/// Random nonempty mask with a random fill density.
pub fn random_mask(r: &mut impl Rng, dims: Dims, spacing: Spacing) -> Mask3D {
    let n = dims[0] * dims[1] * dims[2];
    let density = r.random_range(0.005..0.3);
    let mut bits: Vec<bool> = (0..n).map(|_| r.random_bool(density)).collect();
    let forced = r.random_range(0..n);
    bits[forced] = true;
    Mask3D::new(dims, spacing, bits).unwrap()
}

fn physical_d2(a: [usize; 3], b: [usize; 3], sp: Spacing) -> f64 {
    (0..3)
        .map(|k| {
            let d = (a[k] as f64 - b[k] as f64) * sp[k];
            d * d
        })
        .sum()
}

/// Distance from every voxel to the nearest foreground voxel, by exhaustive search.
pub fn brute_edt(mask: &Mask3D) -> Vec<f64> {
    let dims = mask.dims();
    let fg: Vec<[usize; 3]> = (0..mask.bits().len())
        .filter(|&i| mask.bits()[i])
        .map(|i| coords(dims, i))
        .collect();
    (0..mask.bits().len())
        .map(|i| {
            let p = coords(dims, i);
            fg.iter()
                .map(|&q| physical_d2(p, q, mask.spacing()))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

/// Union of balls of radius `r` centred on every foreground voxel.
pub fn ball_stamp(mask: &Mask3D, r: f64) -> Vec<bool> {
    let dims = mask.dims();
    let sp = mask.spacing();
    let mut out = vec![false; mask.bits().len()];
    let reach = [0, 1, 2].map(|k| (r / sp[k]).floor() as isize + 1);
    for i in 0..mask.bits().len() {
        if !mask.bits()[i] {
            continue;
        }
        let c = coords(dims, i);
        for dz in -reach[2]..=reach[2] {
            for dy in -reach[1]..=reach[1] {
                for dx in -reach[0]..=reach[0] {
                    let q = [c[0] as isize + dx, c[1] as isize + dy, c[2] as isize + dz];
                    if (0..3).any(|k| q[k] < 0 || q[k] >= dims[k] as isize) {
                        continue;
                    }
                    let q = q.map(|v| v as usize);
                    if physical_d2(c, q, sp).sqrt() <= r + 1e-9 {
                        out[linear_index(dims, q[0], q[1], q[2])] = true;
                    }
                }
            }
        }
    }
    out
}

pub fn single_voxel_dilation_count(spacing: Spacing, r: f64) -> usize {
    let dims = [9, 9, 9];
    let mut m = Mask3D::empty(dims, spacing).unwrap();
    m.set(4, 4, 4, true);
    dilate_mm(&m, r).unwrap().count()
}

pub fn check_morphology() -> Check {
    let start = Instant::now();
    let mut r = rng(11);
    let mut worst = 0.0f64;
    let n_masks = 120;
    for case in 0..n_masks {
        let dims = random_dims(&mut r, 16);
        let sp = random_spacing(&mut r);
        let mask = random_mask(&mut r, dims, sp);
        let got = edt(&mask).map_err(|e| e.to_string())?;
        let want = brute_edt(&mask);
        for (a, b) in got.values().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        ensure!(worst <= 1e-9, "mask {case}: edt differs from brute force by {worst:e} mm");
        for radius in [0.0, r.random_range(0.0..6.0), sp[0], 2.0 * sp[1] + sp[2]] {
            let dil = dilate_mm(&mask, radius).map_err(|e| e.to_string())?;
            ensure!(
                dil.bits() == ball_stamp(&mask, radius).as_slice(),
                "mask {case}: dilation by {radius} mm differs from ball stamping"
            );
        }
    }
    let iso = single_voxel_dilation_count([1.0, 1.0, 1.0], 2.0);
    let aniso = single_voxel_dilation_count([1.0, 1.0, 2.0], 2.0);
    ensure!(iso == 33, "single voxel, spacing (1,1,1), r=2 gives {iso} voxels, expected 33");
    ensure!(aniso == 15, "single voxel, spacing (1,1,2), r=2 gives {aniso} voxels, expected 15");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "morphology oracle took {secs:.1} s");
    Ok(format!(
        "{n_masks} masks, max edt error {worst:.1e} mm, dilations exact, single voxel 33/15, {secs:.1} s"
    ))
}

/// Smallest boundary index with maximal between-class variance, recomputing
/// both classes from scratch for every candidate and comparing exactly.
pub fn brute_otsu(counts: &[u64]) -> usize {
    let mut best: Option<(u128, u128, usize)> = None;
    for t in 1..counts.len() {
        let (mut n0, mut s0, mut n1, mut s1) = (0u128, 0u128, 0u128, 0u128);
        for (i, &c) in counts.iter().enumerate() {
            if i < t {
                n0 += c as u128;
                s0 += i as u128 * c as u128;
            } else {
                n1 += c as u128;
                s1 += i as u128 * c as u128;
            }
        }
        // n0 n1 (mu0 - mu1)^2 = (n1 s0 - n0 s1)^2 / (n0 n1)
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0, 1)
        } else {
            let d = (n1 * s0).abs_diff(n0 * s1);
            (d * d, n0 * n1)
        };
        let better = match best {
            None => true,
            Some((bn, bd, _)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den, t));
        }
    }
    best.map_or(1, |b| b.2)
}

/// Two-mode sample with a random share of exact duplicates.
pub fn bimodal(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let lo = Normal::new(-800.0, r.random_range(10.0..80.0)).unwrap();
    let hi = Normal::new(r.random_range(-200.0..100.0), r.random_range(10.0..80.0)).unwrap();
    let frac = r.random_range(0.1..0.6);
    (0..n)
        .map(|_| {
            let v: f64 = if r.random_bool(frac) { hi.sample(r) } else { lo.sample(r) };
            if r.random_bool(0.3) {
                v.round()
            } else {
                v
            }
        })
        .collect()
}

/// k nearest seeds by (squared distance, index), then a strict majority vote.
pub fn brute_knn_labels(roi: &Volume3D, params: KnnSegParams) -> Vec<bool> {
    let (roles, _) = seed_roles(roi.data(), params.quantiles);
    let feats = voxel_features(roi, params.coord_weight);
    let seeds: Vec<(usize, bool)> = roles
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|l| (i, l)))
        .collect();
    let k = params.k.min(seeds.len());
    feats
        .iter()
        .zip(&roles)
        .map(|(p, role)| {
            if let Some(l) = role {
                return *l;
            }
            let mut d: Vec<(f64, usize, bool)> = seeds
                .iter()
                .enumerate()
                .map(|(j, &(i, l))| {
                    let q = feats[i];
                    let d2 = (0..4).map(|a| (p[a] - q[a]) * (p[a] - q[a])).sum::<f64>();
                    (d2, j, l)
                })
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let votes = d[..k].iter().filter(|e| e.2).count();
            2 * votes > k
        })
        .collect()
}

pub fn check_segmentation() -> Check {
    let start = Instant::now();
    let mut r = rng(23);
    for h in 0..200 {
        let bins = r.random_range(2..=64);
        let sparse = r.random_bool(0.3);
        let counts: Vec<u64> = (0..bins)
            .map(|_| if sparse && r.random_bool(0.5) { 0 } else { r.random_range(0..60) })
            .collect();
        if counts.iter().sum::<u64>() == 0 {
            continue;
        }
        let (got, want) = (best_split(&counts), brute_otsu(&counts));
        ensure!(got == want, "histogram {h}: Otsu bin {got}, exhaustive scan {want}");
    }
    for h in 0..40 {
        let values = bimodal(&mut r, 400);
        let t = otsu_threshold(&values, 64).map_err(|e| e.to_string())?;
        let (counts, _, _) = histogram(&values, 64).map_err(|e| e.to_string())?;
        let want = brute_otsu(&counts);
        ensure!(t.bin == want, "sample {h}: Otsu bin {}, exhaustive scan {want}", t.bin);
    }

    let mut worst_row = 0.0f64;
    let mut worst_drop = 0.0f64;
    for _ in 0..30 {
        let values = bimodal(&mut r, 300);
        let fit = fit_fcm(&values, 2.0, 1e-6, 300).map_err(|e| e.to_string())?;
        for u in &fit.memberships {
            worst_row = worst_row.max((u[0] + u[1] - 1.0).abs());
        }
        worst_row = worst_row.max(fit.max_row_sum_error);
        let g = fit_gmm(&values, 1e-8, 300, 1e-6).map_err(|e| e.to_string())?;
        for w in g.log_likelihood.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    ensure!(worst_row <= 1e-9, "FCM membership rows deviate from 1 by {worst_row:e}");
    ensure!(worst_drop <= 1e-9, "GMM log-likelihood dropped by {worst_drop:e} in one step");

    let params = SegmentationParams::default();
    let kp = KnnSegParams {
        k: params.knn_k,
        quantiles: params.knn_seed_quantiles,
        coord_weight: params.knn_coord_weight,
    };
    let mut rois = 0;
    for case in 0..60 {
        let dims = [0, 1, 2].map(|_| r.random_range(2..=8));
        let n = dims[0] * dims[1] * dims[2];
        let data = bimodal(&mut r, n);
        let roi = Volume3D::new(dims, random_spacing(&mut r), data).unwrap();
        let Ok(got) = label_knn(&roi, kp) else { continue };
        let want = brute_knn_labels(&roi, kp);
        ensure!(got.labels == want, "ROI {case}: kNN labels differ from brute-force neighbours");
        let raw = segment_knn(&roi, &params).map_err(|e| e.to_string())?;
        ensure!(raw.mask.bits() == want.as_slice(), "ROI {case}: segment_knn mask differs");
        rois += 1;
    }
    ensure!(rois >= 30, "only {rois} ROIs had seeds of both classes");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "segmentation oracles took {secs:.1} s");
    Ok(format!(
        "Otsu exact on 200+40 histograms, FCM row error {worst_row:.1e}, GMM worst drop {worst_drop:.1e}, kNN exact on {rois} ROIs, {secs:.1} s"
    ))
}

/// The 13 offsets whose first nonzero component is positive.
pub fn half_neighbourhood() -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    for z in -1..=1isize {
        for y in -1..=1isize {
            for x in -1..=1isize {
                let o = [x, y, z];
                if o.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0) {
                    out.push(o);
                }
            }
        }
    }
    out
}

fn level_at(d: &DiscretizedRoi, p: [isize; 3]) -> u32 {
    if (0..3).any(|k| p[k] < 0 || p[k] >= d.dims[k] as isize) {
        return 0;
    }
    d.levels[linear_index(d.dims, p[0] as usize, p[1] as usize, p[2] as usize)]
}

fn all_points(dims: Dims) -> Vec<[isize; 3]> {
    (0..dims[0] * dims[1] * dims[2])
        .map(|i| coords(dims, i).map(|v| v as isize))
        .collect()
}

/// Mean GLCM features over directions with at least one pair; `None` if no
/// direction has a pair.
pub fn brute_glcm(d: &DiscretizedRoi, distance: isize) -> Option<[f64; 9]> {
    let mut sum = [0.0; 9];
    let mut used = 0;
    for o in half_neighbourhood() {
        let mut pairs: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        let mut total = 0.0;
        for p in all_points(d.dims) {
            let a = level_at(d, p);
            let b = level_at(d, [0, 1, 2].map(|k| p[k] + o[k] * distance));
            if a == 0 || b == 0 {
                continue;
            }
            *pairs.entry((a, b)).or_default() += 1.0;
            *pairs.entry((b, a)).or_default() += 1.0;
            total += 2.0;
        }
        if total == 0.0 {
            continue;
        }
        used += 1;
        let p: Vec<(f64, f64, f64)> = pairs
            .iter()
            .map(|(&(i, j), &c)| (i as f64, j as f64, c / total))
            .collect();
        let mi: f64 = p.iter().map(|e| e.0 * e.2).sum();
        let mj: f64 = p.iter().map(|e| e.1 * e.2).sum();
        let si = p.iter().map(|e| (e.0 - mi).powi(2) * e.2).sum::<f64>().sqrt();
        let sj = p.iter().map(|e| (e.1 - mj).powi(2) * e.2).sum::<f64>().sqrt();
        let cov: f64 = p.iter().map(|e| (e.0 - mi) * (e.1 - mj) * e.2).sum();
        let f = [
            p.iter().map(|e| e.2 * (e.0 - e.1).powi(2)).sum::<f64>(),
            p.iter().map(|e| e.2 * (e.0 - e.1).abs()).sum(),
            p.iter().map(|e| e.2 * e.2).sum(),
            -p.iter().map(|e| e.2 * e.2.log2()).sum::<f64>(),
            p.iter().map(|e| e.2 / (1.0 + (e.0 - e.1).abs())).sum(),
            p.iter().map(|e| e.2 / (1.0 + (e.0 - e.1).powi(2))).sum(),
            if si * sj > 0.0 { cov / (si * sj) } else { 0.0 },
            p.iter().map(|e| e.2 * (e.0 + e.1 - mi - mj).powi(3)).sum(),
            p.iter().map(|e| e.2 * (e.0 + e.1 - mi - mj).powi(4)).sum(),
        ];
        for k in 0..9 {
            sum[k] += f[k];
        }
    }
    (used > 0).then(|| sum.map(|s| s / used as f64))
}

/// Maximal runs `(level, length)` along one direction, found by walking
/// back to each run start and forward to its end.
pub fn brute_runs(d: &DiscretizedRoi, o: [isize; 3]) -> Vec<(u32, usize)> {
    let mut runs = Vec::new();
    for p in all_points(d.dims) {
        let g = level_at(d, p);
        if g == 0 {
            continue;
        }
        let prev = [0, 1, 2].map(|k| p[k] - o[k]);
        if level_at(d, prev) == g {
            continue;
        }
        let mut len = 1;
        let mut q = p;
        loop {
            q = [0, 1, 2].map(|k| q[k] + o[k]);
            if level_at(d, q) != g {
                break;
            }
            len += 1;
        }
        runs.push((g, len));
    }
    runs
}

pub fn brute_glrlm(d: &DiscretizedRoi) -> [f64; 7] {
    let nv = d.levels.iter().filter(|&&l| l > 0).count() as f64;
    let dirs = half_neighbourhood();
    let mut sum = [0.0; 7];
    for &o in &dirs {
        let runs = brute_runs(d, o);
        let nr = runs.len() as f64;
        let mut by_g: BTreeMap<u32, f64> = BTreeMap::new();
        let mut by_l: BTreeMap<usize, f64> = BTreeMap::new();
        for &(g, l) in &runs {
            *by_g.entry(g).or_default() += 1.0;
            *by_l.entry(l).or_default() += 1.0;
        }
        let f = [
            runs.iter().map(|&(_, l)| 1.0 / (l * l) as f64).sum::<f64>() / nr,
            runs.iter().map(|&(_, l)| (l * l) as f64).sum::<f64>() / nr,
            by_g.values().map(|c| c * c).sum::<f64>() / nr,
            by_l.values().map(|c| c * c).sum::<f64>() / nr,
            nr / nv,
            runs.iter().map(|&(g, _)| 1.0 / (g * g) as f64).sum::<f64>() / nr,
            runs.iter().map(|&(g, _)| (g * g) as f64).sum::<f64>() / nr,
        ];
        for k in 0..7 {
            sum[k] += f[k];
        }
    }
    sum.map(|s| s / dirs.len() as f64)
}

pub fn random_droi(r: &mut impl Rng, max: usize) -> DiscretizedRoi {
    let dims = random_dims(r, max);
    let n = dims[0] * dims[1] * dims[2];
    let ng = r.random_range(1..=6u32);
    let density = r.random_range(0.3..1.0);
    let mut levels: Vec<u32> = (0..n)
        .map(|_| if r.random_bool(density) { r.random_range(1..=ng) } else { 0 })
        .collect();
    let forced = r.random_range(0..n);
    levels[forced] = r.random_range(1..=ng);
    DiscretizedRoi::from_levels(dims, levels).unwrap()
}

pub fn check_texture() -> Check {
    let mut r = rng(31);
    let mut worst = 0.0f64;
    let mut with_pairs = 0;
    for case in 0..50 {
        let d = if case < 10 {
            // full 4x4x4 cubes first
            let levels = (0..64).map(|_| r.random_range(1..=5u32)).collect();
            DiscretizedRoi::from_levels([4, 4, 4], levels).unwrap()
        } else {
            random_droi(&mut r, 4)
        };
        match (glcm_features(&d, 1), brute_glcm(&d, 1)) {
            (Ok(got), Some(want)) => {
                with_pairs += 1;
                for k in 0..9 {
                    worst = worst.max((got[k] - want[k]).abs());
                }
            }
            (Err(_), None) => {}
            (got, want) => return Err(format!("ROI {case}: GLCM {got:?} vs oracle {want:?}")),
        }
        let got = glrlm_features(&d).map_err(|e| e.to_string())?;
        let want = brute_glrlm(&d);
        for k in 0..7 {
            worst = worst.max((got[k] - want[k]).abs());
        }
        ensure!(worst <= 1e-10, "ROI {case}: texture features differ from oracle by {worst:e}");
    }

    let d = DiscretizedRoi::from_levels([2, 2, 1], vec![1, 1, 2, 2]).unwrap();
    let cx = peritumor::radiomics::texture::cooccurrence(&d, [1, 0, 0]).unwrap();
    let cy = peritumor::radiomics::texture::cooccurrence(&d, [0, 1, 0]).unwrap();
    let (c0, c1) = (
        peritumor::radiomics::texture::glcm_statistics(&cx, 2)[0],
        peritumor::radiomics::texture::glcm_statistics(&cy, 2)[0],
    );
    ensure!(c0 == 0.0 && c1 == 1.0, "2x2x1 contrast gave {c0}/{c1}, expected 0/1");
    let d = DiscretizedRoi::from_levels([4, 1, 1], vec![1, 1, 1, 2]).unwrap();
    let (rm, max_len) = peritumor::radiomics::texture::run_lengths(&d, [1, 0, 0]);
    let s = peritumor::radiomics::texture::glrlm_statistics(&rm, 2, max_len, 4);
    ensure!(s[0] == 5.0 / 9.0, "run [1,1,1,2] SRE {} expected 5/9", s[0]);
    ensure!(s[4] == 0.5, "run [1,1,1,2] run percentage {} expected 0.5", s[4]);
    Ok(format!(
        "50 ROIs ({with_pairs} with pairs), max deviation {worst:.1e}, hand examples exact"
    ))
}

fn features_of(values: Vec<f64>, dims: Dims) -> peritumor::radiomics::FeatureVector {
    let v = Volume3D::new(dims, [1.0; 3], values).unwrap();
    let m = Mask3D::new(dims, [1.0; 3], vec![true; dims[0] * dims[1] * dims[2]]).unwrap();
    extract(&v, &m, &FeatureSpec::default()).unwrap()
}

pub fn check_spot_values() -> Check {
    let one = features_of(vec![0.0], [1, 1, 1]);
    let s = one.get("shape.sphericity").ok_or("no sphericity")?;
    let want = std::f64::consts::PI.cbrt() * 6f64.powf(2.0 / 3.0) / 6.0;
    ensure!((s - want).abs() <= 1e-9, "single-voxel sphericity {s}, expected {want}");
    let f = features_of(vec![1.0, 2.0, 3.0], [3, 1, 1]);
    let (mean, var, energy) = (
        f.get("firstorder.mean").unwrap(),
        f.get("firstorder.variance").unwrap(),
        f.get("firstorder.energy").unwrap(),
    );
    ensure!(mean == 2.0, "mean of {{1,2,3}} is {mean}");
    ensure!((var - 2.0 / 3.0).abs() <= 1e-15, "variance of {{1,2,3}} is {var}");
    ensure!(energy == 14.0, "energy of {{1,2,3}} is {energy}");
    let two = features_of(vec![0.0, 0.0, 100.0, 100.0], [4, 1, 1]);
    let h = two.get("firstorder.entropy").unwrap();
    ensure!(h == 1.0, "two-level entropy is {h}");
    Ok(format!("sphericity {s:.10}, mean/variance/energy 2/{var:.6}/14, entropy 1 bit"))
}

pub fn random_problem(r: &mut impl Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| normal.sample(r)).collect()).collect();
    let mut y: Vec<u8> = x
        .iter()
        .map(|row| u8::from(row[0] + 0.5 * normal.sample(r) > 0.0))
        .collect();
    y[0] = 0;
    y[1] = 1;
    (x, y)
}

/// Largest relative gap between the analytic gradient and central differences.
pub fn gradient_check(x: &[Vec<f64>], y: &[u8], w: &[f64], lambda: f64) -> f64 {
    let (_, g) = loss_and_gradient(x, y, w, lambda);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..w.len() {
        let mut up = w.to_vec();
        let mut down = w.to_vec();
        up[k] += h;
        down[k] -= h;
        let fd = (loss_and_gradient(x, y, &up, lambda).0 - loss_and_gradient(x, y, &down, lambda).0) / (2.0 * h);
        let scale = g[k].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((g[k] - fd).abs() / scale);
    }
    worst
}

/// Runs `f` inside a dedicated pool of `threads` workers.
pub fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

pub fn check_models() -> Check {
    let mut r = rng(41);
    let normal = Normal::new(0.0, 0.7).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..25 {
        let (x, y) = random_problem(&mut r, 20, 10);
        let lambda = [0.0, 0.1, 1.0, 10.0][r.random_range(0..4)];
        let w: Vec<f64> = (0..11).map(|_| normal.sample(&mut r)).collect();
        worst = worst.max(gradient_check(&x, &y, &w, lambda));
    }
    ensure!(worst <= 1e-5, "logistic gradient relative error {worst:e}");

    let (x, y) = random_problem(&mut r, 120, 6);
    let params = ForestParams {
        n_trees: 60,
        ..ForestParams::default()
    };
    let a = in_pool(1, || train_random_forest(&x, &y, params.clone(), 99)).map_err(|e| e.to_string())?;
    let b = in_pool(4, || train_random_forest(&x, &y, params.clone(), 99)).map_err(|e| e.to_string())?;
    let c = in_pool(4, || train_random_forest(&x, &y, params.clone(), 99)).map_err(|e| e.to_string())?;
    let ja = serde_json::to_string(&a).unwrap();
    ensure!(
        ja == serde_json::to_string(&b).unwrap() && ja == serde_json::to_string(&c).unwrap(),
        "forest differs across runs or thread counts"
    );
    for row in &x {
        let (pa, pb) = (a.predict_proba(row).unwrap(), b.predict_proba(row).unwrap());
        ensure!(pa.to_bits() == pb.to_bits(), "forest predictions differ across thread counts");
    }

    let (x, y) = random_problem(&mut r, 50, 4);
    let m = train_knn(&x, &y, 1).map_err(|e| e.to_string())?;
    for (row, &label) in x.iter().zip(&y) {
        let p = m.predict_proba(row).unwrap();
        ensure!(p == label as f64, "k=1 self-prediction {p} for label {label}");
    }
    Ok(format!(
        "gradient max relative error {worst:.1e}, forest identical at 1/4 threads, k=1 self-prediction exact"
    ))
}

/// Mann-Whitney statistic by comparing every positive with every negative.
pub fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn check_auc() -> Check {
    let a = auc(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]).map_err(|e| e.to_string())?;
    ensure!(a == 0.75, "hand example AUC {a}");
    let tied = auc(&[0.3; 8], &[0, 1, 0, 1, 1, 0, 0, 1]).map_err(|e| e.to_string())?;
    ensure!(tied == 0.5, "all-tied AUC {tied}");
    let mut r = rng(53);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let labels: Vec<u8> = (0..500).map(|_| u8::from(r.random_bool(0.4))).collect();
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let s: f64 = r.random_range(0.0..1.0) + 0.3 * l as f64;
                (s * 50.0).round() / 50.0
            })
            .collect();
        let mw = auc(&scores, &labels).unwrap();
        let trap = roc_curve(&scores, &labels).unwrap().trapezoid_area();
        worst = worst.max((mw - trap).abs());
        ensure!((mw - brute_auc(&scores, &labels)).abs() <= 1e-12, "AUC differs from pairwise count");
    }
    ensure!(worst <= 1e-12, "trapezoid and Mann-Whitney AUC differ by {worst:e}");
    let labels: Vec<u8> = (0..80).map(|i| u8::from(i % 3 == 0)).collect();
    let scores: Vec<f64> = (0..80).map(|_| r.random_range(0.0..1.0)).collect();
    let b1 = bootstrap_ci(&scores, &labels, 500, 0.95, 5).unwrap();
    let b2 = bootstrap_ci(&scores, &labels, 500, 0.95, 5).unwrap();
    ensure!(b1 == b2, "bootstrap differs for the same seed");
    Ok(format!("0.75 exact, ties 0.5, trapezoid vs Mann-Whitney {worst:.1e}, bootstrap deterministic"))
}

/// Experiment over a generated cohort at `dir`, writing to `dir/<out>`.
pub fn experiment(dir: &Path, out: &str, tweak: impl FnOnce(&mut ExperimentConfig)) -> Experiment {
    let mut c = ExperimentConfig {
        manifest: dir.join(peritumor::phantom::MANIFEST_FILE),
        output_dir: dir.join(out),
        ..ExperimentConfig::default()
    };
    tweak(&mut c);
    Experiment::new(c).unwrap()
}

pub fn generate(spec: &PhantomSpec, dir: &Path) -> Check {
    let start = Instant::now();
    let recs = generate_cohort(spec, dir).map_err(|e| e.to_string())?;
    Ok(format!("{} cases in {:.1} s", recs.len(), start.elapsed().as_secs_f64()))
}

pub fn check_phantom_trend(dir: &Path) -> Check {
    let start = Instant::now();
    let exp = experiment(dir, "sweep", |_| {});
    let rep = run_expansion_sweep(&exp, Some(SegmentationMethod::Knn), ClassifierKind::Logistic)
        .map_err(|e| e.to_string())?;
    let test = |r: f64| rep.auc(r, peritumor::manifest::Split::Test).unwrap();
    let (a0, a8, a12) = (test(0.0), test(8.0), test(12.0));
    let secs = start.elapsed().as_secs_f64();
    let msg = format!("test AUC r0 {a0:.3}, r8 {a8:.3}, r12 {a12:.3}, sweep {secs:.1} s");
    ensure!(a8 - a0 >= 0.05, "{msg}: AUC(8)-AUC(0) = {:.3} < 0.05", a8 - a0);
    ensure!(a12 <= a8, "{msg}: AUC(12) > AUC(8)");
    Ok(msg)
}

pub fn check_grid(dir: &Path) -> Check {
    let start = Instant::now();
    let first = experiment(dir, "grid_a", |_| {});
    let rep = run_grid(&first).map_err(|e| e.to_string())?;
    ensure!(rep.cells.len() == 12, "grid has {} cells", rep.cells.len());
    for c in &rep.cells {
        let a = c.result.auc;
        ensure!((0.0..=1.0).contains(&a), "{} {} AUC {a}", c.model, c.mask_variant);
    }
    let second = experiment(dir, "grid_b", |c| c.cache = false);
    run_grid(&second).map_err(|e| e.to_string())?;
    for name in ["grid.csv", "grid_features.csv"] {
        let a = std::fs::read(dir.join("grid_a").join(name)).unwrap();
        let b = std::fs::read(dir.join("grid_b").join(name)).unwrap();
        ensure!(a == b, "{name} differs between runs");
    }
    Ok(format!(
        "12 cells in [0,1], winner {} + {}, bytes identical across runs, {:.1} s",
        rep.winner.0,
        rep.winner.1,
        start.elapsed().as_secs_f64()
    ))
}

fn case_pipeline(volume: &Volume3D, bbox: &peritumor::BoundingBox, radius: f64) -> Result<Vec<f64>, String> {
    let params = SegmentationParams::default();
    let seg = peritumor::segmentation::segment(volume, bbox, SegmentationMethod::Knn, &params)
        .map_err(|e| e.to_string())?;
    let mask = if radius == 0.0 { seg.mask } else { dilate_mm(&seg.mask, radius).map_err(|e| e.to_string())? };
    Ok(extract(volume, &mask, &FeatureSpec::default()).map_err(|e| e.to_string())?.values)
}

/// Copy of `v` inside a larger volume at `offset`, padded with `fill`.
pub fn shifted(v: &Volume3D, offset: [usize; 3], pad_high: [usize; 3], fill: f64) -> Volume3D {
    let d = v.dims();
    let nd = [0, 1, 2].map(|k| d[k] + offset[k] + pad_high[k]);
    let mut data = vec![fill; nd[0] * nd[1] * nd[2]];
    for i in 0..v.len() {
        let c = coords(d, i);
        data[linear_index(nd, c[0] + offset[0], c[1] + offset[1], c[2] + offset[2])] = v.data()[i];
    }
    Volume3D::new(nd, v.spacing(), data).unwrap()
}

/// Largest relative difference between two feature vectors.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

/// Needs the sweep written by [`check_phantom_trend`] under `dir/sweep`.
pub fn check_radius_zero(dir: &Path) -> Check {
    use peritumor::harness::tables::FeatureTable;
    let text = std::fs::read_to_string(dir.join("sweep").join("sweep_features.csv")).map_err(|e| e.to_string())?;
    let table = FeatureTable::parse(&text).map_err(|e| e.to_string())?;
    let recs = peritumor::manifest::read_manifest(dir.join(peritumor::phantom::MANIFEST_FILE)).unwrap();
    let mut n = 0;
    for rec in recs.iter().take(8) {
        let row = table
            .rows
            .iter()
            .find(|r| r.case_id == rec.case_id && r.mask_variant == "knn_r0mm")
            .ok_or(format!("{} missing from sweep table", rec.case_id))?;
        let v = peritumor::nifti::read_nifti(dir.join(&rec.image_path)).unwrap();
        let direct = case_pipeline(&v, &rec.bbox, 0.0)?;
        let same = direct.iter().zip(&row.values).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(same, "{}: radius-0 sweep row differs from nodule-only features", rec.case_id);
        n += 1;
    }
    Ok(format!("{n} cases bit-identical"))
}

pub fn check_translation(dir: &Path) -> Check {
    let recs = peritumor::manifest::read_manifest(dir.join(peritumor::phantom::MANIFEST_FILE)).unwrap();
    let mut worst = 0.0f64;
    for rec in recs.iter().take(4) {
        let v = peritumor::nifti::read_nifti(dir.join(&rec.image_path)).unwrap();
        for offset in [[3, 0, 0], [0, 5, 2], [1, 1, 7]] {
            let moved = shifted(&v, offset, [2, 0, 1], -850.0);
            let bbox = peritumor::BoundingBox::new(
                [0, 1, 2].map(|k| rec.bbox.min[k] + offset[k]),
                [0, 1, 2].map(|k| rec.bbox.max[k] + offset[k]),
            )
            .unwrap();
            for radius in [0.0, 8.0] {
                let a = case_pipeline(&v, &rec.bbox, radius)?;
                let b = case_pipeline(&moved, &bbox, radius)?;
                worst = worst.max(max_rel_diff(&a, &b));
            }
        }
    }
    ensure!(worst <= 1e-9, "shifted features differ by {worst:e} (relative)");
    Ok(format!("4 cases x 3 shifts x 2 radii, max relative difference {worst:.1e}"))
}

/// Generation and a forest sweep on a small cohort at 1 and `n` threads.
pub fn check_parallelism(root: &Path, n: usize) -> Check {
    let spec = PhantomSpec {
        n_cases: 40,
        ..PhantomSpec::default()
    };
    let dirs = [root.join("t1"), root.join(format!("t{n}"))];
    for (d, threads) in dirs.iter().zip([1, n]) {
        in_pool(threads, || generate_cohort(&spec, d)).map_err(|e| e.to_string())?;
        let exp = experiment(d, "out", |c| {
            c.threads = Some(threads);
            c.cache = false;
            c.n_boot = 200;
            c.radii_mm = vec![0.0, 4.0, 8.0];
        });
        run_expansion_sweep(&exp, Some(SegmentationMethod::Knn), ClassifierKind::Forest).map_err(|e| e.to_string())?;
    }
    let mut files = vec![
        "manifest.csv".to_string(),
        "images/case_0000.nii".into(),
        "masks/case_0039_gt.nii".into(),
    ];
    files.extend(["sweep.csv", "sweep_features.csv", "importance.csv"].map(|f| format!("out/{f}")));
    for f in &files {
        let a = std::fs::read(dirs[0].join(f)).map_err(|e| format!("{f}: {e}"))?;
        let b = std::fs::read(dirs[1].join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure!(a == b, "{f} differs between 1 and {n} threads");
    }
    Ok(format!("{} files identical at 1 and {n} threads", files.len()))
}
