//! Seeded k-nearest-neighbour voxel labelling.
//!
//! The brightest decile of the ROI seeds the foreground and the darkest decile
//! seeds the background. Every other voxel takes the majority label of its `k`
//! nearest seeds in (z-scored intensity, scaled position) space. Neighbour
//! search is exact; equal distances are ordered by seed index.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::stats::{distinct_count_at_least, mean, percentile_sorted, sorted_copy, variance};
use crate::volume::{coords, Volume3D};

pub type Point = [f64; 4];

#[inline]
pub fn squared_distance(a: &Point, b: &Point) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    let d3 = a[3] - b[3];
    d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3
}

/// `(squared distance, seed index)` ordered lexicographically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate(f64, usize);

impl Candidate {
    fn cmp(&self, other: &Candidate) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

enum Node {
    Leaf(Vec<usize>),
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Exact k-nearest-neighbour index over 4D points.
pub struct KdTree<'a> {
    points: &'a [Point],
    root: Node,
}

const LEAF_SIZE: usize = 16;

impl<'a> KdTree<'a> {
    pub fn new(points: &'a [Point]) -> Self {
        let idx: Vec<usize> = (0..points.len()).collect();
        let root = Self::build(points, idx);
        KdTree { points, root }
    }

    fn build(points: &[Point], mut idx: Vec<usize>) -> Node {
        if idx.len() <= LEAF_SIZE {
            return Node::Leaf(idx);
        }
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..4 {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][axis]), hi.max(points[i][axis]))
            });
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= 0.0 {
            return Node::Leaf(idx);
        }
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            points[a][best_axis]
                .total_cmp(&points[b][best_axis])
                .then(a.cmp(&b))
        });
        let value = points[idx[mid]][best_axis];
        let right = idx.split_off(mid);
        Node::Split {
            axis: best_axis,
            value,
            left: Box::new(Self::build(points, idx)),
            right: Box::new(Self::build(points, right)),
        }
    }

    /// The `k` nearest points to `query` as `(squared distance, index)`,
    /// nearest first, ties broken by lower index.
    pub fn nearest(&self, query: &Point, k: usize) -> Vec<(f64, usize)> {
        let mut best: Vec<Candidate> = Vec::with_capacity(k + 1);
        self.search(&self.root, query, k, &mut best);
        best.into_iter().map(|c| (c.0, c.1)).collect()
    }

    fn offer(best: &mut Vec<Candidate>, k: usize, c: Candidate) {
        if best.len() == k && c.cmp(best.last().unwrap()) != Ordering::Less {
            return;
        }
        let pos = best
            .binary_search_by(|probe| probe.cmp(&c))
            .unwrap_or_else(|p| p);
        best.insert(pos, c);
        best.truncate(k);
    }

    fn search(&self, node: &Node, q: &Point, k: usize, best: &mut Vec<Candidate>) {
        match node {
            Node::Leaf(idx) => {
                for &i in idx {
                    Self::offer(best, k, Candidate(squared_distance(q, &self.points[i]), i));
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                // Equal bound still explored so index tie-breaks stay exact.
                if best.len() < k || diff * diff <= best.last().unwrap().0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Outcome of seeded labelling on one ROI.
#[derive(Debug, Clone)]
pub struct KnnLabels {
    pub labels: Vec<bool>,
    pub n_foreground_seeds: usize,
    pub n_background_seeds: usize,
    pub seed_thresholds: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
pub struct KnnSegParams {
    pub k: usize,
    pub quantiles: (f64, f64),
    pub coord_weight: f64,
}

/// Feature vectors (z-scored intensity, weighted mm coordinates) per voxel.
pub fn voxel_features(roi: &Volume3D, coord_weight: f64) -> Vec<Point> {
    let values = roi.data();
    let mu = mean(values);
    let sd = variance(values).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    let dims = roi.dims();
    let sp = roi.spacing();
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = coords(dims, i);
            [
                (v - mu) / sd,
                coord_weight * c[0] as f64 * sp[0],
                coord_weight * c[1] as f64 * sp[1],
                coord_weight * c[2] as f64 * sp[2],
            ]
        })
        .collect()
}

/// Seed roles per voxel: `Some(true)` foreground seed, `Some(false)` background seed.
pub fn seed_roles(values: &[f64], quantiles: (f64, f64)) -> (Vec<Option<bool>>, (f64, f64)) {
    let sorted = sorted_copy(values);
    let lo = percentile_sorted(&sorted, quantiles.0);
    let hi = percentile_sorted(&sorted, quantiles.1);
    let roles = values
        .iter()
        .map(|&v| {
            if v >= hi {
                Some(true)
            } else if v <= lo {
                Some(false)
            } else {
                None
            }
        })
        .collect();
    (roles, (lo, hi))
}

pub fn label_knn(roi: &Volume3D, params: KnnSegParams) -> Result<KnnLabels> {
    if params.k == 0 || params.k % 2 == 0 {
        return Err(Error::InvalidParameter(format!("knn k must be odd, got {}", params.k)));
    }
    if !(params.quantiles.0 < params.quantiles.1) {
        return Err(Error::InvalidParameter("knn seed quantiles must increase".into()));
    }
    let values = roi.data();
    if !distinct_count_at_least(values, 2) {
        return Err(Error::DegenerateInput("ROI has fewer than two distinct values".into()));
    }
    let (roles, thresholds) = seed_roles(values, params.quantiles);
    let features = voxel_features(roi, params.coord_weight);
    let mut seed_points = Vec::new();
    let mut seed_labels = Vec::new();
    for (p, r) in features.iter().zip(&roles) {
        if let Some(l) = r {
            seed_points.push(*p);
            seed_labels.push(*l);
        }
    }
    let n_fg = seed_labels.iter().filter(|&&l| l).count();
    let n_bg = seed_labels.len() - n_fg;
    if n_fg == 0 || n_bg == 0 {
        return Err(Error::InsufficientSeeds(format!(
            "{n_fg} foreground and {n_bg} background seeds"
        )));
    }
    let k = params.k.min(seed_points.len());
    let tree = KdTree::new(&seed_points);
    let labels = features
        .iter()
        .zip(&roles)
        .map(|(p, r)| match r {
            Some(l) => *l,
            None => {
                let votes = tree
                    .nearest(p, k)
                    .iter()
                    .filter(|(_, i)| seed_labels[*i])
                    .count();
                2 * votes > k
            }
        })
        .collect();
    Ok(KnnLabels {
        labels,
        n_foreground_seeds: n_fg,
        n_background_seeds: n_bg,
        seed_thresholds: thresholds,
    })
}
