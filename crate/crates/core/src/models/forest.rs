//! Random forest of Gini-split decision trees.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means floor(sqrt(d)).
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            mtry: None,
            min_leaf: 1,
            max_depth: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    /// Single deterministic tree over all rows and all features.
    pub fn single_tree() -> Self {
        ForestParams {
            n_trees: 1,
            mtry: Some(usize::MAX),
            min_leaf: 1,
            max_depth: None,
            bootstrap: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        fraction: f64,
    },
}

/// Flat node arena; node 0 is the root. Rows with `x[feature] <= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { fraction } => return fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub seed: u64,
    pub params: ForestParams,
    /// Weighted Gini decrease per feature, normalized to sum 1.
    pub importance: Vec<f64>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [u8],
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
    n_root: f64,
    nodes: Vec<Node>,
    importance: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Builder<'_> {
    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let n = rows.len();
        let pos: usize = rows.iter().map(|&r| self.y[r] as usize).sum();
        let parent = gini(pos, n);
        let mut best: Option<BestSplit> = None;
        let mut order: Vec<(f64, u8)> = Vec::with_capacity(n);
        for &f in features {
            order.clear();
            order.extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += order[i].1 as usize;
                if order[i].0 == order[i + 1].0 {
                    continue;
                }
                let nl = i + 1;
                let nr = n - nl;
                if nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let child = (nl as f64 * gini(left_pos, nl) + nr as f64 * gini(pos - left_pos, nr)) / n as f64;
                let decrease = parent - child;
                let threshold = 0.5 * (order[i].0 + order[i + 1].0);
                let better = match &best {
                    None => true,
                    Some(b) => {
                        decrease > b.decrease
                            || (decrease == b.decrease
                                && (f < b.feature || (f == b.feature && threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        decrease,
                    });
                }
            }
        }
        best.filter(|b| b.decrease > 1e-15)
    }

    fn grow<R: Rng>(&mut self, rows: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let n = rows.len();
        let pos: usize = rows.iter().map(|&r| self.y[r] as usize).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            fraction: pos as f64 / n as f64,
        });
        let stop = pos == 0 || pos == n || n < 2 * self.min_leaf || self.max_depth.is_some_and(|m| depth >= m);
        if stop {
            return id;
        }
        let d = self.x[0].len();
        let mut features = sample(rng, d, self.mtry.min(d)).into_vec();
        features.sort_unstable();
        let Some(split) = self.best_split(&rows, &features) else {
            return id;
        };
        self.importance[split.feature] += n as f64 / self.n_root * split.decrease;
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.x[i][split.feature] <= split.threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn train_tree(x: &[Vec<f64>], y: &[u8], p: &ForestParams, mtry: usize, seed: u64, index: u64) -> (Tree, Vec<f64>) {
    let n = x.len();
    let rows: Vec<usize> = if p.bootstrap {
        let mut rng = derived_rng(seed, "forest.bootstrap", index);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut rng = derived_rng(seed, "forest.features", index);
    let mut b = Builder {
        x,
        y,
        mtry,
        min_leaf: p.min_leaf.max(1),
        max_depth: p.max_depth,
        n_root: n as f64,
        nodes: Vec::new(),
        importance: vec![0.0; x[0].len()],
    };
    b.grow(rows, 0, &mut rng);
    (Tree { nodes: b.nodes }, b.importance)
}

pub fn train_random_forest(x: &[Vec<f64>], y: &[u8], params: ForestParams, seed: u64) -> Result<ForestModel> {
    super::check_training(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
    }
    let d = x[0].len();
    if d == 0 {
        return Err(Error::DimensionMismatch("no features".into()));
    }
    let mtry = params
        .mtry
        .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1))
        .clamp(1, d);
    let built: Vec<(Tree, Vec<f64>)> = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| train_tree(x, y, &params, mtry, seed, t))
        .collect();
    let mut importance = vec![0.0; d];
    let mut trees = Vec::with_capacity(built.len());
    for (tree, imp) in built {
        for (a, b) in importance.iter_mut().zip(&imp) {
            *a += b;
        }
        trees.push(tree);
    }
    let total: f64 = importance.iter().sum();
    if total > 0.0 {
        importance.iter_mut().for_each(|v| *v /= total);
    }
    Ok(ForestModel {
        trees,
        n_features: d,
        seed,
        params,
        importance,
    })
}

impl ForestModel {
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "row has {} features, model expects {}",
                row.len(),
                self.n_features
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }
}
