//! Gradient-boosted decision trees for binary logistic loss.
//!
//! Each boosting iteration fits a depth-limited regression tree to the
//! negative gradient of the log-loss using second-order (Newton) leaf values
//! and exact greedy splits over presorted features, then adds it with a
//! shrinkage factor. Split search is level-order — one pass over each
//! feature's global sort order per tree level — so training cost is
//! O(iterations × depth × features × n) after the one-time argsort.
//!
//! Everything is deterministic: ties in split gain resolve to the lowest
//! feature index and threshold first encountered.

use serde::{Deserialize, Serialize};

use super::DetectorError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TreeConfig {
    pub iterations: usize,
    pub depth: usize,
    pub shrinkage: f64,
    /// Minimum samples per leaf.
    pub min_leaf: usize,
    /// L2 regularization on leaf values (keeps Newton steps bounded when
    /// hessians saturate toward zero).
    pub lambda: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { iterations: 300, depth: 6, shrinkage: 0.5, min_leaf: 1, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Split { feature, threshold, left, right } => {
                    idx = if x[*feature] < *threshold { *left } else { *right };
                }
                Node::Leaf { value } => return *value,
            }
        }
    }

    /// Longest root-to-leaf split count.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeExpert {
    pub trees: Vec<RegressionTree>,
    pub shrinkage: f64,
    /// Log-odds of the positive-class prior.
    pub base_score: f64,
    pub feature_dim: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl TreeExpert {
    pub fn train(x: &[Vec<f64>], y: &[bool], cfg: &TreeConfig) -> Result<Self, DetectorError> {
        validate_training_input(x, y)?;
        let n = x.len();
        let d = x[0].len();
        let pos = y.iter().filter(|&&v| v).count() as f64;
        let p0 = pos / n as f64;
        let base_score = (p0 / (1.0 - p0)).ln();

        // Global argsort per feature, reused by every tree.
        let sorted: Vec<Vec<u32>> = (0..d)
            .map(|f| {
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| {
                    x[a as usize][f].partial_cmp(&x[b as usize][f]).expect("finite features")
                });
                idx
            })
            .collect();

        let mut score: Vec<f64> = vec![base_score; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        let mut trees = Vec::with_capacity(cfg.iterations);
        for _ in 0..cfg.iterations {
            for i in 0..n {
                let p = sigmoid(score[i]);
                grad[i] = p - if y[i] { 1.0 } else { 0.0 };
                hess[i] = p * (1.0 - p);
            }
            let tree = grow_tree(x, &sorted, &grad, &hess, cfg);
            for i in 0..n {
                score[i] += cfg.shrinkage * tree.predict(&x[i]);
            }
            trees.push(tree);
        }
        Ok(TreeExpert { trees, shrinkage: cfg.shrinkage, base_score, feature_dim: d })
    }

    /// Raw additive score (log-odds scale).
    pub fn predict_raw(&self, x: &[f64]) -> f64 {
        self.base_score + self.shrinkage * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    /// f_CB(x) ∈ (0, 1).
    pub fn predict_prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.predict_raw(x))
    }
}

pub(crate) fn validate_training_input(x: &[Vec<f64>], y: &[bool]) -> Result<(), DetectorError> {
    if x.len() != y.len() {
        return Err(DetectorError::ShapeMismatch { rows: x.len(), labels: y.len() });
    }
    if x.len() < 2 || y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(DetectorError::DegenerateLabels);
    }
    let d = x[0].len();
    for (r, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(DetectorError::Schema { expected: d, found: row.len() });
        }
        for (c, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(DetectorError::NonFinite { row: r, col: c });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Newton gain of splitting a node with totals (g, h) into (gl, hl) and the
/// complement.
fn split_gain(gl: f64, hl: f64, gt: f64, ht: f64, lambda: f64) -> f64 {
    let gr = gt - gl;
    let hr = ht - hl;
    gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - gt * gt / (ht + lambda)
}

fn grow_tree(
    x: &[Vec<f64>],
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    cfg: &TreeConfig,
) -> RegressionTree {
    let n = x.len();
    let d = sorted.len();
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let mut node_of: Vec<u32> = vec![0; n];
    let mut level: Vec<u32> = vec![0];

    for depth_i in 0..=cfg.depth {
        if level.is_empty() {
            break;
        }
        let k = level.len();
        let mut slot_of: Vec<usize> = vec![usize::MAX; nodes.len()];
        for (s, &nid) in level.iter().enumerate() {
            slot_of[nid as usize] = s;
        }
        let mut totals = vec![(0.0f64, 0.0f64, 0usize); k];
        for i in 0..n {
            let s = slot_of[node_of[i] as usize];
            if s != usize::MAX {
                totals[s].0 += grad[i];
                totals[s].1 += hess[i];
                totals[s].2 += 1;
            }
        }

        let allow_split = depth_i < cfg.depth;
        let mut best: Vec<Option<Candidate>> = vec![None; k];
        if allow_split {
            for f in 0..d {
                // Running left-side stats per level slot: (G_L, H_L, count, last value).
                let mut run = vec![(0.0f64, 0.0f64, 0usize, 0.0f64); k];
                for &iu in &sorted[f] {
                    let i = iu as usize;
                    let s = slot_of[node_of[i] as usize];
                    if s == usize::MAX {
                        continue;
                    }
                    let v = x[i][f];
                    let (gl, hl, cnt, prev) = run[s];
                    if cnt > 0 && v > prev {
                        let (gt, ht, ct) = totals[s];
                        if cnt >= cfg.min_leaf && ct - cnt >= cfg.min_leaf {
                            let gain = split_gain(gl, hl, gt, ht, cfg.lambda);
                            let better = match best[s] {
                                None => gain > 1e-12,
                                Some(b) => gain > b.gain + 1e-12,
                            };
                            if better {
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold: 0.5 * (prev + v),
                                });
                            }
                        }
                    }
                    run[s] = (gl + grad[i], hl + hess[i], cnt + 1, v);
                }
            }
        }

        let mut split_of: Vec<Option<(usize, f64, u32, u32)>> = vec![None; k];
        let mut next_level = Vec::new();
        for (s, &nid) in level.iter().enumerate() {
            let (gt, ht, _) = totals[s];
            match best[s] {
                Some(c) => {
                    let li = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    let ri = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[nid as usize] =
                        Node::Split { feature: c.feature, threshold: c.threshold, left: li, right: ri };
                    split_of[s] = Some((c.feature, c.threshold, li as u32, ri as u32));
                    next_level.push(li as u32);
                    next_level.push(ri as u32);
                }
                None => {
                    nodes[nid as usize] = Node::Leaf { value: -gt / (ht + cfg.lambda) };
                }
            }
        }
        for i in 0..n {
            let s = slot_of[node_of[i] as usize];
            if s == usize::MAX {
                continue;
            }
            if let Some((f, thr, li, ri)) = split_of[s] {
                node_of[i] = if x[i][f] < thr { li } else { ri };
            }
        }
        level = next_level;
    }
    RegressionTree { nodes }
}
