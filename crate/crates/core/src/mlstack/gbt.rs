//! Native gradient-boosted trees on the logistic loss.
//!
//! Boosting is second-order (Newton leaf values g/h), with exact greedy
//! splits: every feature is presorted once and each tree level scans every
//! candidate threshold. No histogramming, no subsampling, no randomness —
//! training is a pure function of the dataset order and hyperparameters.
//! Ties between equally good splits resolve to the lowest feature index,
//! then the lowest threshold.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlstack::features::{features_from_row, FEATURE_COUNT};
use crate::mlstack::logreg::check_training_set;
use crate::mlstack::metrics;
use crate::mlstack::model::{sigmoid, Model, ModelKind, ModelMetadata, ModelParams, Tree, TreeNode};
use crate::simulation::FeatureRow;

/// Gradient-boosting hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtHyper {
    /// Maximum boosting rounds (fewer when no split has gain).
    pub trees: usize,
    /// Maximum split levels per tree.
    pub depth: usize,
    pub learning_rate: f64,
    /// Minimum rows on each side of a split.
    pub min_leaf: usize,
}

impl Default for GbtHyper {
    fn default() -> GbtHyper {
        GbtHyper { trees: 200, depth: 4, learning_rate: 0.1, min_leaf: 50 }
    }
}

/// Ridge term on leaf Newton steps; small enough to keep them essentially
/// pure g/h while guarding division.
const LAMBDA: f64 = 1e-6;
/// Gains at or below this threshold do not split.
const MIN_GAIN: f64 = 1e-12;
/// Assignment marker for rows whose node is already a finalized leaf.
const DEAD: u32 = u32::MAX;

/// Trains on dataset rows (features rebuilt via [`features_from_row`]).
pub fn train_gbt(rows: &[FeatureRow], hyper: &GbtHyper) -> Result<Model> {
    let x: Vec<[f64; FEATURE_COUNT]> = rows.iter().map(|r| *features_from_row(r).values()).collect();
    let y: Vec<u8> = rows.iter().map(|r| r.target).collect();
    train_gbt_matrix(&x, &y, hyper)
}

/// Trains on an explicit feature matrix.
pub fn train_gbt_matrix(x: &[[f64; FEATURE_COUNT]], y: &[u8], hyper: &GbtHyper) -> Result<Model> {
    check_training_set(x, y)?;
    if hyper.trees == 0
        || hyper.depth == 0
        || !(hyper.learning_rate > 0.0 && hyper.learning_rate <= 1.0)
        || hyper.min_leaf == 0
    {
        return Err(Error::invalid("gbt hyperparameters out of range"));
    }
    let n = x.len();
    let prior = y.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let bias = (prior / (1.0 - prior)).ln();

    // One global presort per feature: indices by (value, index).
    let orders: Vec<Vec<u32>> = (0..FEATURE_COUNT)
        .map(|j| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_unstable_by(|&a, &b| {
                x[a as usize][j]
                    .partial_cmp(&x[b as usize][j])
                    .expect("finite features")
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut margin = vec![bias; n];
    let mut trees = Vec::new();
    for _ in 0..hyper.trees {
        let mut g = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for (&m, &yi) in margin.iter().zip(y) {
            let p = sigmoid(m);
            g.push(p - f64::from(yi));
            h.push((p * (1.0 - p)).max(1e-12));
        }
        match grow_tree(x, &orders, &g, &h, hyper) {
            // No split has gain at the root: boosting has converged.
            None => break,
            Some(tree) => {
                for (m, row) in margin.iter_mut().zip(x) {
                    *m += tree.predict(row);
                }
                trees.push(tree);
            }
        }
    }

    let mut metadata = ModelMetadata::new(
        serde_json::json!({
            "trees": hyper.trees,
            "depth": hyper.depth,
            "learning_rate": hyper.learning_rate,
            "min_leaf": hyper.min_leaf,
        }),
        n,
    );
    let model = Model::new(ModelKind::Gbt, None, ModelParams::Trees { bias, trees }, metadata.clone())?;
    metadata.metrics = Some(metrics::evaluate(&model, x, y)?);
    Model::new(ModelKind::Gbt, None, model.params().clone(), metadata)
}

struct ActiveNode {
    tree_idx: usize,
    g_sum: f64,
    h_sum: f64,
    count: usize,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Grows one tree level-wise; returns `None` when the root itself has no
/// positive-gain split.
fn grow_tree(
    x: &[[f64; FEATURE_COUNT]],
    orders: &[Vec<u32>],
    g: &[f64],
    h: &[f64],
    hyper: &GbtHyper,
) -> Option<Tree> {
    let n = x.len();
    let leaf_value = |node: &ActiveNode| -node.g_sum / (node.h_sum + LAMBDA) * hyper.learning_rate;

    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    let mut active = vec![ActiveNode {
        tree_idx: 0,
        g_sum: g.iter().sum(),
        h_sum: h.iter().sum(),
        count: n,
    }];
    let mut assignment = vec![0u32; n];

    for _ in 0..hyper.depth {
        // Best candidate per active node, scanning features in index order
        // and thresholds ascending; strict improvement keeps the first of
        // any tied maxima.
        let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
        for (feature, order) in orders.iter().enumerate() {
            let mut g_run = vec![0.0_f64; active.len()];
            let mut h_run = vec![0.0_f64; active.len()];
            let mut cnt_run = vec![0usize; active.len()];
            let mut prev_val = vec![f64::NAN; active.len()];
            for &i in order {
                let i = i as usize;
                let slot = assignment[i];
                if slot == DEAD {
                    continue;
                }
                let slot = slot as usize;
                let v = x[i][feature];
                let node = &active[slot];
                if !prev_val[slot].is_nan()
                    && v > prev_val[slot]
                    && cnt_run[slot] >= hyper.min_leaf
                    && node.count - cnt_run[slot] >= hyper.min_leaf
                {
                    let gl = g_run[slot];
                    let hl = h_run[slot];
                    let gr = node.g_sum - gl;
                    let hr = node.h_sum - hl;
                    let gain = gl * gl / (hl + LAMBDA) + gr * gr / (hr + LAMBDA)
                        - node.g_sum * node.g_sum / (node.h_sum + LAMBDA);
                    if gain > MIN_GAIN && best[slot].map_or(true, |b| gain > b.gain) {
                        best[slot] = Some(Candidate {
                            gain,
                            feature,
                            threshold: (prev_val[slot] + v) / 2.0,
                        });
                    }
                }
                g_run[slot] += g[i];
                h_run[slot] += h[i];
                cnt_run[slot] += 1;
                prev_val[slot] = v;
            }
        }

        if nodes.len() == 1 && best[0].is_none() {
            return None;
        }

        // Materialize splits; nodes without one become leaves now.
        struct SplitPlan {
            feature: usize,
            threshold: f64,
            left_slot: usize,
        }
        let mut plans: Vec<Option<SplitPlan>> = Vec::with_capacity(active.len());
        let mut next_active = Vec::new();
        for (slot, node) in active.iter().enumerate() {
            match best[slot] {
                None => {
                    nodes[node.tree_idx] = TreeNode::Leaf { value: leaf_value(node) };
                    plans.push(None);
                }
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes.push(TreeNode::Leaf { value: 0.0 });
                    nodes[node.tree_idx] = TreeNode::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    };
                    plans.push(Some(SplitPlan {
                        feature: c.feature,
                        threshold: c.threshold,
                        left_slot: next_active.len(),
                    }));
                    next_active.push(ActiveNode { tree_idx: left, g_sum: 0.0, h_sum: 0.0, count: 0 });
                    next_active.push(ActiveNode {
                        tree_idx: left + 1,
                        g_sum: 0.0,
                        h_sum: 0.0,
                        count: 0,
                    });
                }
            }
        }

        // Route rows to their child slots and accumulate child stats.
        for i in 0..n {
            let slot = assignment[i];
            if slot == DEAD {
                continue;
            }
            match &plans[slot as usize] {
                None => assignment[i] = DEAD,
                Some(plan) => {
                    let child = if x[i][plan.feature] <= plan.threshold {
                        plan.left_slot
                    } else {
                        plan.left_slot + 1
                    };
                    assignment[i] = child as u32;
                    let stats = &mut next_active[child];
                    stats.g_sum += g[i];
                    stats.h_sum += h[i];
                    stats.count += 1;
                }
            }
        }
        active = next_active;
        if active.is_empty() {
            break;
        }
    }
    // Depth exhausted: remaining nodes become leaves.
    for node in &active {
        nodes[node.tree_idx] = TreeNode::Leaf { value: leaf_value(node) };
    }
    Some(Tree { nodes })
}
