//! Weighted Gini-impurity decision tree used by the forest and by boosting.
//!
//! Splits are axis-aligned `x[feature] <= threshold` with thresholds at the
//! midpoint between consecutive distinct values. Among equally good splits
//! the lowest feature index wins, then the lowest threshold.

use rand::seq::index;
use rand::Rng;

use crate::dataset::BinaryLabel;

use super::LabeledSet;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        label: BinaryLabel,
        samples: u32,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        samples: u32,
    },
}

impl Node {
    /// Training samples (bootstrap draws count with multiplicity) that
    /// reached this node.
    pub fn samples(&self) -> u32 {
        match *self {
            Node::Leaf { samples, .. } | Node::Split { samples, .. } => samples,
        }
    }
}

/// Flat tree; node 0 is the root and children always follow their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub(crate) nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f32]) -> BinaryLabel {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { label, .. } => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    at = if (x[feature as usize] as f64) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    /// Edges on the longest root-to-leaf path; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            max = max.max(depth[i]);
            if let Node::Split { left, right, .. } = *node {
                depth[left as usize] = depth[i] + 1;
                depth[right as usize] = depth[i] + 1;
            }
        }
        max
    }

    /// Checks the flat layout: children in range and after their parent,
    /// every non-root node referenced exactly once.
    pub(crate) fn check_structure(&self, dim: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut referenced = vec![0u32; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } = *node
            {
                if feature as usize >= dim {
                    return Err(format!("split on feature {feature} of {dim}"));
                }
                if threshold.is_nan() {
                    return Err("NaN threshold".into());
                }
                for child in [left, right] {
                    let c = child as usize;
                    if c <= i || c >= self.nodes.len() {
                        return Err(format!("node {i} has invalid child {child}"));
                    }
                    referenced[c] += 1;
                }
            }
        }
        if referenced[0] != 0 || referenced[1..].iter().any(|&r| r != 1) {
            return Err("nodes do not form a tree".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_sample_count: usize,
    /// Features drawn per node; `None` scans all of them.
    pub features_per_node: Option<usize>,
}

/// Grows a tree on `(row index, weight)` items; repeated indices are allowed.
pub(crate) fn grow<R: Rng>(
    set: &LabeledSet,
    items: Vec<(usize, f64)>,
    params: GrowParams,
    rng: &mut R,
) -> DecisionTree {
    let mut nodes = Vec::new();
    build(set, items, 0, params, rng, &mut nodes);
    DecisionTree { nodes }
}

fn build<R: Rng>(
    set: &LabeledSet,
    items: Vec<(usize, f64)>,
    depth: usize,
    params: GrowParams,
    rng: &mut R,
    nodes: &mut Vec<Node>,
) -> u32 {
    let id = nodes.len() as u32;
    let samples = items.len() as u32;
    let (w_pos, w_neg) = class_weights(set, &items);
    let label = if w_pos > w_neg {
        BinaryLabel::Neutral
    } else {
        BinaryLabel::NonNeutral
    };
    nodes.push(Node::Leaf { label, samples });

    let pure = items
        .iter()
        .all(|&(i, _)| set.label(i) == set.label(items[0].0));
    if items.is_empty() || pure || depth >= params.max_depth || items.len() < params.min_sample_count {
        return id;
    }

    let features: Vec<usize> = match params.features_per_node {
        Some(k) if k < set.dim() => {
            let mut f = index::sample(rng, set.dim(), k).into_vec();
            f.sort_unstable();
            f
        }
        _ => (0..set.dim()).collect(),
    };
    let Some((feature, threshold)) = best_split(set, &items, &features, w_pos, w_neg) else {
        return id;
    };

    let (left_items, right_items): (Vec<_>, Vec<_>) = items
        .into_iter()
        .partition(|&(i, _)| (set.row(i)[feature] as f64) <= threshold);
    let left = build(set, left_items, depth + 1, params, rng, nodes);
    let right = build(set, right_items, depth + 1, params, rng, nodes);
    nodes[id as usize] = Node::Split {
        feature: feature as u32,
        threshold,
        left,
        right,
        samples,
    };
    id
}

fn class_weights(set: &LabeledSet, items: &[(usize, f64)]) -> (f64, f64) {
    items.iter().fold((0.0, 0.0), |(p, n), &(i, w)| match set.label(i) {
        BinaryLabel::Neutral => (p + w, n),
        BinaryLabel::NonNeutral => (p, n + w),
    })
}

fn gini(pos: f64, neg: f64) -> f64 {
    let total = pos + neg;
    if total <= 0.0 {
        return 0.0;
    }
    let (p, q) = (pos / total, neg / total);
    1.0 - p * p - q * q
}

/// Split minimizing the weighted child impurity.
fn best_split(
    set: &LabeledSet,
    items: &[(usize, f64)],
    features: &[usize],
    w_pos: f64,
    w_neg: f64,
) -> Option<(usize, f64)> {
    let total = w_pos + w_neg;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<usize> = (0..items.len()).collect();

    for &f in features {
        let value = |k: usize| set.row(items[k].0)[f] as f64;
        order.sort_by(|&a, &b| value(a).total_cmp(&value(b)).then(a.cmp(&b)));

        let (mut lp, mut ln) = (0.0, 0.0);
        for w in 0..order.len() - 1 {
            let (i, wt) = items[order[w]];
            match set.label(i) {
                BinaryLabel::Neutral => lp += wt,
                BinaryLabel::NonNeutral => ln += wt,
            }
            let (v, next) = (value(order[w]), value(order[w + 1]));
            if v == next {
                continue;
            }
            let (rp, rn) = (w_pos - lp, w_neg - ln);
            let score = if total > 0.0 {
                ((lp + ln) * gini(lp, ln) + (rp + rn) * gini(rp, rn)) / total
            } else {
                0.0
            };
            let threshold = v + (next - v) / 2.0;
            if best.is_none_or(|(s, _, _)| score < s) {
                best = Some((score, f, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}
