//! Multi-layer nested aggregation along a tree, and tree planning.
//!
//! Layer 1 holds the sub-models. Each node of layer `ν ≥ 2` aggregates a set
//! of child nodes of layer `ν − 1`, using only the covariances between those
//! children, so no matrix larger than the layer-one `p × p` is ever formed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::blue_weights;
use crate::error::{Error, Result};
use crate::gp::{LayerOne, SubModelBank};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTree {
    leaves: usize,
    layers: Vec<Vec<Vec<usize>>>,
}

/// Child sets of every layer above the sub-models, validated at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct AggregationTree {
    leaves: usize,
    // layers[l][i] = children (indices into layer l + 1, counting sub-models as layer 1) of node i of layer l + 2
    layers: Vec<Vec<Vec<usize>>>,
}

impl TryFrom<RawTree> for AggregationTree {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        Self::from_layers(raw.leaves, raw.layers)
    }
}

impl From<AggregationTree> for RawTree {
    fn from(t: AggregationTree) -> Self {
        RawTree {
            leaves: t.leaves,
            layers: t.layers,
        }
    }
}

impl AggregationTree {
    /// Tree over `leaves` sub-models; `layers[0]` lists the children of the
    /// nodes of layer 2, and the last layer must hold a single root.
    pub fn from_layers(leaves: usize, layers: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        if leaves == 0 {
            return Err(Error::InvalidTree("no sub-models".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidHeight(1));
        }
        let mut below = leaves;
        for (l, layer) in layers.iter().enumerate() {
            if layer.is_empty() {
                return Err(Error::InvalidTree(format!("layer {} is empty", l + 2)));
            }
            let mut covered = vec![false; below];
            for (i, children) in layer.iter().enumerate() {
                if children.is_empty() {
                    return Err(Error::InvalidTree(format!("node {i} of layer {} has no children", l + 2)));
                }
                for &c in children {
                    if c >= below {
                        return Err(Error::InvalidTree(format!(
                            "child {c} of node {i} in layer {} is out of range (layer {} has {below} nodes)",
                            l + 2,
                            l + 1
                        )));
                    }
                    covered[c] = true;
                }
                let mut sorted = children.clone();
                sorted.sort_unstable();
                if sorted.windows(2).any(|w| w[0] == w[1]) {
                    return Err(Error::InvalidTree(format!("node {i} of layer {} repeats a child", l + 2)));
                }
            }
            if let Some(orphan) = covered.iter().position(|c| !c) {
                return Err(Error::InvalidTree(format!("node {orphan} of layer {} has no parent", l + 1)));
            }
            below = layer.len();
        }
        if below != 1 {
            return Err(Error::InvalidTree(format!("top layer has {below} nodes instead of a single root")));
        }
        Ok(Self { leaves, layers })
    }

    /// One root aggregating all `p` sub-models.
    pub fn two_layer(p: usize) -> Result<Self> {
        Self::from_layers(p, vec![vec![(0..p).collect()]])
    }

    /// Consecutive blocks of `c` nodes for each entry of `intermediate`, then a root over what remains.
    pub fn regular(leaves: usize, intermediate: &[usize]) -> Result<Self> {
        let mut layers = Vec::new();
        let mut below = leaves;
        for &c in intermediate {
            if c < 1 {
                return Err(Error::InvalidTree("child count must be positive".into()));
            }
            if below <= 1 {
                break;
            }
            let nodes = below.div_ceil(c);
            layers.push((0..nodes).map(|i| (i * c..((i + 1) * c).min(below)).collect()).collect());
            below = nodes;
        }
        layers.push(vec![(0..below).collect()]);
        Self::from_layers(leaves, layers)
    }

    /// Height `ν̄`, counting the sub-model layer.
    pub fn height(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves
    }

    /// Node counts `n_1, …, n_ν̄`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.leaves)
            .chain(self.layers.iter().map(Vec::len))
            .collect()
    }

    /// Child sets of layer `ν` (2 ≤ ν ≤ ν̄).
    pub fn children(&self, nu: usize) -> &[Vec<usize>] {
        &self.layers[nu - 2]
    }

    /// Exact operation counts of one prediction on this tree, given the group sizes.
    pub fn complexity(&self, group_sizes: &[usize], alpha: f64, beta: f64) -> Complexity {
        let cube = |c: usize| (c as f64).powi(3);
        let mut c_alpha: f64 = alpha * group_sizes.iter().map(|&c| cube(c)).sum::<f64>();
        let pair_sum = |sizes: &[usize]| {
            let s: f64 = sizes.iter().map(|&c| c as f64).sum();
            let s2: f64 = sizes.iter().map(|&c| (c * c) as f64).sum();
            0.5 * (s * s - s2)
        };
        let mut c_beta = beta * pair_sum(group_sizes);
        let mut c_max = group_sizes.iter().copied().max().unwrap_or(0);
        for layer in &self.layers {
            let sizes: Vec<usize> = layer.iter().map(Vec::len).collect();
            c_alpha += alpha * sizes.iter().map(|&c| cube(c)).sum::<f64>();
            c_beta += beta * pair_sum(&sizes);
            c_max = c_max.max(sizes.iter().copied().max().unwrap_or(0));
        }
        let sizes = self.layer_sizes();
        Complexity {
            c_alpha,
            c_beta,
            storage: storage(c_max as f64, sizes[0] as f64, sizes.get(1).copied().unwrap_or(1) as f64),
        }
    }
}

/// Result of nested aggregation at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedPrediction {
    pub mean: f64,
    pub variance: f64,
    /// Coefficients of the root predictor on the sub-models: `M_ν̄(x) = rootᵀ M_1(x)`.
    pub root_weights: DVector<f64>,
    /// Some node fell back to a pseudo-inverse.
    pub degenerate: bool,
}

/// Runs the layers of the nested algorithm on layer-one quantities.
pub fn nested_from_layer_one(l1: &LayerOne, tree: &AggregationTree) -> Result<NestedPrediction> {
    let p = l1.len();
    if tree.leaf_count() != p {
        return Err(Error::InvalidTree(format!(
            "tree has {} leaves but there are {p} sub-models",
            tree.leaf_count()
        )));
    }
    let mut m = l1.means.clone();
    let mut k = l1.cov.clone();
    // rows: nodes of the current layer, columns: sub-models
    let mut coef = DMatrix::<f64>::identity(p, p);
    let mut degenerate = false;
    for (l, layer) in tree.layers.iter().enumerate() {
        let nodes = layer.len();
        let mut alphas = Vec::with_capacity(nodes);
        let mut m_next = DVector::zeros(nodes);
        let mut k_next = DMatrix::zeros(nodes, nodes);
        let mut coef_next = DMatrix::zeros(nodes, p);
        for (i, children) in layer.iter().enumerate() {
            let k_sub = k.select_rows(children).select_columns(children);
            let k_vec = if l == 0 {
                DVector::from_iterator(children.len(), children.iter().map(|&c| l1.cov_y[c]))
            } else {
                k_sub.diagonal()
            };
            let blue = blue_weights(&k_sub, &k_vec)?;
            degenerate |= blue.degenerate;
            let alpha = blue.weights;
            m_next[i] = alpha.dot(&DVector::from_iterator(children.len(), children.iter().map(|&c| m[c])));
            k_next[(i, i)] = alpha.dot(&k_vec);
            for (a, &c) in children.iter().enumerate() {
                if alpha[a] != 0.0 {
                    for col in 0..p {
                        coef_next[(i, col)] += alpha[a] * coef[(c, col)];
                    }
                }
            }
            for (j, other) in layer.iter().enumerate().take(i) {
                let block = k.select_rows(children).select_columns(other);
                let alpha_j: &DVector<f64> = &alphas[j];
                let v = (alpha.transpose() * block * alpha_j)[(0, 0)];
                k_next[(i, j)] = v;
                k_next[(j, i)] = v;
            }
            alphas.push(alpha);
        }
        m = m_next;
        k = k_next;
        coef = coef_next;
    }
    Ok(NestedPrediction {
        mean: m[0],
        variance: (l1.kxx - k[(0, 0)]).clamp(0.0, l1.kxx.max(0.0)),
        root_weights: coef.row(0).transpose(),
        degenerate,
    })
}

pub fn nested_predict(bank: &SubModelBank, tree: &AggregationTree, x: &[f64]) -> Result<NestedPrediction> {
    nested_from_layer_one(&bank.predict(x)?, tree)
}

/// Nested predictions at every row of `xq`; points are processed in parallel.
pub fn nested_predict_batch(bank: &SubModelBank, tree: &AggregationTree, xq: &DMatrix<f64>) -> Result<Vec<NestedPrediction>> {
    if tree.leaf_count() != bank.group_count() {
        return Err(Error::InvalidTree(format!(
            "tree has {} leaves but the bank has {} sub-models",
            tree.leaf_count(),
            bank.group_count()
        )));
    }
    bank.predict_batch(xq)?
        .par_iter()
        .map(|l1| nested_from_layer_one(l1, tree))
        .collect()
}

/// Operation counts and storage footprint of one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complexity {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub storage: f64,
}

fn storage(c_max: f64, n1: f64, n2: f64) -> f64 {
    (c_max * (c_max + 5.0) + n1 * (n1 + 5.0) + n2 * (n2 + 3.0)) / 2.0
}

/// Closed-form costs of a regular tree with (possibly fractional) child counts
/// `c_1, …, c_ν̄` over `n` observations, where `n_ν = n / (c_1 ⋯ c_ν)`.
pub fn complexity_estimate(n: f64, child_counts: &[f64], alpha: f64, beta: f64) -> Complexity {
    let mut nodes = n;
    let mut sizes = Vec::with_capacity(child_counts.len());
    let (mut c_alpha, mut c_beta) = (0.0, 0.0);
    for &c in child_counts {
        nodes /= c;
        sizes.push(nodes);
        c_alpha += alpha * c.powi(3) * nodes;
        c_beta += 0.5 * beta * nodes * (nodes - 1.0) * c * c;
    }
    let c_max = child_counts.iter().copied().fold(0.0, f64::max);
    Complexity {
        c_alpha,
        c_beta,
        storage: storage(c_max, sizes.first().copied().unwrap_or(1.0), sizes.get(1).copied().unwrap_or(1.0)),
    }
}

/// Tree shapes offered by [`plan_tree`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "height")]
pub enum PlanMode {
    /// Two layers with `c_1 = c_2 = √n`.
    TwoLayerSqrt,
    /// `c_ν = n^{1/ν̄}` on every layer.
    Equilibrated(usize),
    /// Child counts minimizing the aggregation cost for height `ν̄`.
    Optimal(usize),
}

/// Output of [`plan_tree`].
#[derive(Debug, Clone, PartialEq)]
pub struct TreePlan {
    /// Number of sub-models `p = ⌈n / c_1⌉`.
    pub groups: usize,
    /// Rounded child counts `c_1, …, c_ν̄` (`c_1` is the sub-model size).
    pub child_counts: Vec<usize>,
    /// Child counts before rounding.
    pub exact_counts: Vec<f64>,
    /// Regular tree over the `groups` sub-models; the root absorbs any remainder.
    pub tree: AggregationTree,
}

const DELTA: f64 = 1.5;

/// Child counts of the cost-optimal regular tree: `c_ν = δ (δ^{−ν̄} n)^{δ^{ν−1} / (2(δ^{ν̄} − 1))}`, `δ = 3/2`.
pub fn optimal_child_counts(n: f64, height: usize) -> Vec<f64> {
    let h = height as i32;
    let denom = 2.0 * (DELTA.powi(h) - 1.0);
    (1..=h)
        .map(|nu| DELTA * (DELTA.powi(-h) * n).powf(DELTA.powi(nu - 1) / denom))
        .collect()
}

/// Chooses group size and tree shape for `n` observations. Fractional child
/// counts are rounded to the nearest integer, at least 2.
pub fn plan_tree(n: usize, mode: PlanMode) -> Result<TreePlan> {
    if n < 4 {
        return Err(Error::InvalidData(format!("tree planning needs at least 4 observations, got {n}")));
    }
    let nf = n as f64;
    let exact = match mode {
        PlanMode::TwoLayerSqrt => vec![nf.sqrt(); 2],
        PlanMode::Equilibrated(h) | PlanMode::Optimal(h) if h < 2 => return Err(Error::InvalidHeight(h)),
        PlanMode::Equilibrated(h) => vec![nf.powf(1.0 / h as f64); h],
        PlanMode::Optimal(h) => optimal_child_counts(nf, h),
    };
    let counts: Vec<usize> = exact.iter().map(|c| (c.round() as usize).max(2)).collect();
    let groups = n.div_ceil(counts[0]);
    let tree = AggregationTree::regular(groups, &counts[1..counts.len() - 1])?;
    Ok(TreePlan {
        groups,
        child_counts: counts,
        exact_counts: exact,
        tree,
    })
}
