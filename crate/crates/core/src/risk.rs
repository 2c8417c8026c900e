//! Bayesian sum-of-trees risk model for `Pr(Y = 1 | x)`.
//!
//! Each posterior draw is an ensemble of `L` regression trees whose summed
//! output, plus a fixed offset, passes through the standard normal CDF. The
//! model is fit by Bayesian backfitting with latent-variable (probit)
//! augmentation: `z_i ~ N(offset + Σ_l g(x_i; T_l, μ_l), 1)` with `y_i = 1`
//! iff `z_i > 0`. Trees move by grow/prune Metropolis-Hastings steps under the
//! usual depth-penalizing prior `α (1 + d)^-β`; leaf values have conjugate
//! `N(0, σ_μ²)` priors with `σ_μ = 3 / (k √L)`.
//!
//! Downstream code only relies on the [`RiskModel`] trait, so other
//! probability models (e.g. a log-linear two-class ensemble) can slot in.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CodeMatrix, MatrixError};
use crate::stats::{norm_cdf, norm_ppf, stream_rng, truncated_normal};

/// Probabilities are kept this far from 0 and 1.
pub const PROB_FLOOR: f64 = 1e-15;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("invalid risk-model config: {0}")]
    InvalidConfig(String),
    #[error("outcome has a single class; both classes are required")]
    SingleClassOutcome,
    #[error("need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("outcome vector has {got} entries for {rows} rows")]
    LengthMismatch { rows: usize, got: usize },
    #[error("non-finite leaf value at iteration {iteration}, tree {tree} (n = {n}, residual sum = {sum})")]
    NonFiniteLeaf {
        iteration: usize,
        tree: usize,
        n: usize,
        sum: f64,
    },
    #[error("response vector has {got} entries, model expects {expected}")]
    MissingResponse { expected: usize, got: usize },
    #[error("posterior has no draws")]
    NoDraws,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Minimum training rows accepted by [`fit_risk_model`].
pub const MIN_ROWS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig {
    pub num_trees: usize,
    pub burn_in: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: u64,
    /// Leaf shrinkage `k` in `σ_μ = 3 / (k √L)`; larger means stronger
    /// pull toward the base rate.
    pub leaf_shrinkage: f64,
    /// Tree prior: probability a node at depth `d` splits is `alpha (1+d)^-beta`.
    pub alpha: f64,
    pub beta: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        Self {
            num_trees: 50,
            burn_in: 250,
            draws: 1000,
            thin: 1,
            seed: 1,
            leaf_shrinkage: 2.0,
            alpha: 0.95,
            beta: 2.0,
        }
    }
}

impl RiskConfig {
    fn validate(&self) -> Result<(), RiskError> {
        let bad = |m: &str| Err(RiskError::InvalidConfig(m.into()));
        if self.num_trees == 0 {
            return bad("num_trees must be at least 1");
        }
        if self.draws == 0 {
            return bad("draws must be at least 1");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.leaf_shrinkage > 0.0 && self.leaf_shrinkage.is_finite()) {
            return bad("leaf_shrinkage must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.beta >= 0.0) {
            return bad("tree prior needs 0 < alpha < 1 and beta >= 0");
        }
        Ok(())
    }

    fn leaf_sd(&self) -> f64 {
        3.0 / (self.leaf_shrinkage * (self.num_trees as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleNode {
    Split {
        feature: usize,
        /// Go left iff `code <= cutpoint`.
        cutpoint: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// One regression tree of an ensemble; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleTree {
    pub nodes: Vec<EnsembleNode>,
}

impl EnsembleTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![EnsembleNode::Leaf { value }],
        }
    }

    pub fn eval(&self, code_at: &impl Fn(usize) -> i32) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                EnsembleNode::Leaf { value } => return *value,
                EnsembleNode::Split {
                    feature,
                    cutpoint,
                    left,
                    right,
                } => {
                    idx = if (code_at(*feature) as f64) <= *cutpoint {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, EnsembleNode::Leaf { .. }))
            .count()
    }
}

/// One posterior draw θ_Y: offset plus `L` trees on the latent probit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleDraw {
    pub offset: f64,
    pub trees: Vec<EnsembleTree>,
}

impl TreeEnsembleDraw {
    pub fn latent(&self, code_at: &impl Fn(usize) -> i32) -> f64 {
        self.offset + self.trees.iter().map(|t| t.eval(code_at)).sum::<f64>()
    }

    /// `Pr(Y = 1 | x)` for the response vector accessed through `code_at`.
    pub fn prob(&self, code_at: &impl Fn(usize) -> i32) -> f64 {
        link(self.latent(code_at))
    }

    /// `(Pr(Y = 0 | x), Pr(Y = 1 | x))`.
    pub fn class_probs(&self, code_at: &impl Fn(usize) -> i32) -> (f64, f64) {
        let p1 = self.prob(code_at);
        (1.0 - p1, p1)
    }
}

/// Probit link, clamped strictly inside (0, 1).
pub fn link(latent: f64) -> f64 {
    norm_cdf(latent).clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `Pr(Ỹ = 1 | x, θ_Y)` for a response vector aligned with the model features.
pub fn predict_prob(draw: &TreeEnsembleDraw, x: &[i32]) -> f64 {
    draw.prob(&|f| x[f])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_rows: usize,
    pub base_rate: f64,
    pub mean_leaves_per_tree: f64,
    /// Posterior mean probability averaged over training rows, per draw.
    pub trace: Vec<f64>,
}

/// Posterior draws of the risk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPosterior {
    pub features: Vec<String>,
    pub draws: Vec<TreeEnsembleDraw>,
    pub config: Option<RiskConfig>,
    pub summary: Option<TrainingSummary>,
}

/// Abstract Bayesian risk model: a set of posterior draws, each mapping a
/// response vector to `Pr(Y = 1 | x)`.
pub trait RiskModel: Sync {
    fn features(&self) -> &[String];
    fn n_draws(&self) -> usize;
    /// Probability under draw `j`; `code_at(f)` yields the code of feature `f`.
    fn draw_prob(&self, j: usize, code_at: &dyn Fn(usize) -> i32) -> f64;
}

impl RiskModel for RiskPosterior {
    fn features(&self) -> &[String] {
        &self.features
    }

    fn n_draws(&self) -> usize {
        self.draws.len()
    }

    fn draw_prob(&self, j: usize, code_at: &dyn Fn(usize) -> i32) -> f64 {
        self.draws[j].prob(&|f| code_at(f))
    }
}

impl RiskPosterior {
    pub fn from_draws(features: Vec<String>, draws: Vec<TreeEnsembleDraw>) -> Result<Self, RiskError> {
        if draws.is_empty() {
            return Err(RiskError::NoDraws);
        }
        Ok(Self {
            features,
            draws,
            config: None,
            summary: None,
        })
    }

    /// Keep only the first `d` draws.
    pub fn truncated(&self, d: usize) -> Self {
        let mut out = self.clone();
        out.draws.truncate(d);
        out
    }

    pub fn predict_prob(&self, j: usize, x: &[i32]) -> Result<f64, RiskError> {
        self.check_len(x)?;
        Ok(predict_prob(&self.draws[j], x))
    }

    fn check_len(&self, x: &[i32]) -> Result<(), RiskError> {
        if x.len() < self.features.len() {
            return Err(RiskError::MissingResponse {
                expected: self.features.len(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// `Ē(Ỹ | x)`: the arithmetic mean of the per-draw probabilities.
pub fn posterior_mean_prob<M: RiskModel + ?Sized>(model: &M, x: &[i32]) -> Result<f64, RiskError> {
    let d = model.n_draws();
    if d == 0 {
        return Err(RiskError::NoDraws);
    }
    if x.len() < model.features().len() {
        return Err(RiskError::MissingResponse {
            expected: model.features().len(),
            got: x.len(),
        });
    }
    let sum: f64 = (0..d).map(|j| model.draw_prob(j, &|f| x[f])).sum();
    Ok(sum / d as f64)
}

/// Posterior-mean probabilities for every row of `data`, whose columns must
/// include the model features.
pub fn posterior_mean_probs<M: RiskModel + ?Sized>(
    model: &M,
    data: &CodeMatrix,
) -> Result<Vec<f64>, RiskError> {
    use rayon::prelude::*;
    let d = model.n_draws();
    if d == 0 {
        return Err(RiskError::NoDraws);
    }
    let cols = data.column_indices(model.features())?;
    Ok((0..data.n_rows())
        .into_par_iter()
        .map(|i| {
            let code_at = |f: usize| data.code(i, cols[f]);
            (0..d).map(|j| model.draw_prob(j, &code_at)).sum::<f64>() / d as f64
        })
        .collect())
}

/// Fit the sum-of-trees probit model to item responses and binary outcomes.
pub fn fit_risk_model(
    data: &CodeMatrix,
    outcomes: &[u8],
    config: &RiskConfig,
) -> Result<RiskPosterior, RiskError> {
    config.validate()?;
    let n = data.n_rows();
    if outcomes.len() != n {
        return Err(RiskError::LengthMismatch {
            rows: n,
            got: outcomes.len(),
        });
    }
    let positives = outcomes.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(RiskError::SingleClassOutcome);
    }
    if n < MIN_ROWS {
        return Err(RiskError::InsufficientData {
            needed: MIN_ROWS,
            got: n,
        });
    }
    let base_rate = positives as f64 / n as f64;
    let offset = norm_ppf(base_rate);
    let mut rng = stream_rng(config.seed, 1);
    let mut sampler = Backfitter::new(data, config, offset);

    let y1: Vec<bool> = outcomes.iter().map(|&y| y == 1).collect();
    let mut latent: Vec<f64> = y1.iter().map(|&y| if y { 0.5 } else { -0.5 }).collect();
    let total = config.burn_in + config.thin * config.draws;
    let mut draws = Vec::with_capacity(config.draws);
    let mut trace = Vec::with_capacity(config.draws);
    let mut leaves = 0usize;
    for it in 1..=total {
        for i in 0..n {
            let mean = offset + sampler.total_fit[i];
            latent[i] = if y1[i] {
                truncated_normal(&mut rng, mean, 0.0, f64::INFINITY)
            } else {
                truncated_normal(&mut rng, mean, f64::NEG_INFINITY, 0.0)
            };
        }
        sampler.sweep(&latent, it, &mut rng)?;
        if it > config.burn_in && (it - config.burn_in) % config.thin == 0 {
            let draw = sampler.snapshot();
            leaves += draw.trees.iter().map(EnsembleTree::n_leaves).sum::<usize>();
            trace.push(
                sampler.total_fit.iter().map(|&g| link(offset + g)).sum::<f64>() / n as f64,
            );
            draws.push(draw);
        }
    }
    let summary = TrainingSummary {
        n_rows: n,
        base_rate,
        mean_leaves_per_tree: leaves as f64 / (draws.len() * config.num_trees) as f64,
        trace,
    };
    Ok(RiskPosterior {
        features: data.names().to_vec(),
        draws,
        config: Some(*config),
        summary: Some(summary),
    })
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Go left iff level index <= this.
        level: u8,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct McmcTree {
    nodes: Vec<Node>,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    free: Vec<usize>,
}

impl McmcTree {
    fn stump() -> Self {
        Self {
            nodes: vec![Node::Leaf { value: 0.0 }],
            parent: vec![None],
            depth: vec![0],
            free: Vec::new(),
        }
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        // Free slots are never reachable; walk from the root instead.
        let mut stack = vec![0usize];
        std::iter::from_fn(move || {
            let idx = stack.pop()?;
            if let Node::Split { left, right, .. } = self.nodes[idx] {
                stack.push(right);
                stack.push(left);
            }
            Some(idx)
        })
    }

    fn leaves(&self) -> Vec<usize> {
        self.live()
            .filter(|&i| matches!(self.nodes[i], Node::Leaf { .. }))
            .collect()
    }

    /// Internal nodes whose children are both leaves.
    fn prunable(&self) -> Vec<usize> {
        self.live()
            .filter(|&i| match self.nodes[i] {
                Node::Split { left, right, .. } => {
                    matches!(self.nodes[left], Node::Leaf { .. })
                        && matches!(self.nodes[right], Node::Leaf { .. })
                }
                _ => false,
            })
            .collect()
    }

    fn is_stump(&self) -> bool {
        matches!(self.nodes[0], Node::Leaf { .. })
    }

    fn route(&self, levels: &[&[u8]], i: usize) -> usize {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split {
                    feature,
                    level,
                    left,
                    right,
                } => idx = if levels[feature][i] <= level { left } else { right },
            }
        }
    }

    fn alloc(&mut self, node: Node, parent: usize) -> usize {
        let depth = self.depth[parent] + 1;
        if let Some(idx) = self.free.pop() {
            self.nodes[idx] = node;
            self.parent[idx] = Some(parent);
            self.depth[idx] = depth;
            idx
        } else {
            self.nodes.push(node);
            self.parent.push(Some(parent));
            self.depth.push(depth);
            self.nodes.len() - 1
        }
    }

    fn grow(&mut self, leaf: usize, feature: usize, level: u8) -> (usize, usize) {
        let l = self.alloc(Node::Leaf { value: 0.0 }, leaf);
        let r = self.alloc(Node::Leaf { value: 0.0 }, leaf);
        self.nodes[leaf] = Node::Split {
            feature,
            level,
            left: l,
            right: r,
        };
        (l, r)
    }

    fn prune(&mut self, node: usize) {
        if let Node::Split { left, right, .. } = self.nodes[node] {
            self.free.push(left);
            self.free.push(right);
            self.nodes[node] = Node::Leaf { value: 0.0 };
        }
    }

    fn to_ensemble_tree(&self, supports: &[Vec<i32>]) -> EnsembleTree {
        let mut out = Vec::new();
        fn rec(t: &McmcTree, idx: usize, supports: &[Vec<i32>], out: &mut Vec<EnsembleNode>) -> usize {
            let slot = out.len();
            match t.nodes[idx] {
                Node::Leaf { value } => out.push(EnsembleNode::Leaf { value }),
                Node::Split {
                    feature,
                    level,
                    left,
                    right,
                } => {
                    let s = &supports[feature];
                    let l = level as usize;
                    let cutpoint = 0.5 * (s[l] as f64 + s[l + 1] as f64);
                    out.push(EnsembleNode::Leaf { value: 0.0 });
                    let li = rec(t, left, supports, out);
                    let ri = rec(t, right, supports, out);
                    out[slot] = EnsembleNode::Split {
                        feature,
                        cutpoint,
                        left: li,
                        right: ri,
                    };
                }
            }
            slot
        }
        rec(self, 0, supports, &mut out);
        EnsembleTree { nodes: out }
    }
}

struct Backfitter<'a> {
    levels: Vec<&'a [u8]>,
    n_levels: Vec<usize>,
    supports: Vec<Vec<i32>>,
    config: RiskConfig,
    offset: f64,
    leaf_var: f64,
    trees: Vec<McmcTree>,
    /// Per-tree fitted values, `fits[l][i]`.
    fits: Vec<Vec<f64>>,
    total_fit: Vec<f64>,
    /// Scratch: leaf assignment per row for the tree being updated.
    leaf_of: Vec<usize>,
    resid: Vec<f64>,
}

impl<'a> Backfitter<'a> {
    fn new(data: &'a CodeMatrix, config: &RiskConfig, offset: f64) -> Self {
        let n = data.n_rows();
        let p = data.n_cols();
        Self {
            levels: (0..p).map(|j| data.column_levels(j)).collect(),
            n_levels: (0..p).map(|j| data.support(j).len()).collect(),
            supports: data.supports().to_vec(),
            config: *config,
            offset,
            leaf_var: config.leaf_sd().powi(2),
            trees: vec![McmcTree::stump(); config.num_trees],
            fits: vec![vec![0.0; n]; config.num_trees],
            total_fit: vec![0.0; n],
            leaf_of: vec![0; n],
            resid: vec![0.0; n],
        }
    }

    fn p_split(&self, depth: usize) -> f64 {
        self.config.alpha * (1.0 + depth as f64).powf(-self.config.beta)
    }

    /// Log marginal likelihood of residuals in a node (unit noise variance).
    fn log_lik(&self, count: usize, sum: f64) -> f64 {
        let v = 1.0 + count as f64 * self.leaf_var;
        -0.5 * v.ln() + self.leaf_var * sum * sum / (2.0 * v)
    }

    fn sweep<R: Rng + ?Sized>(&mut self, latent: &[f64], iteration: usize, rng: &mut R) -> Result<(), RiskError> {
        let n = latent.len();
        for l in 0..self.trees.len() {
            for i in 0..n {
                self.resid[i] = latent[i] - self.offset - (self.total_fit[i] - self.fits[l][i]);
            }
            for i in 0..n {
                self.leaf_of[i] = self.trees[l].route(&self.levels, i);
            }
            if rng.random::<f64>() < 0.5 || self.trees[l].is_stump() {
                self.propose_grow(l, rng);
            } else {
                self.propose_prune(l, rng);
            }
            self.update_leaves(l, iteration, rng)?;
        }
        Ok(())
    }

    /// Levels present among the given rows, per feature.
    fn present_levels(&self, rows: &[usize]) -> Vec<Vec<u8>> {
        self.levels
            .iter()
            .zip(&self.n_levels)
            .map(|(col, &nl)| {
                let mut seen = vec![false; nl];
                for &i in rows {
                    seen[col[i] as usize] = true;
                }
                (0..nl).filter(|&l| seen[l]).map(|l| l as u8).collect()
            })
            .collect()
    }

    fn node_rows(&self, node: usize) -> Vec<usize> {
        (0..self.leaf_of.len()).filter(|&i| self.leaf_of[i] == node).collect()
    }

    fn split_stats(&self, rows: &[usize], feature: usize, level: u8) -> ((usize, f64), (usize, f64)) {
        let col = self.levels[feature];
        let mut left = (0usize, 0.0);
        let mut right = (0usize, 0.0);
        for &i in rows {
            let side = if col[i] <= level { &mut left } else { &mut right };
            side.0 += 1;
            side.1 += self.resid[i];
        }
        (left, right)
    }

    fn propose_grow<R: Rng + ?Sized>(&mut self, l: usize, rng: &mut R) {
        let tree = &self.trees[l];
        let leaves = tree.leaves();
        let b = leaves.len();
        let leaf = leaves[rng.random_range(0..b)];
        let rows = self.node_rows(leaf);
        let present = self.present_levels(&rows);
        let candidates: Vec<usize> = (0..present.len()).filter(|&f| present[f].len() >= 2).collect();
        if candidates.is_empty() {
            return;
        }
        let feature = candidates[rng.random_range(0..candidates.len())];
        // Split after any present level but the largest, so both children are nonempty.
        let opts = &present[feature][..present[feature].len() - 1];
        let level = opts[rng.random_range(0..opts.len())];

        let ((nl, sl), (nr, sr)) = self.split_stats(&rows, feature, level);
        let total = sl + sr;
        let d = tree.depth[leaf];
        let p_grow: f64 = if tree.is_stump() { 1.0 } else { 0.5 };
        // Prunable nodes after the grow: the new parent, minus its own parent
        // if that was prunable before (it no longer is).
        let mut w2_star = tree.prunable().len() + 1;
        if let Some(par) = tree.parent[leaf] {
            if tree.prunable().contains(&par) {
                w2_star -= 1;
            }
        }
        let log_ratio = (0.5f64).ln() - (w2_star as f64).ln() - p_grow.ln() + (b as f64).ln()
            + self.log_lik(nl, sl)
            + self.log_lik(nr, sr)
            - self.log_lik(nl + nr, total)
            + self.p_split(d).ln()
            + 2.0 * (1.0 - self.p_split(d + 1)).ln()
            - (1.0 - self.p_split(d)).ln();
        if rng.random::<f64>().ln() < log_ratio {
            let (li, ri) = self.trees[l].grow(leaf, feature, level);
            let col = self.levels[feature];
            for &i in &rows {
                self.leaf_of[i] = if col[i] <= level { li } else { ri };
            }
        }
    }

    fn propose_prune<R: Rng + ?Sized>(&mut self, l: usize, rng: &mut R) {
        let tree = &self.trees[l];
        let prunable = tree.prunable();
        let w2 = prunable.len();
        let node = prunable[rng.random_range(0..w2)];
        let Node::Split {
            feature,
            level,
            left,
            right,
        } = tree.nodes[node]
        else {
            unreachable!()
        };
        let rows: Vec<usize> = (0..self.leaf_of.len())
            .filter(|&i| self.leaf_of[i] == left || self.leaf_of[i] == right)
            .collect();
        let ((nl, sl), (nr, sr)) = self.split_stats(&rows, feature, level);
        let b = tree.leaves().len();
        let d = tree.depth[node];
        // After pruning, the tree has b - 1 leaves; it is a stump iff node is the root.
        let p_grow_star: f64 = if node == 0 { 1.0 } else { 0.5 };
        let log_ratio = p_grow_star.ln() - ((b - 1) as f64).ln() - (0.5f64).ln() + (w2 as f64).ln()
            - (self.log_lik(nl, sl) + self.log_lik(nr, sr) - self.log_lik(nl + nr, sl + sr))
            - (self.p_split(d).ln() + 2.0 * (1.0 - self.p_split(d + 1)).ln()
                - (1.0 - self.p_split(d)).ln());
        if rng.random::<f64>().ln() < log_ratio {
            self.trees[l].prune(node);
            for &i in &rows {
                self.leaf_of[i] = node;
            }
        }
    }

    fn update_leaves<R: Rng + ?Sized>(&mut self, l: usize, iteration: usize, rng: &mut R) -> Result<(), RiskError> {
        let size = self.trees[l].nodes.len();
        let mut count = vec![0usize; size];
        let mut sum = vec![0.0; size];
        for (i, &leaf) in self.leaf_of.iter().enumerate() {
            count[leaf] += 1;
            sum[leaf] += self.resid[i];
        }
        for leaf in self.trees[l].leaves() {
            let post_var = self.leaf_var / (1.0 + count[leaf] as f64 * self.leaf_var);
            let post_mean = post_var * sum[leaf];
            let z: f64 = StandardNormal.sample(rng);
            let value = post_mean + post_var.sqrt() * z;
            if !value.is_finite() {
                return Err(RiskError::NonFiniteLeaf {
                    iteration,
                    tree: l,
                    n: count[leaf],
                    sum: sum[leaf],
                });
            }
            self.trees[l].nodes[leaf] = Node::Leaf { value };
        }
        let tree = &self.trees[l];
        for (i, &leaf) in self.leaf_of.iter().enumerate() {
            let Node::Leaf { value } = tree.nodes[leaf] else {
                unreachable!()
            };
            self.total_fit[i] += value - self.fits[l][i];
            self.fits[l][i] = value;
        }
        Ok(())
    }

    fn snapshot(&self) -> TreeEnsembleDraw {
        TreeEnsembleDraw {
            offset: self.offset,
            trees: self
                .trees
                .iter()
                .map(|t| t.to_ensemble_tree(&self.supports))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_leaves_give_one_half() {
        let draw = TreeEnsembleDraw {
            offset: 0.0,
            trees: vec![EnsembleTree::leaf(0.0); 5],
        };
        assert_eq!(predict_prob(&draw, &[1, 2, 3]), 0.5);
    }

    #[test]
    fn single_split_hand_value() {
        // Q1 <= 2 -> 0.3 else -0.4, plus a second stump of 0.1 and offset -0.2.
        let draw = TreeEnsembleDraw {
            offset: -0.2,
            trees: vec![
                EnsembleTree {
                    nodes: vec![
                        EnsembleNode::Split {
                            feature: 0,
                            cutpoint: 2.5,
                            left: 1,
                            right: 2,
                        },
                        EnsembleNode::Leaf { value: 0.3 },
                        EnsembleNode::Leaf { value: -0.4 },
                    ],
                },
                EnsembleTree::leaf(0.1),
            ],
        };
        // Φ(0.2) and Φ(-0.5) from standard tables.
        let left = predict_prob(&draw, &[2]);
        let right = predict_prob(&draw, &[3]);
        assert!((left - 0.579_259_709_439_103).abs() < 1e-9);
        assert!((right - 0.308_537_538_725_987).abs() < 1e-9);
        let (p0, p1) = draw.class_probs(&|_| 3);
        assert_eq!(p0 + p1, 1.0);
    }

    #[test]
    fn posterior_mean_is_average() {
        let mk = |v: f64| TreeEnsembleDraw {
            offset: norm_ppf(v),
            trees: vec![EnsembleTree::leaf(0.0)],
        };
        let post = RiskPosterior::from_draws(vec!["Q1".into()], vec![mk(0.2), mk(0.6)]).unwrap();
        let m = posterior_mean_prob(&post, &[1]).unwrap();
        assert!((m - 0.4).abs() < 1e-9);
        let one = post.truncated(1);
        assert_eq!(
            posterior_mean_prob(&one, &[1]).unwrap(),
            one.predict_prob(0, &[1]).unwrap()
        );
        assert!(matches!(
            posterior_mean_prob(&post, &[]),
            Err(RiskError::MissingResponse { .. })
        ));
    }

    fn toy_data(n: usize) -> (CodeMatrix, Vec<u8>) {
        let rows: Vec<Vec<i32>> = (0..n).map(|i| vec![1 + (i % 5) as i32, 1 + ((i / 5) % 3) as i32]).collect();
        let y = rows.iter().map(|r| u8::from(r[0] >= 4)).collect();
        (CodeMatrix::from_rows(vec!["A".into(), "B".into()], &rows).unwrap(), y)
    }

    #[test]
    fn config_and_data_errors() {
        let (data, y) = toy_data(100);
        let cfg = RiskConfig {
            num_trees: 0,
            ..Default::default()
        };
        assert!(matches!(fit_risk_model(&data, &y, &cfg), Err(RiskError::InvalidConfig(_))));
        let ones = vec![1u8; 100];
        assert!(matches!(
            fit_risk_model(&data, &ones, &RiskConfig::default()),
            Err(RiskError::SingleClassOutcome)
        ));
        let (small, ys) = toy_data(20);
        assert!(matches!(
            fit_risk_model(&small, &ys, &RiskConfig::default()),
            Err(RiskError::InsufficientData { .. })
        ));
    }

    #[test]
    fn short_fit_is_deterministic_and_valid() {
        let (data, y) = toy_data(200);
        let cfg = RiskConfig {
            num_trees: 10,
            burn_in: 20,
            draws: 10,
            seed: 9,
            ..Default::default()
        };
        let a = fit_risk_model(&data, &y, &cfg).unwrap();
        let b = fit_risk_model(&data, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.draws.len(), 10);
        for draw in &a.draws {
            for x in [[1, 1], [5, 3], [3, 2]] {
                let p = predict_prob(draw, &x);
                assert!(p > 0.0 && p < 1.0);
            }
            for t in &draw.trees {
                for node in &t.nodes {
                    if let EnsembleNode::Split { feature, cutpoint, .. } = node {
                        let s = data.support(*feature);
                        assert!(s.windows(2).any(|w| *cutpoint == 0.5 * (w[0] + w[1]) as f64));
                    }
                }
            }
        }
    }
}
