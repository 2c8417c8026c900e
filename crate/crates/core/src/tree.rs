//! Regression trees with a cap on distinct items per root-to-leaf path.
//!
//! Growth is greedy sum-of-squares CART over item codes. Under `MaxIpp(m)`,
//! once a path has split on `m` distinct items only those items stay
//! candidates below it. Growth returns the full tree annotated with its
//! weakest-link (cost-complexity) sequence of nested subtrees, ordered from
//! the root outward; [`prune`] walks that sequence on a holdout set.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::matrix::{CodeMatrix, MatrixError};

pub const DEFAULT_MIN_NODE: usize = 25;
pub const DEFAULT_PATIENCE: usize = 10;

/// Node sizes above which split search runs items in parallel.
const PAR_THRESHOLD: usize = 20_000;

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("need at least {needed} rows to grow a tree, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("{0}")]
    InvalidConfig(String),
    #[error("target {value} at row {row} is outside [0, 1]")]
    TargetOutOfRange { row: usize, value: f64 },
    #[error("{rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("holdout set is empty")]
    EmptyHoldout,
    #[error("subtree sequence is empty")]
    EmptySequence,
    #[error("response for item {0:?} is missing")]
    MissingItem(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Constraint {
    /// At most `m` distinct items on any root-to-leaf path.
    MaxIpp(usize),
    /// Depth at most `d`.
    MaxDepth(usize),
    Unconstrained,
}

impl Constraint {
    pub fn label(&self) -> String {
        match self {
            Constraint::MaxIpp(m) => format!("maxIPP={m}"),
            Constraint::MaxDepth(d) => format!("maxDepth={d}"),
            Constraint::Unconstrained => "unconstrained".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    pub constraint: Constraint,
    /// Minimum rows in each child of a split.
    pub min_node: usize,
    pub seed: u64,
}

impl GrowConfig {
    pub fn new(constraint: Constraint) -> Self {
        Self {
            constraint,
            min_node: DEFAULT_MIN_NODE,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    /// Index into the tree's `items`.
    pub item: usize,
    /// Go left iff `code <= cutpoint`.
    pub cutpoint: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Mean training target of rows reaching the node.
    pub value: f64,
    pub n: usize,
    /// Training sum of squared deviations from `value`.
    pub sse: f64,
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TreeMetadata {
    pub training_hash: String,
    pub seed: u64,
}

/// A fitted tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub items: Vec<String>,
    pub nodes: Vec<TreeNode>,
    pub constraint: Constraint,
    pub metadata: TreeMetadata,
}

impl RegressionTree {
    /// A single-leaf tree predicting `value` everywhere.
    pub fn constant(items: Vec<String>, value: f64) -> Self {
        Self {
            items,
            nodes: vec![TreeNode {
                value,
                n: 0,
                sse: 0.0,
                split: None,
            }],
            constraint: Constraint::Unconstrained,
            metadata: TreeMetadata::default(),
        }
    }

    /// Index of the leaf reached by `code_at(item)`.
    pub fn leaf_index(&self, code_at: impl Fn(usize) -> i32) -> usize {
        let mut idx = 0;
        while let Some(s) = &self.nodes[idx].split {
            idx = if code_at(s.item) as f64 <= s.cutpoint { s.left } else { s.right };
        }
        idx
    }

    /// Prediction for codes aligned with `items`.
    pub fn predict(&self, x: &[i32]) -> f64 {
        self.nodes[self.leaf_index(|j| x[j])].value
    }

    /// Prediction from named responses; only items on the routed path are needed.
    pub fn predict_named(&self, responses: &HashMap<String, i32>) -> Result<f64, TreeError> {
        let mut idx = 0;
        while let Some(s) = &self.nodes[idx].split {
            let name = &self.items[s.item];
            let code = *responses.get(name).ok_or_else(|| TreeError::MissingItem(name.clone()))?;
            idx = if code as f64 <= s.cutpoint { s.left } else { s.right };
        }
        Ok(self.nodes[idx].value)
    }

    /// Predictions for every row of `data`, which must contain the tree's items.
    pub fn predict_matrix(&self, data: &CodeMatrix) -> Result<Vec<f64>, TreeError> {
        let cols = self.used_columns(data)?;
        Ok((0..data.n_rows())
            .map(|i| self.nodes[self.leaf_index(|j| data.code(i, cols[j]))].value)
            .collect())
    }

    // Column of `data` for each tree item; unused items map to 0.
    fn used_columns(&self, data: &CodeMatrix) -> Result<Vec<usize>, TreeError> {
        let mut used = vec![false; self.items.len()];
        for n in &self.nodes {
            if let Some(s) = &n.split {
                used[s.item] = true;
            }
        }
        self.items
            .iter()
            .zip(used)
            .map(|(name, u)| match (data.column_index(name), u) {
                (Some(c), _) => Ok(c),
                (None, false) => Ok(0),
                (None, true) => Err(TreeError::MissingItem(name.clone())),
            })
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn n_internal(&self) -> usize {
        self.nodes.len() - self.n_leaves()
    }

    pub fn depth(&self) -> usize {
        fn rec(t: &RegressionTree, i: usize) -> usize {
            match &t.nodes[i].split {
                None => 0,
                Some(s) => 1 + rec(t, s.left).max(rec(t, s.right)),
            }
        }
        rec(self, 0)
    }

    /// Names of items the tree splits on, in first-use (preorder) order.
    pub fn split_items(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for n in &self.nodes {
            if let Some(s) = &n.split {
                if !out.contains(&self.items[s.item]) {
                    out.push(self.items[s.item].clone());
                }
            }
        }
        out
    }

    /// Root-to-leaf paths as lists of node indices.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = vec![vec![0usize]];
        while let Some(path) = stack.pop() {
            let last = *path.last().unwrap();
            match &self.nodes[last].split {
                None => out.push(path),
                Some(s) => {
                    for c in [s.right, s.left] {
                        let mut p = path.clone();
                        p.push(c);
                        stack.push(p);
                    }
                }
            }
        }
        out
    }
}

/// Maximum over root-to-leaf paths of the number of distinct split items.
pub fn unique_items_per_path(tree: &RegressionTree) -> usize {
    tree.paths()
        .iter()
        .map(|path| {
            let mut items: Vec<usize> = path
                .iter()
                .filter_map(|&i| tree.nodes[i].split.map(|s| s.item))
                .collect();
            items.sort_unstable();
            items.dedup();
            items.len()
        })
        .max()
        .unwrap_or(0)
}

/// Nested subtrees of a fully grown tree, from the root tree `T_0` outward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtreeSequence {
    pub full: RegressionTree,
    /// Per node: first sequence index at which the node is split;
    /// `usize::MAX` for leaves of the full tree.
    pub appears_at: Vec<usize>,
    /// Complexity parameter at which each subtree becomes optimal,
    /// decreasing from the root tree outward.
    pub alphas: Vec<f64>,
}

impl SubtreeSequence {
    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// The `i`-th subtree, with unsplit nodes collapsed and indices compacted.
    pub fn subtree(&self, i: usize) -> RegressionTree {
        let full = &self.full;
        let mut nodes = Vec::new();
        fn rec(seq: &SubtreeSequence, idx: usize, i: usize, out: &mut Vec<TreeNode>) -> usize {
            let slot = out.len();
            let mut node = seq.full.nodes[idx].clone();
            let split = node.split.take().filter(|_| seq.appears_at[idx] <= i);
            out.push(node);
            if let Some(s) = split {
                let l = rec(seq, s.left, i, out);
                let r = rec(seq, s.right, i, out);
                out[slot].split = Some(Split { left: l, right: r, ..s });
            }
            slot
        }
        rec(self, 0, i.min(self.len().saturating_sub(1)), &mut nodes);
        RegressionTree {
            items: full.items.clone(),
            nodes,
            constraint: full.constraint,
            metadata: full.metadata.clone(),
        }
    }

    /// Holdout RMSE of every subtree, in sequence order.
    pub fn holdout_rmse(&self, data: &CodeMatrix, targets: &[f64]) -> Result<Vec<f64>, TreeError> {
        if data.n_rows() == 0 {
            return Err(TreeError::EmptyHoldout);
        }
        if data.n_rows() != targets.len() {
            return Err(TreeError::LengthMismatch {
                rows: data.n_rows(),
                targets: targets.len(),
            });
        }
        let k = self.len();
        let cols = self.full.used_columns(data)?;
        // Difference array over subtree index: a row's prediction in subtree i
        // comes from the first node on its path not split in subtree i.
        let diff = (0..data.n_rows())
            .into_par_iter()
            .fold(
                || vec![0.0; k + 1],
                |mut diff, r| {
                    let mut idx = 0;
                    let mut from = 0;
                    loop {
                        let until = self.appears_at[idx].min(k);
                        let e = self.full.nodes[idx].value - targets[r];
                        diff[from] += e * e;
                        diff[until] -= e * e;
                        match &self.full.nodes[idx].split {
                            Some(s) if until < k => {
                                from = until;
                                idx = if data.code(r, cols[s.item]) as f64 <= s.cutpoint {
                                    s.left
                                } else {
                                    s.right
                                };
                            }
                            _ => break,
                        }
                    }
                    diff
                },
            )
            .reduce(
                || vec![0.0; k + 1],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let n = data.n_rows() as f64;
        let mut acc = 0.0;
        Ok((0..k)
            .map(|i| {
                acc += diff[i];
                (acc.max(0.0) / n).sqrt()
            })
            .collect())
    }
}

fn training_hash(data: &CodeMatrix, targets: &[f64]) -> String {
    let mut h = Sha256::new();
    for name in data.names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for c in 0..data.n_cols() {
        for code in data.support(c) {
            h.update(code.to_le_bytes());
        }
        h.update(data.column_levels(c));
    }
    for t in targets {
        h.update(t.to_le_bytes());
    }
    hex::encode(h.finalize())
}

struct Grower<'a> {
    levels: Vec<&'a [u8]>,
    supports: &'a [Vec<i32>],
    targets: &'a [f64],
    config: GrowConfig,
    depth_cap: usize,
    nodes: Vec<TreeNode>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    item: usize,
    level: usize,
}

impl Grower<'_> {
    fn stats(&self, rows: &[u32]) -> (f64, f64, f64) {
        let mut s = 0.0;
        let mut ss = 0.0;
        for &r in rows {
            let y = self.targets[r as usize];
            s += y;
            ss += y * y;
        }
        let n = rows.len() as f64;
        (n, s, (ss - s * s / n).max(0.0))
    }

    fn best_for_item(&self, rows: &[u32], item: usize, total: f64) -> Option<Candidate> {
        let nl = self.supports[item].len();
        let col = self.levels[item];
        let mut cnt = vec![0usize; nl];
        let mut sum = vec![0.0; nl];
        for &r in rows {
            let l = col[r as usize] as usize;
            cnt[l] += 1;
            sum[l] += self.targets[r as usize];
        }
        let n = rows.len();
        let base = total * total / n as f64;
        let mut best: Option<Candidate> = None;
        let (mut nl_, mut sl) = (0usize, 0.0);
        for l in 0..nl - 1 {
            nl_ += cnt[l];
            sl += sum[l];
            let nr = n - nl_;
            if nl_ < self.config.min_node || nr < self.config.min_node {
                continue;
            }
            let sr = total - sl;
            let gain = sl * sl / nl_ as f64 + sr * sr / nr as f64 - base;
            if best.is_none_or(|b| better(gain, b.gain)) {
                best = Some(Candidate { gain, item, level: l });
            }
        }
        best
    }

    fn candidates(&self, used: &[usize], depth: usize) -> Option<Vec<usize>> {
        match self.config.constraint {
            Constraint::MaxDepth(d) if depth >= d => None,
            Constraint::MaxIpp(m) if depth >= self.depth_cap || m == 0 => None,
            Constraint::MaxIpp(m) if used.len() >= m => {
                let mut c = used.to_vec();
                c.sort_unstable();
                Some(c)
            }
            _ => Some((0..self.levels.len()).collect()),
        }
    }

    fn grow(&mut self, rows: Vec<u32>, used: &[usize], depth: usize) -> usize {
        let (n, s, sse) = self.stats(&rows);
        let slot = self.nodes.len();
        self.nodes.push(TreeNode {
            value: s / n,
            n: rows.len(),
            sse,
            split: None,
        });
        let Some(cands) = self.candidates(used, depth) else {
            return slot;
        };
        if rows.len() < 2 * self.config.min_node {
            return slot;
        }
        let per_item: Vec<Option<Candidate>> = if rows.len() * cands.len() >= PAR_THRESHOLD {
            cands.par_iter().map(|&j| self.best_for_item(&rows, j, s)).collect()
        } else {
            cands.iter().map(|&j| self.best_for_item(&rows, j, s)).collect()
        };
        let mut best: Option<Candidate> = None;
        for c in per_item.into_iter().flatten() {
            if best.is_none_or(|b| better(c.gain, b.gain)) {
                best = Some(c);
            }
        }
        // Stop when no split reduces the SSE (up to rounding).
        let Some(best) = best.filter(|b| b.gain > 1e-12 * sse.max(1e-300) && sse > 0.0) else {
            return slot;
        };
        let col = self.levels[best.item];
        let (left, right): (Vec<u32>, Vec<u32>) =
            rows.into_iter().partition(|&r| col[r as usize] as usize <= best.level);
        let mut child_used = used.to_vec();
        if !child_used.contains(&best.item) {
            child_used.push(best.item);
        }
        let support = &self.supports[best.item];
        let cutpoint = 0.5 * (support[best.level] as f64 + support[best.level + 1] as f64);
        let l = self.grow(left, &child_used, depth + 1);
        let r = self.grow(right, &child_used, depth + 1);
        self.nodes[slot].split = Some(Split {
            item: best.item,
            cutpoint,
            left: l,
            right: r,
        });
        slot
    }
}

// Strictly better gain; near-equal gains are ties and keep the earlier
// (lower item, lower cutpoint) candidate.
fn better(gain: f64, incumbent: f64) -> bool {
    gain > incumbent + 1e-12 * incumbent.abs().max(1e-300)
}

/// Grow a tree on `data` (columns are the candidate split items) against
/// targets in `[0, 1]`, returning its nested subtree sequence.
pub fn grow(data: &CodeMatrix, targets: &[f64], config: &GrowConfig) -> Result<SubtreeSequence, TreeError> {
    let n = data.n_rows();
    if targets.len() != n {
        return Err(TreeError::LengthMismatch { rows: n, targets: targets.len() });
    }
    if config.min_node == 0 {
        return Err(TreeError::InvalidConfig("min_node must be at least 1".into()));
    }
    if n == 0 || n < 2 * config.min_node {
        return Err(TreeError::InsufficientData {
            needed: 2 * config.min_node,
            got: n,
        });
    }
    if let Some((row, &value)) = targets.iter().enumerate().find(|(_, t)| !(0.0..=1.0).contains(*t)) {
        return Err(TreeError::TargetOutOfRange { row, value });
    }
    let max_levels = data.supports().iter().map(Vec::len).max().unwrap_or(1);
    let depth_cap = match config.constraint {
        Constraint::MaxIpp(m) => 2 * m * max_levels,
        _ => usize::MAX,
    };
    let mut g = Grower {
        levels: (0..data.n_cols()).map(|c| data.column_levels(c)).collect(),
        supports: data.supports(),
        targets,
        config: *config,
        depth_cap,
        nodes: Vec::new(),
    };
    g.grow((0..n as u32).collect(), &[], 0);
    let full = RegressionTree {
        items: data.names().to_vec(),
        nodes: g.nodes,
        constraint: config.constraint,
        metadata: TreeMetadata {
            training_hash: training_hash(data, targets),
            seed: config.seed,
        },
    };
    Ok(complexity_sequence(full))
}

/// Weakest-link pruning: repeatedly collapse the internal node(s) with the
/// smallest per-leaf SSE increase until only the root remains.
fn complexity_sequence(full: RegressionTree) -> SubtreeSequence {
    let nn = full.nodes.len();
    let mut collapsed_at = vec![usize::MAX; nn];
    let mut alphas_rev = vec![0.0];
    let mut step = 0;
    let mut leaf_sse = vec![0.0; nn];
    let mut leaf_count = vec![0usize; nn];
    let mut g = vec![f64::INFINITY; nn];
    loop {
        // Postorder pass over the current tree.
        fn pass(
            t: &RegressionTree,
            i: usize,
            collapsed_at: &[usize],
            leaf_sse: &mut [f64],
            leaf_count: &mut [usize],
            g: &mut [f64],
        ) {
            match &t.nodes[i].split {
                Some(s) if collapsed_at[i] == usize::MAX => {
                    pass(t, s.left, collapsed_at, leaf_sse, leaf_count, g);
                    pass(t, s.right, collapsed_at, leaf_sse, leaf_count, g);
                    leaf_sse[i] = leaf_sse[s.left] + leaf_sse[s.right];
                    leaf_count[i] = leaf_count[s.left] + leaf_count[s.right];
                    g[i] = (t.nodes[i].sse - leaf_sse[i]) / (leaf_count[i] - 1) as f64;
                }
                _ => {
                    leaf_sse[i] = t.nodes[i].sse;
                    leaf_count[i] = 1;
                    g[i] = f64::INFINITY;
                }
            }
        }
        g.fill(f64::INFINITY);
        pass(&full, 0, &collapsed_at, &mut leaf_sse, &mut leaf_count, &mut g);
        if !g[0].is_finite() {
            break;
        }
        let alpha = g.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = 1e-12 * alpha.abs().max(1e-300);
        step += 1;
        // Collapse every minimizer not already below a collapsed ancestor.
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if collapsed_at[i] != usize::MAX {
                continue;
            }
            if let Some(s) = &full.nodes[i].split {
                if g[i] <= alpha + tol {
                    collapsed_at[i] = step;
                } else {
                    stack.push(s.left);
                    stack.push(s.right);
                }
            }
        }
        alphas_rev.push(alpha.max(0.0));
    }
    // Collapse step c maps to sequence index last + 1 - c. Nodes removed
    // together with a collapsed ancestor share its index; no node appears
    // before its parent.
    let last = step;
    let mut appears_at = vec![usize::MAX; nn];
    let mut stack = vec![(0usize, 0usize)];
    while let Some((i, parent)) = stack.pop() {
        if let Some(s) = &full.nodes[i].split {
            let own = match collapsed_at[i] {
                usize::MAX => parent,
                c => last + 1 - c,
            };
            appears_at[i] = own.max(parent);
            stack.push((s.left, appears_at[i]));
            stack.push((s.right, appears_at[i]));
        }
    }
    // alphas[i]: complexity below which subtree i beats subtree i - 1.
    let mut alphas = alphas_rev;
    alphas.reverse();
    alphas[0] = f64::INFINITY;
    SubtreeSequence {
        full,
        appears_at,
        alphas,
    }
}

/// Default RMSE-reduction floor for a given item budget.
pub fn default_prune_threshold(m: usize) -> f64 {
    if m < 5 {
        1e-4
    } else {
        1e-5
    }
}

/// Index selected by the plateau rule over per-subtree RMSEs: walk outward
/// from the root tree; a subtree "meets" the floor if its RMSE drops by more
/// than `threshold` from its predecessor; after `patience` consecutive misses
/// stop and return the last subtree that met it (the root tree if none did).
pub fn select_subtree(rmse: &[f64], threshold: f64, patience: usize) -> usize {
    let mut last_met = 0;
    let mut misses = 0;
    for i in 1..rmse.len() {
        if rmse[i - 1] - rmse[i] > threshold {
            last_met = i;
            misses = 0;
        } else {
            misses += 1;
            if misses >= patience {
                break;
            }
        }
    }
    last_met
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub tree: RegressionTree,
    pub index: usize,
    pub rmse: Vec<f64>,
}

/// Select `T*_m` from the sequence by holdout RMSE.
pub fn prune(
    seq: &SubtreeSequence,
    holdout: &CodeMatrix,
    targets: &[f64],
    threshold: f64,
    patience: usize,
) -> Result<PruneResult, TreeError> {
    if seq.is_empty() {
        return Err(TreeError::EmptySequence);
    }
    let rmse = seq.holdout_rmse(holdout, targets)?;
    let index = select_subtree(&rmse, threshold, patience.max(1));
    Ok(PruneResult {
        tree: seq.subtree(index),
        index,
        rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<i32>]) -> CodeMatrix {
        let names = (1..=rows[0].len()).map(|j| format!("Q{j}")).collect();
        CodeMatrix::from_rows(names, rows).unwrap()
    }

    #[test]
    fn root_only_tree() {
        let t = RegressionTree::constant(vec!["Q1".into()], 0.5);
        assert_eq!(t.predict(&[3]), 0.5);
        assert_eq!(unique_items_per_path(&t), 0);
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn errors() {
        let data = matrix(&[vec![1]]);
        assert!(matches!(
            grow(&data, &[0.5], &GrowConfig::new(Constraint::MaxIpp(1))),
            Err(TreeError::InsufficientData { .. })
        ));
        let rows: Vec<Vec<i32>> = (0..60).map(|i| vec![i % 3]).collect();
        let data = matrix(&rows);
        let mut bad = vec![0.5; 60];
        bad[4] = 1.5;
        assert!(matches!(
            grow(&data, &bad, &GrowConfig::new(Constraint::MaxIpp(1))),
            Err(TreeError::TargetOutOfRange { row: 4, .. })
        ));
    }

    #[test]
    fn simple_split_and_sequence() {
        let rows: Vec<Vec<i32>> = (0..100).map(|i| vec![1 + i % 4, 1 + (i / 4) % 3]).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r[0] >= 3 { 0.8 } else { 0.1 }).collect();
        let seq = grow(&matrix(&rows), &y, &GrowConfig::new(Constraint::MaxIpp(2))).unwrap();
        let t = &seq.full;
        let s = t.nodes[0].split.unwrap();
        assert_eq!((s.item, s.cutpoint), (0, 2.5));
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(seq.len(), 2);
        assert_eq!(seq.subtree(0).n_leaves(), 1);
        assert_eq!(seq.subtree(1), *t);
        let rmse = seq.holdout_rmse(&matrix(&rows), &y).unwrap();
        assert!((rmse[0] - 0.35).abs() < 1e-12);
        assert!(rmse[1].abs() < 1e-12);
    }

    #[test]
    fn select_rule_by_hand() {
        // Reductions: .1, .1, 0, 0, 0 (patience 3) -> stop, return index 2.
        assert_eq!(select_subtree(&[1.0, 0.9, 0.8, 0.8, 0.8, 0.8, 0.1], 0.01, 3), 2);
        assert_eq!(select_subtree(&[1.0], 0.01, 10), 0);
        assert_eq!(select_subtree(&[1.0, 0.5, 0.2, 0.1], 0.01, 10), 3);
        assert_eq!(select_subtree(&[1.0, 1.0, 1.0], 0.01, 10), 0);
        // A miss streak shorter than patience does not stop the walk.
        assert_eq!(select_subtree(&[1.0, 0.9, 0.9, 0.5], 0.01, 2), 3);
        assert_eq!(default_prune_threshold(4), 1e-4);
        assert_eq!(default_prune_threshold(5), 1e-5);
        assert_eq!(default_prune_threshold(15), 1e-5);
    }
}
