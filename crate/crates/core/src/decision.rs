//! Utility-based evaluation and construction of screening tests.
//!
//! A test classifies a subject as at-risk when its score reaches a cutoff
//! `C`. Its expected utility is `w·sensitivity + (1−w)·specificity`. The
//! full-length test `γ*` scores by the posterior predictive mean `Ē(Ỹ | x)`;
//! a shortened test `γ*_m` scores by a tree calibrated to `Ē` with at most
//! `m` items per path. Both cutoffs are chosen to maximize the utility on
//! the pooled synthetic population, and the per-draw utility differences
//! `Δ_j = EU_j(γ*_m) − EU_j(γ*)` quantify the cost of shortening.

use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CodeMatrix, MatrixError};
use crate::population::{PooledRows, SyntheticPopulation};
use crate::risk::{posterior_mean_probs, RiskError, RiskModel};
use crate::stats::BoxplotSummary;
use crate::tree::{
    default_prune_threshold, grow, prune, Constraint, GrowConfig, RegressionTree, TreeError,
    DEFAULT_MIN_NODE, DEFAULT_PATIENCE,
};

#[derive(Debug, Error)]
pub enum DecisionError {
    #[error("utility weight w = {0} must lie strictly between 0 and 1")]
    InvalidWeight(f64),
    #[error("base rate {0} must lie strictly between 0 and 1")]
    InvalidBaseRate(f64),
    #[error("truths contain a single class; sensitivity or specificity is undefined")]
    DegenerateTruths,
    #[error("{what}: {left} vs {right} entries")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("population is empty")]
    EmptyPopulation,
    #[error("comparison grid is empty")]
    EmptyGrid,
    #[error("maxIPP calibration needs a pruning reservoir")]
    MissingReservoir,
    #[error("item budget m must be at least 1")]
    InvalidBudget,
    #[error("scoring by the posterior mean on new data needs the risk model")]
    MissingRiskModel,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

fn check_weight(w: f64) -> Result<(), DecisionError> {
    if w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(DecisionError::InvalidWeight(w))
    }
}

/// Weight `w` on sensitivity together with the population base rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityWeights {
    pub w: f64,
    /// `Pr(Y = 1)` in the target population.
    pub base_rate: f64,
}

impl UtilityWeights {
    pub fn new(w: f64, base_rate: f64) -> Result<Self, DecisionError> {
        check_weight(w)?;
        if !(base_rate > 0.0 && base_rate < 1.0) {
            return Err(DecisionError::InvalidBaseRate(base_rate));
        }
        Ok(Self { w, base_rate })
    }

    /// Utility of a true negative, `(1 − w) / Pr(Y = 0)`.
    pub fn u0(&self) -> f64 {
        (1.0 - self.w) / (1.0 - self.base_rate)
    }

    /// Utility of a true positive, `w / Pr(Y = 1)`.
    pub fn u1(&self) -> f64 {
        self.w / self.base_rate
    }

    /// Point-wise optimal cutoff `U0 / (U0 + U1)` on `Ē`.
    pub fn label_threshold(&self) -> f64 {
        self.u0() / (self.u0() + self.u1())
    }
}

/// `w·sens + (1−w)·spec`.
pub fn expected_utility(sensitivity: f64, specificity: f64, w: f64) -> f64 {
    w * sensitivity + (1.0 - w) * specificity
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub fp: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[u8], truths: &[u8]) -> Result<Self, DecisionError> {
        if predictions.len() != truths.len() {
            return Err(DecisionError::LengthMismatch {
                what: "predictions vs truths",
                left: predictions.len(),
                right: truths.len(),
            });
        }
        let mut c = Confusion::default();
        for (&p, &t) in predictions.iter().zip(truths) {
            match (p == 1, t == 1) {
                (true, true) => c.tp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
            }
        }
        Ok(c)
    }

    pub fn sens_spec(&self) -> Result<(f64, f64), DecisionError> {
        let pos = self.tp + self.fn_;
        let neg = self.tn + self.fp;
        if pos == 0 || neg == 0 {
            return Err(DecisionError::DegenerateTruths);
        }
        Ok((self.tp as f64 / pos as f64, self.tn as f64 / neg as f64))
    }
}

/// `(TP / (TP + FN), TN / (TN + FP))`.
pub fn empirical_sens_spec(predictions: &[u8], truths: &[u8]) -> Result<(f64, f64), DecisionError> {
    Confusion::from_predictions(predictions, truths)?.sens_spec()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub specificity: f64,
    pub sensitivity: f64,
}

/// Operating points for every candidate cutoff `{0} ∪ scores ∪ {1}`,
/// in increasing cutoff order (classify 1 iff `score >= C`).
pub fn roc_points(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>, DecisionError> {
    if scores.len() != labels.len() {
        return Err(DecisionError::LengthMismatch {
            what: "scores vs labels",
            left: scores.len(),
            right: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(DecisionError::DegenerateTruths);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut cands: Vec<f64> = Vec::with_capacity(scores.len() + 2);
    cands.push(0.0);
    cands.extend(order.iter().map(|&i| scores[i]));
    cands.push(1.0);
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    // Walk cutoffs upward; rows with score below the cutoff are negatives.
    let mut below_pos = 0usize;
    let mut below_neg = 0usize;
    let mut k = 0;
    let mut out = Vec::with_capacity(cands.len());
    for c in cands {
        while k < order.len() && scores[order[k]] < c {
            if labels[order[k]] == 1 {
                below_pos += 1;
            } else {
                below_neg += 1;
            }
            k += 1;
        }
        out.push(RocPoint {
            threshold: c,
            specificity: below_neg as f64 / neg as f64,
            sensitivity: (pos - below_pos) as f64 / pos as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub threshold: f64,
    pub utility: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Cutoff maximizing `w·sens + (1−w)·spec` over the candidate set; among
/// maximizers (to rounding) the largest cutoff wins.
pub fn optimize_threshold(scores: &[f64], labels: &[u8], w: f64) -> Result<ThresholdChoice, DecisionError> {
    check_weight(w)?;
    let points = roc_points(scores, labels)?;
    let eu = |p: &RocPoint| expected_utility(p.sensitivity, p.specificity, w);
    let best = points.iter().map(eu).fold(f64::NEG_INFINITY, f64::max);
    let p = points
        .iter()
        .rev()
        .find(|p| eu(p) >= best - 1e-12)
        .expect("candidate set is nonempty");
    Ok(ThresholdChoice {
        threshold: p.threshold,
        utility: eu(p),
        sensitivity: p.sensitivity,
        specificity: p.specificity,
    })
}

/// `γ*_k = 1{Ē_k >= U0/(U0+U1)}`.
pub fn utility_class_labels(e_bar: &[f64], weights: &UtilityWeights) -> Vec<u8> {
    let t = weights.label_threshold();
    e_bar.iter().map(|&e| u8::from(e >= t)).collect()
}

/// How a test turns a response vector into a score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    Tree { tree: RegressionTree },
    /// Posterior predictive mean over all risk draws (uses every item).
    PosteriorMean,
}

/// `Thr_C ∘ score`: at-risk iff `score >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveTest {
    pub scorer: Scorer,
    pub threshold: f64,
    /// Pooled training-population operating point.
    pub training: Option<ThresholdChoice>,
}

impl AdaptiveTest {
    pub fn classify(&self, score: f64) -> u8 {
        u8::from(score >= self.threshold)
    }

    pub fn tree(&self) -> Option<&RegressionTree> {
        match &self.scorer {
            Scorer::Tree { tree } => Some(tree),
            Scorer::PosteriorMean => None,
        }
    }

    /// Scores for pooled synthetic rows (posterior mean is precomputed there).
    pub fn scores_pooled(&self, pooled: &PooledRows) -> Result<Vec<f64>, DecisionError> {
        match &self.scorer {
            Scorer::Tree { tree } => Ok(tree.predict_matrix(&pooled.x)?),
            Scorer::PosteriorMean => Ok(pooled.e_bar.clone()),
        }
    }

    /// Scores for new response data; the posterior-mean scorer needs `risk`.
    pub fn scores_on(&self, data: &CodeMatrix, risk: Option<&dyn RiskModel>) -> Result<Vec<f64>, DecisionError> {
        match &self.scorer {
            Scorer::Tree { tree } => Ok(tree.predict_matrix(data)?),
            Scorer::PosteriorMean => {
                let risk = risk.ok_or(DecisionError::MissingRiskModel)?;
                Ok(posterior_mean_probs(risk, data)?)
            }
        }
    }

    pub fn classify_all(&self, scores: &[f64]) -> Vec<u8> {
        scores.iter().map(|&s| self.classify(s)).collect()
    }
}

fn optimized_test(scorer: Scorer, scores: &[f64], labels: &[u8], w: f64) -> Result<AdaptiveTest, DecisionError> {
    if scores.is_empty() {
        return Err(DecisionError::EmptyPopulation);
    }
    let choice = optimize_threshold(scores, labels, w)?;
    Ok(AdaptiveTest {
        scorer,
        threshold: choice.threshold,
        training: Some(choice),
    })
}

/// `γ* = Thr_{C*}(Ē)` with `C*` optimized over the pooled population.
pub fn build_full_test(pop: &SyntheticPopulation, w: f64) -> Result<AdaptiveTest, DecisionError> {
    optimized_test(Scorer::PosteriorMean, &pop.pooled.e_bar, &pop.pooled.y_tilde, w)
}

/// `γ*_m = Thr_{C}(T*_m)` with `C` optimized over the pooled population.
pub fn build_short_test(pop: &SyntheticPopulation, tree: RegressionTree, w: f64) -> Result<AdaptiveTest, DecisionError> {
    if pop.m() == 0 {
        return Err(DecisionError::EmptyPopulation);
    }
    let scores = tree.predict_matrix(&pop.pooled.x)?;
    optimized_test(Scorer::Tree { tree }, &scores, &pop.pooled.y_tilde, w)
}

/// A classification tree used directly: leaf value is the share of class 1,
/// so the majority class is `value >= 0.5`.
pub fn classification_test(tree: RegressionTree) -> AdaptiveTest {
    AdaptiveTest {
        scorer: Scorer::Tree { tree },
        threshold: 0.5,
        training: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityDiffSample {
    pub label: String,
    /// One value per non-skipped block.
    pub draws: Vec<f64>,
    pub blocks: Vec<usize>,
    /// Blocks whose labels contain one class only.
    pub skipped: Vec<usize>,
}

impl UtilityDiffSample {
    pub fn summary(&self) -> Option<BoxplotSummary> {
        BoxplotSummary::from_values(&self.draws)
    }
}

/// Per-block utility of a test; `None` when the block has one class only.
pub fn block_utilities(
    pop: &SyntheticPopulation,
    test: &AdaptiveTest,
    w: f64,
) -> Result<Vec<Option<f64>>, DecisionError> {
    check_weight(w)?;
    let preds = test.classify_all(&test.scores_pooled(&pop.pooled)?);
    Ok((0..pop.d)
        .into_par_iter()
        .map(|j| {
            let b = pop.block(j);
            let c = Confusion::from_predictions(&preds[b.rows.clone()], b.y_tilde()).ok()?;
            c.sens_spec().ok().map(|(s, p)| expected_utility(s, p, w))
        })
        .collect())
}

/// `Δ_j = EU_j(short) − EU_j(full)` over blocks; single-class blocks are
/// skipped with a warning.
pub fn delta_distribution(
    pop: &SyntheticPopulation,
    short: &AdaptiveTest,
    full: &AdaptiveTest,
    w: f64,
    label: impl Into<String>,
) -> Result<UtilityDiffSample, DecisionError> {
    let a = block_utilities(pop, short, w)?;
    let b = block_utilities(pop, full, w)?;
    let mut out = UtilityDiffSample {
        label: label.into(),
        draws: Vec::new(),
        blocks: Vec::new(),
        skipped: Vec::new(),
    };
    for (j, (x, y)) in a.into_iter().zip(b).enumerate() {
        match (x, y) {
            (Some(x), Some(y)) => {
                out.draws.push(x - y);
                out.blocks.push(j);
            }
            _ => out.skipped.push(j),
        }
    }
    if !out.skipped.is_empty() {
        warn!(
            "{}: skipped {} of {} blocks with a single class",
            out.label,
            out.skipped.len(),
            pop.d
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub utility: f64,
}

/// Empirical operating point of `test` on labelled data.
pub fn evaluate(
    test: &AdaptiveTest,
    data: &CodeMatrix,
    outcomes: &[u8],
    risk: Option<&dyn RiskModel>,
    w: f64,
) -> Result<Evaluation, DecisionError> {
    check_weight(w)?;
    if data.n_rows() == 0 {
        return Err(DecisionError::EmptyPopulation);
    }
    let preds = test.classify_all(&test.scores_on(data, risk)?);
    let (sensitivity, specificity) = empirical_sens_spec(&preds, outcomes)?;
    Ok(Evaluation {
        n: data.n_rows(),
        sensitivity,
        specificity,
        utility: expected_utility(sensitivity, specificity, w),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    /// Grow under maxIPP `m`, prune on the reservoir.
    MaxIpp,
    /// Grow to depth `m`, no pruning.
    MaxDepth,
}

impl fmt::Display for TreeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TreeKind::MaxIpp => "maxIPP",
            TreeKind::MaxDepth => "maxDepth",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Regression tree on `Ē`, cutoff optimized for `w`.
    RegressionCutoff,
    /// Classification tree on the synthetic labels `ỹ`.
    ClassSynthetic,
    /// Classification tree on the utility labels `γ*`.
    ClassUtility,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::RegressionCutoff, Method::ClassSynthetic, Method::ClassUtility];

    pub fn tree_type(&self) -> &'static str {
        match self {
            Method::RegressionCutoff => "Regression",
            _ => "Classification",
        }
    }

    pub fn calibration_data(&self) -> &'static str {
        match self {
            Method::ClassUtility => "GCFM + Utility",
            _ => "GCFM + BART",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regression" | "regression_cutoff" => Ok(Method::RegressionCutoff),
            "class_synthetic" | "classification_synthetic" => Ok(Method::ClassSynthetic),
            "class_utility" | "classification_utility" => Ok(Method::ClassUtility),
            other => Err(format!(
                "unknown method {other:?}; expected regression, class_synthetic or class_utility"
            )),
        }
    }
}

impl std::str::FromStr for TreeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "maxipp" => Ok(TreeKind::MaxIpp),
            "maxdepth" => Ok(TreeKind::MaxDepth),
            other => Err(format!("unknown tree kind {other:?}; expected maxipp or maxdepth")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSettings {
    pub min_node: usize,
    pub patience: usize,
    /// RMSE-reduction floor; `None` uses the default for the item budget.
    pub prune_threshold: Option<f64>,
    pub seed: u64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            min_node: DEFAULT_MIN_NODE,
            patience: DEFAULT_PATIENCE,
            prune_threshold: None,
            seed: 0,
        }
    }
}

/// Grow (and for maxIPP, prune) a tree on the split items of `pop` against
/// pooled targets; reservoir targets drive pruning.
pub fn calibrate_tree(
    pop: &SyntheticPopulation,
    items: &[String],
    kind: TreeKind,
    m: usize,
    targets: &[f64],
    reservoir_targets: Option<&[f64]>,
    settings: &CalibrationSettings,
) -> Result<RegressionTree, DecisionError> {
    if m == 0 {
        return Err(DecisionError::InvalidBudget);
    }
    let x = pop.pooled.x.select_columns(items)?;
    let constraint = match kind {
        TreeKind::MaxIpp => Constraint::MaxIpp(m),
        TreeKind::MaxDepth => Constraint::MaxDepth(m),
    };
    let cfg = GrowConfig {
        constraint,
        min_node: settings.min_node,
        seed: settings.seed,
    };
    let seq = grow(&x, targets, &cfg)?;
    match kind {
        TreeKind::MaxDepth => Ok(seq.full),
        TreeKind::MaxIpp => {
            let res = pop.reservoir.as_ref().ok_or(DecisionError::MissingReservoir)?;
            let rx = res.x.select_columns(items)?;
            let rt = reservoir_targets.unwrap_or(&res.e_bar);
            let thr = settings.prune_threshold.unwrap_or_else(|| default_prune_threshold(m));
            Ok(prune(&seq, &rx, rt, thr, settings.patience)?.tree)
        }
    }
}

/// Regression tree `T*_m` calibrated to `Ē` (the proposed method).
pub fn design_tree(
    pop: &SyntheticPopulation,
    items: &[String],
    kind: TreeKind,
    m: usize,
    settings: &CalibrationSettings,
) -> Result<RegressionTree, DecisionError> {
    calibrate_tree(pop, items, kind, m, &pop.pooled.e_bar, None, settings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonGrid {
    pub sizes: Vec<usize>,
    pub kinds: Vec<TreeKind>,
    pub methods: Vec<Method>,
    pub weights: Vec<f64>,
}

impl ComparisonGrid {
    pub fn n_cells(&self) -> usize {
        self.sizes.len() * self.kinds.len() * self.methods.len() * self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub number_of_items: usize,
    pub tree_type: String,
    pub criterion: TreeKind,
    pub method: Method,
    pub w: f64,
    pub calibration_data: String,
    pub sensitivity: f64,
    pub specificity: f64,
    pub utility: f64,
    pub delta: UtilityDiffSample,
}

/// Labelled data on which comparison cells report sensitivity/specificity;
/// without it the pooled synthetic population (with `ỹ`) is used.
pub struct EvaluationSet<'a> {
    pub data: &'a CodeMatrix,
    pub outcomes: &'a [u8],
}

/// Build and score every method in the grid.
pub fn compare_methods(
    pop: &SyntheticPopulation,
    items: &[String],
    grid: &ComparisonGrid,
    settings: &CalibrationSettings,
    eval: Option<&EvaluationSet<'_>>,
) -> Result<Vec<ComparisonRow>, DecisionError> {
    if grid.n_cells() == 0 {
        return Err(DecisionError::EmptyGrid);
    }
    for &w in &grid.weights {
        check_weight(w)?;
    }
    if pop.m() == 0 {
        return Err(DecisionError::EmptyPopulation);
    }
    let base_rate = pop.pooled.y_tilde.iter().map(|&y| y as f64).sum::<f64>() / pop.m() as f64;
    let y_pooled: Vec<f64> = pop.pooled.y_tilde.iter().map(|&y| y as f64).collect();
    let y_res: Option<Vec<f64>> = pop
        .reservoir
        .as_ref()
        .map(|r| r.y_tilde.iter().map(|&y| y as f64).collect());
    let mut rows = Vec::with_capacity(grid.n_cells());
    for &w in &grid.weights {
        let full = build_full_test(pop, w)?;
        let weights = UtilityWeights::new(w, base_rate)?;
        for &m in &grid.sizes {
            for &kind in &grid.kinds {
                for &method in &grid.methods {
                    let test = match method {
                        Method::RegressionCutoff => {
                            let tree = design_tree(pop, items, kind, m, settings)?;
                            build_short_test(pop, tree, w)?
                        }
                        Method::ClassSynthetic => classification_test(calibrate_tree(
                            pop,
                            items,
                            kind,
                            m,
                            &y_pooled,
                            y_res.as_deref(),
                            settings,
                        )?),
                        Method::ClassUtility => {
                            let labels: Vec<f64> = utility_class_labels(&pop.pooled.e_bar, &weights)
                                .into_iter()
                                .map(f64::from)
                                .collect();
                            let res_labels: Option<Vec<f64>> = pop.reservoir.as_ref().map(|r| {
                                utility_class_labels(&r.e_bar, &weights)
                                    .into_iter()
                                    .map(f64::from)
                                    .collect()
                            });
                            classification_test(calibrate_tree(
                                pop,
                                items,
                                kind,
                                m,
                                &labels,
                                res_labels.as_deref(),
                                settings,
                            )?)
                        }
                    };
                    let label = format!("{} {} m={m} w={w}", method.tree_type(), kind);
                    let delta = delta_distribution(pop, &test, &full, w, label)?;
                    let (sensitivity, specificity) = match eval {
                        Some(e) => {
                            let ev = evaluate(&test, e.data, e.outcomes, None, w)?;
                            (ev.sensitivity, ev.specificity)
                        }
                        None => {
                            let preds = test.classify_all(&test.scores_pooled(&pop.pooled)?);
                            empirical_sens_spec(&preds, &pop.pooled.y_tilde)?
                        }
                    };
                    rows.push(ComparisonRow {
                        number_of_items: m,
                        tree_type: method.tree_type().into(),
                        criterion: kind,
                        method,
                        w,
                        calibration_data: method.calibration_data().into(),
                        sensitivity,
                        specificity,
                        utility: expected_utility(sensitivity, specificity, w),
                        delta,
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// Column set of the method-comparison tables.
pub const COMPARISON_HEADER: [&str; 7] = [
    "Number of Items",
    "Tree Type",
    "Criterion",
    "w",
    "Calibration Data",
    "Sensitivity",
    "Specificity",
];

/// Write comparison rows in the table layout; `w` is `-` for trees that do
/// not depend on it.
pub fn write_comparison_csv<W: std::io::Write>(rows: &[ComparisonRow], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        let weight = match r.method {
            Method::ClassSynthetic => "-".to_string(),
            _ => format!("{}", r.w),
        };
        w.write_record([
            r.number_of_items.to_string(),
            r.tree_type.clone(),
            r.criterion.to_string(),
            weight,
            r.calibration_data.clone(),
            format!("{:.3}", r.sensitivity),
            format!("{:.3}", r.specificity),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utility_arithmetic() {
        assert_eq!(expected_utility(1.0, 1.0, 0.3), 1.0);
        assert!((expected_utility(1.0, 0.0, 0.6) - 0.6).abs() < 1e-12);
        assert!((expected_utility(0.957, 0.365, 0.6) - 0.7202).abs() < 1e-12);
    }

    #[test]
    fn hand_counted_table() {
        // TP=7, FN=3, TN=4, FP=6.
        let mut pred = Vec::new();
        let mut truth = Vec::new();
        for (p, t, k) in [(1, 1, 7), (0, 1, 3), (0, 0, 4), (1, 0, 6)] {
            pred.extend(std::iter::repeat_n(p, k));
            truth.extend(std::iter::repeat_n(t, k));
        }
        let (s, p) = empirical_sens_spec(&pred, &truth).unwrap();
        assert!((s - 0.7).abs() < 1e-15 && (p - 0.4).abs() < 1e-15);
        assert_eq!(empirical_sens_spec(&truth, &truth).unwrap(), (1.0, 1.0));
        let flipped: Vec<u8> = truth.iter().map(|t| 1 - t).collect();
        assert_eq!(empirical_sens_spec(&flipped, &truth).unwrap(), (0.0, 0.0));
        assert!(matches!(
            empirical_sens_spec(&[1, 0], &[1, 1]),
            Err(DecisionError::DegenerateTruths)
        ));
    }

    #[test]
    fn label_threshold_identities() {
        for pi in [0.05, 0.2, 0.37, 0.5, 0.9] {
            let u = UtilityWeights::new(0.5, pi).unwrap();
            assert!((u.label_threshold() - pi).abs() < 1e-15);
        }
        let u = UtilityWeights::new(0.999, 0.1).unwrap();
        assert!(utility_class_labels(&[0.01, 0.2, 0.9], &u).iter().all(|&l| l == 1));
        let u = UtilityWeights::new(0.5, 0.25).unwrap();
        assert_eq!(utility_class_labels(&[0.25, 0.2499], &u), vec![1, 0]);
        assert!(UtilityWeights::new(0.0, 0.5).is_err());
        assert!(UtilityWeights::new(0.5, 1.0).is_err());
    }

    #[test]
    fn separating_scores() {
        let scores = [0.1, 0.2, 0.3, 0.7, 0.8];
        let labels = [0, 0, 0, 1, 1];
        let c = optimize_threshold(&scores, &labels, 0.5).unwrap();
        assert_eq!(c.utility, 1.0);
        // Largest maximizer: cutoff at the lowest positive score.
        assert_eq!(c.threshold, 0.7);
        let roc = roc_points(&scores, &labels).unwrap();
        assert!(roc.iter().any(|p| p.sensitivity == 1.0 && p.specificity == 1.0));
        assert!(roc.windows(2).all(|w| w[0].threshold < w[1].threshold
            && w[0].specificity <= w[1].specificity
            && w[0].sensitivity >= w[1].sensitivity));
    }

    #[test]
    fn constant_scores_are_constant_classifiers() {
        let scores = [0.3; 6];
        let labels = [1, 0, 0, 1, 0, 0];
        for w in [0.2, 0.7] {
            let c = optimize_threshold(&scores, &labels, w).unwrap();
            assert!((c.utility - f64::max(w, 1.0 - w)).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_layout() {
        let row = ComparisonRow {
            number_of_items: 2,
            tree_type: "Classification".into(),
            criterion: TreeKind::MaxDepth,
            method: Method::ClassSynthetic,
            w: 0.5,
            calibration_data: "GCFM + BART".into(),
            sensitivity: 0.0,
            specificity: 1.0,
            utility: 0.5,
            delta: UtilityDiffSample {
                label: String::new(),
                draws: vec![],
                blocks: vec![],
                skipped: vec![],
            },
        };
        let mut out = Vec::new();
        write_comparison_csv(&[row], &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "Number of Items,Tree Type,Criterion,w,Calibration Data,Sensitivity,Specificity\n\
             2,Classification,maxDepth,-,GCFM + BART,0.000,1.000\n"
        );
        assert!("bogus".parse::<Method>().is_err());
    }
}
