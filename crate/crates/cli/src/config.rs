//! Run configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use screentree::decision::{Method, TreeKind};
use screentree::predicate::Predicate;

use crate::UsageError;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "SCREENTREE_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub bank: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub holdout: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            bank: None,
            data: None,
            holdout: None,
            out: PathBuf::from("screentree-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Copula factor dimension.
    pub k: usize,
    pub copula_burn_in: usize,
    pub copula_draws: usize,
    pub copula_thin: usize,
    /// Trees per risk-model draw.
    pub risk_trees: usize,
    pub risk_burn_in: usize,
    pub risk_draws: usize,
    pub risk_thin: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            k: 3,
            copula_burn_in: 500,
            copula_draws: 1000,
            copula_thin: 1,
            risk_trees: 50,
            risk_burn_in: 250,
            risk_draws: 1000,
            risk_thin: 1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    /// Rows per posterior draw.
    pub n: usize,
    /// Posterior draws used.
    pub d: usize,
    pub predicate: String,
    pub reservoir: usize,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            d: 1000,
            predicate: String::new(),
            reservoir: screentree::population::DEFAULT_RESERVOIR_SIZE,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub m: Vec<usize>,
    pub w: Vec<f64>,
    pub kind: TreeKind,
    pub min_node: usize,
    pub patience: usize,
    /// RMSE-reduction floor; default depends on m.
    pub prune_threshold: Option<f64>,
    /// Tree kinds and methods for the comparison grid.
    pub compare_kinds: Vec<TreeKind>,
    pub compare_methods: Vec<String>,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            m: (2..=15).collect(),
            w: vec![0.5],
            kind: TreeKind::MaxIpp,
            min_node: screentree::tree::DEFAULT_MIN_NODE,
            patience: screentree::tree::DEFAULT_PATIENCE,
            prune_threshold: None,
            compare_kinds: vec![TreeKind::MaxIpp, TreeKind::MaxDepth],
            compare_methods: vec!["regression".into(), "class_synthetic".into(), "class_utility".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub svg: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self { svg: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub population: PopulationConfig,
    pub test: TestConfig,
    pub report: ReportConfig,
}

impl RunConfig {
    /// Parse a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.paths.bank.as_mut().map(fix);
        cfg.paths.data.as_mut().map(fix);
        cfg.paths.holdout.as_mut().map(fix);
        fix(&mut cfg.paths.out);
        Ok(cfg)
    }

    pub fn predicate(&self) -> Result<Predicate, UsageError> {
        self.population
            .predicate
            .parse()
            .map_err(|e| UsageError(format!("population.predicate: {e}")))
    }

    pub fn methods(&self) -> Result<Vec<Method>, UsageError> {
        self.test
            .compare_methods
            .iter()
            .map(|s| s.parse::<Method>().map_err(UsageError))
            .collect()
    }

    pub fn validate_test(&self) -> Result<(), UsageError> {
        if self.test.m.is_empty() {
            return Err(UsageError("test.m is empty".into()));
        }
        if let Some(&m) = self.test.m.iter().find(|&&m| m == 0) {
            return Err(UsageError(format!("item budget m must be at least 1, got {m}")));
        }
        if self.test.w.is_empty() {
            return Err(UsageError("test.w is empty".into()));
        }
        if let Some(w) = self.test.w.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
            return Err(UsageError(format!("utility weight w must lie in (0, 1), got {w}")));
        }
        if self.test.min_node == 0 {
            return Err(UsageError("test.min_node must be at least 1".into()));
        }
        if let Some(t) = self.test.prune_threshold {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(UsageError(format!("test.prune_threshold must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// Parse `2,3,8` or `2..15` (inclusive) or a mix such as `1,3..5`.
pub fn parse_m_list(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.trim().parse().map_err(|_| format!("bad range {part:?}"))?;
            let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| format!("bad range {part:?}"))?;
            if a > b {
                return Err(format!("empty range {part:?}"));
            }
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad item budget {part:?}"))?);
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

/// Render `w` for file names and tables without trailing noise.
pub fn w_label(w: f64) -> String {
    format!("{w}")
}
