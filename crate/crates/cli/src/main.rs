//! `screentree`: fit, simulate, design, evaluate, compare, export, report.
//!
//! Exit codes: 0 success, 1 computational failure, 2 usage or configuration
//! error.

mod commands;
mod config;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use screentree::decision::TreeKind;

use config::{parse_m_list, RunConfig, OUT_ENV};

/// A usage or configuration problem; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Parser, Debug)]
#[command(name = "screentree", version, about = "Design length-constrained tree-based adaptive screening tests")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config file and $SCREENTREE_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the copula factor model and the risk model.
    Fit(FitArgs),
    /// Simulate the synthetic target population.
    Synth(SynthArgs),
    /// Grow, prune and threshold one test per item budget.
    Design(TestArgs),
    /// Compare shortened tests with the full test on held-out data.
    Evaluate(EvaluateArgs),
    /// Regression-with-cutoff versus classification trees.
    Compare(CompareArgs),
    /// Copy a designed test to a deployment file or dump the population.
    Export(ExportArgs),
    /// Summarize all artifacts and render figures.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    bank: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Copula factor dimension.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    copula_burn_in: Option<usize>,
    #[arg(long)]
    copula_draws: Option<usize>,
    #[arg(long)]
    risk_trees: Option<usize>,
    #[arg(long)]
    risk_burn_in: Option<usize>,
    #[arg(long)]
    risk_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Refit even when archives for the same inputs exist.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Rows per posterior draw.
    #[arg(long)]
    n: Option<usize>,
    /// Number of posterior draws.
    #[arg(long)]
    d: Option<usize>,
    /// Target-population condition, e.g. `age>=15`.
    #[arg(long)]
    predicate: Option<String>,
    /// Rows in the pruning reservoir.
    #[arg(long)]
    reservoir: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct TestArgs {
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Item budgets, e.g. `2..15` or `1,2,3,6`.
    #[arg(long, value_parser = parse_budgets)]
    m: Option<Budgets>,
    /// Utility weights on sensitivity, comma separated.
    #[arg(long, value_delimiter = ',')]
    w: Option<Vec<f64>>,
    /// `maxipp` or `maxdepth`.
    #[arg(long)]
    kind: Option<TreeKind>,
    #[arg(long)]
    min_node: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    prune_threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    test: TestArgs,
    /// Labelled held-out dataset.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Render SVG figures next to the CSVs.
    #[arg(long)]
    svg: Option<bool>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    test: TestArgs,
    /// Tree kinds in the grid.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<TreeKind>>,
    /// Methods: regression, class_synthetic, class_utility.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Report sensitivity and specificity on this labelled dataset.
    #[arg(long)]
    holdout: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    kind: Option<TreeKind>,
    /// Destination of the deployment file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write the pooled synthetic population as CSV.
    #[arg(long)]
    population_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    svg: Option<bool>,
}

#[derive(Debug, Clone)]
struct Budgets(Vec<usize>);

fn parse_budgets(s: &str) -> Result<Budgets, String> {
    parse_m_list(s).map(Budgets)
}

fn overlay<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_test_args(cfg: &mut RunConfig, a: TestArgs) {
    if a.bank.is_some() {
        cfg.paths.bank = a.bank;
    }
    overlay(&mut cfg.test.m, a.m.map(|b| b.0));
    overlay(&mut cfg.test.w, a.w);
    overlay(&mut cfg.test.kind, a.kind);
    overlay(&mut cfg.test.min_node, a.min_node);
    overlay(&mut cfg.test.patience, a.patience);
    if a.prune_threshold.is_some() {
        cfg.test.prune_threshold = a.prune_threshold;
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUT_ENV) {
        cfg.paths.out = PathBuf::from(dir);
    }
    if let Some(dir) = cli.out {
        cfg.paths.out = dir;
    }
    match cli.command {
        Command::Fit(a) => {
            if a.bank.is_some() {
                cfg.paths.bank = a.bank;
            }
            if a.data.is_some() {
                cfg.paths.data = a.data;
            }
            overlay(&mut cfg.model.k, a.k);
            overlay(&mut cfg.model.copula_burn_in, a.copula_burn_in);
            overlay(&mut cfg.model.copula_draws, a.copula_draws);
            overlay(&mut cfg.model.risk_trees, a.risk_trees);
            overlay(&mut cfg.model.risk_burn_in, a.risk_burn_in);
            overlay(&mut cfg.model.risk_draws, a.risk_draws);
            overlay(&mut cfg.model.seed, a.seed);
            commands::fit(&cfg, a.force)
        }
        Command::Synth(a) => {
            overlay(&mut cfg.population.n, a.n);
            overlay(&mut cfg.population.d, a.d);
            overlay(&mut cfg.population.predicate, a.predicate);
            overlay(&mut cfg.population.reservoir, a.reservoir);
            overlay(&mut cfg.population.seed, a.seed);
            commands::synth(&cfg)
        }
        Command::Design(a) => {
            apply_test_args(&mut cfg, a);
            commands::design(&cfg)
        }
        Command::Evaluate(a) => {
            apply_test_args(&mut cfg, a.test);
            if a.holdout.is_some() {
                cfg.paths.holdout = a.holdout;
            }
            overlay(&mut cfg.report.svg, a.svg);
            commands::evaluate(&cfg)
        }
        Command::Compare(a) => {
            apply_test_args(&mut cfg, a.test);
            overlay(&mut cfg.test.compare_kinds, a.kinds);
            overlay(&mut cfg.test.compare_methods, a.methods);
            if a.holdout.is_some() {
                cfg.paths.holdout = a.holdout;
            }
            commands::compare(&cfg)
        }
        Command::Export(a) => commands::export(&cfg, a.m, a.w, a.kind, a.output, a.population_csv),
        Command::Report(a) => {
            overlay(&mut cfg.report.svg, a.svg);
            commands::report(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if commands::is_usage_error(&e) { 2 } else { 1 };
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
