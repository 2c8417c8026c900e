//! Subcommand implementations. Every command writes a manifest naming its
//! inputs and outputs by sha256.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde_json::json;
use screentree::archive::{self, content_hash, Archive};
use screentree::copula::{fit_gcfm, CopulaPosterior, McmcConfig};
use screentree::decision::{
    build_full_test, build_short_test, compare_methods, delta_distribution, design_tree,
    empirical_sens_spec, expected_utility, roc_points, write_comparison_csv, AdaptiveTest,
    CalibrationSettings, ComparisonGrid, EvaluationSet, Scorer, TreeKind,
};
use screentree::deploy::{export_tree, import_tree, DeploymentFile, ExportContext};
use screentree::items::{load_dataset, load_item_bank, Dataset, ItemBank, ItemError};
use screentree::population::{generate_population, generate_pruning_reservoir, ArchiveManifest, SyntheticPopulation};
use screentree::predicate::PredicateError;
use screentree::risk::{fit_risk_model, RiskConfig, RiskPosterior};

use crate::config::{w_label, RunConfig};
use crate::manifest::{manifest_path, Manifest};
use crate::svg::{self, BoxRow, RocSeries};
use crate::{usage, UsageError};

const COPULA_FILE: &str = "copula.json";
const RISK_FILE: &str = "risk.json";

pub fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.is::<UsageError>() || c.is::<ItemError>() || c.is::<PredicateError>())
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let out = cfg.paths.out.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| usage(format!("cannot create output directory {}: {e}", out.display())))?;
    Ok(out)
}

fn require_file<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    let p = p
        .as_deref()
        .ok_or_else(|| usage(format!("no {what} file given (flag --{what} or paths.{what})")))?;
    if !p.is_file() {
        return Err(usage(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p)
}

fn load_bank(cfg: &RunConfig) -> Result<(ItemBank, &Path)> {
    let p = require_file(&cfg.paths.bank, "bank")?;
    Ok((load_item_bank(p)?, p))
}

fn kind_slug(kind: TreeKind) -> &'static str {
    match kind {
        TreeKind::MaxIpp => "maxipp",
        TreeKind::MaxDepth => "maxdepth",
    }
}

pub fn design_file_name(kind: TreeKind, m: usize, w: f64) -> String {
    format!("{}_m{m}_w{}.json", kind_slug(kind), w_label(w))
}

fn load_copula(out: &Path) -> Result<Archive<CopulaPosterior>> {
    let p = out.join("models").join(COPULA_FILE);
    if !p.is_file() {
        return Err(usage(format!(
            "model archive {} not found; run `screentree fit` first",
            p.display()
        )));
    }
    archive::load_copula(&p).with_context(|| format!("loading {}", p.display()))
}

fn load_risk(out: &Path) -> Result<Archive<RiskPosterior>> {
    let p = out.join("models").join(RISK_FILE);
    if !p.is_file() {
        return Err(usage(format!(
            "model archive {} not found; run `screentree fit` first",
            p.display()
        )));
    }
    archive::load_risk(&p).with_context(|| format!("loading {}", p.display()))
}

fn population_dir(out: &Path) -> PathBuf {
    out.join("population")
}

fn load_population(out: &Path) -> Result<(SyntheticPopulation, ArchiveManifest)> {
    let dir = population_dir(out);
    if !dir.join("manifest.json").is_file() {
        return Err(usage(format!(
            "no synthetic population under {}; run `screentree synth` first",
            dir.display()
        )));
    }
    Ok(SyntheticPopulation::load(&dir)?)
}

fn settings(cfg: &RunConfig, pop: &SyntheticPopulation) -> CalibrationSettings {
    CalibrationSettings {
        min_node: cfg.test.min_node,
        patience: cfg.test.patience,
        prune_threshold: cfg.test.prune_threshold,
        seed: pop.seed,
    }
}

/// Held-out rows satisfying the population predicate.
fn load_holdout(cfg: &RunConfig, bank: &ItemBank, pop: &SyntheticPopulation, required: bool) -> Result<Option<Dataset>> {
    if cfg.paths.holdout.is_none() && !required {
        return Ok(None);
    }
    let p = require_file(&cfg.paths.holdout, "holdout")?;
    let data = load_dataset(p, bank)?;
    let names = data.augmented_names();
    let bound = pop.predicate.bind(&names, &data.conditioning_names)?;
    let data = data.filter_rows(|i| {
        let row = data.augmented_row(i);
        bound.eval(|c| row[c])
    });
    if data.n_rows() == 0 {
        return Err(usage(format!(
            "holdout dataset {} has no rows in the target population ({})",
            p.display(),
            pop.predicate
        )));
    }
    Ok(Some(data))
}

fn write_key(path: &Path, key: &str) -> Result<()> {
    std::fs::write(path, format!("{key}\n"))?;
    Ok(())
}

fn key_matches(path: &Path, key: &str) -> bool {
    std::fs::read_to_string(path).is_ok_and(|s| s.trim() == key)
}

pub fn fit(cfg: &RunConfig, force: bool) -> Result<()> {
    let (bank, bank_path) = load_bank(cfg)?;
    let data_path = require_file(&cfg.paths.data, "data")?;
    let data = load_dataset(data_path, &bank)?;
    let m = &cfg.model;
    if m.k == 0 || m.copula_draws == 0 || m.risk_draws == 0 || m.risk_trees == 0 {
        return Err(usage("model.k, draws and risk_trees must be at least 1"));
    }
    let out = out_dir(cfg)?;
    let dir = out.join("models");
    std::fs::create_dir_all(&dir)?;
    let mut man = Manifest::new("fit", json!(m));
    let bank_h = man.input(bank_path)?;
    let data_h = man.input(data_path)?;
    let x = data.augmented_matrix()?;

    // Each model is refit only when its inputs or settings change, so an
    // interrupted run resumes after the last finished archive.
    let copula_path = dir.join(COPULA_FILE);
    let copula_key = content_hash(&(&bank_h, &data_h, m.k, m.copula_burn_in, m.copula_draws, m.copula_thin, m.seed))?;
    let copula_key_path = dir.join("copula.key");
    let copula_hash = if !force && key_matches(&copula_key_path, &copula_key) && archive::load_copula(&copula_path).is_ok() {
        info!("copula archive is up to date");
        archive::load_copula(&copula_path)?.content_hash
    } else {
        info!("fitting copula factor model (k = {})", m.k);
        let mcmc = McmcConfig {
            burn_in: m.copula_burn_in,
            thin: m.copula_thin,
            draws: m.copula_draws,
            seed: m.seed,
        };
        let post = fit_gcfm(&x, &data.conditioning_names, m.k, &mcmc)?;
        if post.diagnostics.as_ref().is_some_and(|d| d.flagged) {
            log::warn!("copula chain diagnostics flag possible non-convergence");
        }
        let h = archive::save_copula(&post, &copula_path)?;
        write_key(&copula_key_path, &copula_key)?;
        h
    };

    let risk_path = dir.join(RISK_FILE);
    let risk_key = content_hash(&(&bank_h, &data_h, m.risk_trees, m.risk_burn_in, m.risk_draws, m.risk_thin, m.seed))?;
    let risk_key_path = dir.join("risk.key");
    let risk_hash = if !force && key_matches(&risk_key_path, &risk_key) && archive::load_risk(&risk_path).is_ok() {
        info!("risk archive is up to date");
        archive::load_risk(&risk_path)?.content_hash
    } else {
        info!("fitting risk model ({} trees)", m.risk_trees);
        let rc = RiskConfig {
            num_trees: m.risk_trees,
            burn_in: m.risk_burn_in,
            draws: m.risk_draws,
            thin: m.risk_thin,
            seed: m.seed,
            ..Default::default()
        };
        let post = fit_risk_model(&x, &data.outcomes, &rc)?;
        let h = archive::save_risk(&post, &risk_path)?;
        write_key(&risk_key_path, &risk_key)?;
        h
    };
    man.output(&out, &copula_path)?;
    man.output(&out, &risk_path)?;
    man.write(&manifest_path(&dir, "fit"))?;
    println!("copula {copula_hash}");
    println!("risk   {risk_hash}");
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let pc = &cfg.population;
    let pred = cfg.predicate()?;
    if pc.n == 0 || pc.d == 0 {
        return Err(usage("population.n and population.d must be at least 1"));
    }
    let out = out_dir(cfg)?;
    let copula = load_copula(&out)?;
    let risk = load_risk(&out)?;
    let available = copula.payload.n_draws().min(risk.payload.draws.len());
    if pc.d > available {
        return Err(usage(format!(
            "population.d = {} exceeds the {available} posterior draws available",
            pc.d
        )));
    }
    for c in &pred.conditions {
        if !copula.payload.conditioning_names.contains(&c.var) {
            return Err(usage(format!(
                "predicate variable {:?} is not a conditioning variable of the fitted model",
                c.var
            )));
        }
    }
    let mut pop = generate_population(&copula.payload, &risk.payload, pc.n, pc.d, pc.seed, &pred)?;
    if pc.reservoir > 0 {
        pop.reservoir = Some(generate_pruning_reservoir(
            &copula.payload,
            &risk.payload,
            pc.reservoir,
            pc.seed,
            &pred,
        )?);
    }
    let dir = population_dir(&out);
    let hashes = BTreeMap::from([
        ("copula".to_string(), copula.content_hash.clone()),
        ("risk".to_string(), risk.content_hash.clone()),
    ]);
    let am = pop.save(&dir, hashes)?;
    let mut man = Manifest::new("synth", json!(pc));
    man.input(&out.join("models").join(COPULA_FILE))?;
    man.input(&out.join("models").join(RISK_FILE))?;
    for f in ["manifest.json", "pooled.bin", "reservoir.bin"] {
        let p = dir.join(f);
        if p.is_file() {
            man.output(&out, &p)?;
        }
    }
    man.write(&manifest_path(&dir, "synth"))?;
    println!(
        "N={} D={} M={} predicate={} reservoir={}",
        am.n,
        am.d,
        am.m,
        am.predicate,
        am.reservoir_rows.unwrap_or(0)
    );
    Ok(())
}

pub fn design(cfg: &RunConfig) -> Result<()> {
    cfg.validate_test()?;
    let (bank, bank_path) = load_bank(cfg)?;
    let out = out_dir(cfg)?;
    let (pop, pman) = load_population(&out)?;
    let items = bank.splitting_item_ids();
    let st = settings(cfg, &pop);
    let kind = cfg.test.kind;
    let dir = out.join("designs");
    std::fs::create_dir_all(&dir)?;
    let mut man = Manifest::new("design", json!(cfg.test));
    let bank_h = man.input(bank_path)?;
    let pop_h = man.input(&population_dir(&out).join("manifest.json"))?;
    let mut inputs = pman.model_hashes.clone();
    inputs.insert("bank".into(), bank_h);
    inputs.insert("population".into(), pop_h);

    let table_path = dir.join("thresholds.csv");
    let mut table = csv::Writer::from_path(&table_path)?;
    table.write_record([
        "kind", "m", "w", "threshold", "sensitivity", "specificity", "utility", "leaves", "depth", "maxipp", "file",
    ])?;
    for &w in &cfg.test.w {
        let full = build_full_test(&pop, w)?;
        let c = full.training.expect("optimized test");
        table.write_record([
            "full".into(),
            "all".into(),
            w_label(w),
            c.threshold.to_string(),
            c.sensitivity.to_string(),
            c.specificity.to_string(),
            c.utility.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    for &m in &cfg.test.m {
        let tree = design_tree(&pop, &items, kind, m, &st)?;
        info!("m = {m}: {} leaves, depth {}", tree.n_leaves(), tree.depth());
        for &w in &cfg.test.w {
            let short = build_short_test(&pop, tree.clone(), w)?;
            let c = short.training.expect("optimized test");
            let name = design_file_name(kind, m, w);
            let path = dir.join(&name);
            let ctx = ExportContext {
                w: Some(w),
                inputs: inputs.clone(),
            };
            let doc = export_tree(&tree, &bank, short.threshold, &ctx, &path)?;
            man.output(&out, &path)?;
            table.write_record([
                kind_slug(kind).to_string(),
                m.to_string(),
                w_label(w),
                c.threshold.to_string(),
                c.sensitivity.to_string(),
                c.specificity.to_string(),
                c.utility.to_string(),
                tree.n_leaves().to_string(),
                tree.depth().to_string(),
                doc.maxipp.to_string(),
                name,
            ])?;
        }
    }
    table.flush()?;
    drop(table);
    man.output(&out, &table_path)?;
    man.write(&manifest_path(&dir, "design"))?;
    println!(
        "{} deployment files in {}",
        cfg.test.m.len() * cfg.test.w.len(),
        dir.display()
    );
    Ok(())
}

fn load_design(out: &Path, kind: TreeKind, m: usize, w: f64) -> Result<(AdaptiveTest, PathBuf)> {
    let path = out.join("designs").join(design_file_name(kind, m, w));
    if !path.is_file() {
        return Err(usage(format!(
            "design {} not found; run `screentree design` with m = {m}, w = {w}",
            path.display()
        )));
    }
    let (tree, threshold, _) = import_tree(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok((
        AdaptiveTest {
            scorer: Scorer::Tree { tree },
            threshold,
            training: None,
        },
        path,
    ))
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    cfg.validate_test()?;
    let (bank, bank_path) = load_bank(cfg)?;
    let out = out_dir(cfg)?;
    let (pop, _) = load_population(&out)?;
    let holdout = load_holdout(cfg, &bank, &pop, true)?.expect("required");
    let risk = load_risk(&out)?;
    let hx = holdout.augmented_matrix()?;
    let y = &holdout.outcomes;
    let kind = cfg.test.kind;
    let dir = out.join("evaluation");
    std::fs::create_dir_all(&dir)?;
    let mut man = Manifest::new("evaluate", json!({"test": cfg.test, "holdout_rows": holdout.n_rows()}));
    man.input(bank_path)?;
    man.input(cfg.paths.holdout.as_deref().expect("checked"))?;
    man.input(&population_dir(&out).join("manifest.json"))?;
    man.input(&out.join("models").join(RISK_FILE))?;

    let table_path = dir.join("table.csv");
    let deltas_path = dir.join("deltas.csv");
    let box_path = dir.join("boxplot.csv");
    let roc_path = dir.join("roc.csv");
    let mut table = csv::Writer::from_path(&table_path)?;
    table.write_record(["w", "test", "threshold", "sensitivity", "specificity", "utility", "holdout_delta"])?;
    let mut deltas = csv::Writer::from_path(&deltas_path)?;
    deltas.write_record(["w", "m", "block", "delta"])?;
    let mut boxes = csv::Writer::from_path(&box_path)?;
    boxes.write_record([
        "w", "m", "n", "lower_whisker", "q1", "median", "q3", "upper_whisker", "mean", "skipped", "holdout_delta",
    ])?;
    let mut roc = csv::Writer::from_path(&roc_path)?;
    roc.write_record(["w", "test", "threshold", "specificity", "sensitivity"])?;

    for &w in &cfg.test.w {
        let full = build_full_test(&pop, w)?;
        let full_scores = full.scores_on(&hx, Some(&risk.payload))?;
        let (fs, fp) = empirical_sens_spec(&full.classify_all(&full_scores), y)?;
        let full_u = expected_utility(fs, fp, w);
        table.write_record([
            w_label(w),
            "full".into(),
            full.threshold.to_string(),
            fs.to_string(),
            fp.to_string(),
            full_u.to_string(),
            String::new(),
        ])?;
        for p in roc_points(&full_scores, y)? {
            roc.write_record([w_label(w), "full".into(), p.threshold.to_string(), p.specificity.to_string(), p.sensitivity.to_string()])?;
        }
        for &m in &cfg.test.m {
            let (short, path) = load_design(&out, kind, m, w)?;
            man.input(&path)?;
            let scores = short.scores_on(&hx, None)?;
            let (s, p) = empirical_sens_spec(&short.classify_all(&scores), y)?;
            let u = expected_utility(s, p, w);
            let held = u - full_u;
            let label = format!("m={m}");
            table.write_record([
                w_label(w),
                label.clone(),
                short.threshold.to_string(),
                s.to_string(),
                p.to_string(),
                u.to_string(),
                held.to_string(),
            ])?;
            for pt in roc_points(&scores, y)? {
                roc.write_record([w_label(w), label.clone(), pt.threshold.to_string(), pt.specificity.to_string(), pt.sensitivity.to_string()])?;
            }
            let d = delta_distribution(&pop, &short, &full, w, format!("{label} w={w}"))?;
            let by_block: HashMap<usize, f64> = d.blocks.iter().copied().zip(d.draws.iter().copied()).collect();
            for j in 0..pop.d {
                let v = by_block.get(&j).map_or("NA".to_string(), f64::to_string);
                deltas.write_record([w_label(w), m.to_string(), j.to_string(), v])?;
            }
            if let Some(b) = d.summary() {
                boxes.write_record([
                    w_label(w),
                    m.to_string(),
                    b.n.to_string(),
                    b.lower_whisker.to_string(),
                    b.q1.to_string(),
                    b.median.to_string(),
                    b.q3.to_string(),
                    b.upper_whisker.to_string(),
                    b.mean.to_string(),
                    d.skipped.len().to_string(),
                    held.to_string(),
                ])?;
            }
        }
    }
    for w in [&mut table, &mut deltas, &mut boxes, &mut roc] {
        w.flush()?;
    }
    drop((table, deltas, boxes, roc));
    for p in [&table_path, &deltas_path, &box_path, &roc_path] {
        man.output(&out, p)?;
    }
    if cfg.report.svg {
        for p in render_figures(&dir, &dir)? {
            man.output(&out, &p)?;
        }
    }
    man.write(&manifest_path(&dir, "evaluate"))?;
    println!("evaluation tables in {}", dir.display());
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()?;
    Ok((header, rows))
}

fn col(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow::anyhow!("missing column {name:?}"))
}

fn num(s: &str) -> Result<f64> {
    s.parse().with_context(|| format!("not a number: {s:?}"))
}

/// Render boxplot and ROC SVGs from the evaluation CSVs in `src`.
fn render_figures(src: &Path, dest: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let (bh, brows) = read_csv(&src.join("boxplot.csv"))?;
    let (th, trows) = read_csv(&src.join("table.csv"))?;
    let (rh, rrows) = read_csv(&src.join("roc.csv"))?;
    let mut weights: Vec<String> = trows.iter().map(|r| r[0].clone()).collect();
    weights.dedup();
    for w in weights {
        let rows: Vec<BoxRow> = brows
            .iter()
            .filter(|r| r[col(&bh, "w").unwrap()] == w)
            .map(|r| -> Result<BoxRow> {
                Ok(BoxRow {
                    label: format!("m={}", r[col(&bh, "m")?]),
                    lower_whisker: num(&r[col(&bh, "lower_whisker")?])?,
                    q1: num(&r[col(&bh, "q1")?])?,
                    median: num(&r[col(&bh, "median")?])?,
                    q3: num(&r[col(&bh, "q3")?])?,
                    upper_whisker: num(&r[col(&bh, "upper_whisker")?])?,
                    marker: Some(num(&r[col(&bh, "holdout_delta")?])?),
                })
            })
            .collect::<Result<_>>()?;
        let p = dest.join(format!("boxplot_w{w}.svg"));
        std::fs::write(&p, svg::boxplot(&format!("Utility difference vs full test (w = {w})"), &rows))?;
        written.push(p);

        let mut series: Vec<RocSeries> = Vec::new();
        for r in trows.iter().filter(|r| r[0] == w) {
            let test = &r[col(&th, "test")?];
            let points = rrows
                .iter()
                .filter(|x| x[0] == w && &x[col(&rh, "test").unwrap()] == test)
                .map(|x| -> Result<(f64, f64)> {
                    Ok((1.0 - num(&x[col(&rh, "specificity")?])?, num(&x[col(&rh, "sensitivity")?])?))
                })
                .collect::<Result<_>>()?;
            series.push(RocSeries {
                label: test.clone(),
                points,
                chosen: Some((1.0 - num(&r[col(&th, "specificity")?])?, num(&r[col(&th, "sensitivity")?])?)),
            });
        }
        let p = dest.join(format!("roc_w{w}.svg"));
        std::fs::write(&p, svg::roc(&format!("Held-out ROC (w = {w})"), &series))?;
        written.push(p);
    }
    Ok(written)
}

pub fn compare(cfg: &RunConfig) -> Result<()> {
    cfg.validate_test()?;
    let methods = cfg.methods()?;
    if methods.is_empty() || cfg.test.compare_kinds.is_empty() {
        return Err(usage("comparison grid needs at least one method and one tree kind"));
    }
    let (bank, bank_path) = load_bank(cfg)?;
    let out = out_dir(cfg)?;
    let (pop, _) = load_population(&out)?;
    let holdout = load_holdout(cfg, &bank, &pop, false)?;
    let hx = holdout.as_ref().map(Dataset::augmented_matrix).transpose()?;
    let eval = holdout.as_ref().zip(hx.as_ref()).map(|(h, x)| EvaluationSet {
        data: x,
        outcomes: &h.outcomes,
    });
    let grid = ComparisonGrid {
        sizes: cfg.test.m.clone(),
        kinds: cfg.test.compare_kinds.clone(),
        methods,
        weights: cfg.test.w.clone(),
    };
    let items = bank.splitting_item_ids();
    let rows = compare_methods(&pop, &items, &grid, &settings(cfg, &pop), eval.as_ref())?;
    let dir = out.join("compare");
    std::fs::create_dir_all(&dir)?;
    let mut man = Manifest::new("compare", json!({"test": cfg.test, "grid": grid}));
    man.input(bank_path)?;
    man.input(&population_dir(&out).join("manifest.json"))?;
    if let Some(p) = cfg.paths.holdout.as_deref() {
        man.input(p)?;
    }
    let table_path = dir.join("comparison.csv");
    write_comparison_csv(&rows, File::create(&table_path)?)?;
    let detail_path = dir.join("comparison_detail.csv");
    let mut d = csv::Writer::from_path(&detail_path)?;
    d.write_record([
        "number_of_items", "tree_type", "criterion", "method", "w", "calibration_data", "sensitivity",
        "specificity", "utility", "delta_q1", "delta_median", "delta_q3", "blocks_skipped",
    ])?;
    for r in &rows {
        let s = r.delta.summary();
        let q = |f: fn(&screentree::stats::BoxplotSummary) -> f64| s.as_ref().map_or("NA".into(), |b| f(b).to_string());
        d.write_record([
            r.number_of_items.to_string(),
            r.tree_type.clone(),
            r.criterion.to_string(),
            serde_json::to_value(r.method)?.as_str().unwrap_or_default().to_string(),
            w_label(r.w),
            r.calibration_data.clone(),
            r.sensitivity.to_string(),
            r.specificity.to_string(),
            r.utility.to_string(),
            q(|b| b.q1),
            q(|b| b.median),
            q(|b| b.q3),
            r.delta.skipped.len().to_string(),
        ])?;
    }
    d.flush()?;
    drop(d);
    man.output(&out, &table_path)?;
    man.output(&out, &detail_path)?;
    man.write(&manifest_path(&dir, "compare"))?;
    println!("{} comparison rows in {}", rows.len(), table_path.display());
    Ok(())
}

pub fn export(
    cfg: &RunConfig,
    m: Option<usize>,
    w: Option<f64>,
    kind: Option<TreeKind>,
    output: Option<PathBuf>,
    population_csv: Option<PathBuf>,
) -> Result<()> {
    if m.is_none() && population_csv.is_none() {
        return Err(usage("nothing to export: give --m (a designed test) and/or --population-csv"));
    }
    let out = out_dir(cfg)?;
    let dir = out.join("export");
    std::fs::create_dir_all(&dir)?;
    let mut man = Manifest::new("export", json!({"m": m, "w": w, "kind": kind}));
    if let Some(m) = m {
        let w = w.or(cfg.test.w.first().copied()).ok_or_else(|| usage("no utility weight w"))?;
        let kind = kind.unwrap_or(cfg.test.kind);
        let src = out.join("designs").join(design_file_name(kind, m, w));
        if !src.is_file() {
            return Err(usage(format!("design {} not found; run `screentree design` first", src.display())));
        }
        man.input(&src)?;
        let doc = DeploymentFile::load(&src)?;
        let dest = output.unwrap_or_else(|| dir.join(design_file_name(kind, m, w)));
        std::fs::write(&dest, doc.to_json()?)?;
        man.output(&out, &dest)?;
        println!(
            "{} ({} items, {} leaves, maxipp {}, threshold {})",
            dest.display(),
            doc.items.len(),
            doc.n_leaves(),
            doc.maxipp,
            doc.threshold
        );
    }
    if let Some(p) = population_csv {
        let (pop, _) = load_population(&out)?;
        man.input(&population_dir(&out).join("manifest.json"))?;
        pop.write_csv(File::create(&p).with_context(|| format!("creating {}", p.display()))?)?;
        man.output(&out, &p)?;
        println!("{} ({} rows)", p.display(), pop.m());
    }
    man.write(&manifest_path(&dir, "export"))?;
    Ok(())
}

fn markdown_table(path: &Path) -> Result<String> {
    let (header, rows) = read_csv(path)?;
    let mut s = format!("| {} |\n|{}\n", header.join(" | "), " --- |".repeat(header.len()));
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .map(|c| match c.parse::<f64>() {
                Ok(v) if c.contains('.') => format!("{v:.4}"),
                _ => c.clone(),
            })
            .collect();
        s.push_str(&format!("| {} |\n", cells.join(" | ")));
    }
    Ok(s)
}

pub fn report(cfg: &RunConfig) -> Result<()> {
    let out = cfg.paths.out.clone();
    let sources = [
        ("Models", out.join("models").join("fit-manifest.json")),
        ("Population", population_dir(&out).join("manifest.json")),
        ("Designed tests (training population)", out.join("designs").join("thresholds.csv")),
        ("Held-out evaluation", out.join("evaluation").join("table.csv")),
        ("Utility differences", out.join("evaluation").join("boxplot.csv")),
        ("Method comparison", out.join("compare").join("comparison.csv")),
    ];
    if !sources.iter().any(|(_, p)| p.is_file()) {
        return Err(usage(format!("no artifacts under {}", out.display())));
    }
    let dir = out.join("report");
    std::fs::create_dir_all(&dir)?;
    let mut man = Manifest::new("report", json!(cfg.report));
    let mut md = String::from("# Adaptive screening test report\n");
    for (title, path) in &sources {
        if !path.is_file() {
            continue;
        }
        man.input(path)?;
        md.push_str(&format!("\n## {title}\n\n"));
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => md.push_str(&markdown_table(path)?),
            _ if title == &"Models" => {
                let fm = Manifest::read(path)?;
                for (k, v) in &fm.outputs {
                    md.push_str(&format!("- `{k}`: sha256 `{v}`\n"));
                }
            }
            _ => {
                let am: ArchiveManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                md.push_str(&format!(
                    "- N = {}, D = {}, M = {}\n- predicate: `{}`\n- reservoir rows: {}\n- proposals: {}\n",
                    am.n,
                    am.d,
                    am.m,
                    am.predicate,
                    am.reservoir_rows.unwrap_or(0),
                    am.proposals.iter().sum::<usize>()
                ));
                for (k, v) in &am.model_hashes {
                    md.push_str(&format!("- {k} model: `{v}`\n"));
                }
            }
        }
    }
    let eval_dir = out.join("evaluation");
    if cfg.report.svg && eval_dir.join("boxplot.csv").is_file() {
        md.push_str("\n## Figures\n\n");
        for p in render_figures(&eval_dir, &dir)? {
            let name = p.file_name().unwrap().to_string_lossy().to_string();
            md.push_str(&format!("![{name}]({name})\n"));
            man.output(&out, &p)?;
        }
    }
    let report_path = dir.join("report.md");
    std::fs::write(&report_path, md)?;
    man.output(&out, &report_path)?;
    man.write(&manifest_path(&dir, "report"))?;
    println!("{}", report_path.display());
    Ok(())
}
