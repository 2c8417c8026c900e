use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use screentree::deploy::DeploymentFile;
use screentree::simulate::StudyDesign;

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let design = StudyDesign {
            n_items: 10,
            with_age: true,
            ..Default::default()
        };
        std::fs::write(dir.path().join("bank.json"), design.bank().to_json()).unwrap();
        std::fs::write(dir.path().join("train.csv"), design.sample(400, 1).to_csv()).unwrap();
        std::fs::write(dir.path().join("holdout.csv"), design.sample(300, 2).to_csv()).unwrap();
        std::fs::write(
            dir.path().join("run.toml"),
            r#"
[paths]
bank = "bank.json"
data = "train.csv"
holdout = "holdout.csv"
out = "out"

[model]
k = 2
copula_burn_in = 30
copula_draws = 50
risk_trees = 10
risk_burn_in = 30
risk_draws = 50

[population]
n = 100
d = 50
reservoir = 3000
"#,
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_screentree"))
            .current_dir(self.dir.path())
            .env_remove("SCREENTREE_OUT")
            .arg("--config")
            .arg(self.path("run.toml"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.run(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    fn fitted(self) -> Self {
        self.ok(&["fit"]);
        self
    }

    fn synthesized(self) -> Self {
        let f = self.fitted();
        f.ok(&["synth"]);
        f
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn sha(p: &Path) -> String {
    screentree::archive::file_hash(p).unwrap()
}

fn csv_rows(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let h = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (h, rows)
}

#[test]
fn fit_writes_archives_and_resumes() {
    let f = Fixture::new().fitted();
    let copula = f.path("out/models/copula.json");
    let risk = f.path("out/models/risk.json");
    assert!(copula.is_file() && risk.is_file());
    assert!(f.path("out/models/fit-manifest.json").is_file());
    let (h1, h2) = (sha(&copula), sha(&risk));

    // Removing one archive refits only that model.
    std::fs::remove_file(&risk).unwrap();
    f.ok(&["fit"]);
    assert_eq!(sha(&copula), h1);
    assert_eq!(sha(&risk), h2);
    f.ok(&["fit", "--force"]);
    assert_eq!((sha(&copula), sha(&risk)), (h1, h2));
}

#[test]
fn fit_with_missing_input_is_usage_error() {
    let f = Fixture::new();
    let o = f.run(&["fit", "--data", "nope.csv"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
}

#[test]
fn synth_without_models_is_usage_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["synth"])), 2);
}

#[test]
fn synth_respects_size_and_predicate() {
    let f = Fixture::new().fitted();
    let out = f.ok(&["synth", "--predicate", "age>=15"]);
    assert!(out.contains("M=5000"), "{out}");
    let man: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.path("out/population/manifest.json")).unwrap()).unwrap();
    assert_eq!(man["M"], 5000);
    assert_eq!(man["N"], 100);
    assert_eq!(man["D"], 50);
    f.ok(&["export", "--population-csv", "pop.csv"]);
    let (h, rows) = csv_rows(&f.path("pop.csv"));
    assert_eq!(rows.len(), 5000);
    let age = h.iter().position(|c| c == "age").unwrap();
    assert!(rows.iter().all(|r| r[age].parse::<i32>().unwrap() >= 15));

    assert_eq!(code(&f.run(&["synth", "--predicate", "height>3"])), 2);
    assert_eq!(code(&f.run(&["synth", "--predicate", "age>>3"])), 2);
    assert_eq!(code(&f.run(&["synth", "--d", "51"])), 2);
}

#[test]
fn design_writes_one_deployment_file_per_budget() {
    let f = Fixture::new().synthesized();
    f.ok(&["design", "--m", "2..15"]);
    let mut files = Vec::new();
    for m in 2..=15 {
        let p = f.path(&format!("out/designs/maxipp_m{m}_w0.5.json"));
        let doc = DeploymentFile::load(&p).unwrap();
        assert_eq!(doc.schema, "adaptive-test/v1");
        assert!(doc.maxipp <= m, "m = {m}: maxipp {}", doc.maxipp);
        files.push(std::fs::read(&p).unwrap());
    }
    let (h, rows) = csv_rows(&f.path("out/designs/thresholds.csv"));
    assert_eq!(h[0], "kind");
    assert_eq!(rows.len(), 15);

    f.ok(&["design", "--m", "2..15"]);
    for (m, before) in (2..=15).zip(&files) {
        let after = std::fs::read(f.path(&format!("out/designs/maxipp_m{m}_w0.5.json"))).unwrap();
        assert_eq!(&after, before, "m = {m} not reproducible");
    }
    assert_eq!(code(&f.run(&["design", "--m", "0"])), 2);
    assert_eq!(code(&f.run(&["design", "--w", "1.5"])), 2);
}

#[test]
fn evaluate_writes_tables_and_figures() {
    let f = Fixture::new().synthesized();
    f.ok(&["design", "--m", "2,4"]);
    f.ok(&["evaluate", "--m", "2,4"]);
    let (_, deltas) = csv_rows(&f.path("out/evaluation/deltas.csv"));
    assert_eq!(deltas.len(), 2 * 50);
    let (_, table) = csv_rows(&f.path("out/evaluation/table.csv"));
    assert_eq!(table.len(), 3);
    for r in &table {
        let u: f64 = r[5].parse().unwrap();
        assert!((0.0..=1.0).contains(&u));
    }
    assert!(f.path("out/evaluation/boxplot_w0.5.svg").is_file());
    assert!(f.path("out/evaluation/roc_w0.5.svg").is_file());

    // A holdout with no rows in the target population is rejected.
    let o = f.run(&["synth", "--predicate", "age>=15"]);
    assert!(o.status.success());
    std::fs::write(
        f.path("young.csv"),
        {
            let d = StudyDesign {
                n_items: 10,
                with_age: true,
                ..Default::default()
            }
            .sample(50, 9);
            d.filter_rows(|i| d.conditioning[i][0] < 15).to_csv()
        },
    )
    .unwrap();
    f.ok(&["design", "--m", "2"]);
    let o = f.run(&["evaluate", "--m", "2", "--holdout", "young.csv"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&f.run(&["evaluate", "--m", "7"])), 2);
}

#[test]
fn compare_emits_the_comparison_table() {
    let f = Fixture::new().synthesized();
    f.ok(&["compare", "--m", "2,3"]);
    let (h, rows) = csv_rows(&f.path("out/compare/comparison.csv"));
    assert_eq!(h, screentree::decision::COMPARISON_HEADER);
    assert_eq!(h.len(), 7);
    assert_eq!(rows.len(), 2 * 2 * 3);
    assert!(f.path("out/compare/comparison_detail.csv").is_file());

    f.ok(&["compare", "--m", "3", "--kinds", "maxipp", "--methods", "regression"]);
    let (_, rows) = csv_rows(&f.path("out/compare/comparison.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(code(&f.run(&["compare", "--m", "3", "--methods", "lasso"])), 2);
}

#[test]
fn export_and_report() {
    let f = Fixture::new().synthesized();
    assert_eq!(code(&f.run(&["export"])), 2);
    f.ok(&["design", "--m", "3"]);
    f.ok(&["export", "--m", "3", "--output", "test.json"]);
    let doc = DeploymentFile::load(&f.path("test.json")).unwrap();
    assert!(doc.maxipp <= 3);
    assert_eq!(code(&f.run(&["export", "--m", "9"])), 2);
    f.ok(&["evaluate", "--m", "3"]);
    f.ok(&["report"]);
    let md = std::fs::read_to_string(f.path("out/report/report.md")).unwrap();
    assert!(md.contains("Held-out evaluation"));
    assert!(f.path("out/report/roc_w0.5.svg").is_file());
}

#[test]
fn report_without_artifacts_is_usage_error() {
    let f = Fixture::new();
    assert_eq!(code(&f.run(&["report"])), 2);
}

#[test]
fn environment_overrides_output_directory() {
    let f = Fixture::new();
    let o = Command::new(env!("CARGO_BIN_EXE_screentree"))
        .current_dir(f.dir.path())
        .env("SCREENTREE_OUT", f.path("elsewhere"))
        .arg("--config")
        .arg(f.path("run.toml"))
        .arg("fit")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(f.path("elsewhere/models/copula.json").is_file());
    assert!(!f.path("out").exists());
}
