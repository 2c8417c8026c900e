//! Synthetic target populations simulated from paired posterior draws.
//!
//! Block `j` pairs the `j`-th copula draw with the `j`-th risk draw: `N`
//! response vectors `x̃` come from the copula predictive (optionally
//! conditioned on a subpopulation predicate), each gets `p̃ = Pr(Ỹ = 1 | x̃)`
//! under the risk draw and a Bernoulli label `ỹ`. Pooling the `D` blocks
//! gives `M = N·D` rows, each annotated with the posterior predictive mean
//! `Ē(Ỹ | x̃)` over all `D` risk draws.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::copula::{sample_conditional_with, CopulaError, CopulaPosterior, DEFAULT_ACCEPTANCE_FLOOR};
use crate::matrix::{CodeMatrix, MatrixError};
use crate::predicate::Predicate;
use crate::risk::{posterior_mean_probs, RiskError, RiskModel};
use crate::stats::stream_rng;

/// Default size of the separate pruning reservoir.
pub const DEFAULT_RESERVOIR_SIZE: usize = 100_000;

const RESERVOIR_STREAM_BASE: u64 = 1 << 32;

pub const ARCHIVE_FORMAT: &str = "synthetic-population/v1";

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("need {needed} posterior draws but the {model} posterior has {available}")]
    DrawCountMismatch {
        model: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("count must be at least 1")]
    InvalidCount,
    #[error("risk model feature {0:?} is not produced by the copula model")]
    MissingFeature(String),
    #[error(transparent)]
    Copula(#[from] CopulaError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("archive i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("archive manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("archive is corrupt: {0}")]
    Corrupt(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Rows pooled across draws with their posterior-mean probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRows {
    pub x: CodeMatrix,
    /// Per-row draw probability `p̃`.
    pub p_tilde: Vec<f64>,
    /// Per-row Bernoulli label `ỹ`.
    pub y_tilde: Vec<u8>,
    /// Posterior predictive mean `Ē(Ỹ | x̃)`.
    pub e_bar: Vec<f64>,
}

impl PooledRows {
    pub fn n_rows(&self) -> usize {
        self.x.n_rows()
    }

    fn slice(&self, r: Range<usize>) -> PooledRows {
        PooledRows {
            x: self.x.slice_rows(r.clone()),
            p_tilde: self.p_tilde[r.clone()].to_vec(),
            y_tilde: self.y_tilde[r.clone()].to_vec(),
            e_bar: self.e_bar[r].to_vec(),
        }
    }
}

/// One block's raw draws before pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDraw {
    pub draw_index: usize,
    pub x: CodeMatrix,
    pub p_tilde: Vec<f64>,
    pub y_tilde: Vec<u8>,
    pub proposals: usize,
}

/// Borrowed view of block `j` inside a pooled population.
#[derive(Debug, Clone)]
pub struct SyntheticBlock<'a> {
    pub draw_index: usize,
    pub rows: Range<usize>,
    pop: &'a SyntheticPopulation,
}

impl<'a> SyntheticBlock<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn p_tilde(&self) -> &'a [f64] {
        &self.pop.pooled.p_tilde[self.rows.clone()]
    }

    pub fn y_tilde(&self) -> &'a [u8] {
        &self.pop.pooled.y_tilde[self.rows.clone()]
    }

    pub fn e_bar(&self) -> &'a [f64] {
        &self.pop.pooled.e_bar[self.rows.clone()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPopulation {
    /// Rows per block.
    pub n: usize,
    /// Number of blocks.
    pub d: usize,
    pub seed: u64,
    pub predicate: Predicate,
    /// Concatenation of blocks in draw order.
    pub pooled: PooledRows,
    pub reservoir: Option<PooledRows>,
    /// Copula proposals per block (rejection sampling under the predicate).
    pub proposals: Vec<usize>,
}

impl SyntheticPopulation {
    /// `M = N·D`.
    pub fn m(&self) -> usize {
        self.pooled.n_rows()
    }

    pub fn block(&self, j: usize) -> SyntheticBlock<'_> {
        SyntheticBlock {
            draw_index: j,
            rows: j * self.n..(j + 1) * self.n,
            pop: self,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = SyntheticBlock<'_>> {
        (0..self.d).map(|j| self.block(j))
    }

    /// Pool hand-built or generated blocks and attach `Ē` from `risk`.
    pub fn assemble<M: RiskModel + ?Sized>(
        blocks: Vec<BlockDraw>,
        risk: &M,
        seed: u64,
        predicate: Predicate,
    ) -> Result<Self, PopulationError> {
        let d = blocks.len();
        if d == 0 {
            return Err(PopulationError::InvalidCount);
        }
        let n = blocks[0].x.n_rows();
        if blocks.iter().any(|b| b.x.n_rows() != n) {
            return Err(PopulationError::Corrupt("blocks differ in size".into()));
        }
        let pooled = pool(blocks.iter(), risk)?;
        Ok(Self {
            n,
            d,
            seed,
            predicate,
            pooled,
            reservoir: None,
            proposals: blocks.iter().map(|b| b.proposals).collect(),
        })
    }
}

fn pool<'b, M: RiskModel + ?Sized>(
    blocks: impl Iterator<Item = &'b BlockDraw>,
    risk: &M,
) -> Result<PooledRows, PopulationError> {
    let mut x: Option<CodeMatrix> = None;
    let mut p_tilde = Vec::new();
    let mut y_tilde = Vec::new();
    for b in blocks {
        match &mut x {
            None => x = Some(b.x.clone()),
            Some(m) => m.append(&b.x)?,
        }
        p_tilde.extend_from_slice(&b.p_tilde);
        y_tilde.extend_from_slice(&b.y_tilde);
    }
    let x = x.ok_or(PopulationError::InvalidCount)?;
    check_features(&x, risk)?;
    let e_bar = posterior_mean_probs(risk, &x)?;
    Ok(PooledRows {
        x,
        p_tilde,
        y_tilde,
        e_bar,
    })
}

fn check_features<M: RiskModel + ?Sized>(x: &CodeMatrix, risk: &M) -> Result<Vec<usize>, PopulationError> {
    risk.features()
        .iter()
        .map(|f| x.column_index(f).ok_or_else(|| PopulationError::MissingFeature(f.clone())))
        .collect()
}

fn check_draws<M: RiskModel + ?Sized>(copula: &CopulaPosterior, risk: &M, d: usize) -> Result<(), PopulationError> {
    if d == 0 {
        return Err(PopulationError::InvalidCount);
    }
    if copula.n_draws() < d {
        return Err(PopulationError::DrawCountMismatch {
            model: "copula",
            needed: d,
            available: copula.n_draws(),
        });
    }
    if risk.n_draws() < d {
        return Err(PopulationError::DrawCountMismatch {
            model: "risk",
            needed: d,
            available: risk.n_draws(),
        });
    }
    Ok(())
}

fn draw_block<M: RiskModel + ?Sized>(
    copula: &CopulaPosterior,
    risk: &M,
    n: usize,
    j: usize,
    stream: u64,
    seed: u64,
    predicate: &Predicate,
) -> Result<BlockDraw, PopulationError> {
    let mut rng = stream_rng(seed, stream);
    let sample = sample_conditional_with(&copula.params(j), predicate, n, DEFAULT_ACCEPTANCE_FLOOR, &mut rng)?;
    let x = sample.rows;
    let cols = check_features(&x, risk)?;
    let mut p_tilde = Vec::with_capacity(n);
    let mut y_tilde = Vec::with_capacity(n);
    for i in 0..n {
        let p = risk.draw_prob(j, &|f| x.code(i, cols[f]));
        p_tilde.push(p);
        y_tilde.push(u8::from(rng.random::<f64>() < p));
    }
    Ok(BlockDraw {
        draw_index: j,
        x,
        p_tilde,
        y_tilde,
        proposals: sample.proposals,
    })
}

/// Regenerate block `j` alone; identical to block `j` of
/// [`generate_population`] under the same seed.
pub fn generate_block<M: RiskModel + ?Sized>(
    copula: &CopulaPosterior,
    risk: &M,
    n: usize,
    j: usize,
    seed: u64,
    predicate: &Predicate,
) -> Result<BlockDraw, PopulationError> {
    if n == 0 {
        return Err(PopulationError::InvalidCount);
    }
    check_draws(copula, risk, j + 1)?;
    draw_block(copula, risk, n, j, j as u64, seed, predicate)
}

/// Simulate `D` blocks of `N` rows each from paired posterior draws.
pub fn generate_population<M: RiskModel + ?Sized>(
    copula: &CopulaPosterior,
    risk: &M,
    n: usize,
    d: usize,
    seed: u64,
    predicate: &Predicate,
) -> Result<SyntheticPopulation, PopulationError> {
    if n == 0 {
        return Err(PopulationError::InvalidCount);
    }
    check_draws(copula, risk, d)?;
    let blocks: Vec<BlockDraw> = (0..d)
        .into_par_iter()
        .map(|j| draw_block(copula, risk, n, j, j as u64, seed, predicate))
        .collect::<Result<_, _>>()?;
    SyntheticPopulation::assemble(blocks, risk, seed, predicate.clone())
}

/// Extra pooled rows for the pruning step, spread as evenly as possible over
/// the `D` posterior draws.
pub fn generate_pruning_reservoir<M: RiskModel + ?Sized>(
    copula: &CopulaPosterior,
    risk: &M,
    count: usize,
    seed: u64,
    predicate: &Predicate,
) -> Result<PooledRows, PopulationError> {
    if count == 0 {
        return Err(PopulationError::InvalidCount);
    }
    let d = copula.n_draws().min(risk.n_draws());
    check_draws(copula, risk, d)?;
    let used = d.min(count);
    let blocks: Vec<BlockDraw> = (0..used)
        .into_par_iter()
        .map(|j| {
            let n = count / used + usize::from(j < count % used);
            draw_block(copula, risk, n, j, RESERVOIR_STREAM_BASE + j as u64, seed, predicate)
        })
        .collect::<Result<_, _>>()?;
    pool(blocks.iter(), risk)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub predicate: String,
    pub columns: Vec<String>,
    pub supports: Vec<Vec<i32>>,
    pub proposals: Vec<usize>,
    pub reservoir_rows: Option<usize>,
    /// Content hashes of the models the population was drawn from.
    pub model_hashes: std::collections::BTreeMap<String, String>,
}

const MANIFEST_FILE: &str = "manifest.json";
const DATA_FILE: &str = "pooled.bin";
const RESERVOIR_FILE: &str = "reservoir.bin";

fn write_columns(path: &Path, rows: &PooledRows) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in 0..rows.x.n_cols() {
        w.write_all(rows.x.column_levels(c))?;
    }
    for v in rows.p_tilde.iter().chain(&rows.e_bar) {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&rows.y_tilde)?;
    w.flush()
}

fn read_columns(path: &Path, manifest: &ArchiveManifest, m: usize) -> Result<PooledRows, PopulationError> {
    let p = manifest.columns.len();
    let mut buf = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut buf)?;
    let expected = m * p + 16 * m + m;
    if buf.len() != expected {
        return Err(PopulationError::Corrupt(format!(
            "{} has {} bytes, expected {expected}",
            path.display(),
            buf.len()
        )));
    }
    let mut x = CodeMatrix::with_layout(manifest.columns.clone(), manifest.supports.clone())?;
    let mut row = vec![0u8; p];
    for i in 0..m {
        for (c, slot) in row.iter_mut().enumerate() {
            *slot = buf[c * m + i];
            if *slot as usize >= manifest.supports[c].len() {
                return Err(PopulationError::Corrupt(format!("level out of range in column {c}")));
            }
        }
        x.push_levels(&row);
    }
    let floats = &buf[m * p..m * p + 16 * m];
    let f = |k: usize| f64::from_le_bytes(floats[8 * k..8 * k + 8].try_into().unwrap());
    Ok(PooledRows {
        x,
        p_tilde: (0..m).map(f).collect(),
        e_bar: (m..2 * m).map(f).collect(),
        y_tilde: buf[m * p + 16 * m..].to_vec(),
    })
}

impl SyntheticPopulation {
    /// Write a columnar archive (manifest plus binary columns) into `dir`.
    pub fn save(
        &self,
        dir: &Path,
        model_hashes: std::collections::BTreeMap<String, String>,
    ) -> Result<ArchiveManifest, PopulationError> {
        std::fs::create_dir_all(dir)?;
        let manifest = ArchiveManifest {
            format: ARCHIVE_FORMAT.into(),
            n: self.n,
            d: self.d,
            m: self.m(),
            seed: self.seed,
            predicate: self.predicate.to_string(),
            columns: self.pooled.x.names().to_vec(),
            supports: self.pooled.x.supports().to_vec(),
            proposals: self.proposals.clone(),
            reservoir_rows: self.reservoir.as_ref().map(PooledRows::n_rows),
            model_hashes,
        };
        write_columns(&dir.join(DATA_FILE), &self.pooled)?;
        if let Some(r) = &self.reservoir {
            write_columns(&dir.join(RESERVOIR_FILE), r)?;
        }
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(manifest)
    }

    pub fn load(dir: &Path) -> Result<(Self, ArchiveManifest), PopulationError> {
        let manifest: ArchiveManifest =
            serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
        if manifest.format != ARCHIVE_FORMAT {
            return Err(PopulationError::Corrupt(format!("unknown format {:?}", manifest.format)));
        }
        if manifest.m != manifest.n * manifest.d || manifest.columns.len() != manifest.supports.len() {
            return Err(PopulationError::Corrupt("inconsistent manifest".into()));
        }
        let pooled = read_columns(&dir.join(DATA_FILE), &manifest, manifest.m)?;
        let reservoir = match manifest.reservoir_rows {
            Some(r) => Some(read_columns(&dir.join(RESERVOIR_FILE), &manifest, r)?),
            None => None,
        };
        let predicate = manifest
            .predicate
            .parse()
            .map_err(|e| PopulationError::Corrupt(format!("predicate: {e}")))?;
        let pop = Self {
            n: manifest.n,
            d: manifest.d,
            seed: manifest.seed,
            predicate,
            pooled,
            reservoir,
            proposals: manifest.proposals.clone(),
        };
        Ok((pop, manifest))
    }

    /// Audit export: one row per pooled record with block index, codes, p̃, Ē, ỹ.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PopulationError> {
        let mut w = csv::Writer::from_writer(writer);
        let x = &self.pooled.x;
        let mut header = vec!["block".to_string()];
        header.extend(x.names().iter().cloned());
        header.extend(["p_tilde", "e_bar", "y_tilde"].map(String::from));
        w.write_record(&header)?;
        for i in 0..self.m() {
            let mut rec = vec![(i / self.n).to_string()];
            rec.extend(x.row_codes(i).iter().map(i32::to_string));
            rec.push(self.pooled.p_tilde[i].to_string());
            rec.push(self.pooled.e_bar[i].to_string());
            rec.push(self.pooled.y_tilde[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows `range` of the pooled data as a standalone set.
    pub fn pooled_slice(&self, range: Range<usize>) -> PooledRows {
        self.pooled.slice(range)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::{EmpiricalMarginal, LoadingMatrix};
    use crate::risk::{EnsembleTree, RiskPosterior, TreeEnsembleDraw};
    use crate::stats::norm_ppf;

    fn constant_risk(features: &[&str], probs: &[f64]) -> RiskPosterior {
        RiskPosterior::from_draws(
            features.iter().map(|s| s.to_string()).collect(),
            probs
                .iter()
                .map(|&p| TreeEnsembleDraw {
                    offset: norm_ppf(p),
                    trees: vec![EnsembleTree::leaf(0.0)],
                })
                .collect(),
        )
        .unwrap()
    }

    fn copula(d: usize) -> CopulaPosterior {
        let marginals = vec![
            EmpiricalMarginal::from_counts(vec![1, 2, 3], &[5, 3, 2]),
            EmpiricalMarginal::from_counts(vec![0, 1], &[1, 1]),
            EmpiricalMarginal::from_counts((12..=18).collect(), &[1; 7]),
        ];
        let draws = (0..d)
            .map(|j| LoadingMatrix::from_rows(&[vec![0.5 + 0.1 * j as f64], vec![0.8], vec![0.2]]))
            .collect();
        CopulaPosterior::from_parts(
            vec!["Q1".into(), "Q2".into(), "age".into()],
            vec!["age".into()],
            marginals,
            draws,
        )
        .unwrap()
    }

    #[test]
    fn hand_built_blocks_average_draws() {
        let risk = constant_risk(&["Q1"], &[0.2, 0.6]);
        let x = CodeMatrix::from_rows(vec!["Q1".into()], &[vec![1]]).unwrap();
        let blocks = (0..2)
            .map(|j| BlockDraw {
                draw_index: j,
                x: x.clone(),
                p_tilde: vec![[0.2, 0.6][j]],
                y_tilde: vec![0],
                proposals: 1,
            })
            .collect();
        let pop = SyntheticPopulation::assemble(blocks, &risk, 0, Predicate::always()).unwrap();
        assert_eq!(pop.m(), 2);
        for e in &pop.pooled.e_bar {
            assert!((e - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn bookkeeping_and_block_independence() {
        let cop = copula(4);
        let risk = constant_risk(&["Q1", "Q2"], &[0.1, 0.3, 0.5, 0.7]);
        let pop = generate_population(&cop, &risk, 50, 4, 9, &Predicate::always()).unwrap();
        assert_eq!(pop.m(), 200);
        assert_eq!(pop.blocks().count(), 4);
        for b in pop.blocks() {
            assert!(b.p_tilde().iter().all(|&p| (p - [0.1, 0.3, 0.5, 0.7][b.draw_index]).abs() < 1e-9));
            assert!(b.e_bar().iter().all(|&e| (e - 0.4).abs() < 1e-9));
        }
        for i in (0..pop.m()).step_by(7) {
            let x = pop.pooled.x.row_codes(i);
            let direct = crate::risk::posterior_mean_prob(&risk, &x).unwrap();
            assert!((pop.pooled.e_bar[i] - direct).abs() <= 1e-12);
        }
        let again = generate_block(&cop, &risk, 50, 2, 9, &Predicate::always()).unwrap();
        let b = pop.block(2);
        assert_eq!(again.x, pop.pooled.x.slice_rows(b.rows.clone()));
        assert_eq!(again.y_tilde, b.y_tilde());
        let pred: Predicate = "age>=16".parse().unwrap();
        let sub = generate_population(&cop, &risk, 30, 2, 1, &pred).unwrap();
        let age = sub.pooled.x.column_index("age").unwrap();
        assert!((0..sub.m()).all(|i| sub.pooled.x.code(i, age) >= 16));
    }

    #[test]
    fn near_certain_labels() {
        let cop = copula(2);
        let risk = constant_risk(&["Q1"], &[1.0 - 1e-9, 1.0 - 1e-9]);
        let pop = generate_population(&cop, &risk, 100, 2, 3, &Predicate::always()).unwrap();
        assert!(pop.pooled.y_tilde.iter().all(|&y| y == 1));
    }

    #[test]
    fn errors() {
        let cop = copula(2);
        let risk = constant_risk(&["Q1"], &[0.5; 3]);
        assert!(matches!(
            generate_population(&cop, &risk, 10, 3, 1, &Predicate::always()),
            Err(PopulationError::DrawCountMismatch { model: "copula", .. })
        ));
        assert!(matches!(
            generate_pruning_reservoir(&cop, &risk, 0, 1, &Predicate::always()),
            Err(PopulationError::InvalidCount)
        ));
        let other = constant_risk(&["Q9"], &[0.5; 2]);
        assert!(matches!(
            generate_population(&cop, &other, 10, 2, 1, &Predicate::always()),
            Err(PopulationError::MissingFeature(_))
        ));
    }

    #[test]
    fn reservoir_is_deterministic() {
        let cop = copula(3);
        let risk = constant_risk(&["Q1"], &[0.2, 0.4, 0.6]);
        let a = generate_pruning_reservoir(&cop, &risk, 101, 5, &Predicate::always()).unwrap();
        let b = generate_pruning_reservoir(&cop, &risk, 101, 5, &Predicate::always()).unwrap();
        assert_eq!(a.n_rows(), 101);
        assert_eq!(a, b);
    }

    #[test]
    fn archive_round_trip() {
        let cop = copula(2);
        let risk = constant_risk(&["Q1"], &[0.2, 0.4]);
        let mut pop = generate_population(&cop, &risk, 20, 2, 4, &"age<17".parse().unwrap()).unwrap();
        pop.reservoir = Some(generate_pruning_reservoir(&cop, &risk, 7, 4, &pop.predicate).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let mut hashes = std::collections::BTreeMap::new();
        hashes.insert("risk".to_string(), "abc".to_string());
        let written = pop.save(dir.path(), hashes).unwrap();
        let (back, manifest) = SyntheticPopulation::load(dir.path()).unwrap();
        assert_eq!(back, pop);
        assert_eq!(manifest, written);
        let mut csv_out = Vec::new();
        pop.write_csv(&mut csv_out).unwrap();
        let text = String::from_utf8(csv_out).unwrap();
        assert_eq!(text.lines().count(), 41);
        assert!(text.starts_with("block,Q1,Q2,age,p_tilde,e_bar,y_tilde"));
    }
}
