//! Gaussian copula factor model for ordinal item responses.
//!
//! The latent vector follows a `k`-factor Gaussian model with identity noise,
//!
//! ```text
//! f_i ~ N(0, I_k),   z_i | f_i ~ N(Λ f_i, I_p),
//! x_ir = F_r^{-1}( Φ( z_ir / sqrt(1 + Σ_t λ_rt²) ) ),
//! ```
//!
//! so the copula correlation is the normalized `ΛΛᵀ + I`. Marginals `F_r` are
//! the empirical CDFs of the training data. Fitting is a Gibbs sampler over
//! `(z, f, Λ)` where each `z_ir` is confined to the interval consistent with
//! the observed ranks of column `r` (extended rank likelihood), so the
//! marginals never enter the likelihood for `Λ`.
//!
//! `Λ` is identified by a lower-triangular leading block with nonnegative
//! diagonal; free loadings carry independent N(0, 1) priors.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CodeMatrix, MatrixError};
use crate::predicate::{Predicate, PredicateError};
use crate::stats::{norm_cdf, norm_ppf, stream_rng, truncated_normal};

/// Default acceptance floor for rejection sampling of subpopulations.
pub const DEFAULT_ACCEPTANCE_FLOOR: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CopulaError {
    #[error("factor dimension must be at least 1 (got {0})")]
    InvalidFactorDim(usize),
    #[error("column {0:?} is constant; a marginal needs at least two observed values")]
    DegenerateMarginal(String),
    #[error("need at least {needed} rows for {k} factors, got {got}")]
    InsufficientData { needed: usize, got: usize, k: usize },
    #[error("invalid MCMC settings: {0}")]
    InvalidMcmc(String),
    #[error("sample size must be at least 1")]
    InvalidCount,
    #[error(transparent)]
    Predicate(#[from] PredicateError),
    #[error("acceptance too low: {accepted} of {proposals} proposals satisfied the predicate before the budget ran out")]
    AcceptanceTooLow { accepted: usize, proposals: usize },
    #[error("posterior has no draws")]
    NoDraws,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Right-continuous empirical CDF over a finite sorted support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMarginal {
    pub codes: Vec<i32>,
    /// `cdf[l] = F(codes[l])`; the last entry is exactly 1.
    pub cdf: Vec<f64>,
}

impl EmpiricalMarginal {
    pub fn from_counts(codes: Vec<i32>, counts: &[usize]) -> Self {
        assert_eq!(codes.len(), counts.len());
        let total: usize = counts.iter().sum();
        assert!(total > 0);
        let mut acc = 0usize;
        let mut cdf: Vec<f64> = counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / total as f64
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Self { codes, cdf }
    }

    /// Level index of `F^{-1}(t) = inf{x : F(x) >= t}`.
    pub fn inverse_level(&self, t: f64) -> usize {
        self.cdf
            .partition_point(|&c| c < t)
            .min(self.codes.len() - 1)
    }

    pub fn inverse(&self, t: f64) -> i32 {
        self.codes[self.inverse_level(t)]
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cdf
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }
}

/// Row-major `p × k` loading matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingMatrix {
    pub p: usize,
    pub k: usize,
    pub values: Vec<f64>,
}

impl LoadingMatrix {
    pub fn zeros(p: usize, k: usize) -> Self {
        Self {
            p,
            k,
            values: vec![0.0; p * k],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let p = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == k));
        Self {
            p,
            k,
            values: rows.concat(),
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.k..(r + 1) * self.k]
    }

    pub fn get(&self, r: usize, t: usize) -> f64 {
        self.values[r * self.k + t]
    }

    fn set(&mut self, r: usize, t: usize, v: f64) {
        self.values[r * self.k + t] = v;
    }

    /// `sqrt(1 + Σ_t λ_rt²)`, the marginal latent standard deviation.
    pub fn latent_scale(&self, r: usize) -> f64 {
        (1.0 + self.row(r).iter().map(|l| l * l).sum::<f64>()).sqrt()
    }

    /// Latent covariance `ΛΛᵀ + I`.
    pub fn implied_covariance(&self) -> Vec<Vec<f64>> {
        (0..self.p)
            .map(|r| {
                (0..self.p)
                    .map(|s| {
                        let dot: f64 = self.row(r).iter().zip(self.row(s)).map(|(a, b)| a * b).sum();
                        dot + if r == s { 1.0 } else { 0.0 }
                    })
                    .collect()
            })
            .collect()
    }

    /// Copula correlation: `ΛΛᵀ + I` normalized to unit diagonal.
    pub fn implied_correlation(&self) -> Vec<Vec<f64>> {
        let cov = self.implied_covariance();
        let sd: Vec<f64> = (0..self.p).map(|r| cov[r][r].sqrt()).collect();
        (0..self.p)
            .map(|r| (0..self.p).map(|s| cov[r][s] / (sd[r] * sd[s])).collect())
            .collect()
    }

    /// True iff the leading block is lower-triangular with nonnegative diagonal.
    pub fn is_identified(&self) -> bool {
        (0..self.p.min(self.k)).all(|r| {
            self.get(r, r) >= 0.0 && (r + 1..self.k).all(|t| self.get(r, t) == 0.0)
        })
    }
}

/// One posterior draw θ_X, borrowing the marginals shared by all draws.
#[derive(Debug, Clone, Copy)]
pub struct CopulaFactorParams<'a> {
    pub loadings: &'a LoadingMatrix,
    pub marginals: &'a [EmpiricalMarginal],
    pub variable_names: &'a [String],
    pub conditioning_names: &'a [String],
}

impl CopulaFactorParams<'_> {
    pub fn factor_dim(&self) -> usize {
        self.loadings.k
    }

    fn layout(&self) -> Result<CodeMatrix, MatrixError> {
        CodeMatrix::with_layout(
            self.variable_names.to_vec(),
            self.marginals.iter().map(|m| m.codes.clone()).collect(),
        )
    }

    fn row_generator(&self) -> RowGenerator {
        RowGenerator {
            scales: (0..self.loadings.p).map(|r| self.loadings.latent_scale(r)).collect(),
            factor: vec![0.0; self.loadings.k],
        }
    }
}

struct RowGenerator {
    scales: Vec<f64>,
    factor: Vec<f64>,
}

impl RowGenerator {
    fn draw<R: Rng + ?Sized>(&mut self, params: &CopulaFactorParams<'_>, rng: &mut R, out: &mut [u8]) {
        let lam = params.loadings;
        for f in self.factor.iter_mut() {
            *f = StandardNormal.sample(rng);
        }
        for r in 0..lam.p {
            let mean: f64 = lam.row(r).iter().zip(&self.factor).map(|(l, f)| l * f).sum();
            let eps: f64 = StandardNormal.sample(rng);
            let u = norm_cdf((mean + eps) / self.scales[r]);
            out[r] = params.marginals[r].inverse_level(u) as u8;
        }
    }
}

/// Draw `n` rows from the predictive distribution `f(x | θ_X)`.
pub fn sample_predictive(
    params: &CopulaFactorParams<'_>,
    n: usize,
    seed: u64,
) -> Result<CodeMatrix, CopulaError> {
    sample_conditional(params, &Predicate::always(), n, seed, DEFAULT_ACCEPTANCE_FLOOR)
        .map(|s| s.rows)
}

#[derive(Debug, Clone)]
pub struct ConditionalSample {
    pub rows: CodeMatrix,
    pub proposals: usize,
}

/// Rejection-sample `n` rows from the predictive distribution restricted to
/// `predicate`. Fails once more than `ceil(n / floor)` proposals are needed.
pub fn sample_conditional(
    params: &CopulaFactorParams<'_>,
    predicate: &Predicate,
    n: usize,
    seed: u64,
    floor: f64,
) -> Result<ConditionalSample, CopulaError> {
    let mut rng = stream_rng(seed, 0);
    sample_conditional_with(params, predicate, n, floor, &mut rng)
}

pub(crate) fn sample_conditional_with<R: Rng + ?Sized>(
    params: &CopulaFactorParams<'_>,
    predicate: &Predicate,
    n: usize,
    floor: f64,
    rng: &mut R,
) -> Result<ConditionalSample, CopulaError> {
    if n == 0 {
        return Err(CopulaError::InvalidCount);
    }
    let bound = predicate.bind(params.variable_names, params.conditioning_names)?;
    let budget = (n as f64 / floor.clamp(f64::MIN_POSITIVE, 1.0)).ceil() as usize;
    let mut rows = params.layout()?;
    let mut gen = params.row_generator();
    let mut buf = vec![0u8; params.loadings.p];
    let mut proposals = 0usize;
    while rows.n_rows() < n {
        if proposals >= budget {
            return Err(CopulaError::AcceptanceTooLow {
                accepted: rows.n_rows(),
                proposals,
            });
        }
        gen.draw(params, rng, &mut buf);
        proposals += 1;
        if bound.eval(|c| params.marginals[c].codes[buf[c] as usize]) {
            rows.push_levels(&buf);
        }
    }
    Ok(ConditionalSample { rows, proposals })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub burn_in: usize,
    pub thin: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            burn_in: 500,
            thin: 1,
            draws: 1000,
            seed: 1,
        }
    }
}

impl McmcConfig {
    fn validate(&self) -> Result<(), String> {
        if self.draws == 0 {
            return Err("draws must be at least 1".into());
        }
        if self.thin == 0 {
            return Err("thin must be at least 1".into());
        }
        Ok(())
    }
}

/// Chain summaries; a large Geweke score is a warning, not a failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    /// Mean absolute off-diagonal copula correlation per retained draw.
    pub trace: Vec<f64>,
    pub geweke_z: f64,
    pub flagged: bool,
}

impl ChainDiagnostics {
    pub(crate) fn from_trace(trace: Vec<f64>) -> Self {
        let geweke_z = geweke(&trace);
        Self {
            flagged: geweke_z.abs() > 3.0,
            trace,
            geweke_z,
        }
    }
}

/// Geweke z-score comparing the first 10% and last 50% of a trace, with
/// naive (independence) variances.
pub(crate) fn geweke(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 20 {
        return 0.0;
    }
    let a = &trace[..n / 10];
    let b = &trace[n / 2..];
    let mv = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        let v = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (s.len() - 1) as f64;
        (m, v / s.len() as f64)
    };
    let (ma, va) = mv(a);
    let (mb, vb) = mv(b);
    let denom = (va + vb).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (ma - mb) / denom
    }
}

/// Retained posterior draws of the copula factor model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaPosterior {
    pub variable_names: Vec<String>,
    /// Subset of `variable_names` that are conditioning (non-item) variables.
    pub conditioning_names: Vec<String>,
    pub factor_dim: usize,
    pub marginals: Vec<EmpiricalMarginal>,
    pub draws: Vec<LoadingMatrix>,
    pub mcmc: Option<McmcConfig>,
    pub diagnostics: Option<ChainDiagnostics>,
}

impl CopulaPosterior {
    /// Assemble a posterior from known parameters (used for simulation and tests).
    pub fn from_parts(
        variable_names: Vec<String>,
        conditioning_names: Vec<String>,
        marginals: Vec<EmpiricalMarginal>,
        draws: Vec<LoadingMatrix>,
    ) -> Result<Self, CopulaError> {
        let first = draws.first().ok_or(CopulaError::NoDraws)?;
        let (p, k) = (first.p, first.k);
        if k == 0 {
            return Err(CopulaError::InvalidFactorDim(0));
        }
        assert_eq!(variable_names.len(), p);
        assert_eq!(marginals.len(), p);
        assert!(draws.iter().all(|d| d.p == p && d.k == k));
        Ok(Self {
            variable_names,
            conditioning_names,
            factor_dim: k,
            marginals,
            draws,
            mcmc: None,
            diagnostics: None,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn n_vars(&self) -> usize {
        self.variable_names.len()
    }

    pub fn params(&self, j: usize) -> CopulaFactorParams<'_> {
        CopulaFactorParams {
            loadings: &self.draws[j],
            marginals: &self.marginals,
            variable_names: &self.variable_names,
            conditioning_names: &self.conditioning_names,
        }
    }

    /// Posterior mean of the implied copula correlation matrix.
    pub fn mean_implied_correlation(&self) -> Vec<Vec<f64>> {
        let p = self.n_vars();
        let mut acc = vec![vec![0.0; p]; p];
        for d in &self.draws {
            for (a, row) in acc.iter_mut().zip(d.implied_correlation()) {
                for (x, y) in a.iter_mut().zip(row) {
                    *x += y;
                }
            }
        }
        let n = self.draws.len() as f64;
        acc.iter_mut().flatten().for_each(|x| *x /= n);
        acc
    }
}

/// Fit the copula factor model to the augmented response matrix (items plus
/// conditioning variables).
pub fn fit_gcfm(
    data: &CodeMatrix,
    conditioning_names: &[String],
    k: usize,
    mcmc: &McmcConfig,
) -> Result<CopulaPosterior, CopulaError> {
    if k == 0 {
        return Err(CopulaError::InvalidFactorDim(k));
    }
    mcmc.validate().map_err(CopulaError::InvalidMcmc)?;
    let n = data.n_rows();
    let p = data.n_cols();
    if n < 10 * k || n < 2 {
        return Err(CopulaError::InsufficientData {
            needed: (10 * k).max(2),
            got: n,
            k,
        });
    }

    // Observed marginals; empirical supports exclude unobserved levels.
    let mut marginals = Vec::with_capacity(p);
    let mut members: Vec<Vec<Vec<usize>>> = Vec::with_capacity(p);
    for r in 0..p {
        let support = data.support(r);
        let mut groups = vec![Vec::new(); support.len()];
        for (i, &l) in data.column_levels(r).iter().enumerate() {
            groups[l as usize].push(i);
        }
        let observed: Vec<usize> = (0..support.len()).filter(|&l| !groups[l].is_empty()).collect();
        if observed.len() < 2 {
            return Err(CopulaError::DegenerateMarginal(data.names()[r].clone()));
        }
        let codes = observed.iter().map(|&l| support[l]).collect();
        let counts: Vec<usize> = observed.iter().map(|&l| groups[l].len()).collect();
        marginals.push(EmpiricalMarginal::from_counts(codes, &counts));
        members.push(observed.into_iter().map(|l| std::mem::take(&mut groups[l])).collect());
    }

    let mut rng = stream_rng(mcmc.seed, 0);
    let mut state = GibbsState::init(&marginals, &members, n, k, &mut rng);
    let total = mcmc.burn_in + mcmc.thin * mcmc.draws;
    let mut draws = Vec::with_capacity(mcmc.draws);
    let mut trace = Vec::with_capacity(mcmc.draws);
    for it in 1..=total {
        state.update_latent(&members, &mut rng);
        state.update_factors(&mut rng);
        state.update_loadings(&mut rng);
        if it > mcmc.burn_in && (it - mcmc.burn_in) % mcmc.thin == 0 {
            let corr = state.loadings.implied_correlation();
            let off: f64 = (0..p)
                .flat_map(|r| (0..p).filter(move |&s| s != r).map(move |s| (r, s)))
                .map(|(r, s)| corr[r][s].abs())
                .sum::<f64>()
                / (p * (p - 1)).max(1) as f64;
            trace.push(off);
            draws.push(state.loadings.clone());
        }
    }
    let diagnostics = ChainDiagnostics::from_trace(trace);
    if diagnostics.flagged {
        log::warn!(
            "copula chain may not have converged (Geweke z = {:.2})",
            diagnostics.geweke_z
        );
    }
    Ok(CopulaPosterior {
        variable_names: data.names().to_vec(),
        conditioning_names: conditioning_names.to_vec(),
        factor_dim: k,
        marginals,
        draws,
        mcmc: Some(*mcmc),
        diagnostics: Some(diagnostics),
    })
}

struct GibbsState {
    n: usize,
    p: usize,
    k: usize,
    /// Column-major latent values, `z[r][i]`.
    z: Vec<Vec<f64>>,
    /// Row-major factor scores, `f[i * k + t]`.
    f: Vec<f64>,
    loadings: LoadingMatrix,
}

impl GibbsState {
    fn init<R: Rng + ?Sized>(
        marginals: &[EmpiricalMarginal],
        members: &[Vec<Vec<usize>>],
        n: usize,
        k: usize,
        rng: &mut R,
    ) -> Self {
        let p = marginals.len();
        // Normal scores at the midpoint of each level's CDF step keep the
        // ordering constraints satisfied from the start.
        let mut z = vec![vec![0.0; n]; p];
        for r in 0..p {
            let mut prev = 0.0;
            for (l, rows) in members[r].iter().enumerate() {
                let c = marginals[r].cdf[l];
                let score = norm_ppf(0.5 * (prev + c));
                prev = c;
                for &i in rows {
                    z[r][i] = score;
                }
            }
        }
        let mut loadings = LoadingMatrix::zeros(p, k);
        for r in 0..p {
            for t in 0..k.min(r + 1) {
                let v: f64 = StandardNormal.sample(rng);
                loadings.set(r, t, if t == r { 0.5 + 0.1 * v.abs() } else { 0.1 * v });
            }
        }
        Self {
            n,
            p,
            k,
            z,
            f: vec![0.0; n * k],
            loadings,
        }
    }

    fn update_latent<R: Rng + ?Sized>(&mut self, members: &[Vec<Vec<usize>>], rng: &mut R) {
        let k = self.k;
        for r in 0..self.p {
            let lam = self.loadings.row(r).to_vec();
            let levels = &members[r];
            let zr = &mut self.z[r];
            for l in 0..levels.len() {
                let lo = if l == 0 {
                    f64::NEG_INFINITY
                } else {
                    levels[l - 1].iter().map(|&i| zr[i]).fold(f64::NEG_INFINITY, f64::max)
                };
                let hi = if l + 1 == levels.len() {
                    f64::INFINITY
                } else {
                    levels[l + 1].iter().map(|&i| zr[i]).fold(f64::INFINITY, f64::min)
                };
                for &i in &levels[l] {
                    let mean: f64 = lam
                        .iter()
                        .zip(&self.f[i * k..(i + 1) * k])
                        .map(|(a, b)| a * b)
                        .sum();
                    zr[i] = if lo < hi {
                        truncated_normal(rng, mean, lo, hi)
                    } else {
                        lo
                    };
                }
            }
        }
    }

    fn update_factors<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, p, k) = (self.n, self.p, self.k);
        let lam = DMatrix::from_row_slice(p, k, &self.loadings.values);
        let precision = DMatrix::<f64>::identity(k, k) + lam.transpose() * &lam;
        let chol = precision
            .cholesky()
            .expect("I + ΛᵀΛ is positive definite");
        let l = chol.l();
        let lt = l.transpose();
        let mut zi = DVector::zeros(p);
        for i in 0..n {
            for r in 0..p {
                zi[r] = self.z[r][i];
            }
            let mean = chol.solve(&(lam.transpose() * &zi));
            let eps = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
            // Cov = P⁻¹ = (L Lᵀ)⁻¹, so Lᵀ⁻¹ ε has the right covariance.
            let noise = lt
                .solve_upper_triangular(&eps)
                .expect("triangular factor is invertible");
            for t in 0..k {
                self.f[i * k + t] = mean[t] + noise[t];
            }
        }
    }

    fn update_loadings<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let (n, p, k) = (self.n, self.p, self.k);
        let fm = DMatrix::from_row_slice(n, k, &self.f);
        let ftf = fm.transpose() * &fm;
        let precision = &ftf + DMatrix::<f64>::identity(k, k);
        let full_chol = precision.clone().cholesky().expect("FᵀF + I is positive definite");
        let lt = full_chol.l().transpose();
        for r in 0..p {
            let zr = DVector::from_column_slice(&self.z[r]);
            let b = fm.transpose() * zr;
            if r >= k {
                let mean = full_chol.solve(&b);
                let eps = DVector::from_fn(k, |_, _| StandardNormal.sample(rng));
                let noise = lt.solve_upper_triangular(&eps).expect("invertible");
                for t in 0..k {
                    self.loadings.set(r, t, mean[t] + noise[t]);
                }
            } else {
                // Constrained row: free entries t <= r, diagonal >= 0. Single-site
                // updates from the Gaussian full conditional.
                for t in 0..=r {
                    let q = precision[(t, t)];
                    let mut s = b[t];
                    for u in 0..=r {
                        if u != t {
                            s -= precision[(t, u)] * self.loadings.get(r, u);
                        }
                    }
                    let mean = s / q;
                    let sd = q.sqrt().recip();
                    let v = if t == r {
                        mean + sd * truncated_normal(rng, 0.0, -mean / sd, f64::INFINITY)
                    } else {
                        {
                        let e: f64 = StandardNormal.sample(rng);
                        mean + sd * e
                    }
                    };
                    self.loadings.set(r, t, v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|r| format!("V{r}")).collect()
    }

    #[test]
    fn pseudo_inverse_hand_table() {
        let m = EmpiricalMarginal::from_counts(vec![1, 2, 3], &[5, 3, 2]);
        assert_eq!(m.inverse(0.55), 2);
        assert_eq!(m.inverse(0.5), 1);
        assert_eq!(m.inverse(0.5000001), 2);
        assert_eq!(m.inverse(0.8), 2);
        assert_eq!(m.inverse(0.81), 3);
        assert_eq!(m.inverse(1e-12), 1);
        assert_eq!(m.inverse(1.0), 3);
    }

    #[test]
    fn monotone_transform() {
        let m = EmpiricalMarginal::from_counts(vec![0, 1, 4, 9], &[1, 2, 3, 4]);
        for &s in &[0.3, 1.0, 2.5] {
            let mut prev = i32::MIN;
            for i in -400..=400 {
                let z = i as f64 / 50.0;
                let x = m.inverse(norm_cdf(z / s));
                assert!(x >= prev);
                prev = x;
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        let rows: Vec<Vec<i32>> = (0..50).map(|i| vec![i % 3, 1 + i % 2]).collect();
        let data = CodeMatrix::from_rows(names(2), &rows).unwrap();
        let mcmc = McmcConfig {
            burn_in: 2,
            thin: 1,
            draws: 3,
            seed: 1,
        };
        assert!(matches!(
            fit_gcfm(&data, &[], 0, &mcmc),
            Err(CopulaError::InvalidFactorDim(0))
        ));
        assert!(matches!(
            fit_gcfm(&data, &[], 6, &mcmc),
            Err(CopulaError::InsufficientData { .. })
        ));
        let constant: Vec<Vec<i32>> = (0..50).map(|i| vec![i % 3, 7]).collect();
        let data = CodeMatrix::from_rows(names(2), &constant).unwrap();
        assert!(matches!(
            fit_gcfm(&data, &[], 1, &mcmc),
            Err(CopulaError::DegenerateMarginal(c)) if c == "V1"
        ));
    }

    #[test]
    fn short_chain_shapes_and_identification() {
        let rows: Vec<Vec<i32>> = (0..200)
            .map(|i| vec![i % 4, (i / 2) % 3, (i * 7) % 5])
            .collect();
        let data = CodeMatrix::from_rows(names(3), &rows).unwrap();
        let mcmc = McmcConfig {
            burn_in: 10,
            thin: 2,
            draws: 15,
            seed: 3,
        };
        let post = fit_gcfm(&data, &[], 2, &mcmc).unwrap();
        assert_eq!(post.n_draws(), 15);
        assert!(post.draws.iter().all(|d| d.p == 3 && d.k == 2 && d.is_identified()));
        let again = fit_gcfm(&data, &[], 2, &mcmc).unwrap();
        assert_eq!(post, again);
    }

    #[test]
    fn support_closure_and_determinism() {
        let marginals = vec![
            EmpiricalMarginal::from_counts(vec![1, 3, 5], &[1, 1, 1]),
            EmpiricalMarginal::from_counts(vec![0, 1], &[9, 1]),
        ];
        let post = CopulaPosterior::from_parts(
            names(2),
            vec![],
            marginals,
            vec![LoadingMatrix::from_rows(&[vec![1.2], vec![-0.7]])],
        )
        .unwrap();
        let a = sample_predictive(&post.params(0), 500, 11).unwrap();
        let b = sample_predictive(&post.params(0), 500, 11).unwrap();
        assert_eq!(a, b);
        for i in 0..a.n_rows() {
            assert!([1, 3, 5].contains(&a.code(i, 0)));
            assert!([0, 1].contains(&a.code(i, 1)));
        }
        assert!(matches!(
            sample_predictive(&post.params(0), 0, 1),
            Err(CopulaError::InvalidCount)
        ));
    }
}
