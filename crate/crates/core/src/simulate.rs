//! Item-response studies with known structure, for testing the pipeline.
//!
//! Responses come from a thresholded Gaussian factor model; the outcome is
//! Bernoulli with a probit risk driven by a few designated items.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::items::{ConditioningVar, Dataset, ItemBank, ItemDef, Level, VarType};
use crate::stats::{norm_cdf, norm_ppf, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub n_items: usize,
    /// Response codes run `1..=n_levels`.
    pub n_levels: usize,
    pub factor_dim: usize,
    /// Indices of the items that drive risk.
    pub risk_items: Vec<usize>,
    /// Probit risk is `intercept + slope·Σ (x_r − centre)` over risk items.
    pub intercept: f64,
    pub slope: f64,
    /// Add a uniform `age` conditioning variable on `10..=19`.
    pub with_age: bool,
    /// Seeds the loadings; responses use the sampling seed.
    pub structure_seed: u64,
}

impl Default for StudyDesign {
    fn default() -> Self {
        Self {
            n_items: 30,
            n_levels: 5,
            factor_dim: 2,
            risk_items: vec![0, 1, 2],
            intercept: -0.6,
            slope: 0.6,
            with_age: false,
            structure_seed: 11,
        }
    }
}

pub fn item_id(j: usize) -> String {
    format!("Q{}", j + 1)
}

impl StudyDesign {
    pub fn bank(&self) -> ItemBank {
        let items = (0..self.n_items)
            .map(|j| ItemDef {
                id: item_id(j),
                text: format!("Simulated question {}", j + 1),
                levels: (1..=self.n_levels as i32)
                    .map(|c| Level {
                        code: c,
                        label: c.to_string(),
                    })
                    .collect(),
                scale: None,
            })
            .collect();
        let cond = if self.with_age {
            vec![ConditioningVar {
                name: "age".into(),
                var_type: VarType::Integer,
            }]
        } else {
            vec![]
        };
        ItemBank::new(items, vec![], cond).expect("simulated bank is valid")
    }

    /// Row-major `n_items × factor_dim` loadings.
    pub fn loadings(&self) -> Vec<Vec<f64>> {
        let mut rng = stream_rng(self.structure_seed, 0);
        (0..self.n_items)
            .map(|j| {
                (0..self.factor_dim)
                    .map(|t| {
                        let main = j % self.factor_dim == t;
                        if main {
                            rng.random_range(0.5..0.8)
                        } else {
                            rng.random_range(0.0..0.25)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// `Pr(Y = 1 | x)` for codes in bank order.
    pub fn true_risk(&self, codes: &[i32]) -> f64 {
        let centre = (self.n_levels as f64 + 1.0) / 2.0;
        let s: f64 = self.risk_items.iter().map(|&r| codes[r] as f64 - centre).sum();
        norm_cdf(self.intercept + self.slope * s)
    }

    /// Draw `n` subjects.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let lam = self.loadings();
        let cuts: Vec<f64> = (1..self.n_levels)
            .map(|l| norm_ppf(l as f64 / self.n_levels as f64))
            .collect();
        let mut rng = stream_rng(seed, 1);
        let mut responses = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        let mut conditioning = Vec::with_capacity(n);
        for _ in 0..n {
            let eta: Vec<f64> = (0..self.factor_dim).map(|_| rng.sample(StandardNormal)).collect();
            let codes: Vec<i32> = lam
                .iter()
                .map(|row| {
                    let common: f64 = row.iter().zip(&eta).map(|(l, e)| l * e).sum();
                    let uniq = (1.0 - row.iter().map(|l| l * l).sum::<f64>()).max(0.0).sqrt();
                    let e: f64 = rng.sample(StandardNormal);
                    let z = common + uniq * e;
                    1 + cuts.iter().filter(|&&c| z > c).count() as i32
                })
                .collect();
            let p = self.true_risk(&codes);
            outcomes.push(u8::from(rng.random::<f64>() < p));
            if self.with_age {
                conditioning.push(vec![rng.random_range(10..=19)]);
            } else {
                conditioning.push(vec![]);
            }
            responses.push(codes);
        }
        Dataset {
            item_ids: (0..self.n_items).map(item_id).collect(),
            conditioning_names: if self.with_age { vec!["age".into()] } else { vec![] },
            responses,
            outcomes,
            conditioning,
            row_ids: (1..=n).map(|i| i.to_string()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_is_deterministic_and_valid() {
        let d = StudyDesign {
            with_age: true,
            ..Default::default()
        };
        let a = d.sample(500, 3);
        assert_eq!(a, d.sample(500, 3));
        assert!(a.responses.iter().flatten().all(|&c| (1..=5).contains(&c)));
        assert!(a.conditioning.iter().all(|c| (10..=19).contains(&c[0])));
        let csv = a.to_csv();
        let back = crate::items::read_dataset(csv.as_bytes(), &d.bank()).unwrap();
        assert_eq!(back.responses, a.responses);
        assert_eq!(back.outcomes, a.outcomes);
    }

    #[test]
    fn risk_is_monotone_in_risk_items() {
        let d = StudyDesign::default();
        let mut x = vec![3; 30];
        let base = d.true_risk(&x);
        x[0] = 5;
        assert!(d.true_risk(&x) > base);
        x[29] = 1;
        assert_eq!(d.true_risk(&x), d.true_risk(&{
            let mut y = x.clone();
            y[29] = 5;
            y
        }));
    }
}
