//! Synthetic generators whose Bayes-optimal predictions and noise are known
//! exactly.
//!
//! Both generators return the dataset together with a
//! [`ConditionalOutcomeModel::Known`] wrapping the true conditional outcome
//! distribution, so decompositions can be checked against exact values.

use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Task};
use crate::decomposition::{ConditionalOutcomeModel, OutcomeModel};
use crate::error::{invalid, Result};
use crate::seed;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Something that can draw a fresh training set.
pub trait Sampler: Send + Sync {
    fn sample(&self, n: usize, seed: u64) -> Result<Dataset>;
}

fn group_labels(k: usize) -> Vec<String> {
    (0..k).map(|a| a.to_string()).collect()
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {p} not in (0, 1)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseShape {
    /// `Y = m(X) + eps X^2`: noise variance `sigma^2 x^4`.
    Heteroskedastic,
    /// `Y = m(X) + eps`: noise variance `sigma^2` everywhere.
    Homoskedastic,
}

/// One feature `X | A=a ~ Normal(mu_a, sigma_a^2)` and outcome
/// `Y = c2 X^2 + c1 X + c0 + noise`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionSynthSpec {
    pub p_group1: f64,
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    /// Coefficients `(c2, c1, c0)`.
    pub coefficients: [f64; 3],
    pub noise_sd: f64,
    pub noise: NoiseShape,
}

impl Default for RegressionSynthSpec {
    fn default() -> Self {
        RegressionSynthSpec {
            p_group1: 0.3,
            mu: [0.0, 1.0],
            sigma: [1.0, 2.0],
            coefficients: [2.0, -2.0, 0.1],
            noise_sd: 1.0,
            noise: NoiseShape::Heteroskedastic,
        }
    }
}

/// `E[X^4]` for `X ~ Normal(mu, sigma^2)`.
pub fn gaussian_fourth_moment(mu: f64, sigma: f64) -> f64 {
    let (m2, s2) = (mu * mu, sigma * sigma);
    m2 * m2 + 6.0 * m2 * s2 + 3.0 * s2 * s2
}

impl RegressionSynthSpec {
    pub fn with_noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = sd;
        self
    }

    pub fn homoskedastic(mut self) -> Self {
        self.noise = NoiseShape::Homoskedastic;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_prob("p(A=1)", self.p_group1)?;
        if self.sigma.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid(format!("group feature sd must be positive: {:?}", self.sigma)));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(invalid(format!("noise sd must be positive, got {}", self.noise_sd)));
        }
        if self.mu.iter().chain(&self.coefficients).any(|v| !v.is_finite()) {
            return Err(invalid("non-finite regression synth parameter"));
        }
        Ok(())
    }

    pub fn conditional_mean(&self, x: f64) -> f64 {
        let [c2, c1, c0] = self.coefficients;
        c2 * x * x + c1 * x + c0
    }

    pub fn conditional_variance(&self, x: f64) -> f64 {
        let s2 = self.noise_sd * self.noise_sd;
        match self.noise {
            NoiseShape::Heteroskedastic => s2 * x.powi(4),
            NoiseShape::Homoskedastic => s2,
        }
    }

    /// Exact mean noise per group.
    pub fn exact_noise(&self) -> [f64; 2] {
        let s2 = self.noise_sd * self.noise_sd;
        match self.noise {
            NoiseShape::Heteroskedastic => [
                s2 * gaussian_fourth_moment(self.mu[0], self.sigma[0]),
                s2 * gaussian_fourth_moment(self.mu[1], self.sigma[1]),
            ],
            NoiseShape::Homoskedastic => [s2, s2],
        }
    }

    pub fn exact_bayes(&self) -> BayesSummary {
        BayesSummary {
            noise: self.exact_noise().to_vec(),
            y_star: None,
        }
    }

    pub fn outcome_model(&self) -> ConditionalOutcomeModel {
        ConditionalOutcomeModel::Known(Arc::new(self.clone()))
    }
}

impl OutcomeModel for RegressionSynthSpec {
    fn task(&self) -> Task {
        Task::Regression
    }

    fn mean(&self, x: &[f64], _a: usize) -> f64 {
        self.conditional_mean(x[0])
    }

    fn variance(&self, x: &[f64], _a: usize) -> f64 {
        self.conditional_variance(x[0])
    }
}

impl Sampler for RegressionSynthSpec {
    fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        Ok(gen_regression(self, n, seed)?.0)
    }
}

/// `n` i.i.d. draws from `spec`.
pub fn gen_regression(spec: &RegressionSynthSpec, n: usize, seed: u64) -> Result<(Dataset, ConditionalOutcomeModel)> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("synthetic sample size must be at least 1"));
    }
    let mut rng = seed::rng(seed);
    let mut x = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a = usize::from(rng.random::<f64>() < spec.p_group1);
        let xi = Normal::new(spec.mu[a], spec.sigma[a])
            .expect("validated sd")
            .sample(&mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let noise = match spec.noise {
            NoiseShape::Heteroskedastic => spec.noise_sd * eps * xi * xi,
            NoiseShape::Homoskedastic => spec.noise_sd * eps,
        };
        x.push(xi);
        group.push(a);
        y.push(spec.conditional_mean(xi) + noise);
    }
    let d = Dataset::new(
        Matrix::new(n, 1, x)?,
        group,
        y,
        Task::Regression,
        vec!["x".into()],
        group_labels(2),
    )?
    .with_role_names("a", "y");
    Ok((d, spec.outcome_model()))
}

/// Finite feature alphabet `{0..m-1}`, one-hot encoded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSynthSpec {
    /// `p(a)`.
    pub group_prior: Vec<f64>,
    /// `p(x | a)`, one row per group.
    pub feature_dist: Vec<Vec<f64>>,
    /// `p(Y=1 | x, a)`, one row per group.
    pub outcome_table: Vec<Vec<f64>>,
}

impl Default for DiscreteSynthSpec {
    /// Ten feature values, two groups with shifted, overlapping supports and
    /// group-specific outcome tables.
    fn default() -> Self {
        let m = 10;
        let normalize = |w: Vec<f64>| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let p0 = normalize((0..m).map(|x| (m - x) as f64).collect());
        let p1 = normalize((0..m).map(|x| (x + 1) as f64).collect());
        DiscreteSynthSpec {
            group_prior: vec![0.6, 0.4],
            feature_dist: vec![p0, p1],
            outcome_table: vec![
                vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.45, 0.6, 0.7, 0.8, 0.9],
                vec![0.5, 0.4, 0.3, 0.2, 0.55, 0.6, 0.7, 0.85, 0.95, 0.6],
            ],
        }
    }
}

/// Exact per-group mean noise and, for discrete specs, the Bayes-optimal
/// label `y_star[a][x]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesSummary {
    pub noise: Vec<f64>,
    pub y_star: Option<Vec<Vec<u8>>>,
}

impl BayesSummary {
    pub fn noise_gap(&self) -> f64 {
        self.noise[0] - self.noise[1]
    }
}

impl DiscreteSynthSpec {
    pub fn n_values(&self) -> usize {
        self.feature_dist.first().map_or(0, Vec::len)
    }

    pub fn n_groups(&self) -> usize {
        self.group_prior.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_groups();
        let m = self.n_values();
        if k < 2 || m < 1 {
            return Err(invalid("discrete synth needs at least 2 groups and 1 feature value"));
        }
        if self.feature_dist.len() != k || self.outcome_table.len() != k {
            return Err(invalid(
                "discrete synth: one feature distribution and outcome row per group",
            ));
        }
        let normalized = |p: &[f64]| {
            p.iter().all(|v| (0.0..=1.0).contains(v)) && (p.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL
        };
        if !normalized(&self.group_prior) {
            return Err(invalid("group prior is not a distribution"));
        }
        for a in 0..k {
            if self.feature_dist[a].len() != m || self.outcome_table[a].len() != m {
                return Err(invalid(format!("group {a}: expected {m} feature values")));
            }
            if !normalized(&self.feature_dist[a]) {
                return Err(invalid(format!("p(x | a={a}) is not a distribution")));
            }
            if self.outcome_table[a].iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid(format!("p(Y=1 | x, a={a}) outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn p_positive(&self, x: usize, a: usize) -> f64 {
        self.outcome_table[a][x]
    }

    /// Decode a one-hot feature row.
    pub fn value_of(&self, row: &[f64]) -> usize {
        row.iter().position(|&v| v == 1.0).unwrap_or(0)
    }

    /// Mean zero-one noise per group and the Bayes-optimal label table
    /// (ties at 0.5 go to label 0).
    pub fn exact_bayes(&self) -> BayesSummary {
        let noise = (0..self.n_groups())
            .map(|a| {
                self.feature_dist[a]
                    .iter()
                    .zip(&self.outcome_table[a])
                    .map(|(px, p)| px * p.min(1.0 - p))
                    .sum()
            })
            .collect();
        let y_star = self
            .outcome_table
            .iter()
            .map(|row| row.iter().map(|&p| u8::from(p > 0.5)).collect())
            .collect();
        BayesSummary {
            noise,
            y_star: Some(y_star),
        }
    }

    /// Exact mean noise of group `a` conditioned on `Y = y` for the
    /// class-conditional zero-one loss: `E[1[y* != y] | A=a, Y=y]`.
    pub fn exact_class_noise(&self, a: usize, y: u8) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (px, &p) in self.feature_dist[a].iter().zip(&self.outcome_table[a]) {
            let py = if y == 1 { p } else { 1.0 - p };
            let y_star = u8::from(p > 0.5);
            num += px * py * f64::from(y_star != y);
            den += px * py;
        }
        num / den
    }

    pub fn outcome_model(&self) -> ConditionalOutcomeModel {
        ConditionalOutcomeModel::Known(Arc::new(self.clone()))
    }

    fn one_hot_names(&self) -> Vec<String> {
        (0..self.n_values()).map(|x| format!("x={x}")).collect()
    }

    /// Dataset with one row per `(x, a)` cell, outcome set to the Bayes
    /// label. Useful as an evaluation set covering the whole domain.
    pub fn domain(&self) -> Result<Dataset> {
        let (m, k) = (self.n_values(), self.n_groups());
        let mut feats = vec![0.0; m * m * k];
        let mut group = Vec::new();
        let mut y = Vec::new();
        for a in 0..k {
            for x in 0..m {
                feats[(a * m + x) * m + x] = 1.0;
                group.push(a);
                y.push(f64::from(self.outcome_table[a][x] > 0.5));
            }
        }
        Dataset::new(
            Matrix::new(m * k, m, feats)?,
            group,
            y,
            Task::BinaryClassification,
            self.one_hot_names(),
            group_labels(k),
        )
    }
}

impl OutcomeModel for DiscreteSynthSpec {
    fn task(&self) -> Task {
        Task::BinaryClassification
    }

    fn mean(&self, x: &[f64], a: usize) -> f64 {
        self.p_positive(self.value_of(x), a)
    }

    fn variance(&self, x: &[f64], a: usize) -> f64 {
        let p = self.mean(x, a);
        p * (1.0 - p)
    }
}

impl Sampler for DiscreteSynthSpec {
    fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        Ok(gen_discrete(self, n, seed)?.0)
    }
}

fn draw_categorical(rng: &mut seed::Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
}

/// `n` i.i.d. draws from `spec` with one-hot encoded features.
pub fn gen_discrete(spec: &DiscreteSynthSpec, n: usize, seed: u64) -> Result<(Dataset, ConditionalOutcomeModel)> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("synthetic sample size must be at least 1"));
    }
    let m = spec.n_values();
    let mut rng = seed::rng(seed);
    let mut feats = vec![0.0; n * m];
    let mut group = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let a = draw_categorical(&mut rng, &spec.group_prior);
        let x = draw_categorical(&mut rng, &spec.feature_dist[a]);
        let yi = rng.random::<f64>() < spec.outcome_table[a][x];
        feats[i * m + x] = 1.0;
        group.push(a);
        y.push(f64::from(yi));
    }
    let d = Dataset::new(
        Matrix::new(n, m, feats)?,
        group,
        y,
        Task::BinaryClassification,
        spec.one_hot_names(),
        group_labels(spec.n_groups()),
    )?
    .with_role_names("a", "y");
    Ok((d, spec.outcome_model()))
}
