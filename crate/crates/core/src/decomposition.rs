//! Bias / variance / noise decomposition of group costs.
//!
//! The expectation over training sets is the uniform distribution over the
//! `T` members of an [`EnsemblePredictions`], so every identity here holds
//! exactly for the finite ensemble rather than approximately.
//!
//! Tie rules: the majority vote and the Bayes-optimal label both break ties
//! toward label 0.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::costs::max_min_gap;
use crate::data::{bootstrap_indices, subsample_indices, Dataset, Task};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::learners::{self, LearnerSpec};
use crate::seed;
use crate::stats::{dist, TestResult};
use crate::synth::Sampler;

/// True conditional outcome distribution `Y | x, a`.
pub trait OutcomeModel: Send + Sync {
    fn task(&self) -> Task;
    /// `p(Y=1 | x, a)` for binary outcomes, `E[Y | x, a]` for real ones.
    fn mean(&self, x: &[f64], a: usize) -> f64;
    /// `Var[Y | x, a]`.
    fn variance(&self, x: &[f64], a: usize) -> f64;
}

#[derive(Clone)]
pub enum ConditionalOutcomeModel {
    Known(Arc<dyn OutcomeModel>),
    Unknown,
}

impl fmt::Debug for ConditionalOutcomeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionalOutcomeModel::Known(m) => write!(f, "Known({})", m.task().name()),
            ConditionalOutcomeModel::Unknown => write!(f, "Unknown"),
        }
    }
}

impl ConditionalOutcomeModel {
    pub fn known(&self) -> Option<&dyn OutcomeModel> {
        match self {
            ConditionalOutcomeModel::Known(m) => Some(m.as_ref()),
            ConditionalOutcomeModel::Unknown => None,
        }
    }

    pub fn is_known(&self) -> bool {
        self.known().is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    ZeroOne,
    Squared,
}

impl Loss {
    pub fn name(self) -> &'static str {
        match self {
            Loss::ZeroOne => "zero_one",
            Loss::Squared => "squared",
        }
    }

    fn eval(self, y: f64, yhat: f64) -> f64 {
        match self {
            Loss::ZeroOne => f64::from(y != yhat),
            Loss::Squared => (y - yhat) * (y - yhat),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    /// Resampled with replacement from an empirical dataset.
    Bootstrap,
    /// Resampled without replacement from an empirical dataset.
    Subsample,
    /// Fresh draws from a synthetic sampler.
    FreshDraws,
    /// Assembled directly from given predictions.
    Given,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub learner: Option<LearnerSpec>,
    pub n_train: usize,
    pub source: SourceKind,
    pub seed: u64,
}

/// `T x n` predictions of an ensemble over one evaluation set. For binary
/// tasks the entries are hard labels in {0, 1}.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsemblePredictions {
    rows: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl EnsemblePredictions {
    pub fn new(rows: Vec<Vec<f64>>, provenance: Provenance) -> Result<Self> {
        if rows.len() < 2 {
            return Err(invalid(format!(
                "ensemble needs at least 2 members, got {}",
                rows.len()
            )));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(invalid("ensemble predictions cover no points"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: r.len(),
            });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite ensemble prediction"));
        }
        Ok(EnsemblePredictions { rows, provenance })
    }

    /// Ensemble built from given rows without a training record.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            rows,
            Provenance {
                learner: None,
                n_train: 0,
                source: SourceKind::Given,
                seed: 0,
            },
        )
    }

    /// `t` copies of the Bayes-optimal predictor on `eval`.
    pub fn bayes_optimal(eval: &Dataset, model: &dyn OutcomeModel, loss: Loss, t: usize) -> Result<Self> {
        let row: Vec<f64> = (0..eval.len())
            .map(|i| bayes_prediction(model, eval.features().row(i), eval.group()[i], loss))
            .collect();
        Self::from_rows(vec![row; t])
    }

    pub fn n_members(&self) -> usize {
        self.rows.len()
    }

    pub fn n_points(&self) -> usize {
        self.rows[0].len()
    }

    pub fn member(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn point(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(move |r| r[i])
    }

    fn check_eval(&self, eval: &Dataset) -> Result<()> {
        if self.n_points() != eval.len() {
            return Err(Error::DimensionMismatch {
                expected: eval.len(),
                got: self.n_points(),
            });
        }
        Ok(())
    }

    fn check_labels(&self) -> Result<()> {
        if self.rows.iter().flatten().any(|&v| v != 0.0 && v != 1.0) {
            return Err(invalid("zero-one analysis needs hard labels in {0, 1}"));
        }
        Ok(())
    }
}

/// Where training sets for an ensemble come from.
#[derive(Clone, Copy)]
pub enum TrainingSource<'a> {
    Bootstrap(&'a Dataset),
    Subsample(&'a Dataset),
    Synthetic(&'a dyn Sampler),
}

#[derive(Clone, Copy, Debug)]
pub struct EnsembleConfig {
    pub members: usize,
    pub n_train: usize,
    /// Classification scores at or above this become label 1.
    pub threshold: f64,
    pub seed: u64,
    pub exec: Execution,
}

/// Train `members` models on independent training sets and record their
/// predictions on `eval`. Member `t` uses seeds derived from `(seed, t)`.
pub fn ensemble_train(
    spec: &LearnerSpec,
    source: TrainingSource<'_>,
    eval: &Dataset,
    cfg: &EnsembleConfig,
) -> Result<EnsemblePredictions> {
    if cfg.members < 2 {
        return Err(invalid(format!(
            "ensemble needs at least 2 members, got {}",
            cfg.members
        )));
    }
    if cfg.n_train == 0 {
        return Err(invalid("training size must be at least 1"));
    }
    let kind = match source {
        TrainingSource::Bootstrap(_) => SourceKind::Bootstrap,
        TrainingSource::Subsample(d) => {
            if cfg.n_train > d.len() {
                return Err(invalid(format!(
                    "n_train {} exceeds source size {} without replacement",
                    cfg.n_train,
                    d.len()
                )));
            }
            SourceKind::Subsample
        }
        TrainingSource::Synthetic(_) => SourceKind::FreshDraws,
    };
    let rows = exec::try_map_indices(cfg.exec, cfg.members, |t| {
        let trial = seed::derive(cfg.seed, "ensemble", t as u64);
        let data_seed = seed::derive(trial, "data", 0);
        let train = match source {
            TrainingSource::Bootstrap(d) => d.select(&bootstrap_indices(d.len(), cfg.n_train, data_seed)?),
            TrainingSource::Subsample(d) => d.select(&subsample_indices(d.len(), cfg.n_train, data_seed)?),
            TrainingSource::Synthetic(s) => s.sample(cfg.n_train, data_seed)?,
        };
        let model = learners::train(&spec.with_seed(seed::derive(trial, "learner", 0)), &train)?;
        let scores = model.predict_dataset(eval)?;
        Ok(match eval.task() {
            Task::BinaryClassification => scores.into_iter().map(|s| f64::from(s >= cfg.threshold)).collect(),
            Task::Regression => scores,
        })
    })?;
    EnsemblePredictions::new(
        rows,
        Provenance {
            learner: Some(spec.clone()),
            n_train: cfg.n_train,
            source: kind,
            seed: cfg.seed,
        },
    )
}

/// Majority label (ties to 0) for zero-one loss, mean for squared loss.
pub fn main_prediction(e: &EnsemblePredictions, i: usize, loss: Loss) -> f64 {
    let t = e.n_members() as f64;
    match loss {
        Loss::ZeroOne => {
            let ones = e.point(i).filter(|&v| v == 1.0).count() as f64;
            f64::from(ones > t - ones)
        }
        Loss::Squared => e.point(i).sum::<f64>() / t,
    }
}

fn bayes_prediction(model: &dyn OutcomeModel, x: &[f64], a: usize, loss: Loss) -> f64 {
    let m = model.mean(x, a);
    match loss {
        Loss::ZeroOne => f64::from(m > 0.5),
        Loss::Squared => m,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointDecomposition {
    pub y_star: f64,
    pub y_main: f64,
    pub noise: f64,
    pub bias: f64,
    pub variance: f64,
    pub c_n: f64,
    pub c_v: f64,
}

impl PointDecomposition {
    /// `c_n N + B + c_v V`.
    pub fn total(&self) -> f64 {
        self.c_n * self.noise + self.bias + self.c_v * self.variance
    }
}

fn check_loss_task(loss: Loss, eval: &Dataset, e: &EnsemblePredictions) -> Result<()> {
    if loss == Loss::ZeroOne {
        if eval.task() != Task::BinaryClassification {
            return Err(Error::TaskMismatch {
                kind: "zero-one decomposition",
                required: "binary",
            });
        }
        e.check_labels()?;
    }
    Ok(())
}

fn decompose_point(
    e: &EnsemblePredictions,
    i: usize,
    x: &[f64],
    a: usize,
    model: &dyn OutcomeModel,
    loss: Loss,
) -> PointDecomposition {
    let t = e.n_members() as f64;
    let y_main = main_prediction(e, i, loss);
    let y_star = bayes_prediction(model, x, a, loss);
    match loss {
        Loss::ZeroOne => {
            let p = model.mean(x, a);
            let agree = e.point(i).filter(|&v| v == y_star).count() as f64 / t;
            PointDecomposition {
                y_star,
                y_main,
                noise: p.min(1.0 - p),
                bias: f64::from(y_star != y_main),
                variance: e.point(i).filter(|&v| v != y_main).count() as f64 / t,
                c_n: 2.0 * agree - 1.0,
                c_v: if y_main == y_star { 1.0 } else { -1.0 },
            }
        }
        Loss::Squared => PointDecomposition {
            y_star,
            y_main,
            noise: model.variance(x, a),
            bias: (y_star - y_main) * (y_star - y_main),
            variance: e.point(i).map(|v| (v - y_main) * (v - y_main)).sum::<f64>() / t,
            c_n: 1.0,
            c_v: 1.0,
        },
    }
}

/// Decomposition of the expected loss at evaluation point `i`.
pub fn point_decomposition(
    e: &EnsemblePredictions,
    eval: &Dataset,
    i: usize,
    om: &ConditionalOutcomeModel,
    loss: Loss,
) -> Result<PointDecomposition> {
    e.check_eval(eval)?;
    check_loss_task(loss, eval, e)?;
    let model = om.known().ok_or_else(|| {
        Error::Unsupported(
            "pointwise decomposition needs a known outcome model; use group_decomposition in unknown mode".into(),
        )
    })?;
    if i >= eval.len() {
        return Err(invalid(format!("point {i} out of range")));
    }
    Ok(decompose_point(
        e,
        i,
        eval.features().row(i),
        eval.group()[i],
        model,
        loss,
    ))
}

/// Pointwise terms for the fixed-class loss `1[y != yhat]`; the noise term is
/// `L(y*, y)`, so `mean_t 1[y != yhat_t] = c_n L(y*, y) + B + c_v V`.
pub fn class_conditional_point(
    e: &EnsemblePredictions,
    eval: &Dataset,
    i: usize,
    om: &ConditionalOutcomeModel,
    y: u8,
) -> Result<PointDecomposition> {
    let mut p = point_decomposition(e, eval, i, om, Loss::ZeroOne)?;
    p.noise = f64::from(p.y_star != f64::from(y));
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Known,
    Unknown,
}

/// Aggregated terms for one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTerms {
    pub group: usize,
    pub label: String,
    /// Evaluation rows contributing (observed-class rows in unknown mode).
    pub count: usize,
    /// Total weight of the contributing rows.
    pub mass: f64,
    /// Expected loss over ensemble members (and the outcome distribution in
    /// known mode).
    pub cost: f64,
    /// `E[c_n N]`; known mode only.
    pub noise: Option<f64>,
    /// `E[B]`; known mode only.
    pub bias: Option<f64>,
    /// `E[c_v V]`; known mode only. Equals `variance_unsigned` for squared
    /// loss.
    pub variance: Option<f64>,
    /// `E[V]`, which needs no outcome model.
    pub variance_unsigned: f64,
    /// `cost - variance_unsigned`; unknown mode only.
    pub bias_plus_noise: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTerms {
    pub noise: f64,
    pub bias: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDecomposition {
    pub loss: Loss,
    pub mode: Mode,
    /// Conditioning class for the class-conditional variant.
    pub condition: Option<u8>,
    pub groups: Vec<GroupTerms>,
    /// Discrimination level `max - min` of the group costs.
    pub gamma: f64,
    /// First-minus-second group differences of each term (two groups, known
    /// mode).
    pub gaps: Option<GapTerms>,
    pub warnings: Vec<String>,
}

impl GroupDecomposition {
    pub fn group(&self, a: usize) -> Option<&GroupTerms> {
        self.groups.iter().find(|g| g.group == a)
    }
}

/// Weighted running sums of pointwise terms.
#[derive(Default)]
struct Acc {
    w: f64,
    count: usize,
    cost: f64,
    noise: f64,
    bias: f64,
    net_var: f64,
    var: f64,
}

impl Acc {
    fn add(&mut self, w: f64, cost: f64, p: Option<(&PointDecomposition, f64)>, var: f64) {
        self.w += w;
        self.count += 1;
        self.cost += w * cost;
        self.var += w * var;
        if let Some((p, noise)) = p {
            self.noise += w * p.c_n * noise;
            self.bias += w * p.bias;
            self.net_var += w * p.c_v * p.variance;
        }
    }
}

fn member_variance(e: &EnsemblePredictions, i: usize, loss: Loss) -> f64 {
    let y_main = main_prediction(e, i, loss);
    e.point(i).map(|v| loss.eval(y_main, v)).sum::<f64>() / e.n_members() as f64
}

fn mean_member_loss(e: &EnsemblePredictions, i: usize, y: f64, loss: Loss) -> f64 {
    e.point(i).map(|v| loss.eval(y, v)).sum::<f64>() / e.n_members() as f64
}

/// Expected loss at point `i` over members and `Y ~ model(x, a)`.
fn expected_loss(e: &EnsemblePredictions, i: usize, model: &dyn OutcomeModel, x: &[f64], a: usize, loss: Loss) -> f64 {
    let t = e.n_members() as f64;
    match loss {
        Loss::ZeroOne => {
            let p = model.mean(x, a);
            e.point(i).map(|v| if v == 1.0 { 1.0 - p } else { p }).sum::<f64>() / t
        }
        Loss::Squared => {
            let (m, var) = (model.mean(x, a), model.variance(x, a));
            e.point(i).map(|v| (m - v) * (m - v) + var).sum::<f64>() / t
        }
    }
}

fn accumulate(
    e: &EnsemblePredictions,
    eval: &Dataset,
    om: &ConditionalOutcomeModel,
    loss: Loss,
    condition: Option<u8>,
    a: usize,
) -> Acc {
    let mut acc = Acc::default();
    for i in (0..eval.len()).filter(|&i| eval.group()[i] == a) {
        let x = eval.features().row(i);
        let var = member_variance(e, i, loss);
        match (om.known(), condition) {
            (Some(m), None) => {
                let p = decompose_point(e, i, x, a, m, loss);
                acc.add(1.0, expected_loss(e, i, m, x, a, loss), Some((&p, p.noise)), var);
            }
            (Some(m), Some(y)) => {
                let p1 = m.mean(x, a);
                let w = if y == 1 { p1 } else { 1.0 - p1 };
                if w > 0.0 {
                    let p = decompose_point(e, i, x, a, m, loss);
                    let cost = mean_member_loss(e, i, f64::from(y), loss);
                    acc.add(w, cost, Some((&p, f64::from(p.y_star != f64::from(y)))), var);
                }
            }
            (None, cond) => {
                let yi = eval.outcome()[i];
                if cond.is_none_or(|y| f64::from(y) == yi) {
                    acc.add(1.0, mean_member_loss(e, i, yi, loss), None, var);
                }
            }
        }
    }
    acc
}

/// Per-group decomposition over the evaluation set.
///
/// In known mode `cost = noise + bias + variance` for every group, and with
/// `condition = Some(y)` each point is weighted by `p(y | x, a)`. In unknown
/// mode only the variance is identified; the rest of the cost is reported as
/// `bias_plus_noise`, and a condition restricts to rows with observed `y`.
pub fn group_decomposition(
    e: &EnsemblePredictions,
    eval: &Dataset,
    om: &ConditionalOutcomeModel,
    loss: Loss,
    condition: Option<u8>,
) -> Result<GroupDecomposition> {
    e.check_eval(eval)?;
    check_loss_task(loss, eval, e)?;
    if condition.is_some() && loss != Loss::ZeroOne {
        return Err(invalid("class-conditional decomposition is defined for zero-one loss"));
    }
    if let Some(m) = om.known() {
        if m.task() != eval.task() {
            return Err(invalid("outcome model task does not match the evaluation set"));
        }
    }
    let mode = if om.is_known() { Mode::Known } else { Mode::Unknown };
    let mut groups = Vec::new();
    let mut warnings = Vec::new();
    for a in 0..eval.n_groups() {
        let acc = accumulate(e, eval, om, loss, condition, a);
        if acc.count == 0 || acc.w <= 0.0 {
            warnings.push(format!(
                "group `{}` has no evaluation rows{}; excluded",
                eval.group_labels()[a],
                condition.map_or(String::new(), |y| format!(" with outcome {y}"))
            ));
            continue;
        }
        let w = acc.w;
        let cost = acc.cost / w;
        let variance_unsigned = acc.var / w;
        let known = mode == Mode::Known;
        groups.push(GroupTerms {
            group: a,
            label: eval.group_labels()[a].clone(),
            count: acc.count,
            mass: w,
            cost,
            noise: known.then(|| acc.noise / w),
            bias: known.then(|| acc.bias / w),
            variance: known.then(|| acc.net_var / w),
            variance_unsigned,
            bias_plus_noise: (!known).then_some(cost - variance_unsigned),
        });
    }
    if groups.is_empty() {
        return Err(Error::EmptySubset("no group has evaluation rows".into()));
    }
    let gamma = max_min_gap(groups.iter().map(|g| g.cost));
    let gaps = match (mode, groups.as_slice()) {
        (Mode::Known, [g0, g1]) => Some(GapTerms {
            noise: g0.noise.unwrap_or(0.0) - g1.noise.unwrap_or(0.0),
            bias: g0.bias.unwrap_or(0.0) - g1.bias.unwrap_or(0.0),
            variance: g0.variance.unwrap_or(0.0) - g1.variance.unwrap_or(0.0),
        }),
        _ => None,
    };
    Ok(GroupDecomposition {
        loss,
        mode,
        condition,
        groups,
        gamma,
        gaps,
        warnings,
    })
}

/// Test whether two models' bias-plus-variance gaps differ.
///
/// Noise is shared by both models, so the statistic
/// `(g1_a - g1_b) - (g2_a - g2_b)` uses observed per-point losses averaged
/// over members; its variance comes from the paired per-point differences.
pub fn compare_models_bias_variance(
    e1: &EnsemblePredictions,
    e2: &EnsemblePredictions,
    eval: &Dataset,
    loss: Loss,
    pair: (usize, usize),
    level: f64,
) -> Result<TestResult> {
    e1.check_eval(eval)?;
    e2.check_eval(eval)?;
    check_loss_task(loss, eval, e1)?;
    check_loss_task(loss, eval, e2)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("significance level {level} not in (0, 1)")));
    }
    if pair.0 == pair.1 || pair.0 >= eval.n_groups() || pair.1 >= eval.n_groups() {
        return Err(invalid(format!("invalid group pair {pair:?}")));
    }
    let diff = |a: usize| -> Vec<f64> {
        (0..eval.len())
            .filter(|&i| eval.group()[i] == a)
            .map(|i| {
                let y = eval.outcome()[i];
                mean_member_loss(e1, i, y, loss) - mean_member_loss(e2, i, y, loss)
            })
            .collect()
    };
    let (u, v) = (diff(pair.0), diff(pair.1));
    if u.is_empty() || v.is_empty() {
        return Err(Error::EmptySubset("a compared group has no evaluation rows".into()));
    }
    let mv = |xs: &[f64]| {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        (m, var / n)
    };
    let (mu, su) = mv(&u);
    let (mw, sw) = mv(&v);
    let stat = mu - mw;
    let se2 = su + sw;
    let p = if se2 > 0.0 {
        dist::normal_two_tailed(stat / se2.sqrt())
    } else if stat == 0.0 {
        1.0
    } else {
        0.0
    };
    let mut aux = std::collections::BTreeMap::new();
    aux.insert("std_error".to_string(), se2.sqrt());
    aux.insert("count_a".to_string(), u.len() as f64);
    aux.insert("count_b".to_string(), v.len() as f64);
    Ok(TestResult {
        test: "compare_models_bias_variance".into(),
        statistic: stat,
        p_value: p,
        level,
        reject: p < level,
        aux,
        warnings: Vec::new(),
    })
}

/// `N_a - N_b` for squared loss under a known outcome model, averaged over
/// the evaluation rows of each group.
pub fn homoskedastic_noise_gap(om: &ConditionalOutcomeModel, eval: &Dataset, pair: (usize, usize)) -> Result<f64> {
    let model = om
        .known()
        .ok_or_else(|| Error::Unsupported("noise gap needs a known outcome model".into()))?;
    if eval.task() != Task::Regression || model.task() != Task::Regression {
        return Err(Error::Unsupported(
            "noise gap is defined for squared loss on regression outcomes; for zero-one loss the noise enters with the model-dependent factor c_n".into(),
        ));
    }
    let mean_noise = |a: usize| -> Result<f64> {
        let mut m = 0.0;
        let mut k = 0.0;
        for i in (0..eval.len()).filter(|&i| eval.group()[i] == a) {
            k += 1.0;
            m += (model.variance(eval.features().row(i), a) - m) / k;
        }
        if k == 0.0 {
            Err(Error::EmptyGroup(a))
        } else {
            Ok(m)
        }
    };
    Ok(mean_noise(pair.0)? - mean_noise(pair.1)?)
}
