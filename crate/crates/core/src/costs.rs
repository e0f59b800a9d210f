//! Group-conditional costs and the discrimination level between groups.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{invalid, Error, Result};

/// Default decision threshold for turning scores into labels.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostKind {
    ZeroOne,
    Fpr,
    Fnr,
    Mse,
    GeneralizedZeroOne,
    Brier,
}

impl CostKind {
    pub const ALL: [CostKind; 6] = [
        CostKind::ZeroOne,
        CostKind::Fpr,
        CostKind::Fnr,
        CostKind::Mse,
        CostKind::GeneralizedZeroOne,
        CostKind::Brier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::ZeroOne => "zo",
            CostKind::Fpr => "fpr",
            CostKind::Fnr => "fnr",
            CostKind::Mse => "mse",
            CostKind::GeneralizedZeroOne => "gzo",
            CostKind::Brier => "brier",
        }
    }

    pub fn parse(s: &str) -> Result<CostKind> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| invalid(format!("unknown cost kind `{s}`")))
    }

    pub fn required_task(self) -> Task {
        match self {
            CostKind::Mse => Task::Regression,
            _ => Task::BinaryClassification,
        }
    }

    /// Outcome class the cost conditions on, if any.
    pub fn conditioning_class(self) -> Option<f64> {
        match self {
            CostKind::Fpr => Some(0.0),
            CostKind::Fnr => Some(1.0),
            _ => None,
        }
    }

    pub fn uses_scores(self) -> bool {
        matches!(self, CostKind::GeneralizedZeroOne | CostKind::Brier)
    }

    pub(crate) fn check_task(self, task: Task) -> Result<()> {
        if self.required_task() != task {
            return Err(Error::TaskMismatch {
                kind: self.name(),
                required: self.required_task().name(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for CostKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One model's predictions on a dataset: scores (or real-valued predictions
/// for regression) together with the threshold that turns scores into labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionSet {
    values: Vec<f64>,
    threshold: f64,
}

impl PredictionSet {
    pub fn from_scores(scores: Vec<f64>, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(invalid(format!("threshold {threshold} not in [0, 1]")));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(invalid(format!("non-finite score {s}")));
        }
        Ok(PredictionSet {
            values: scores,
            threshold,
        })
    }

    /// Hard 0/1 labels.
    pub fn from_labels(labels: &[u8]) -> Self {
        PredictionSet {
            values: labels.iter().map(|&l| f64::from(l.min(1))).collect(),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    /// Real-valued regression predictions.
    pub fn from_values(values: Vec<f64>) -> Self {
        PredictionSet {
            values,
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn label(&self, i: usize) -> f64 {
        if self.values[i] >= self.threshold {
            1.0
        } else {
            0.0
        }
    }

    pub fn labels(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.label(i) as u8).collect()
    }
}

/// Per-row loss for `kind`; `None` for rows outside the conditioning class.
pub fn per_sample_losses(preds: &PredictionSet, d: &Dataset, kind: CostKind) -> Result<Vec<Option<f64>>> {
    if preds.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: preds.len(),
        });
    }
    kind.check_task(d.task())?;
    if kind.uses_scores() {
        if let Some(s) = preds.values().iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(invalid(format!("score {s} outside [0, 1]")));
        }
    }
    let y = d.outcome();
    Ok((0..d.len())
        .map(|i| {
            let yi = y[i];
            let s = preds.values()[i];
            match kind {
                CostKind::ZeroOne => Some(f64::from(preds.label(i) != yi)),
                CostKind::Fpr => (yi == 0.0).then(|| preds.label(i)),
                CostKind::Fnr => (yi == 1.0).then(|| 1.0 - preds.label(i)),
                CostKind::Mse => Some((s - yi) * (s - yi)),
                CostKind::GeneralizedZeroOne => Some(yi * (1.0 - s) + (1.0 - yi) * s),
                CostKind::Brier => Some((s - yi) * (s - yi)),
            }
        })
        .collect())
}

/// Empirical mean, count and unbiased variance of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub cost: f64,
    pub count: usize,
    /// Unbiased sample variance of the per-sample losses (0 when count < 2).
    pub variance: f64,
}

pub(crate) fn summarize(xs: impl Iterator<Item = f64>) -> Option<CostEstimate> {
    let xs: Vec<f64> = xs.collect();
    if xs.is_empty() {
        return None;
    }
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let variance = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Some(CostEstimate {
        cost: mean,
        count: xs.len(),
        variance,
    })
}

pub(crate) fn group_estimate(losses: &[Option<f64>], d: &Dataset, a: usize) -> Option<CostEstimate> {
    summarize(
        losses
            .iter()
            .zip(d.group())
            .filter(|(_, &g)| g == a)
            .filter_map(|(l, _)| *l),
    )
}

/// Cost of `kind` for group `a`, with sample count and loss variance.
pub fn group_cost(preds: &PredictionSet, d: &Dataset, kind: CostKind, a: usize) -> Result<CostEstimate> {
    if a >= d.n_groups() {
        return Err(invalid(format!("group {a} out of range")));
    }
    let losses = per_sample_losses(preds, d, kind)?;
    group_estimate(&losses, d, a).ok_or_else(|| {
        Error::EmptySubset(match kind.conditioning_class() {
            Some(y) => format!("group {a} has no rows with outcome {y} for {kind}"),
            None => format!("group {a} has no rows"),
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCostEntry {
    pub group: usize,
    pub label: String,
    #[serde(flatten)]
    pub estimate: CostEstimate,
}

/// Per-group costs and the gap between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCostReport {
    pub kind: CostKind,
    pub groups: Vec<GroupCostEntry>,
    /// Groups left out because they have no rows in the conditioning subset.
    pub excluded: Vec<usize>,
    /// max - min over evaluable groups (|c0 - c1| for two groups).
    pub gap: f64,
    pub warnings: Vec<String>,
}

impl GroupCostReport {
    pub fn cost(&self, group: usize) -> Option<f64> {
        self.groups.iter().find(|e| e.group == group).map(|e| e.estimate.cost)
    }
}

pub(crate) fn max_min_gap(costs: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = costs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| (lo.min(c), hi.max(c)));
    hi - lo
}

/// Per-group costs of `kind` and the discrimination level between groups.
pub fn discrimination_level(preds: &PredictionSet, d: &Dataset, kind: CostKind) -> Result<GroupCostReport> {
    let losses = per_sample_losses(preds, d, kind)?;
    let mut groups = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for a in 0..d.n_groups() {
        match group_estimate(&losses, d, a) {
            Some(estimate) => groups.push(GroupCostEntry {
                group: a,
                label: d.group_labels()[a].clone(),
                estimate,
            }),
            None => {
                excluded.push(a);
                warnings.push(format!(
                    "{kind}: group `{}` has no rows in the conditioning subset; excluded",
                    d.group_labels()[a]
                ));
            }
        }
    }
    if groups.len() < 2 {
        return Err(Error::InsufficientGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    let gap = max_min_gap(groups.iter().map(|e| e.estimate.cost));
    Ok(GroupCostReport {
        kind,
        groups,
        excluded,
        gap,
        warnings,
    })
}

fn score_group_mean(scores: &[f64], d: &Dataset, a: usize, loss: impl Fn(f64, f64) -> f64) -> Result<f64> {
    if scores.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            got: scores.len(),
        });
    }
    if d.task() != Task::BinaryClassification {
        return Err(Error::TaskMismatch {
            kind: "score-based cost",
            required: "binary",
        });
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(invalid(format!("score {s} outside [0, 1]")));
    }
    summarize(
        (0..d.len())
            .filter(|&i| d.group()[i] == a)
            .map(|i| loss(scores[i], d.outcome()[i])),
    )
    .map(|e| e.cost)
    .ok_or_else(|| Error::EmptySubset(format!("group {a} has no rows")))
}

/// Mean squared difference between score and outcome within group `a`.
pub fn brier_score(scores: &[f64], d: &Dataset, a: usize) -> Result<f64> {
    score_group_mean(scores, d, a, |s, y| (s - y) * (s - y))
}

/// Expected zero-one loss of a classifier that predicts 1 with probability
/// equal to the score: mean of `y(1-s) + (1-y)s` within group `a`.
pub fn generalized_zero_one(scores: &[f64], d: &Dataset, a: usize) -> Result<f64> {
    score_group_mean(scores, d, a, |s, y| y * (1.0 - s) + (1.0 - y) * s)
}
