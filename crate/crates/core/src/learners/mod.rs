//! Small deterministic learners used by the ensemble and learning-curve
//! harnesses.
//!
//! The protected attribute is not a model input unless
//! [`LearnerSpec::include_group`] is set, in which case the group index is
//! appended as the last feature column.

mod bagging;
mod knn;
mod logistic;
mod ridge;
mod tree;

use serde::{Deserialize, Serialize};

pub use bagging::BaggedModel;
pub use knn::KnnModel;
pub use logistic::LogisticModel;
pub use ridge::RidgeModel;
pub use tree::{TreeModel, TreeParams};

use crate::data::{Dataset, Matrix, Task};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Penalty {
    L1,
    L2,
}

/// Learner family and hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LearnerParams {
    Logistic {
        lambda: f64,
        penalty: Penalty,
        epochs: usize,
        step_size: f64,
    },
    Ridge {
        lambda: f64,
    },
    Knn {
        k: usize,
        standardize: bool,
    },
    Tree {
        max_depth: usize,
        min_samples_leaf: usize,
    },
    BaggedTrees {
        n_trees: usize,
        max_depth: usize,
        min_samples_leaf: usize,
        feature_fraction: f64,
        bootstrap: bool,
    },
}

impl LearnerParams {
    pub fn logistic(lambda: f64, penalty: Penalty) -> Self {
        LearnerParams::Logistic {
            lambda,
            penalty,
            epochs: 500,
            step_size: 0.1,
        }
    }

    pub fn knn(k: usize) -> Self {
        LearnerParams::Knn { k, standardize: true }
    }

    pub fn tree(max_depth: usize) -> Self {
        LearnerParams::Tree {
            max_depth,
            min_samples_leaf: 1,
        }
    }

    pub fn bagged_trees(n_trees: usize, max_depth: usize, feature_fraction: f64) -> Self {
        LearnerParams::BaggedTrees {
            n_trees,
            max_depth,
            min_samples_leaf: 1,
            feature_fraction,
            bootstrap: true,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerParams::Logistic { .. } => "logistic",
            LearnerParams::Ridge { .. } => "ridge",
            LearnerParams::Knn { .. } => "knn",
            LearnerParams::Tree { .. } => "tree",
            LearnerParams::BaggedTrees { .. } => "bagged_trees",
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearnerParams::Logistic {
                lambda,
                epochs,
                step_size,
                ..
            } => lambda >= 0.0 && epochs >= 1 && step_size > 0.0,
            LearnerParams::Ridge { lambda } => lambda >= 0.0,
            LearnerParams::Knn { k, .. } => k >= 1,
            LearnerParams::Tree {
                max_depth,
                min_samples_leaf,
            } => max_depth >= 1 && min_samples_leaf >= 1,
            LearnerParams::BaggedTrees {
                n_trees,
                max_depth,
                min_samples_leaf,
                feature_fraction,
                ..
            } => {
                n_trees >= 1
                    && max_depth >= 1
                    && min_samples_leaf >= 1
                    && feature_fraction > 0.0
                    && feature_fraction <= 1.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("hyperparameters out of range: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub params: LearnerParams,
    pub seed: u64,
    #[serde(default)]
    pub include_group: bool,
}

impl LearnerSpec {
    pub fn new(params: LearnerParams, seed: u64) -> Self {
        LearnerSpec {
            params,
            seed,
            include_group: false,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        LearnerSpec { seed, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Fitted {
    Logistic(LogisticModel),
    Ridge(RidgeModel),
    Knn(KnnModel),
    Tree(TreeModel),
    Bagged(BaggedModel),
}

/// A fitted model; immutable and shareable across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    fitted: Fitted,
    task: Task,
    n_inputs: usize,
    include_group: bool,
}

/// Feature matrix a model sees for `d` (group index appended if requested).
pub fn design_matrix(d: &Dataset, include_group: bool) -> Matrix {
    if include_group {
        let g: Vec<f64> = d.group().iter().map(|&g| g as f64).collect();
        d.features()
            .with_column(&g)
            .expect("group column has one entry per row")
    } else {
        d.features().clone()
    }
}

/// Fit `spec` on `d`.
pub fn train(spec: &LearnerSpec, d: &Dataset) -> Result<TrainedModel> {
    spec.params.validate()?;
    if d.is_empty() {
        return Err(invalid("cannot train on zero rows"));
    }
    let task = d.task();
    match (&spec.params, task) {
        (LearnerParams::Logistic { .. }, Task::Regression) => {
            return Err(Error::TaskMismatch {
                kind: "logistic",
                required: "binary",
            })
        }
        (LearnerParams::Ridge { .. }, Task::BinaryClassification) => {
            return Err(Error::TaskMismatch {
                kind: "ridge",
                required: "regression",
            })
        }
        _ => {}
    }
    let x = design_matrix(d, spec.include_group);
    let y = d.outcome();
    let fitted = match spec.params {
        LearnerParams::Logistic {
            lambda,
            penalty,
            epochs,
            step_size,
        } => Fitted::Logistic(logistic::fit(&x, y, lambda, penalty, epochs, step_size)),
        LearnerParams::Ridge { lambda } => Fitted::Ridge(ridge::fit(&x, y, lambda)?),
        LearnerParams::Knn { k, standardize } => Fitted::Knn(KnnModel::fit(&x, y, k, standardize)),
        LearnerParams::Tree {
            max_depth,
            min_samples_leaf,
        } => {
            let params = TreeParams {
                max_depth,
                min_samples_leaf,
                feature_fraction: 1.0,
            };
            let rows: Vec<usize> = (0..x.rows()).collect();
            Fitted::Tree(tree::fit(&x, y, &rows, task, &params, spec.seed))
        }
        LearnerParams::BaggedTrees {
            n_trees,
            max_depth,
            min_samples_leaf,
            feature_fraction,
            bootstrap,
        } => {
            let params = TreeParams {
                max_depth,
                min_samples_leaf,
                feature_fraction,
            };
            Fitted::Bagged(bagging::fit(&x, y, task, &params, n_trees, bootstrap, spec.seed))
        }
    };
    Ok(TrainedModel {
        fitted,
        task,
        n_inputs: x.cols(),
        include_group: spec.include_group,
    })
}

impl TrainedModel {
    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    /// Scores in [0, 1] for classification, real predictions for regression.
    pub fn predict_scores(&self, features: &Matrix) -> Result<Vec<f64>> {
        if features.cols() != self.n_inputs {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs,
                got: features.cols(),
            });
        }
        let scores = match &self.fitted {
            Fitted::Logistic(m) => m.predict(features),
            Fitted::Ridge(m) => m.predict(features),
            Fitted::Knn(m) => m.predict(features),
            Fitted::Tree(m) => m.predict(features),
            Fitted::Bagged(m) => m.predict(features),
        };
        debug_assert!(
            self.task == Task::Regression || scores.iter().all(|s| (0.0..=1.0).contains(s)),
            "classification scores must lie in [0, 1]"
        );
        Ok(scores)
    }

    /// Predict on a dataset, adding the group column if the model uses it.
    pub fn predict_dataset(&self, d: &Dataset) -> Result<Vec<f64>> {
        self.predict_scores(&design_matrix(d, self.include_group))
    }

    /// Parameters of a logistic model (weights on the original feature scale
    /// and intercept), for inspection.
    pub fn logistic(&self) -> Option<&LogisticModel> {
        match &self.fitted {
            Fitted::Logistic(m) => Some(m),
            _ => None,
        }
    }

    pub fn ridge(&self) -> Option<&RidgeModel> {
        match &self.fitted {
            Fitted::Ridge(m) => Some(m),
            _ => None,
        }
    }

    pub fn tree(&self) -> Option<&TreeModel> {
        match &self.fitted {
            Fitted::Tree(m) => Some(m),
            _ => None,
        }
    }

    pub fn bagged(&self) -> Option<&BaggedModel> {
        match &self.fitted {
            Fitted::Bagged(m) => Some(m),
            _ => None,
        }
    }
}

/// `1[s >= t]` for each score.
pub fn apply_threshold(scores: &[f64], t: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= t)).collect()
}

/// Per-column mean and standard deviation (1 for constant columns).
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let (n, k) = (x.rows() as f64, x.cols());
        let mut mean = vec![0.0; k];
        for i in 0..x.rows() {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; k];
        for i in 0..x.rows() {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn identity(k: usize) -> Self {
        Standardizer {
            mean: vec![0.0; k],
            scale: vec![1.0; k],
        }
    }

    pub fn apply_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) / s),
        );
    }

    pub fn transform(&self, x: &Matrix) -> Matrix {
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        let mut buf = Vec::with_capacity(x.cols());
        for i in 0..x.rows() {
            self.apply_row(x.row(i), &mut buf);
            data.extend_from_slice(&buf);
        }
        Matrix::new(x.rows(), x.cols(), data).expect("shape preserved")
    }
}
