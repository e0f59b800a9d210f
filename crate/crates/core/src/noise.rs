//! Bayes-error bounds within a protected group, treating the outcome as the
//! class label.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix, Task};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::learners::{KnnModel, Standardizer};
use crate::seed;

/// Default covariance ridge, relative to the mean feature variance.
pub const DEFAULT_REGULARIZATION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundMethod {
    Mahalanobis,
    Bhattacharyya,
    NearestNeighbor,
}

impl BoundMethod {
    pub fn name(self) -> &'static str {
        match self {
            BoundMethod::Mahalanobis => "mahalanobis",
            BoundMethod::Bhattacharyya => "bhattacharyya",
            BoundMethod::NearestNeighbor => "nearest_neighbor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseBoundEstimate {
    pub method: BoundMethod,
    pub group: usize,
    pub label: String,
    pub count: usize,
    pub e_low: Option<f64>,
    pub e_up: f64,
    /// Empirical class priors `(p(Y=0), p(Y=1))` within the group.
    pub priors: (f64, f64),
    /// Mahalanobis distance or Bhattacharyya distance.
    pub distance: Option<f64>,
    /// Cross-validated k-NN error.
    pub nn_error: Option<f64>,
    /// Ridge added to covariance diagonals.
    pub regularization: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundOptions {
    /// z-score features over the whole dataset first.
    pub standardize: bool,
    /// Ridge factor: `lambda = factor * trace(S) / k`.
    pub regularization: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            standardize: true,
            regularization: DEFAULT_REGULARIZATION,
        }
    }
}

/// Group rows split by class, after optional standardization.
struct ClassSplit {
    x0: Vec<Vec<f64>>,
    x1: Vec<Vec<f64>>,
}

impl ClassSplit {
    fn priors(&self) -> (f64, f64) {
        let n = (self.x0.len() + self.x1.len()) as f64;
        (self.x0.len() as f64 / n, self.x1.len() as f64 / n)
    }

    fn count(&self) -> usize {
        self.x0.len() + self.x1.len()
    }
}

fn group_matrix(d: &Dataset, a: usize, standardize: bool) -> Result<(Matrix, Vec<f64>)> {
    if d.task() != Task::BinaryClassification {
        return Err(Error::TaskMismatch {
            kind: "noise bounds",
            required: "binary",
        });
    }
    if a >= d.n_groups() {
        return Err(invalid(format!("group {a} out of range")));
    }
    let rows = d.group_rows(a);
    if rows.is_empty() {
        return Err(Error::EmptyGroup(a));
    }
    let x = if standardize {
        Standardizer::fit(d.features()).transform(d.features())
    } else {
        d.features().clone()
    };
    let y = rows.iter().map(|&i| d.outcome()[i]).collect();
    Ok((x.select_rows(&rows), y))
}

fn split_classes(d: &Dataset, a: usize, standardize: bool) -> Result<ClassSplit> {
    let (x, y) = group_matrix(d, a, standardize)?;
    let mut s = ClassSplit {
        x0: Vec::new(),
        x1: Vec::new(),
    };
    for (i, &yi) in y.iter().enumerate() {
        if yi == 1.0 { &mut s.x1 } else { &mut s.x0 }.push(x.row(i).to_vec());
    }
    for (c, rows) in [(0, &s.x0), (1, &s.x1)] {
        if rows.len() < 2 {
            return Err(Error::EmptySubset(format!(
                "group {a} has {} rows of class {c}; need at least 2",
                rows.len()
            )));
        }
    }
    Ok(s)
}

/// Mean and unbiased covariance.
fn moments(rows: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let k = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(k);
    for r in rows {
        mean += DVector::from_column_slice(r);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(k, k);
    let mut c = DVector::zeros(k);
    for r in rows {
        c.copy_from_slice(r);
        c -= &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    (mean, cov / (n - 1.0))
}

fn ridge(s: &DMatrix<f64>, factor: f64) -> f64 {
    let k = s.nrows() as f64;
    let lambda = factor * s.trace() / k;
    if factor > 0.0 && lambda <= 0.0 {
        factor
    } else {
        lambda
    }
}

fn with_ridge(s: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut s = s.clone();
    for i in 0..s.nrows() {
        s[(i, i)] += lambda;
    }
    s
}

fn cholesky(s: DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    s.cholesky()
        .ok_or_else(|| Error::Numerical(format!("{what} covariance is not positive definite")))
}

fn ln_det(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// `E_up = 2 p0 p1 / (1 + p0 p1 D)`, with `D` the squared Mahalanobis
/// distance between class means under the pooled covariance.
pub fn mahalanobis_upper(d: &Dataset, a: usize, opts: &BoundOptions) -> Result<NoiseBoundEstimate> {
    let s = split_classes(d, a, opts.standardize)?;
    let (m0, c0) = moments(&s.x0);
    let (m1, c1) = moments(&s.x1);
    let (n0, n1) = (s.x0.len() as f64, s.x1.len() as f64);
    let pooled = (c0 * (n0 - 1.0) + c1 * (n1 - 1.0)) / (n0 + n1 - 2.0);
    let lambda = ridge(&pooled, opts.regularization);
    let chol = cholesky(with_ridge(&pooled, lambda), "pooled")?;
    let diff = m1 - m0;
    let delta = diff.dot(&chol.solve(&diff));
    if !delta.is_finite() {
        return Err(Error::Numerical("non-finite Mahalanobis distance".into()));
    }
    let (p0, p1) = s.priors();
    Ok(NoiseBoundEstimate {
        method: BoundMethod::Mahalanobis,
        group: a,
        label: d.group_labels()[a].clone(),
        count: s.count(),
        e_low: None,
        e_up: 2.0 * p0 * p1 / (1.0 + p0 * p1 * delta),
        priors: (p0, p1),
        distance: Some(delta),
        nn_error: None,
        regularization: Some(lambda),
    })
}

/// Bounds from the Gaussian Bhattacharyya distance `B`: with
/// `rho = exp(-B)`, `E_up = sqrt(p0 p1) rho` and
/// `E_low = (1 - sqrt(1 - 4 p0 p1 rho^2)) / 2`.
pub fn bhattacharyya_bounds(d: &Dataset, a: usize, opts: &BoundOptions) -> Result<NoiseBoundEstimate> {
    let s = split_classes(d, a, opts.standardize)?;
    let (m0, c0) = moments(&s.x0);
    let (m1, c1) = moments(&s.x1);
    let avg = (&c0 + &c1) * 0.5;
    let lambda = ridge(&avg, opts.regularization);
    let chol_avg = cholesky(with_ridge(&avg, lambda), "average")?;
    let chol0 = cholesky(with_ridge(&c0, lambda), "class 0")?;
    let chol1 = cholesky(with_ridge(&c1, lambda), "class 1")?;
    let diff = m1 - m0;
    let b =
        diff.dot(&chol_avg.solve(&diff)) / 8.0 + 0.5 * (ln_det(&chol_avg) - 0.5 * (ln_det(&chol0) + ln_det(&chol1)));
    if !b.is_finite() {
        return Err(Error::Numerical("non-finite Bhattacharyya distance".into()));
    }
    let (p0, p1) = s.priors();
    let rho = (-b).exp();
    let e_up = (p0 * p1).sqrt() * rho;
    let e_low = 0.5 * (1.0 - (1.0 - 4.0 * p0 * p1 * rho * rho).max(0.0).sqrt());
    Ok(NoiseBoundEstimate {
        method: BoundMethod::Bhattacharyya,
        group: a,
        label: d.group_labels()[a].clone(),
        count: s.count(),
        e_low: Some(e_low.min(e_up)),
        e_up,
        priors: (p0, p1),
        distance: Some(b),
        nn_error: None,
        regularization: Some(lambda),
    })
}

/// Lower bound on the Bayes error implied by an asymptotic nearest-neighbour
/// error `eps`: `(1 - sqrt(1 - 2 eps)) / 2`, saturating at 0.5.
pub fn cover_hart_lower(eps: f64) -> f64 {
    if eps >= 0.5 {
        0.5
    } else {
        0.5 * (1.0 - (1.0 - 2.0 * eps).max(0.0).sqrt())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NnConfig {
    pub k: usize,
    pub folds: usize,
    pub seed: u64,
    pub exec: Execution,
}

/// Cross-validated k-NN error within group `a`; `E_up = eps` (capped at
/// 0.5) and `E_low` by the Cover-Hart inversion.
pub fn nn_bounds(d: &Dataset, a: usize, cfg: &NnConfig, opts: &BoundOptions) -> Result<NoiseBoundEstimate> {
    if cfg.k == 0 || cfg.folds < 2 {
        return Err(invalid(format!(
            "need k >= 1 and folds >= 2, got k={} folds={}",
            cfg.k, cfg.folds
        )));
    }
    let (x, y) = group_matrix(d, a, opts.standardize)?;
    let n = x.rows();
    if n < cfg.folds || n - n.div_ceil(cfg.folds) < cfg.k {
        return Err(Error::EmptySubset(format!(
            "group {a} has {n} rows: too few for {} folds with k = {}",
            cfg.folds, cfg.k
        )));
    }
    let mut rng = seed::rng(seed::derive(cfg.seed, "folds", a as u64));
    let perm = rand::seq::index::sample(&mut rng, n, n).into_vec();
    let mut fold = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold[i] = pos % cfg.folds;
    }
    let mut errors = 0usize;
    for f in 0..cfg.folds {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold[i] == f);
        let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = KnnModel::fit(&x.select_rows(&train), &ty, cfg.k, false);
        let scores = model.predict_with(&x.select_rows(&test), cfg.exec);
        errors += test
            .iter()
            .zip(scores)
            .filter(|(&i, s)| f64::from(*s >= 0.5) != y[i])
            .count();
    }
    let eps = errors as f64 / n as f64;
    let p1 = y.iter().sum::<f64>() / n as f64;
    Ok(NoiseBoundEstimate {
        method: BoundMethod::NearestNeighbor,
        group: a,
        label: d.group_labels()[a].clone(),
        count: n,
        e_low: Some(cover_hart_lower(eps)),
        e_up: eps.min(0.5),
        priors: (1.0 - p1, p1),
        distance: None,
        nn_error: Some(eps),
        regularization: None,
    })
}

/// All three methods for every group, in method-then-group order. Failures
/// are returned per entry so one degenerate group does not hide the rest.
pub fn all_bounds(
    d: &Dataset,
    cfg: &NnConfig,
    opts: &BoundOptions,
) -> Vec<(BoundMethod, usize, Result<NoiseBoundEstimate>)> {
    let mut out = Vec::new();
    for method in [
        BoundMethod::Mahalanobis,
        BoundMethod::Bhattacharyya,
        BoundMethod::NearestNeighbor,
    ] {
        let per_group = exec::map_indices(cfg.exec, d.n_groups(), |a| match method {
            BoundMethod::Mahalanobis => mahalanobis_upper(d, a, opts),
            BoundMethod::Bhattacharyya => bhattacharyya_bounds(d, a, opts),
            BoundMethod::NearestNeighbor => nn_bounds(d, a, cfg, opts),
        });
        out.extend(per_group.into_iter().enumerate().map(|(a, r)| (method, a, r)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(x0: &[f64], x1: &[f64]) -> Dataset {
        let n = x0.len() + x1.len();
        let x: Vec<f64> = x0.iter().chain(x1).copied().collect();
        let y: Vec<f64> = (0..n).map(|i| f64::from(i >= x0.len())).collect();
        Dataset::new(
            Matrix::new(n, 1, x).unwrap(),
            vec![0; n],
            y,
            Task::BinaryClassification,
            vec!["x".into()],
            vec!["g".into()],
        )
        .unwrap()
    }

    const RAW: BoundOptions = BoundOptions {
        standardize: false,
        regularization: 0.0,
    };

    #[test]
    fn mahalanobis_unit_gap() {
        let d = one_d(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 3.0]);
        let e = mahalanobis_upper(&d, 0, &RAW).unwrap();
        assert!((e.distance.unwrap() - 4.0).abs() < 1e-12);
        assert!((e.e_up - 0.25).abs() < 1e-12);
        assert_eq!(e.e_low, None);
    }

    #[test]
    fn identical_classes_give_half() {
        let d = one_d(&[-1.0, 0.0, 1.0], &[-1.0, 0.0, 1.0]);
        let m = mahalanobis_upper(&d, 0, &RAW).unwrap();
        assert!((m.e_up - 0.5).abs() < 1e-12);
        let b = bhattacharyya_bounds(&d, 0, &RAW).unwrap();
        assert!(b.distance.unwrap().abs() < 1e-12);
        assert!((b.e_up - 0.5).abs() < 1e-12);
        assert!((b.e_low.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn bhattacharyya_unit_gap() {
        let d = one_d(&[-1.0, 0.0, 1.0], &[1.0, 2.0, 3.0]);
        let b = bhattacharyya_bounds(&d, 0, &RAW).unwrap();
        assert!((b.distance.unwrap() - 0.5).abs() < 1e-12);
        assert!((b.e_up - 0.5 * (-0.5f64).exp()).abs() < 1e-12);
        let low = 0.5 * (1.0 - (1.0 - (-1.0f64).exp()).sqrt());
        assert!((b.e_low.unwrap() - low).abs() < 1e-12);
    }

    #[test]
    fn cover_hart_values() {
        assert_eq!(cover_hart_lower(0.0), 0.0);
        assert_eq!(cover_hart_lower(0.7), 0.5);
        assert!((cover_hart_lower(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_an_error() {
        let d = one_d(&[0.0, 1.0, 2.0], &[]);
        assert!(mahalanobis_upper(&d, 0, &RAW).is_err());
    }

    #[test]
    fn separable_classes_have_zero_nn_error() {
        let x0: Vec<f64> = (0..20).map(f64::from).collect();
        let x1: Vec<f64> = (100..120).map(f64::from).collect();
        let d = one_d(&x0, &x1);
        let cfg = NnConfig {
            k: 3,
            folds: 5,
            seed: 1,
            exec: Execution::Sequential,
        };
        let e = nn_bounds(&d, 0, &cfg, &BoundOptions::default()).unwrap();
        assert_eq!((e.e_low, e.e_up), (Some(0.0), 0.0));
        assert_eq!(e, nn_bounds(&d, 0, &cfg, &BoundOptions::default()).unwrap());
    }
}
