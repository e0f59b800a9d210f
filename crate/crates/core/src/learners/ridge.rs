use nalgebra::{DMatrix, DVector};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// Linear model `y = intercept + w·x` fitted by penalized least squares.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .map(|i| self.intercept + x.row(i).iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>())
            .collect()
    }
}

/// Minimize `|y - b - Xw|^2 + lambda |w|^2` via the centered normal
/// equations. With `lambda = 0` and a singular system the minimum-norm
/// solution is returned.
pub(super) fn fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    let (n, k) = (x.rows(), x.cols());
    let nf = n as f64;
    let mut xmean = vec![0.0; k];
    for i in 0..n {
        for (m, v) in xmean.iter_mut().zip(x.row(i)) {
            *m += v / nf;
        }
    }
    let ymean = y.iter().sum::<f64>() / nf;
    let xc = DMatrix::from_fn(n, k, |i, j| x.get(i, j) - xmean[j]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ymean));
    let mut gram = xc.transpose() * &xc;
    for j in 0..k {
        gram[(j, j)] += lambda;
    }
    let rhs = xc.transpose() * yc;
    let w = match gram.clone().cholesky() {
        Some(ch) if lambda > 0.0 || ch.l().diagonal().iter().all(|d| *d > 1e-10) => ch.solve(&rhs),
        _ => gram
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::Numerical(format!("ridge solve failed: {e}")))?,
    };
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = ymean - weights.iter().zip(&xmean).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeModel { weights, intercept })
}

#[cfg(test)]
mod tests {
    use super::super::tests::dataset;
    use super::super::*;
    use crate::data::Task;

    #[test]
    fn recovers_exact_linear_map() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.5, ((i * i) % 7) as f64]).collect();
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - r[1]).collect();
        let d = dataset(&rows, &y, Task::Regression);
        for lambda in [0.0, 1e-12] {
            let m = train(&LearnerSpec::new(LearnerParams::Ridge { lambda }, 0), &d).unwrap();
            let r = m.ridge().unwrap();
            assert!((r.weights[0] - 2.0).abs() < 1e-8, "{:?}", r.weights);
            assert!((r.weights[1] + 1.0).abs() < 1e-8, "{:?}", r.weights);
            assert!(r.intercept.abs() < 1e-8);
        }
    }

    #[test]
    fn collinear_columns_without_penalty_use_pseudo_solution() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 5.0 * i as f64 + 1.0).collect();
        let d = dataset(&rows, &y, Task::Regression);
        let m = train(&LearnerSpec::new(LearnerParams::Ridge { lambda: 0.0 }, 0), &d).unwrap();
        let pred = m.predict_dataset(&d).unwrap();
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-8);
        }
        // minimum-norm: weights proportional to (1, 2)
        let w = &m.ridge().unwrap().weights;
        assert!((w[1] - 2.0 * w[0]).abs() < 1e-8);
    }
}
