use super::{Penalty, Standardizer};
use crate::data::Matrix;

/// Logistic regression on standardized inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    standardizer: Standardizer,
    /// Weights on the standardized scale.
    pub weights: Vec<f64>,
    pub intercept: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    /// Model with the given parameters acting on raw (unstandardized) inputs.
    pub fn from_parameters(weights: Vec<f64>, intercept: f64) -> Self {
        LogisticModel {
            standardizer: Standardizer::identity(weights.len()),
            weights,
            intercept,
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut buf = Vec::with_capacity(x.cols());
        (0..x.rows())
            .map(|i| {
                self.standardizer.apply_row(x.row(i), &mut buf);
                let t: f64 = self.intercept + buf.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>();
                sigmoid(t)
            })
            .collect()
    }
}

/// Full-batch proximal gradient descent on the mean log-loss with a fixed
/// iteration budget and step size `step / sqrt(t)`. The intercept is not
/// penalized.
pub(super) fn fit(x: &Matrix, y: &[f64], lambda: f64, penalty: Penalty, epochs: usize, step: f64) -> LogisticModel {
    let standardizer = Standardizer::fit(x);
    let z = standardizer.transform(x);
    let (n, k) = (z.rows(), z.cols());
    let mut w = vec![0.0; k];
    let mut b = 0.0;
    let mut grad = vec![0.0; k];
    for t in 1..=epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let row = z.row(i);
            let p = sigmoid(b + row.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>());
            let r = p - yi;
            grad_b += r;
            for (g, v) in grad.iter_mut().zip(row) {
                *g += r * v;
            }
        }
        let eta = step / (t as f64).sqrt();
        let inv_n = 1.0 / n as f64;
        b -= eta * grad_b * inv_n;
        for (wj, g) in w.iter_mut().zip(&grad) {
            let v = *wj - eta * g * inv_n;
            *wj = match penalty {
                Penalty::L1 => v.signum() * (v.abs() - eta * lambda).max(0.0),
                Penalty::L2 => v / (1.0 + eta * lambda),
            };
        }
    }
    LogisticModel {
        standardizer,
        weights: w,
        intercept: b,
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::dataset;
    use super::super::*;
    use crate::data::Task;

    #[test]
    fn zero_weights_score_one_half() {
        let m = LogisticModel::from_parameters(vec![0.0, 0.0], 0.0);
        let x = Matrix::from_rows(&[vec![1.0, -3.0], vec![100.0, 2.0]]).unwrap();
        assert_eq!(m.predict(&x), vec![0.5, 0.5]);
    }

    #[test]
    fn separable_pair_is_fit() {
        let d = dataset(&[vec![-1.0], vec![1.0]], &[0.0, 1.0], Task::BinaryClassification);
        let m = train(&LearnerSpec::new(LearnerParams::logistic(0.0, Penalty::L1), 0), &d).unwrap();
        let labels = apply_threshold(&m.predict_dataset(&d).unwrap(), 0.5);
        assert_eq!(labels, vec![0, 1]);
    }

    #[test]
    fn strong_l1_zeroes_all_weights() {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![i as f64, ((i * 7) % 11) as f64, (i % 3) as f64])
            .collect();
        let y: Vec<f64> = (0..40).map(|i| f64::from(i % 4 == 0 || i > 30)).collect();
        let d = dataset(&rows, &y, Task::BinaryClassification);
        let m = train(&LearnerSpec::new(LearnerParams::logistic(2.0, Penalty::L1), 0), &d).unwrap();
        let lm = m.logistic().unwrap();
        assert!(lm.weights.iter().all(|&w| w == 0.0), "{:?}", lm.weights);
        let s = m.predict_dataset(&d).unwrap();
        let c = super::sigmoid(lm.intercept);
        assert!(s.iter().all(|&v| v == c));
    }

    #[test]
    fn training_is_bit_reproducible() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
        let y: Vec<f64> = (0..30).map(|i| f64::from((i as f64).sin() > 0.2)).collect();
        let d = dataset(&rows, &y, Task::BinaryClassification);
        let spec = LearnerSpec::new(LearnerParams::logistic(0.01, Penalty::L2), 3);
        assert_eq!(train(&spec, &d).unwrap(), train(&spec, &d).unwrap());
    }
}
