use super::Standardizer;
use crate::data::Matrix;
use crate::exec::{self, Execution};

/// k-nearest-neighbour model: stores the (optionally z-scored) training set.
/// Predictions are the mean neighbour outcome, i.e. the vote fraction for
/// binary labels. Distance ties go to the lower training index.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    standardizer: Standardizer,
    train: Matrix,
    outcome: Vec<f64>,
    k: usize,
}

impl KnnModel {
    pub(crate) fn fit(x: &Matrix, y: &[f64], k: usize, standardize: bool) -> Self {
        let standardizer = if standardize {
            Standardizer::fit(x)
        } else {
            Standardizer::identity(x.cols())
        };
        KnnModel {
            train: standardizer.transform(x),
            standardizer,
            outcome: y.to_vec(),
            k,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the k nearest training rows to `query` (already scaled),
    /// nearest first.
    fn neighbours(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let k = self.k.min(self.train.rows());
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for j in 0..self.train.rows() {
            let mut dist = 0.0;
            for (a, b) in query.iter().zip(self.train.row(j)) {
                let t = a - b;
                dist += t * t;
            }
            if best.len() == k && dist >= best[k - 1].0 {
                continue;
            }
            let pos = best.partition_point(|&(d, _)| d <= dist);
            best.insert(pos, (dist, j));
            best.truncate(k);
        }
        best
    }

    fn predict_row(&self, row: &[f64], buf: &mut Vec<f64>) -> f64 {
        self.standardizer.apply_row(row, buf);
        let nb = self.neighbours(buf);
        nb.iter().map(|&(_, j)| self.outcome[j]).sum::<f64>() / nb.len() as f64
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut buf = Vec::with_capacity(x.cols());
        (0..x.rows()).map(|i| self.predict_row(x.row(i), &mut buf)).collect()
    }

    /// Same as [`predict`](Self::predict) with queries spread over threads.
    pub fn predict_with(&self, x: &Matrix, exec: Execution) -> Vec<f64> {
        exec::map_indices(exec, x.rows(), |i| {
            let mut buf = Vec::with_capacity(x.cols());
            self.predict_row(x.row(i), &mut buf)
        })
    }
}
