//! CART-style trees with greedy impurity (Gini) or variance splits.
//!
//! Candidate thresholds per feature are the midpoints between consecutive
//! distinct values when a feature has at most [`MAX_BINS`] distinct values,
//! and midpoints at evenly spaced quantiles otherwise. Ties in split quality
//! go to the lowest feature index, then the lowest threshold.

use rand::seq::index;

use crate::data::{Matrix, Task};
use crate::seed;

pub const MAX_BINS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features considered at each split (1 = all).
    pub feature_fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
}

impl TreeModel {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Candidate thresholds and per-row bin codes for every feature.
pub(crate) struct Binning {
    thresholds: Vec<Vec<f64>>,
    /// Row-major `[row][feature]` bin codes: number of thresholds below the value.
    codes: Vec<u16>,
    cols: usize,
}

impl Binning {
    pub fn fit(x: &Matrix, rows: &[usize]) -> Binning {
        let cols = x.cols();
        let mut thresholds = Vec::with_capacity(cols);
        let mut vals = Vec::with_capacity(rows.len());
        for j in 0..cols {
            vals.clear();
            vals.extend(rows.iter().map(|&i| x.get(i, j)));
            vals.sort_by(f64::total_cmp);
            let mut distinct = vals.clone();
            distinct.dedup();
            let t: Vec<f64> = if distinct.len() <= MAX_BINS {
                distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut cuts: Vec<f64> = (1..MAX_BINS)
                    .filter_map(|q| {
                        let v = vals[q * vals.len() / MAX_BINS - 1];
                        let p = distinct.partition_point(|&d| d <= v);
                        distinct.get(p).map(|&next| 0.5 * (v + next))
                    })
                    .collect();
                cuts.dedup();
                cuts
            };
            thresholds.push(t);
        }
        let mut codes = vec![0u16; x.rows() * cols];
        for &i in rows {
            for (j, t) in thresholds.iter().enumerate() {
                let v = x.get(i, j);
                codes[i * cols + j] = t.partition_point(|&c| c < v) as u16;
            }
        }
        Binning {
            thresholds,
            codes,
            cols,
        }
    }

    fn code(&self, row: usize, feature: usize) -> usize {
        usize::from(self.codes[row * self.cols + feature])
    }
}

struct Builder<'a> {
    binning: &'a Binning,
    y: &'a [f64],
    task: Task,
    params: &'a TreeParams,
    rng: seed::Rng,
    nodes: Vec<Node>,
    // scratch histograms
    count: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

struct Split {
    feature: usize,
    bin: usize,
    gain: f64,
}

impl Builder<'_> {
    fn impurity(&self, n: f64, s: f64, s2: f64) -> f64 {
        if n <= 0.0 {
            return 0.0;
        }
        match self.task {
            // n * gini = 2 * pos * neg / n
            Task::BinaryClassification => 2.0 * s * (n - s) / n,
            Task::Regression => (s2 - s * s / n).max(0.0),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let k = self.binning.cols;
        if self.params.feature_fraction >= 1.0 {
            return (0..k).collect();
        }
        let m = ((self.params.feature_fraction * k as f64).ceil() as usize).clamp(1, k);
        let mut f = index::sample(&mut self.rng, k, m).into_vec();
        f.sort_unstable();
        f
    }

    fn best_split(&mut self, rows: &[usize], parent: f64) -> Option<Split> {
        let min_leaf = self.params.min_samples_leaf as f64;
        let total_n = rows.len() as f64;
        let total_s: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let total_s2: f64 = rows.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let mut best: Option<Split> = None;
        for f in self.candidate_features() {
            let nb = self.binning.thresholds[f].len();
            if nb == 0 {
                continue;
            }
            self.count[..=nb].iter_mut().for_each(|v| *v = 0.0);
            self.sum[..=nb].iter_mut().for_each(|v| *v = 0.0);
            self.sum_sq[..=nb].iter_mut().for_each(|v| *v = 0.0);
            for &i in rows {
                let b = self.binning.code(i, f);
                let y = self.y[i];
                self.count[b] += 1.0;
                self.sum[b] += y;
                self.sum_sq[b] += y * y;
            }
            let (mut ln, mut ls, mut ls2) = (0.0, 0.0, 0.0);
            for b in 0..nb {
                ln += self.count[b];
                ls += self.sum[b];
                ls2 += self.sum_sq[b];
                if self.count[b] == 0.0 && b > 0 {
                    // same partition as the previous threshold
                    continue;
                }
                let rn = total_n - ln;
                if ln < min_leaf || rn < min_leaf {
                    continue;
                }
                let child = self.impurity(ln, ls, ls2) + self.impurity(rn, total_s - ls, total_s2 - ls2);
                let gain = parent - child;
                if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n = rows.len() as f64;
        let s: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let s2: f64 = rows.iter().map(|&i| self.y[i] * self.y[i]).sum();
        let value = s / n;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(value));
        let parent = self.impurity(n, s, s2);
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf || parent <= 1e-12 {
            return id;
        }
        let Some(split) = self.best_split(&rows, parent) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.binning.code(i, split.feature) <= split.bin);
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: self.binning.thresholds[split.feature][split.bin],
            left,
            right,
        };
        id
    }
}

/// Grow a tree on `rows` of `x` (rows may repeat, e.g. a bootstrap sample).
pub(crate) fn fit(x: &Matrix, y: &[f64], rows: &[usize], task: Task, params: &TreeParams, seed: u64) -> TreeModel {
    let binning = Binning::fit(x, rows);
    fit_binned(&binning, y, rows, task, params, seed)
}

pub(crate) fn fit_binned(
    binning: &Binning,
    y: &[f64],
    rows: &[usize],
    task: Task,
    params: &TreeParams,
    seed: u64,
) -> TreeModel {
    let width = MAX_BINS + 1;
    let mut b = Builder {
        binning,
        y,
        task,
        params,
        rng: seed::rng(seed),
        nodes: Vec::new(),
        count: vec![0.0; width],
        sum: vec![0.0; width],
        sum_sq: vec![0.0; width],
    };
    b.build(rows.to_vec(), 0);
    TreeModel { nodes: b.nodes }
}
