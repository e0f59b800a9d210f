use super::tree::{self, Binning, TreeModel, TreeParams};
use crate::data::{bootstrap_indices, Matrix, Task};
use crate::seed;

/// Average of trees grown on bootstrap resamples with per-split feature
/// subsampling.
#[derive(Clone, Debug, PartialEq)]
pub struct BaggedModel {
    pub trees: Vec<TreeModel>,
}

impl BaggedModel {
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let t = self.trees.len() as f64;
        (0..x.rows())
            .map(|i| {
                let row = x.row(i);
                self.trees.iter().map(|tr| tr.predict_row(row)).sum::<f64>() / t
            })
            .collect()
    }
}

pub(super) fn fit(
    x: &Matrix,
    y: &[f64],
    task: Task,
    params: &TreeParams,
    n_trees: usize,
    bootstrap: bool,
    seed: u64,
) -> BaggedModel {
    let n = x.rows();
    let all: Vec<usize> = (0..n).collect();
    let binning = Binning::fit(x, &all);
    let trees = (0..n_trees)
        .map(|t| {
            let tree_seed = seed::derive(seed, "tree", t as u64);
            let rows = if bootstrap {
                bootstrap_indices(n, n, seed::derive(tree_seed, "rows", 0)).expect("n >= 1 checked by train")
            } else {
                all.clone()
            };
            tree::fit_binned(&binning, y, &rows, task, params, tree_seed)
        })
        .collect();
    BaggedModel { trees }
}

#[cfg(test)]
mod tests {
    use super::super::tests::dataset;
    use super::super::*;
    use crate::data::Task;

    fn noisy() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin(), (t * 0.11).cos(), ((i * 7) % 13) as f64]
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| f64::from(r[0] + 0.5 * r[1] > 0.1 || i % 17 == 0))
            .collect();
        dataset(&rows, &y, Task::BinaryClassification)
    }

    #[test]
    fn single_unbootstrapped_tree_equals_tree() {
        let d = noisy();
        let bag = LearnerSpec::new(
            LearnerParams::BaggedTrees {
                n_trees: 1,
                max_depth: 4,
                min_samples_leaf: 1,
                feature_fraction: 1.0,
                bootstrap: false,
            },
            11,
        );
        let single = LearnerSpec::new(LearnerParams::tree(4), 99);
        let b = train(&bag, &d).unwrap();
        let t = train(&single, &d).unwrap();
        assert_eq!(&b.bagged().unwrap().trees[0], t.tree().unwrap());
        assert_eq!(b.predict_dataset(&d).unwrap(), t.predict_dataset(&d).unwrap());
    }

    #[test]
    fn bagging_is_seeded() {
        let d = noisy();
        let spec = LearnerSpec::new(LearnerParams::bagged_trees(5, 3, 0.5), 4);
        let a = train(&spec, &d).unwrap();
        assert_eq!(a, train(&spec, &d).unwrap());
        assert_ne!(a, train(&spec.with_seed(5), &d).unwrap());
        let s = a.predict_dataset(&d).unwrap();
        assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
