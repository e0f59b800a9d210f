//! Costs restricted to clusters of individuals, for locating where a group
//! disparity is concentrated.
//!
//! A clustering is either a hard assignment or a soft membership matrix.
//! Every cell statistic is a membership-weighted mean, so hard clusterings
//! are the special case of one-hot weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::costs::{self, CostKind, PredictionSet};
use crate::data::{Dataset, Matrix};
use crate::error::{invalid, Error, Result};

/// Row sums must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Row sums within this of 1 are renormalized when loading from file.
pub const LOAD_ROW_SUM_TOL: f64 = 1e-6;
/// Default cell mass below which a cell is marked unreliable.
pub const DEFAULT_MIN_MASS: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub enum Memberships {
    Hard { assignment: Vec<usize>, n_clusters: usize },
    Soft(Matrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub memberships: Memberships,
    pub descriptors: Vec<String>,
    /// Set when every row falls in one cluster of a two-cluster split.
    pub degenerate: bool,
}

impl Clustering {
    pub fn hard(assignment: Vec<usize>, descriptors: Vec<String>) -> Result<Self> {
        let n_clusters = descriptors.len();
        if n_clusters == 0 {
            return Err(invalid("clustering needs at least one cluster"));
        }
        if let Some(&c) = assignment.iter().find(|&&c| c >= n_clusters) {
            return Err(invalid(format!("cluster index {c} out of range 0..{n_clusters}")));
        }
        Ok(Clustering {
            memberships: Memberships::Hard { assignment, n_clusters },
            descriptors,
            degenerate: false,
        })
    }

    pub fn soft(q: Matrix, descriptors: Vec<String>) -> Result<Self> {
        if q.cols() == 0 || descriptors.len() != q.cols() {
            return Err(invalid("one descriptor per membership column required"));
        }
        for i in 0..q.rows() {
            let row = q.row(i);
            if row.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
                return Err(invalid(format!("row {i}: memberships must be nonnegative")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(invalid(format!("row {i}: memberships sum to {s}, not 1")));
            }
        }
        Ok(Clustering {
            memberships: Memberships::Soft(q),
            descriptors,
            degenerate: false,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.descriptors.len()
    }

    pub fn n_rows(&self) -> usize {
        match &self.memberships {
            Memberships::Hard { assignment, .. } => assignment.len(),
            Memberships::Soft(q) => q.rows(),
        }
    }

    pub fn weight(&self, i: usize, c: usize) -> f64 {
        match &self.memberships {
            Memberships::Hard { assignment, .. } => f64::from(assignment[i] == c),
            Memberships::Soft(q) => q.get(i, c),
        }
    }

    /// Memberships of the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Clustering {
        let memberships = match &self.memberships {
            Memberships::Hard { assignment, n_clusters } => Memberships::Hard {
                assignment: rows.iter().map(|&i| assignment[i]).collect(),
                n_clusters: *n_clusters,
            },
            Memberships::Soft(q) => Memberships::Soft(q.select_rows(rows)),
        };
        Clustering {
            memberships,
            descriptors: self.descriptors.clone(),
            degenerate: self.degenerate,
        }
    }

    fn check_rows(&self, d: &Dataset) -> Result<()> {
        if self.n_rows() != d.len() {
            return Err(Error::DimensionMismatch {
                expected: d.len(),
                got: self.n_rows(),
            });
        }
        Ok(())
    }

    fn check_cluster(&self, c: usize) -> Result<()> {
        if c >= self.n_clusters() {
            return Err(invalid(format!("cluster {c} out of range")));
        }
        Ok(())
    }
}

/// Per feature, split rows at the feature mean (`>= mean` goes to cluster
/// 1). Constant features put every row in cluster 0 and are flagged.
pub fn threshold_clusterings(d: &Dataset) -> Vec<Clustering> {
    let x = d.features();
    (0..x.cols())
        .map(|j| {
            let col = x.column(j);
            let name = &d.column_names()[j];
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let (lo, hi) = col
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            let constant = lo == hi;
            let assignment = col.iter().map(|&v| usize::from(!constant && v >= mean)).collect();
            Clustering {
                memberships: Memberships::Hard {
                    assignment,
                    n_clusters: 2,
                },
                descriptors: vec![format!("{name} < {mean}"), format!("{name} >= {mean}")],
                degenerate: constant,
            }
        })
        .collect()
}

/// Weighted cost of one (group, cluster) cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCost {
    pub cost: f64,
    /// Total membership of the contributing rows.
    pub mass: f64,
}

fn cell(losses: &[Option<f64>], d: &Dataset, cl: &Clustering, a: usize, c: usize) -> Option<CellCost> {
    let (mut num, mut mass) = (0.0, 0.0);
    for (i, (loss, &g)) in losses.iter().zip(d.group()).enumerate() {
        if g != a {
            continue;
        }
        if let Some(l) = *loss {
            let w = cl.weight(i, c);
            num += w * l;
            mass += w;
        }
    }
    (mass > 0.0).then(|| CellCost { cost: num / mass, mass })
}

/// Cost of `kind` among rows of group `a` in cluster `c`, weighted by
/// membership.
pub fn cluster_cost(
    preds: &PredictionSet,
    d: &Dataset,
    cl: &Clustering,
    kind: CostKind,
    a: usize,
    c: usize,
) -> Result<CellCost> {
    cl.check_rows(d)?;
    cl.check_cluster(c)?;
    if a >= d.n_groups() {
        return Err(invalid(format!("group {a} out of range")));
    }
    let losses = costs::per_sample_losses(preds, d, kind)?;
    cell(&losses, d, cl, a, c)
        .ok_or_else(|| Error::EmptySubset(format!("cell (group {a}, cluster {c}) has no mass for {kind}")))
}

/// Membership-weighted error rate
/// `sum 1[y != yhat] 1[a_i = a] q_ic / sum 1[a_i = a] q_ic`.
pub fn weighted_group_error(preds: &PredictionSet, d: &Dataset, cl: &Clustering, a: usize, c: usize) -> Result<f64> {
    cluster_cost(preds, d, cl, CostKind::ZeroOne, a, c).map(|x| x.cost)
}

/// Membership-weighted outcome mean of cluster `c`.
pub fn outcome_enrichment(d: &Dataset, cl: &Clustering, c: usize) -> Result<f64> {
    cl.check_rows(d)?;
    cl.check_cluster(c)?;
    let (mut num, mut mass) = (0.0, 0.0);
    for (i, &y) in d.outcome().iter().enumerate() {
        let w = cl.weight(i, c);
        num += w * y;
        mass += w;
    }
    if mass > 0.0 {
        Ok(num / mass)
    } else {
        Err(Error::EmptySubset(format!("cluster {c} has zero total membership")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub group: usize,
    pub label: String,
    pub cost: Option<f64>,
    pub mass: f64,
    /// Mass below the configured minimum.
    pub unreliable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterEntry {
    pub cluster: usize,
    pub descriptor: String,
    pub cells: Vec<CellEntry>,
    /// `max - min` of available group costs.
    pub gap: f64,
    /// Population variance of available group costs.
    pub variance: f64,
    pub enrichment: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub kind: CostKind,
    pub min_mass: f64,
    /// Ordered by variance, then gap (both descending), then cluster index.
    pub clusters: Vec<ClusterEntry>,
    pub warnings: Vec<String>,
}

/// Per-cluster group costs, ranked by how much they vary across groups.
pub fn rank_clusters(
    preds: &PredictionSet,
    d: &Dataset,
    cl: &Clustering,
    kind: CostKind,
    min_mass: f64,
) -> Result<ClusterReport> {
    cl.check_rows(d)?;
    let losses = costs::per_sample_losses(preds, d, kind)?;
    let mut clusters = Vec::new();
    let mut warnings = Vec::new();
    for c in 0..cl.n_clusters() {
        let cells: Vec<CellEntry> = (0..d.n_groups())
            .map(|a| {
                let cc = cell(&losses, d, cl, a, c);
                let mass = cc.map_or(0.0, |x| x.mass);
                CellEntry {
                    group: a,
                    label: d.group_labels()[a].clone(),
                    cost: cc.map(|x| x.cost),
                    mass,
                    unreliable: mass < min_mass,
                }
            })
            .collect();
        let available: Vec<f64> = cells.iter().filter_map(|e| e.cost).collect();
        if available.is_empty() {
            warnings.push(format!(
                "cluster {c} ({}) has no evaluable cells; dropped",
                cl.descriptors[c]
            ));
            continue;
        }
        let m = available.len() as f64;
        let mean = available.iter().sum::<f64>() / m;
        let variance = available.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let gap = costs::max_min_gap(available.iter().copied());
        clusters.push(ClusterEntry {
            cluster: c,
            descriptor: cl.descriptors[c].clone(),
            cells,
            gap,
            variance,
            enrichment: outcome_enrichment(d, cl, c)?,
        });
    }
    clusters.sort_by(|x, y| {
        y.variance
            .total_cmp(&x.variance)
            .then(y.gap.total_cmp(&x.gap))
            .then(x.cluster.cmp(&y.cluster))
    });
    Ok(ClusterReport {
        kind,
        min_mass,
        clusters,
        warnings,
    })
}

/// Read a soft membership matrix with columns `q_0..q_{C-1}`. Rows summing
/// to within [`LOAD_ROW_SUM_TOL`] of 1 are renormalized with a warning.
pub fn load_memberships(path: &Path, n_rows: usize) -> Result<(Clustering, Vec<String>)> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let k = headers.len();
    for (c, h) in headers.iter().enumerate() {
        if h != format!("q_{c}") {
            return Err(Error::MissingColumn(format!("q_{c}")));
        }
    }
    let mut data = Vec::new();
    let mut renormalized = 0usize;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut row = Vec::with_capacity(k);
        for (c, v) in rec.iter().enumerate() {
            let x: f64 = v.parse().map_err(|_| Error::NonNumeric {
                row: r + 1,
                column: format!("q_{c}"),
                value: v.to_string(),
            })?;
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "row {}: negative or non-finite membership",
                    r + 1
                )));
            }
            row.push(x);
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > LOAD_ROW_SUM_TOL {
            return Err(Error::InvalidData(format!("row {}: memberships sum to {s}", r + 1)));
        }
        if s != 1.0 {
            row.iter_mut().for_each(|v| *v /= s);
            renormalized += 1;
        }
        data.extend(row);
    }
    if data.len() != n_rows * k {
        return Err(Error::DimensionMismatch {
            expected: n_rows,
            got: data.len() / k.max(1),
        });
    }
    let mut warnings = Vec::new();
    if renormalized > 0 {
        warnings.push(format!("{renormalized} membership rows renormalized to sum to 1"));
    }
    let descriptors = (0..k).map(|c| format!("q_{c}")).collect();
    Ok((Clustering::soft(Matrix::new(n_rows, k, data)?, descriptors)?, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Task;

    fn data(x: &[f64], g: &[usize], y: &[f64]) -> Dataset {
        Dataset::new(
            Matrix::new(x.len(), 1, x.to_vec()).unwrap(),
            g.to_vec(),
            y.to_vec(),
            Task::BinaryClassification,
            vec!["x".into()],
            vec!["f".into(), "m".into()],
        )
        .unwrap()
    }

    #[test]
    fn threshold_at_mean() {
        let d = data(&[0.0, 10.0], &[0, 1], &[0.0, 1.0]);
        let cl = threshold_clusterings(&d);
        assert_eq!(
            cl[0].memberships,
            Memberships::Hard {
                assignment: vec![0, 1],
                n_clusters: 2
            }
        );
        assert!(!cl[0].degenerate);
        let d = data(&[3.0, 3.0], &[0, 1], &[0.0, 1.0]);
        let cl = threshold_clusterings(&d);
        assert!(cl[0].degenerate);
        assert_eq!(cl[0].weight(0, 0), 1.0);
        assert_eq!(cl[0].weight(1, 0), 1.0);
    }

    #[test]
    fn hand_counted_cell() {
        let d = data(&[0.0; 6], &[0, 0, 0, 0, 1, 1], &[0.0; 6]);
        let p = PredictionSet::from_labels(&[1, 0, 0, 1, 0, 0]);
        let cl = Clustering::hard(vec![0; 6], vec!["all".into()]).unwrap();
        let c = cluster_cost(&p, &d, &cl, CostKind::ZeroOne, 0, 0).unwrap();
        assert_eq!((c.cost, c.mass), (0.5, 4.0));
    }

    #[test]
    fn soft_weighted_error() {
        let d = data(&[0.0; 2], &[0, 0], &[0.0; 2]);
        let p = PredictionSet::from_labels(&[1, 0]);
        let q = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.25, 0.75]]).unwrap();
        let cl = Clustering::soft(q, vec!["a".into(), "b".into()]).unwrap();
        let e = weighted_group_error(&p, &d, &cl, 0, 0).unwrap();
        assert!((e - 2.0 / 3.0).abs() < 1e-15);
        assert!(weighted_group_error(&p, &d, &cl, 1, 0).is_err());
    }

    #[test]
    fn enrichment_arithmetic() {
        let d = data(&[0.0; 3], &[0, 0, 1], &[1.0, 0.0, 1.0]);
        let q = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.5, 0.5], vec![0.3, 0.7]]).unwrap();
        let cl = Clustering::soft(q, vec!["a".into(), "b".into()]).unwrap();
        assert!((outcome_enrichment(&d, &cl, 0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ranking_by_variance() {
        // cluster 0: costs {0, 0}; cluster 1: {0, 1}.
        let d = data(&[0.0; 4], &[0, 1, 0, 1], &[0.0; 4]);
        let p = PredictionSet::from_labels(&[0, 0, 0, 1]);
        let cl = Clustering::hard(vec![0, 0, 1, 1], vec!["c0".into(), "c1".into()]).unwrap();
        let r = rank_clusters(&p, &d, &cl, CostKind::ZeroOne, DEFAULT_MIN_MASS).unwrap();
        assert_eq!(r.clusters[0].cluster, 1);
        assert_eq!(r.clusters[0].gap, 1.0);
        assert!(r.clusters[0].cells.iter().all(|c| c.unreliable));
        let p = PredictionSet::from_labels(&[0, 0, 0, 0]);
        let r = rank_clusters(&p, &d, &cl, CostKind::ZeroOne, 1.0).unwrap();
        assert_eq!(r.clusters.iter().map(|c| c.cluster).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn invalid_memberships() {
        let q = Matrix::from_rows(&[vec![0.5, 0.4]]).unwrap();
        assert!(Clustering::soft(q, vec!["a".into(), "b".into()]).is_err());
        assert!(Clustering::hard(vec![2], vec!["a".into(), "b".into()]).is_err());
    }
}
