//! Tabular datasets with a protected-group column and an outcome column.
//!
//! Input is a headed CSV file plus a small `key=value` schema file naming the
//! role of each column. Categorical feature columns are one-hot expanded with
//! categories in lexicographic order. Rows with missing values are rejected.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

/// Dense row-major matrix of reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Append one column.
    pub fn with_column(&self, values: &[f64]) -> Result<Matrix> {
        if values.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: values.len(),
            });
        }
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for (i, v) in values.iter().enumerate() {
            data.extend_from_slice(self.row(i));
            data.push(*v);
        }
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    BinaryClassification,
    Regression,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::BinaryClassification => "binary",
            Task::Regression => "regression",
        }
    }
}

/// Features, protected group, outcome.
///
/// The number of groups `G` is fixed by `group_labels` and carried over to
/// every subset, so a split or subsample may contain groups with no rows.
/// Loaded datasets always have at least one row per group.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    group: Vec<usize>,
    outcome: Vec<f64>,
    task: Task,
    column_names: Vec<String>,
    group_labels: Vec<String>,
    group_column: String,
    outcome_column: String,
    scores: Option<Vec<f64>>,
}

impl Dataset {
    /// Build a dataset, checking every invariant except group non-emptiness.
    pub fn new(
        features: Matrix,
        group: Vec<usize>,
        outcome: Vec<f64>,
        task: Task,
        column_names: Vec<String>,
        group_labels: Vec<String>,
    ) -> Result<Self> {
        let n = features.rows();
        if group.len() != n || outcome.len() != n {
            return Err(Error::InvalidData(format!(
                "{n} feature rows but {} group and {} outcome values",
                group.len(),
                outcome.len()
            )));
        }
        if column_names.len() != features.cols() {
            return Err(Error::InvalidData(format!(
                "{} column names for {} feature columns",
                column_names.len(),
                features.cols()
            )));
        }
        if group_labels.is_empty() {
            return Err(Error::InvalidData("no group labels".into()));
        }
        if let Some(&g) = group.iter().find(|&&g| g >= group_labels.len()) {
            return Err(Error::InvalidData(format!(
                "group index {g} out of range for {} groups",
                group_labels.len()
            )));
        }
        if let Some(v) = features.as_slice().iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite feature value {v}")));
        }
        for (row, &y) in outcome.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::InvalidData(format!("row {row}: non-finite outcome")));
            }
            if task == Task::BinaryClassification && y != 0.0 && y != 1.0 {
                return Err(Error::InvalidOutcome { row, value: y });
            }
        }
        Ok(Dataset {
            features,
            group,
            outcome,
            task,
            column_names,
            group_labels,
            group_column: "group".into(),
            outcome_column: "outcome".into(),
            scores: None,
        })
    }

    pub fn with_role_names(mut self, group_column: &str, outcome_column: &str) -> Self {
        self.group_column = group_column.to_string();
        self.outcome_column = outcome_column.to_string();
        self
    }

    /// Attach externally produced scores (one per row).
    pub fn with_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: scores.len(),
            });
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite score {s}")));
        }
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.group.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn group(&self) -> &[usize] {
        &self.group
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn group_column(&self) -> &str {
        &self.group_column
    }

    pub fn outcome_column(&self) -> &str {
        &self.outcome_column
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    /// Row counts per group.
    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups()];
        for &g in &self.group {
            sizes[g] += 1;
        }
        sizes
    }

    /// Indices of the rows belonging to group `a`.
    pub fn group_rows(&self, a: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.group[i] == a).collect()
    }

    /// Subset (or resample) of rows at `indices`; group labels are kept.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            group: indices.iter().map(|&i| self.group[i]).collect(),
            outcome: indices.iter().map(|&i| self.outcome[i]).collect(),
            task: self.task,
            column_names: self.column_names.clone(),
            group_labels: self.group_labels.clone(),
            group_column: self.group_column.clone(),
            outcome_column: self.outcome_column.clone(),
            scores: self.scores.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }

    /// Rows of group `a` only.
    pub fn filter_group(&self, a: usize) -> Dataset {
        self.select(&self.group_rows(a))
    }
}

/// Column roles, parsed from a `key=value` schema file.
///
/// Recognised keys: `group`, `outcome`, `task` (`binary` or `regression`),
/// `ignore` and `categorical` (comma-separated column lists), `score`, and
/// `positive` (outcome label mapped to 1 for string-valued binary outcomes).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Schema {
    pub group: String,
    pub outcome: String,
    pub task: Option<Task>,
    pub ignore: Vec<String>,
    pub categorical: Vec<String>,
    pub score: Option<String>,
    pub positive: Option<String>,
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema> {
        let mut schema = Schema::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Schema(format!("duplicate key `{key}`")));
            }
            match key {
                "group" => schema.group = value.to_string(),
                "outcome" => schema.outcome = value.to_string(),
                "task" => {
                    schema.task = Some(match value {
                        "binary" => Task::BinaryClassification,
                        "regression" => Task::Regression,
                        other => return Err(Error::Schema(format!("unknown task `{other}`"))),
                    })
                }
                "ignore" => schema.ignore = split_list(value),
                "categorical" => schema.categorical = split_list(value),
                "score" => schema.score = Some(value.to_string()),
                "positive" => schema.positive = Some(value.to_string()),
                other => return Err(Error::Schema(format!("unknown key `{other}`"))),
            }
        }
        if schema.group.is_empty() {
            return Err(Error::Schema("`group` column not named".into()));
        }
        if schema.outcome.is_empty() {
            return Err(Error::Schema("`outcome` column not named".into()));
        }
        if schema.task.is_none() {
            return Err(Error::Schema("`task` not given".into()));
        }
        Ok(schema)
    }

    pub fn from_file(path: &Path) -> Result<Schema> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Schema::parse(&text)
    }

    pub fn task(&self) -> Task {
        self.task.unwrap_or(Task::BinaryClassification)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "group={}", self.group);
        let _ = writeln!(s, "outcome={}", self.outcome);
        let _ = writeln!(s, "task={}", self.task().name());
        if !self.ignore.is_empty() {
            let _ = writeln!(s, "ignore={}", self.ignore.join(","));
        }
        if !self.categorical.is_empty() {
            let _ = writeln!(s, "categorical={}", self.categorical.join(","));
        }
        if let Some(c) = &self.score {
            let _ = writeln!(s, "score={c}");
        }
        if let Some(p) = &self.positive {
            let _ = writeln!(s, "positive={p}");
        }
        s
    }
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    if cell.is_empty() {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::MissingValue {
            row,
            column: column.to_string(),
        }),
        Err(_) => Err(Error::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

enum FeatureColumn {
    Numeric(usize),
    Categorical(usize, Vec<String>),
}

/// Load a CSV file according to `schema`.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<Dataset> {
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if !path.exists() {
        return Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let headers: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let group_col = position(&schema.group)?;
    let outcome_col = position(&schema.outcome)?;
    let score_col = schema.score.as_deref().map(position).transpose()?;
    for c in schema.ignore.iter().chain(&schema.categorical) {
        position(c)?;
    }
    let mut reserved: BTreeSet<usize> = [group_col, outcome_col].into_iter().collect();
    reserved.extend(score_col);
    if reserved.len() < 2 + usize::from(score_col.is_some()) {
        return Err(Error::Schema("group, outcome and score columns must differ".into()));
    }
    for c in &schema.categorical {
        if reserved.contains(&position(c)?) {
            return Err(Error::Schema(format!("role column `{c}` listed as categorical")));
        }
    }

    let mut records: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != headers.len() {
            return Err(Error::InvalidData(format!(
                "row {}: {} fields, header has {}",
                records.len(),
                rec.len(),
                headers.len()
            )));
        }
        records.push(rec.iter().map(String::from).collect());
    }
    if records.is_empty() {
        return Err(Error::InvalidData("no data rows".into()));
    }

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|j| !reserved.contains(j) && !schema.ignore.contains(&headers[*j]))
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let mut layout = Vec::with_capacity(feature_cols.len());
    let mut column_names = Vec::new();
    for &j in &feature_cols {
        if schema.categorical.contains(&headers[j]) {
            let mut cats = BTreeSet::new();
            for (row, r) in records.iter().enumerate() {
                if r[j].is_empty() {
                    return Err(Error::MissingValue {
                        row,
                        column: headers[j].clone(),
                    });
                }
                cats.insert(r[j].clone());
            }
            let cats: Vec<String> = cats.into_iter().collect();
            column_names.extend(cats.iter().map(|c| format!("{}={c}", headers[j])));
            layout.push(FeatureColumn::Categorical(j, cats));
        } else {
            column_names.push(headers[j].clone());
            layout.push(FeatureColumn::Numeric(j));
        }
    }

    let n = records.len();
    let k = column_names.len();
    let mut data = Vec::with_capacity(n * k);
    let mut outcome = Vec::with_capacity(n);
    let mut scores = score_col.map(|_| Vec::with_capacity(n));
    let task = schema.task();
    for (row, r) in records.iter().enumerate() {
        for col in &layout {
            match col {
                FeatureColumn::Numeric(j) => data.push(parse_number(&r[*j], row, &headers[*j])?),
                FeatureColumn::Categorical(j, cats) => {
                    data.extend(cats.iter().map(|c| if *c == r[*j] { 1.0 } else { 0.0 }))
                }
            }
        }
        let y = match (&schema.positive, task) {
            (Some(pos), Task::BinaryClassification) => {
                if r[outcome_col].is_empty() {
                    return Err(Error::MissingValue {
                        row,
                        column: headers[outcome_col].clone(),
                    });
                }
                if r[outcome_col] == *pos {
                    1.0
                } else {
                    0.0
                }
            }
            _ => parse_number(&r[outcome_col], row, &headers[outcome_col])?,
        };
        if task == Task::BinaryClassification && y != 0.0 && y != 1.0 {
            return Err(Error::InvalidOutcome { row, value: y });
        }
        outcome.push(y);
        if let (Some(s), Some(j)) = (scores.as_mut(), score_col) {
            s.push(parse_number(&r[j], row, &headers[j])?);
        }
    }

    let (group, group_labels) = parse_groups(&records, group_col, &headers[group_col])?;
    let features = Matrix::new(n, k, data)?;
    let mut d = Dataset::new(features, group, outcome, task, column_names, group_labels)?
        .with_role_names(&headers[group_col], &headers[outcome_col]);
    if let Some(s) = scores {
        d = d.with_scores(s)?;
    }
    Ok(d)
}

/// Integer group codes are used as indices directly; anything else is mapped
/// to indices in lexicographic label order.
fn parse_groups(records: &[Vec<String>], col: usize, name: &str) -> Result<(Vec<usize>, Vec<String>)> {
    for (row, r) in records.iter().enumerate() {
        if r[col].is_empty() {
            return Err(Error::MissingValue {
                row,
                column: name.to_string(),
            });
        }
    }
    let as_ints: Option<Vec<usize>> = records.iter().map(|r| r[col].parse().ok()).collect();
    let (group, labels) = match as_ints {
        Some(ints) => {
            let g = ints.iter().max().map_or(0, |m| m + 1);
            (ints, (0..g).map(|i| i.to_string()).collect::<Vec<_>>())
        }
        None => {
            let labels: Vec<String> = records
                .iter()
                .map(|r| r[col].clone())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
            let group = records.iter().map(|r| index[r[col].as_str()]).collect();
            (group, labels)
        }
    };
    let mut sizes = vec![0usize; labels.len()];
    for &g in &group {
        sizes[g] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(empty));
    }
    Ok((group, labels))
}

/// Load using a schema file.
pub fn load_with_schema_file(data: &Path, schema: &Path) -> Result<Dataset> {
    let schema = Schema::from_file(schema)?;
    load_dataset(data, &schema)
}

/// Write `d` as CSV plus the schema that reloads it to an equal dataset.
pub fn write_dataset(d: &Dataset, csv_path: &Path, schema_path: &Path) -> Result<()> {
    let io_err = |path: &Path| {
        let path: PathBuf = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let mut header: Vec<String> = d.column_names.clone();
    header.push(d.group_column.clone());
    header.push(d.outcome_column.clone());
    let score_name = d.scores.as_ref().map(|_| {
        let mut name = "score".to_string();
        while header.contains(&name) {
            name.push('_');
        }
        name
    });
    header.extend(score_name.clone());
    let mut w = csv::Writer::from_path(csv_path).map_err(|e| Error::Csv {
        path: csv_path.to_path_buf(),
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| Error::Csv {
        path: csv_path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..d.len() {
        let mut rec: Vec<String> = d.features.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(d.group_labels[d.group[i]].clone());
        rec.push(d.outcome[i].to_string());
        if let Some(s) = &d.scores {
            rec.push(s[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(csv_path))?;
    let schema = Schema {
        group: d.group_column.clone(),
        outcome: d.outcome_column.clone(),
        task: Some(d.task),
        score: score_name,
        ..Schema::default()
    };
    fs::write(schema_path, schema.to_text()).map_err(io_err(schema_path))
}

/// Train/test partition of a dataset.
#[derive(Clone, Debug)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Indices of a (optionally group-stratified) train/test split, each sorted.
pub fn split_indices(
    d: &Dataset,
    test_fraction: f64,
    seed: u64,
    stratify_by_group: bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(invalid(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let n = d.len();
    let nf = n as f64;
    if nf * test_fraction < 1.0 || nf * (1.0 - test_fraction) < 1.0 {
        return Err(invalid(format!(
            "test fraction {test_fraction} leaves an empty side for n = {n}"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if stratify_by_group {
        for a in 0..d.n_groups() {
            let mut rows = d.group_rows(a);
            if rows.is_empty() {
                continue;
            }
            if rows.len() < 2 {
                return Err(invalid(format!(
                    "group {a} has {} row(s); stratified split needs at least 2",
                    rows.len()
                )));
            }
            rows.shuffle(&mut rng);
            let m = rows.len();
            let t = ((m as f64 * test_fraction).round() as usize).clamp(1, m - 1);
            test.extend_from_slice(&rows[..t]);
            train.extend_from_slice(&rows[t..]);
        }
    } else {
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        let t = ((nf * test_fraction).round() as usize).clamp(1, n - 1);
        test.extend_from_slice(&rows[..t]);
        train.extend_from_slice(&rows[t..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    debug_assert_eq!(train.len() + test.len(), n);
    debug_assert!({
        let tr: HashSet<_> = train.iter().collect();
        test.iter().all(|i| !tr.contains(i))
    });
    Ok((train, test))
}

pub fn split(d: &Dataset, test_fraction: f64, seed: u64, stratify_by_group: bool) -> Result<DataSplit> {
    let (train_indices, test_indices) = split_indices(d, test_fraction, seed, stratify_by_group)?;
    Ok(DataSplit {
        train: d.select(&train_indices),
        test: d.select(&test_indices),
        train_indices,
        test_indices,
        seed,
    })
}

/// `m` distinct row indices out of `n`, in draw order.
pub fn subsample_indices(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(invalid(format!("subsample size {m} not in [1, {n}]")));
    }
    let mut rng = seed::rng(seed);
    Ok(rand::seq::index::sample(&mut rng, n, m).into_vec())
}

/// `m` row indices out of `n` drawn with replacement.
pub fn bootstrap_indices(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(invalid("bootstrap size must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("cannot bootstrap an empty dataset"));
    }
    let mut rng = seed::rng(seed);
    Ok((0..m).map(|_| rng.random_range(0..n)).collect())
}

pub fn subsample(d: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    Ok(d.select(&subsample_indices(d.len(), m, seed)?))
}

pub fn bootstrap_resample(d: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    Ok(d.select(&bootstrap_indices(d.len(), m, seed)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
        let p = dir.path().join(name);
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    fn schema(text: &str) -> Schema {
        Schema::parse(text).unwrap()
    }

    pub(crate) fn toy(n: usize, groups: &[usize]) -> Dataset {
        let features = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let g: Vec<usize> = (0..n).map(|i| groups[i % groups.len()]).collect();
        let labels = (0..=*groups.iter().max().unwrap()).map(|i| i.to_string()).collect();
        Dataset::new(
            features,
            g,
            (0..n).map(|i| (i % 2) as f64).collect(),
            Task::BinaryClassification,
            vec!["x".into()],
            labels,
        )
        .unwrap()
    }

    #[test]
    fn loads_three_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "d.csv", "a,b,g,y\n1,2,0,1\n3,4.5,1,0\n5,6,1,1\n");
        let d = load_dataset(&p, &schema("group=g\noutcome=y\ntask=binary")).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.n_features(), 2);
        assert_eq!(d.features().row(1), &[3.0, 4.5]);
        assert_eq!(d.group(), &[0, 1, 1]);
    }

    #[test]
    fn rejects_outcome_outside_binary() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "d.csv", "a,g,y\n1,0,1\n2,1,2\n");
        let err = load_dataset(&p, &schema("group=g\noutcome=y\ntask=binary")).unwrap_err();
        assert!(matches!(err, Error::InvalidOutcome { row: 1, .. }), "{err}");
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema("group=g\noutcome=y\ntask=binary");
        let missing = dir.path().join("nope.csv");
        assert!(matches!(load_dataset(&missing, &s), Err(Error::Io { .. })));

        let p = write_tmp(&dir, "a.csv", "a,a,g,y\n1,2,0,1\n");
        assert!(matches!(load_dataset(&p, &s), Err(Error::DuplicateColumn(_))));

        let p = write_tmp(&dir, "b.csv", "a,h,y\n1,0,1\n");
        assert!(matches!(load_dataset(&p, &s), Err(Error::MissingColumn(c)) if c == "g"));

        let p = write_tmp(&dir, "c.csv", "a,g,y\nfoo,0,1\n");
        assert!(matches!(load_dataset(&p, &s), Err(Error::NonNumeric { .. })));

        let p = write_tmp(&dir, "d.csv", "a,g,y\n,0,1\n");
        assert!(matches!(load_dataset(&p, &s), Err(Error::MissingValue { .. })));

        let p = write_tmp(&dir, "e.csv", "a,g,y\n1,0,1\n2,2,0\n");
        assert!(matches!(load_dataset(&p, &s), Err(Error::EmptyGroup(1))));
    }

    #[test]
    fn one_hot_expansion_is_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(
            &dir,
            "d.csv",
            "color,w,sex,inc\nred,1,M,>50K\nblue,2,F,<=50K\ngreen,3,M,<=50K\n",
        );
        let s = schema("group=sex\noutcome=inc\npositive=>50K\ntask=binary\ncategorical=color");
        let d = load_dataset(&p, &s).unwrap();
        assert_eq!(d.column_names(), &["color=blue", "color=green", "color=red", "w"]);
        assert_eq!(d.features().row(0), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(d.group_labels(), &["F", "M"]);
        assert_eq!(d.group(), &[1, 0, 1]);
        assert_eq!(d.outcome(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn schema_rejects_unknown_keys_and_missing_roles() {
        assert!(Schema::parse("group=g\noutcome=y\ntask=binary\nfoo=1").is_err());
        assert!(Schema::parse("outcome=y\ntask=binary").is_err());
        assert!(Schema::parse("group=g\noutcome=y\ntask=multiclass").is_err());
        assert!(Schema::parse("group=g\noutcome=y").is_err());
    }

    #[test]
    fn split_counts_and_determinism() {
        let d = toy(10, &[0, 1]);
        let s = split(&d, 0.2, 42, false).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        let s2 = split(&d, 0.2, 42, false).unwrap();
        assert_eq!(s.test_indices, s2.test_indices);
        assert!(split(&d, 0.0, 1, false).is_err());
        assert!(split(&d, 1.0, 1, false).is_err());
        assert!(split(&d, 0.01, 1, false).is_err());
    }

    #[test]
    fn stratified_split_preserves_group_shares() {
        // Groups of 80 and 20 rows; 0.25 of each lands in the test split.
        let mut groups = vec![0; 80];
        groups.extend(vec![1; 20]);
        let d = toy(100, &groups);
        for seed in 0..20 {
            let s = split(&d, 0.25, seed, true).unwrap();
            let sizes = s.test.group_sizes();
            assert!((19..=21).contains(&sizes[0]), "{sizes:?}");
            assert!((4..=6).contains(&sizes[1]), "{sizes:?}");
        }
        let tiny = toy(3, &[0, 0, 1]);
        assert!(split(&tiny, 0.5, 0, true).is_err());
    }

    #[test]
    fn subsample_properties() {
        let d = toy(50, &[0, 1]);
        let full = subsample_indices(50, 50, 3).unwrap();
        let mut sorted = full.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        let one = subsample(&d, 1, 9).unwrap();
        assert_eq!(one.len(), 1);
        assert!(subsample(&d, 0, 1).is_err());
        assert!(subsample(&d, 51, 1).is_err());
        assert_eq!(
            subsample_indices(50, 10, 5).unwrap(),
            subsample_indices(50, 10, 5).unwrap()
        );
        // Two 100-of-1000 draws coincide with negligible probability.
        let differing = (0..10u64)
            .filter(|&s| subsample_indices(1000, 100, s).unwrap() != subsample_indices(1000, 100, s + 100).unwrap())
            .count();
        assert!(differing >= 1);
    }

    #[test]
    fn bootstrap_properties() {
        let d = toy(5, &[0, 1]);
        let b = bootstrap_resample(&d, 5, 1).unwrap();
        assert_eq!(b.len(), 5);
        assert_eq!(bootstrap_indices(5, 5, 1).unwrap(), bootstrap_indices(5, 5, 1).unwrap());
        assert!(bootstrap_indices(5, 0, 1).is_err());
        // Fraction of distinct rows in a size-n bootstrap tends to 1 - 1/e.
        let n = 10_000;
        let target = 1.0 - (-1.0f64).exp();
        for seed in 0..20 {
            let idx = bootstrap_indices(n, n, seed).unwrap();
            let distinct = idx.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
            assert!((distinct - target).abs() < 0.02, "{distinct}");
        }
    }
}
