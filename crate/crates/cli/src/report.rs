//! The audit report and its JSON and CSV renderings.
//!
//! JSON output is canonical: parsing an emitted report and emitting it again
//! yields the same bytes. Reports carry no timestamps, so identical inputs
//! and seed give identical output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use fairaudit::costs::{CostKind, GroupCostReport};
use fairaudit::curves::{Crossings, CurveConfig, CurvePoint, Extrapolation, PowerLawFit};
use fairaudit::decomposition::GroupDecomposition;
use fairaudit::learners::LearnerSpec;
use fairaudit::noise::{BoundMethod, NoiseBoundEstimate};
use fairaudit::stats::{BootstrapInterval, PairwiseComparison, TestResult};
use fairaudit::subgroups::ClusterReport;
use fairaudit::synth::BayesSummary;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::{Format, RunConfig, SynthKind};
use crate::error::CliError;

pub const TOOL: &str = "fairaudit";
pub const PLOT_FILE: &str = "curves_plot.csv";
pub const PLOT_HEADER: &str = "n,group,cost_kind,mean,stderr,fitted_value";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub dataset: Option<DatasetSummary>,
    pub blocks: Vec<Block>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub rows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub features: usize,
    pub task: String,
    pub group_column: String,
    pub outcome_column: String,
    pub groups: Vec<GroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum Block {
    Costs(CostsBlock),
    Tests(TestsBlock),
    Decompose(DecomposeBlock),
    Curves(CurvesBlock),
    Noise(NoiseBlock),
    Subgroups(SubgroupsBlock),
    Synth(SynthBlock),
    Error(ErrorBlock),
}

impl Block {
    pub fn name(&self) -> &'static str {
        match self {
            Block::Costs(_) => "costs",
            Block::Tests(_) => "tests",
            Block::Decompose(_) => "decompose",
            Block::Curves(_) => "curves",
            Block::Noise(_) => "noise",
            Block::Subgroups(_) => "subgroups",
            Block::Synth(_) => "synth",
            Block::Error(_) => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostsBlock {
    pub learner: LearnerSpec,
    pub train_rows: usize,
    pub test_rows: usize,
    pub reports: Vec<GroupCostReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindTests {
    pub kind: CostKind,
    pub z_test: Option<TestResult>,
    pub bootstrap: Option<BootstrapInterval>,
    pub anova: Option<TestResult>,
    /// Welch t-tests with Holm step-down correction.
    pub pairwise: Option<PairwiseComparison>,
    pub comparison: Option<TestResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestsBlock {
    pub learner: LearnerSpec,
    pub compare_learner: Option<LearnerSpec>,
    pub pair: (usize, usize),
    pub kinds: Vec<KindTests>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposeBlock {
    pub learner: LearnerSpec,
    /// `bootstrap` for resampled training data, `synthetic` for fresh draws.
    pub source: String,
    pub members: usize,
    pub n_train: usize,
    pub eval_rows: usize,
    pub results: Vec<GroupDecomposition>,
    pub noise_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCurve {
    pub group: usize,
    pub kind: CostKind,
    pub points: Vec<CurvePoint>,
    pub fit: Option<PowerLawFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapProjection {
    pub kind: CostKind,
    pub gamma: Vec<CurvePoint>,
    pub extrapolations: Vec<Extrapolation>,
    pub crossing_domain: (f64, f64),
    pub crossings: Option<Crossings>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvesBlock {
    pub learner: LearnerSpec,
    pub config: CurveConfig,
    pub curves: Vec<GroupCurve>,
    pub projections: Vec<GapProjection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundFailure {
    pub method: BoundMethod,
    pub group: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseBlock {
    pub k: usize,
    pub folds: usize,
    pub estimates: Vec<NoiseBoundEstimate>,
    pub failures: Vec<BoundFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub name: String,
    pub degenerate: bool,
    pub reports: Vec<ClusterReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupsBlock {
    pub learner: LearnerSpec,
    pub clusterings: Vec<ClusteringResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthBlock {
    pub kind: SynthKind,
    pub rows: usize,
    pub bayes: BayesSummary,
    pub data_file: String,
    pub schema_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBlock {
    pub failed_analysis: String,
    pub message: String,
}

impl AuditReport {
    pub fn new(command: &str, config: RunConfig) -> Self {
        AuditReport {
            tool: TOOL.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            dataset: None,
            blocks: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn has_error(&self) -> bool {
        self.blocks.iter().any(|b| matches!(b, Block::Error(_)))
    }

    /// Canonical JSON text, newline terminated. Fails if any number is not
    /// finite, since JSON cannot carry it.
    pub fn to_json(&self) -> Result<String, CliError> {
        let value = serde_json::to_value(self).map_err(|e| CliError::Analysis(format!("report serialization: {e}")))?;
        let back: AuditReport = serde_json::from_value(value.clone())
            .map_err(|e| CliError::Analysis(format!("report does not survive a JSON round trip: {e}")))?;
        if back != *self {
            return Err(CliError::Analysis(
                "report does not survive a JSON round trip (non-finite value?)".into(),
            ));
        }
        let mut s = serde_json::to_string_pretty(&value).expect("values serialize");
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Data(format!("not an audit report: {e}")))
    }

    /// `(file stem, csv text)` pairs: the config echo, then one table per
    /// block.
    pub fn to_csv_tables(&self) -> Result<Vec<(String, String)>, CliError> {
        self.to_json()?;
        let mut head = serde_json::to_value(self).expect("checked above");
        let blocks = head.as_object_mut().expect("struct").remove("blocks");
        let mut tables = vec![("report".to_string(), flat_table(&head))];
        if let Some(Value::Array(blocks)) = blocks {
            for (i, (b, v)) in self.blocks.iter().zip(&blocks).enumerate() {
                tables.push((format!("{:02}_{}", i + 1, b.name()), flat_table(v)));
            }
        }
        Ok(tables)
    }

    /// Rows for the learning-curve plot file, if a curves block is present.
    pub fn plot_data(&self) -> Option<String> {
        let block = self.blocks.iter().find_map(|b| match b {
            Block::Curves(c) => Some(c),
            _ => None,
        })?;
        let mut out = String::from(PLOT_HEADER);
        out.push('\n');
        for c in &block.curves {
            for p in &c.points {
                let fitted = c
                    .fit
                    .as_ref()
                    .map(|f| f.eval(p.n as f64).to_string())
                    .unwrap_or_default();
                let _ = writeln!(out, "{},{},{},{},{},{}", p.n, c.group, c.kind, p.mean, p.stderr, fitted);
            }
        }
        Some(out)
    }

    /// Write the report in `format` under `dir`, creating it if needed.
    /// Returns the files written.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let mut files = Vec::new();
        let mut put = |name: String, text: &str| -> Result<(), CliError> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
            files.push(path);
            Ok(())
        };
        match format {
            Format::Json => put("report.json".into(), &self.to_json()?)?,
            Format::Csv => {
                for (stem, text) in self.to_csv_tables()? {
                    put(format!("{stem}.csv"), &text)?;
                }
            }
        }
        if let Some(plot) = self.plot_data() {
            put(PLOT_FILE.into(), &plot)?;
        }
        Ok(files)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A two-column `path,value` table listing every leaf of `v`.
fn flat_table(v: &Value) -> String {
    fn walk(v: &Value, path: &mut String, out: &mut String) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    let len = path.len();
                    if !path.is_empty() {
                        path.push('.');
                    }
                    path.push_str(k);
                    walk(x, path, out);
                    path.truncate(len);
                }
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    let len = path.len();
                    let _ = write!(path, "[{i}]");
                    walk(x, path, out);
                    path.truncate(len);
                }
            }
            leaf => {
                let text = match leaf {
                    Value::Null => String::new(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                let _ = writeln!(out, "{},{}", csv_field(path), csv_field(&text));
            }
        }
    }
    let mut out = String::from("path,value\n");
    walk(v, &mut String::new(), &mut out);
    out
}

/// Replace unbounded test statistics (zero standard error) by the largest
/// finite value of the same sign, noting it in the result's warnings.
pub fn bound_statistics(r: &mut TestResult) {
    let mut clamped = false;
    let mut fix = |x: &mut f64| {
        if x.is_infinite() {
            *x = f64::MAX.copysign(*x);
            clamped = true;
        }
    };
    fix(&mut r.statistic);
    r.aux.values_mut().for_each(&mut fix);
    if clamped {
        r.warnings
            .push("unbounded statistic (zero standard error) reported as the largest finite value".into());
    }
}
