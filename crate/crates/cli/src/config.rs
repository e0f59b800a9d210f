//! Run configuration: a flat `key=value` file, overridden by command-line
//! flags. Every key has a default except `seed`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fairaudit::costs::CostKind;
use fairaudit::curves::Horizon;
use fairaudit::exec::Execution;
use fairaudit::learners::{LearnerParams, LearnerSpec, Penalty};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Analysis {
    Costs,
    Tests,
    Decompose,
    Curves,
    Noise,
    Subgroups,
}

impl Analysis {
    pub const ALL: [Analysis; 6] = [
        Analysis::Costs,
        Analysis::Tests,
        Analysis::Decompose,
        Analysis::Curves,
        Analysis::Noise,
        Analysis::Subgroups,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Costs => "costs",
            Analysis::Tests => "tests",
            Analysis::Decompose => "decompose",
            Analysis::Curves => "curves",
            Analysis::Noise => "noise",
            Analysis::Subgroups => "subgroups",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Logistic,
    Ridge,
    Knn,
    Tree,
    Bagged,
}

impl LearnerKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "logistic" => LearnerKind::Logistic,
            "ridge" => LearnerKind::Ridge,
            "knn" => LearnerKind::Knn,
            "tree" => LearnerKind::Tree,
            "bagged" | "bagged_trees" => LearnerKind::Bagged,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Discrete,
    Regression,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub analyses: Vec<Analysis>,
    pub parallel: bool,

    pub learner: LearnerKind,
    pub compare_learner: Option<LearnerKind>,
    pub depth: usize,
    pub trees: usize,
    pub feature_fraction: f64,
    pub lambda: f64,
    pub penalty: Penalty,
    pub epochs: usize,
    pub knn_k: usize,
    pub include_group: bool,

    pub kinds: Vec<CostKind>,
    pub threshold: f64,
    pub level: f64,
    pub test_fraction: f64,
    pub stratify: bool,
    pub pair: (usize, usize),

    pub members: usize,
    pub n_train: Option<usize>,
    pub eval_size: usize,

    pub trials: usize,
    pub grid: Vec<usize>,
    pub horizons: Vec<Horizon>,

    pub k: usize,
    pub folds: usize,
    pub standardize: bool,
    pub regularization: f64,

    pub reps: usize,

    pub topics: Option<PathBuf>,
    pub min_mass: f64,
    pub cluster_features: Vec<String>,

    pub synth: Option<SynthKind>,
    pub synth_n: usize,
    pub noise_sd: f64,
    pub homoskedastic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            schema: None,
            seed: None,
            out: None,
            format: Format::Json,
            analyses: vec![Analysis::Costs, Analysis::Tests],
            parallel: true,
            learner: LearnerKind::Bagged,
            compare_learner: None,
            depth: 20,
            trees: 50,
            feature_fraction: 0.3,
            lambda: 1e-4,
            penalty: Penalty::L2,
            epochs: 500,
            knn_k: 15,
            include_group: false,
            kinds: vec![CostKind::ZeroOne, CostKind::Fpr, CostKind::Fnr],
            threshold: fairaudit::costs::DEFAULT_THRESHOLD,
            level: fairaudit::stats::DEFAULT_LEVEL,
            test_fraction: 0.2,
            stratify: false,
            pair: (0, 1),
            members: 50,
            n_train: None,
            eval_size: 1000,
            trials: 10,
            grid: Vec::new(),
            horizons: vec![Horizon::Infinite],
            k: 5,
            folds: 5,
            standardize: true,
            regularization: fairaudit::noise::DEFAULT_REGULARIZATION,
            reps: 1000,
            topics: None,
            min_mass: fairaudit::subgroups::DEFAULT_MIN_MASS,
            cluster_features: Vec::new(),
            synth: None,
            synth_n: 5000,
            noise_sd: 1.0,
            homoskedastic: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!(
            "`{key}`: expected true or false, got `{value}`"
        ))),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: fmt::Display,
{
    list(value).map(|v| parse(key, v)).collect()
}

fn learner_kind(key: &str, value: &str) -> Result<LearnerKind, CliError> {
    LearnerKind::parse(value).ok_or_else(|| CliError::Config(format!("`{key}`: unknown learner `{value}`")))
}

impl RunConfig {
    /// Apply one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "data" => self.data = Some(PathBuf::from(v)),
            "schema" => self.schema = Some(PathBuf::from(v)),
            "seed" => self.seed = Some(parse(key, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "format" => {
                self.format = match v {
                    "json" => Format::Json,
                    "csv" => Format::Csv,
                    _ => return Err(CliError::Config(format!("`format`: expected json or csv, got `{v}`"))),
                }
            }
            "analyses" => {
                let mut out = Vec::new();
                for a in list(v) {
                    let found = Analysis::ALL
                        .into_iter()
                        .find(|x| x.name() == a)
                        .ok_or_else(|| CliError::Config(format!("`analyses`: unknown analysis `{a}`")))?;
                    if !out.contains(&found) {
                        out.push(found);
                    }
                }
                out.sort();
                self.analyses = out;
            }
            "parallel" => self.parallel = parse_bool(key, v)?,
            "learner" => self.learner = learner_kind(key, v)?,
            "compare_learner" => {
                self.compare_learner = if v.is_empty() {
                    None
                } else {
                    Some(learner_kind(key, v)?)
                }
            }
            "depth" => self.depth = parse(key, v)?,
            "trees" => self.trees = parse(key, v)?,
            "feature_fraction" => self.feature_fraction = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "penalty" => {
                self.penalty = match v {
                    "l1" => Penalty::L1,
                    "l2" => Penalty::L2,
                    _ => return Err(CliError::Config(format!("`penalty`: expected l1 or l2, got `{v}`"))),
                }
            }
            "epochs" => self.epochs = parse(key, v)?,
            "knn_k" => self.knn_k = parse(key, v)?,
            "include_group" => self.include_group = parse_bool(key, v)?,
            "kind" | "kinds" => {
                self.kinds = list(v)
                    .map(|k| CostKind::parse(k).map_err(|e| CliError::Config(e.to_string())))
                    .collect::<Result<_, _>>()?
            }
            "threshold" => self.threshold = parse(key, v)?,
            "level" => self.level = parse(key, v)?,
            "test_fraction" => self.test_fraction = parse(key, v)?,
            "stratify" => self.stratify = parse_bool(key, v)?,
            "pair" => {
                let p: Vec<usize> = parse_list(key, v)?;
                if p.len() != 2 || p[0] == p[1] {
                    return Err(CliError::Config(format!(
                        "`pair`: expected two distinct groups, got `{v}`"
                    )));
                }
                self.pair = (p[0], p[1]);
            }
            "members" => self.members = parse(key, v)?,
            "n_train" => self.n_train = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "eval_size" => self.eval_size = parse(key, v)?,
            "trials" => self.trials = parse(key, v)?,
            "grid" => self.grid = parse_list(key, v)?,
            "horizons" => {
                self.horizons = list(v)
                    .map(|h| {
                        if h == "inf" {
                            Ok(Horizon::Infinite)
                        } else {
                            parse::<f64>(key, h).map(Horizon::Finite)
                        }
                    })
                    .collect::<Result<_, _>>()?
            }
            "k" => self.k = parse(key, v)?,
            "folds" => self.folds = parse(key, v)?,
            "standardize" => self.standardize = parse_bool(key, v)?,
            "regularization" => self.regularization = parse(key, v)?,
            "reps" => self.reps = parse(key, v)?,
            "topics" => self.topics = Some(PathBuf::from(v)),
            "min_mass" => self.min_mass = parse(key, v)?,
            "cluster_features" => self.cluster_features = list(v).map(String::from).collect(),
            "synth" => {
                self.synth = match v {
                    "discrete" => Some(SynthKind::Discrete),
                    "regression" => Some(SynthKind::Regression),
                    "" | "none" => None,
                    _ => {
                        return Err(CliError::Config(format!(
                            "`synth`: expected discrete or regression, got `{v}`"
                        )))
                    }
                }
            }
            "synth_n" => self.synth_n = parse(key, v)?,
            "noise_sd" => self.noise_sd = parse(key, v)?,
            "homoskedastic" => self.homoskedastic = parse_bool(key, v)?,
            _ => return Err(CliError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Parse config text. Blank lines and `#` comments are skipped; later
    /// keys override earlier ones.
    pub fn apply_text(&mut self, text: &str) -> Result<(), CliError> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| CliError::Config("a master seed is required (`seed=` or --seed)".into()))
    }

    pub fn exec(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn learner_spec(&self, kind: LearnerKind, seed: u64) -> LearnerSpec {
        let params = match kind {
            LearnerKind::Logistic => LearnerParams::Logistic {
                lambda: self.lambda,
                penalty: self.penalty,
                epochs: self.epochs,
                step_size: 0.1,
            },
            LearnerKind::Ridge => LearnerParams::Ridge { lambda: self.lambda },
            LearnerKind::Knn => LearnerParams::knn(self.knn_k),
            LearnerKind::Tree => LearnerParams::tree(self.depth),
            LearnerKind::Bagged => LearnerParams::bagged_trees(self.trees, self.depth, self.feature_fraction),
        };
        LearnerSpec {
            include_group: self.include_group,
            ..LearnerSpec::new(params, seed)
        }
    }

    /// Checks that do not depend on the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.threshold.is_finite()) {
            return bad("`threshold` must be finite");
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad("`level` must lie in (0, 1)");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("`test_fraction` must lie in (0, 1)");
        }
        if self.kinds.is_empty() {
            return bad("at least one cost kind is required");
        }
        if self.members < 2 {
            return bad("`members` must be at least 2");
        }
        if self.trials == 0 || self.folds < 2 || self.k == 0 || self.eval_size == 0 || self.synth_n == 0 {
            return bad("`trials`, `k`, `eval_size` and `synth_n` must be positive and `folds` at least 2");
        }
        let nonneg = |v: f64| v >= 0.0;
        if !nonneg(self.min_mass) || !nonneg(self.regularization) || !(self.noise_sd.is_finite() && self.noise_sd > 0.0)
        {
            return bad("`min_mass` and `regularization` must be nonnegative and `noise_sd` positive");
        }
        Ok(())
    }
}
