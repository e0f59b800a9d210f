//! Analysis orchestration. Each analysis turns the loaded data into one
//! report block; blocks are appended in a fixed order.

use std::path::Path;

use fairaudit::costs::{self, CostKind, PredictionSet};
use fairaudit::curves::{
    extrapolate_gamma, power_law_crossings, run_curve_experiment, CurveConfig, EXTRAPOLATION_FACTOR, MIN_HOLDOUT,
};
use fairaudit::data::{self, Dataset, Task};
use fairaudit::decomposition::{
    ensemble_train, group_decomposition, homoskedastic_noise_gap, ConditionalOutcomeModel, EnsembleConfig, Loss,
    TrainingSource,
};
use fairaudit::learners::{self, LearnerSpec};
use fairaudit::noise::{all_bounds, BoundOptions, NnConfig};
use fairaudit::seed::derive;
use fairaudit::stats::{
    anova_f, bootstrap_gamma_ci, compare_discrimination_test, gamma_z_test, pairwise_welch_holm, BootstrapConfig,
};
use fairaudit::subgroups::{load_memberships, rank_clusters, threshold_clusterings, Clustering};
use fairaudit::synth::{gen_discrete, gen_regression, DiscreteSynthSpec, RegressionSynthSpec, Sampler};

use crate::config::{Analysis, LearnerKind, RunConfig, SynthKind};
use crate::error::CliError;
use crate::report::*;

type Result<T> = std::result::Result<T, CliError>;

fn core<T>(context: &str, r: fairaudit::Result<T>) -> Result<T> {
    r.map_err(|e| CliError::from_core(context, e))
}

struct Split {
    train: Dataset,
    test: Dataset,
    test_indices: Vec<usize>,
}

struct Fitted {
    spec: LearnerSpec,
    preds: PredictionSet,
}

/// Lazily computed shared state: the dataset, one train/test split, and the
/// primary learner's predictions on the test part.
struct Context<'a> {
    cfg: &'a RunConfig,
    seed: u64,
    data: Option<Dataset>,
    split: Option<Split>,
    fitted: Option<Fitted>,
}

fn predictions(model_scores: Vec<f64>, task: Task, threshold: f64) -> Result<PredictionSet> {
    match task {
        Task::BinaryClassification => core("predictions", PredictionSet::from_scores(model_scores, threshold)),
        Task::Regression => Ok(PredictionSet::from_values(model_scores)),
    }
}

impl<'a> Context<'a> {
    fn data(&mut self) -> Result<&Dataset> {
        if self.data.is_none() {
            let (Some(path), Some(schema)) = (&self.cfg.data, &self.cfg.schema) else {
                return Err(CliError::Config("no dataset: set `data` and `schema`".into()));
            };
            self.data = Some(core("loading dataset", data::load_with_schema_file(path, schema))?);
        }
        Ok(self.data.as_ref().expect("loaded"))
    }

    fn split(&mut self) -> Result<&Split> {
        if self.split.is_none() {
            let (frac, stratify, seed) = (self.cfg.test_fraction, self.cfg.stratify, derive(self.seed, "split", 0));
            let d = self.data()?;
            let (train_idx, test_idx) = core("splitting", data::split_indices(d, frac, seed, stratify))?;
            self.split = Some(Split {
                train: d.select(&train_idx),
                test: d.select(&test_idx),
                test_indices: test_idx,
            });
        }
        Ok(self.split.as_ref().expect("split"))
    }

    fn train_and_predict(&mut self, kind: LearnerKind, label: &str) -> Result<Fitted> {
        let spec = self.cfg.learner_spec(kind, derive(self.seed, label, 0));
        let threshold = self.cfg.threshold;
        let split = self.split()?;
        let model = core("training", learners::train(&spec, &split.train))?;
        let scores = core("predicting", model.predict_dataset(&split.test))?;
        let preds = predictions(scores, split.test.task(), threshold)?;
        Ok(Fitted { spec, preds })
    }

    fn fitted(&mut self) -> Result<&Fitted> {
        if self.fitted.is_none() {
            self.fitted = Some(self.train_and_predict(self.cfg.learner, "learner")?);
        }
        Ok(self.fitted.as_ref().expect("fitted"))
    }

    fn costs(&mut self) -> Result<Block> {
        let kinds = self.cfg.kinds.clone();
        let spec = self.fitted()?.spec.clone();
        let split = self.split.as_ref().expect("fitted implies split");
        let preds = &self.fitted.as_ref().expect("fitted").preds;
        let reports = kinds
            .iter()
            .map(|&k| {
                core(
                    &format!("{k} costs"),
                    costs::discrimination_level(preds, &split.test, k),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Block::Costs(CostsBlock {
            learner: spec,
            train_rows: split.train.len(),
            test_rows: split.test.len(),
            reports,
        }))
    }

    fn tests(&mut self) -> Result<Block> {
        let cfg = self.cfg;
        let other = match cfg.compare_learner {
            Some(kind) => Some(self.train_and_predict(kind, "compare_learner")?),
            None => None,
        };
        let spec = self.fitted()?.spec.clone();
        let test = &self.split.as_ref().expect("split").test;
        let preds = &self.fitted.as_ref().expect("fitted").preds;
        let pair = cfg.pair;
        let mut kinds = Vec::new();
        for (ki, &kind) in cfg.kinds.iter().enumerate() {
            let ctx = |what: &str| format!("{kind} {what}");
            let mut z = core(&ctx("z-test"), gamma_z_test(preds, test, kind, pair, cfg.level))?;
            bound_statistics(&mut z);
            let boot = core(
                &ctx("bootstrap"),
                bootstrap_gamma_ci(
                    preds,
                    test,
                    kind,
                    BootstrapConfig {
                        reps: cfg.reps,
                        level: cfg.level,
                        seed: derive(self.seed, "bootstrap", ki as u64),
                        exec: cfg.exec(),
                    },
                ),
            )?;
            let losses = core(&ctx("losses"), costs::per_sample_losses(preds, test, kind))?;
            let mut by_group = vec![Vec::new(); test.n_groups()];
            for (l, &g) in losses.iter().zip(test.group()) {
                if let Some(l) = l {
                    by_group[g].push(*l);
                }
            }
            let (anova, pairwise) = if by_group.len() >= 2 && by_group.iter().all(|g| g.len() >= 2) {
                let mut a = core(&ctx("anova"), anova_f(&by_group, cfg.level))?;
                bound_statistics(&mut a);
                let mut p = core(&ctx("pairwise"), pairwise_welch_holm(&by_group, cfg.level))?;
                p.pairs.iter_mut().for_each(|t| bound_statistics(&mut t.result));
                (Some(a), Some(p))
            } else {
                (None, None)
            };
            let comparison = match &other {
                Some(o) => {
                    let mut r = core(
                        &ctx("model comparison"),
                        compare_discrimination_test(preds, &o.preds, test, kind, pair, cfg.level),
                    )?;
                    bound_statistics(&mut r);
                    Some(r)
                }
                None => None,
            };
            kinds.push(KindTests {
                kind,
                z_test: Some(z),
                bootstrap: Some(boot),
                anova,
                pairwise,
                comparison,
            });
        }
        Ok(Block::Tests(TestsBlock {
            learner: spec,
            compare_learner: other.map(|o| o.spec),
            pair,
            kinds,
        }))
    }

    fn decompose(&mut self, warnings: &mut Vec<String>) -> Result<Block> {
        let cfg = self.cfg;
        let spec = cfg.learner_spec(cfg.learner, derive(self.seed, "learner", 0));
        let ens_seed = derive(self.seed, "ensemble", 0);
        let mut losses = Vec::new();
        for &k in &cfg.kinds {
            match k {
                CostKind::ZeroOne => losses.push((Loss::ZeroOne, None)),
                CostKind::Fnr => losses.push((Loss::ZeroOne, Some(1))),
                CostKind::Fpr => losses.push((Loss::ZeroOne, Some(0))),
                CostKind::Mse => losses.push((Loss::Squared, None)),
                other => warnings.push(format!("decompose: no decomposition for cost kind {other}; skipped")),
            }
        }
        let ens_cfg = |n_train: usize| EnsembleConfig {
            members: cfg.members,
            n_train,
            threshold: cfg.threshold,
            seed: ens_seed,
            exec: cfg.exec(),
        };
        let (source, n_train, eval, ensemble, om) = match (cfg.synth, &cfg.data) {
            (Some(kind), None) => {
                let sampler = synth_sampler(cfg, kind);
                let eval = core(
                    "synthetic eval set",
                    sampler.sample(cfg.eval_size, derive(self.seed, "eval", 0)),
                )?;
                let n_train = cfg.n_train.unwrap_or(200);
                let e = core(
                    "ensemble",
                    ensemble_train(
                        &spec,
                        TrainingSource::Synthetic(sampler.as_ref()),
                        &eval,
                        &ens_cfg(n_train),
                    ),
                )?;
                ("synthetic", n_train, eval, e, synth_outcome_model(cfg, kind))
            }
            _ => {
                let eval_seed = derive(self.seed, "eval", 0);
                let split = self.split()?;
                let m = cfg.eval_size.min(split.test.len());
                let mut rows = core(
                    "eval subsample",
                    data::subsample_indices(split.test.len(), m, eval_seed),
                )?;
                rows.sort_unstable();
                let eval = split.test.select(&rows);
                let n_train = cfg.n_train.unwrap_or(split.train.len());
                let e = core(
                    "ensemble",
                    ensemble_train(&spec, TrainingSource::Bootstrap(&split.train), &eval, &ens_cfg(n_train)),
                )?;
                ("bootstrap", n_train, eval, e, ConditionalOutcomeModel::Unknown)
            }
        };
        let results = losses
            .iter()
            .map(|&(loss, cond)| core("decomposition", group_decomposition(&ensemble, &eval, &om, loss, cond)))
            .collect::<Result<_>>()?;
        let noise_gap = if om.is_known() && eval.task() == Task::Regression && eval.n_groups() >= 2 {
            Some(core("noise gap", homoskedastic_noise_gap(&om, &eval, cfg.pair))?)
        } else {
            None
        };
        Ok(Block::Decompose(DecomposeBlock {
            learner: spec,
            source: source.to_string(),
            members: cfg.members,
            n_train,
            eval_rows: eval.len(),
            results,
            noise_gap,
        }))
    }

    fn curves(&mut self, warnings: &mut Vec<String>) -> Result<Block> {
        let cfg = self.cfg;
        let spec = cfg.learner_spec(cfg.learner, derive(self.seed, "learner", 0));
        let seed = derive(self.seed, "curves", 0);
        let d = self.data()?;
        let holdout = cfg.test_fraction.max(MIN_HOLDOUT);
        let grid = if cfg.grid.is_empty() {
            default_grid(d.len(), holdout)
        } else {
            cfg.grid.clone()
        };
        let ccfg = CurveConfig {
            n_grid: grid,
            trials: cfg.trials,
            holdout,
            kinds: cfg.kinds.clone(),
            threshold: cfg.threshold,
            seed,
        };
        let exp = core("learning curves", run_curve_experiment(&spec, d, &ccfg, cfg.exec()))?;
        let mut curves = Vec::new();
        let mut projections = Vec::new();
        for &kind in &cfg.kinds {
            let mut fits = Vec::new();
            for g in 0..exp.n_groups() {
                let fit = match exp.fit(g, kind) {
                    Ok(f) => Some(f),
                    Err(e) => {
                        warnings.push(format!("curves: no {kind} fit for group {g}: {e}"));
                        None
                    }
                };
                fits.push(fit.clone());
                curves.push(GroupCurve {
                    group: g,
                    kind,
                    points: exp.group_curve(g, kind),
                    fit,
                });
            }
            let (a, b) = cfg.pair;
            if let (Some(Some(fa)), Some(Some(fb))) = (fits.get(a), fits.get(b)) {
                let extrapolations = cfg
                    .horizons
                    .iter()
                    .map(|&h| core("extrapolation", extrapolate_gamma(fa, fb, h)))
                    .collect::<Result<Vec<_>>>()?;
                let lo = fa.n_min.min(fb.n_min);
                let hi = EXTRAPOLATION_FACTOR * fa.n_max.max(fb.n_max);
                let crossings = core("crossings", power_law_crossings(&fa.curve, &fb.curve, lo, hi))?;
                projections.push(GapProjection {
                    kind,
                    gamma: exp.gamma_curve(kind),
                    extrapolations,
                    crossing_domain: (lo, hi),
                    crossings: Some(crossings),
                });
            }
        }
        Ok(Block::Curves(CurvesBlock {
            learner: spec,
            config: ccfg,
            curves,
            projections,
        }))
    }

    fn noise(&mut self) -> Result<Block> {
        let cfg = self.cfg;
        let nn = NnConfig {
            k: cfg.k,
            folds: cfg.folds,
            seed: derive(self.seed, "noise", 0),
            exec: cfg.exec(),
        };
        let opts = BoundOptions {
            standardize: cfg.standardize,
            regularization: cfg.regularization,
        };
        let d = self.data()?;
        if d.task() != Task::BinaryClassification {
            return Err(CliError::Analysis("noise bounds need a binary outcome".into()));
        }
        let mut estimates = Vec::new();
        let mut failures = Vec::new();
        for (method, group, r) in all_bounds(d, &nn, &opts) {
            match r {
                Ok(e) => estimates.push(e),
                Err(e) => failures.push(BoundFailure {
                    method,
                    group,
                    message: e.to_string(),
                }),
            }
        }
        Ok(Block::Noise(NoiseBlock {
            k: cfg.k,
            folds: cfg.folds,
            estimates,
            failures,
        }))
    }

    fn subgroups(&mut self, warnings: &mut Vec<String>) -> Result<Block> {
        let cfg = self.cfg;
        let n_all = self.data()?.len();
        let spec = self.fitted()?.spec.clone();
        let split = self.split.as_ref().expect("split");
        let preds = &self.fitted.as_ref().expect("fitted").preds;
        let test = &split.test;
        let named: Vec<(String, Clustering)> = match &cfg.topics {
            Some(path) => {
                let (cl, w) = core("memberships", load_memberships(path, n_all))?;
                warnings.extend(w.into_iter().map(|w| format!("subgroups: {w}")));
                vec![("topics".to_string(), cl.select(&split.test_indices))]
            }
            None => {
                let names = test.column_names();
                for f in &cfg.cluster_features {
                    if !names.contains(f) {
                        return Err(CliError::Config(format!(
                            "cluster feature `{f}` is not a feature column"
                        )));
                    }
                }
                threshold_clusterings(test)
                    .into_iter()
                    .zip(names)
                    .filter(|(_, n)| cfg.cluster_features.is_empty() || cfg.cluster_features.contains(n))
                    .map(|(c, n)| (n.clone(), c))
                    .collect()
            }
        };
        let mut clusterings = Vec::new();
        for (name, cl) in named {
            let reports = cfg
                .kinds
                .iter()
                .map(|&k| {
                    core(
                        &format!("clusters of {name}"),
                        rank_clusters(preds, test, &cl, k, cfg.min_mass),
                    )
                })
                .collect::<Result<_>>()?;
            clusterings.push(ClusteringResult {
                name,
                degenerate: cl.degenerate,
                reports,
            });
        }
        Ok(Block::Subgroups(SubgroupsBlock {
            learner: spec,
            clusterings,
        }))
    }
}

/// Five log-spaced training sizes up to the largest size the holdout allows.
fn default_grid(n: usize, holdout: f64) -> Vec<usize> {
    let max = ((1.0 - holdout) * n as f64).floor().max(1.0);
    let min = (max / 100.0).max(20.0).min(max);
    let mut g: Vec<usize> = (0..5)
        .map(|i| (min * (max / min).powf(i as f64 / 4.0)).round() as usize)
        .collect();
    g.dedup();
    g
}

fn regression_spec(cfg: &RunConfig) -> RegressionSynthSpec {
    let s = RegressionSynthSpec::default().with_noise_sd(cfg.noise_sd);
    if cfg.homoskedastic {
        s.homoskedastic()
    } else {
        s
    }
}

fn synth_sampler(cfg: &RunConfig, kind: SynthKind) -> Box<dyn Sampler> {
    match kind {
        SynthKind::Discrete => Box::new(DiscreteSynthSpec::default()),
        SynthKind::Regression => Box::new(regression_spec(cfg)),
    }
}

fn synth_outcome_model(cfg: &RunConfig, kind: SynthKind) -> ConditionalOutcomeModel {
    match kind {
        SynthKind::Discrete => DiscreteSynthSpec::default().outcome_model(),
        SynthKind::Regression => regression_spec(cfg).outcome_model(),
    }
}

fn dataset_summary(d: &Dataset) -> DatasetSummary {
    DatasetSummary {
        rows: d.len(),
        features: d.n_features(),
        task: d.task().name().to_string(),
        group_column: d.group_column().to_string(),
        outcome_column: d.outcome_column().to_string(),
        groups: d
            .group_labels()
            .iter()
            .zip(d.group_sizes())
            .map(|(label, rows)| GroupSummary {
                label: label.clone(),
                rows,
            })
            .collect(),
    }
}

/// Generate a synthetic dataset into `cfg.out` and describe it.
pub fn synth(cfg: &RunConfig) -> Result<AuditReport> {
    let seed = cfg.seed()?;
    let kind = cfg.synth.unwrap_or(SynthKind::Discrete);
    let out = cfg
        .out
        .as_deref()
        .ok_or_else(|| CliError::Config("synth needs an output directory (`out`)".into()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Config(format!("cannot create {}: {e}", out.display())))?;
    let s = derive(seed, "synth", 0);
    let (d, bayes) = match kind {
        SynthKind::Discrete => {
            let spec = DiscreteSynthSpec::default();
            (
                core("synth", gen_discrete(&spec, cfg.synth_n, s))?.0,
                spec.exact_bayes(),
            )
        }
        SynthKind::Regression => {
            let spec = regression_spec(cfg);
            (
                core("synth", gen_regression(&spec, cfg.synth_n, s))?.0,
                spec.exact_bayes(),
            )
        }
    };
    let (data_file, schema_file) = ("synth.csv", "synth.schema");
    core(
        "writing synthetic data",
        data::write_dataset(&d, &out.join(data_file), &out.join(schema_file)),
    )?;
    let mut report = AuditReport::new("synth", cfg.clone());
    report.dataset = Some(dataset_summary(&d));
    report.blocks.push(Block::Synth(SynthBlock {
        kind,
        rows: d.len(),
        bayes,
        data_file: data_file.into(),
        schema_file: schema_file.into(),
    }));
    Ok(report)
}

/// Run `analyses` and assemble the report. Config and data errors abort;
/// an analysis failure becomes an error block and the rest still run.
pub fn analyze(command: &str, cfg: &RunConfig, analyses: &[Analysis]) -> Result<AuditReport> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let mut ctx = Context {
        cfg,
        seed,
        data: None,
        split: None,
        fitted: None,
    };
    let mut report = AuditReport::new(command, cfg.clone());
    let synthetic_only = analyses == [Analysis::Decompose] && cfg.synth.is_some() && cfg.data.is_none();
    if !synthetic_only {
        report.dataset = Some(dataset_summary(ctx.data()?));
    }
    for &a in analyses {
        let mut warnings = Vec::new();
        let r = match a {
            Analysis::Costs => ctx.costs(),
            Analysis::Tests => ctx.tests(),
            Analysis::Decompose => ctx.decompose(&mut warnings),
            Analysis::Curves => ctx.curves(&mut warnings),
            Analysis::Noise => ctx.noise(),
            Analysis::Subgroups => ctx.subgroups(&mut warnings),
        };
        report.warnings.extend(warnings);
        match r {
            Ok(b) => report.blocks.push(b),
            Err(CliError::Analysis(message)) => report.blocks.push(Block::Error(ErrorBlock {
                failed_analysis: a.name().to_string(),
                message,
            })),
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Re-emit a stored report.
pub fn reemit(input: &Path) -> Result<AuditReport> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::Data(format!("cannot read report {}: {e}", input.display())))?;
    AuditReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_increasing_and_feasible() {
        let g = default_grid(10_000, 0.2);
        assert_eq!(g.len(), 5);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*g.last().unwrap(), 8000);
        assert_eq!(default_grid(30, 0.2), vec![20, 21, 22, 23, 24]);
    }
}
