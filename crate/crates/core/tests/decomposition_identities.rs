//! Pointwise and group identities of the decomposition, checked against a
//! direct enumeration of the expected loss over ensemble members and the
//! outcome distribution.

use fairaudit::data::Dataset;
use fairaudit::decomposition::{
    class_conditional_point, compare_models_bias_variance, ensemble_train, group_decomposition,
    homoskedastic_noise_gap, point_decomposition, ConditionalOutcomeModel, EnsembleConfig, EnsemblePredictions, Loss,
    Mode, TrainingSource,
};
use fairaudit::exec::Execution;
use fairaudit::learners::{LearnerParams, LearnerSpec};
use fairaudit::synth::{gen_discrete, gen_regression, DiscreteSynthSpec, RegressionSynthSpec};

fn tol(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

fn discrete_setup(seed: u64) -> (DiscreteSynthSpec, Dataset, EnsemblePredictions, ConditionalOutcomeModel) {
    let spec = DiscreteSynthSpec::default();
    let (eval, om) = gen_discrete(&spec, 500, seed).unwrap();
    let learner = LearnerSpec::new(LearnerParams::tree(2), 0);
    let cfg = EnsembleConfig {
        members: 50,
        n_train: 200,
        threshold: 0.5,
        seed,
        exec: Execution::Parallel,
    };
    let e = ensemble_train(&learner, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
    (spec, eval, e, om)
}

/// `E_{t, Y}[1[Y != yhat_t]]` by summing over both outcomes.
fn enumerate_zero_one(spec: &DiscreteSynthSpec, eval: &Dataset, e: &EnsemblePredictions, i: usize) -> f64 {
    let p = spec.p_positive(spec.value_of(eval.features().row(i)), eval.group()[i]);
    let t = e.n_members();
    (0..t)
        .map(|m| {
            let yhat = e.member(m)[i];
            p * f64::from(yhat != 1.0) + (1.0 - p) * f64::from(yhat != 0.0)
        })
        .sum::<f64>()
        / t as f64
}

#[test]
fn zero_one_pointwise_identity() {
    let (spec, eval, e, om) = discrete_setup(11);
    for i in 0..eval.len() {
        let p = point_decomposition(&e, &eval, i, &om, Loss::ZeroOne).unwrap();
        let want = enumerate_zero_one(&spec, &eval, &e, i);
        assert!(
            (p.total() - want).abs() <= tol(want),
            "point {i}: {} vs {want}",
            p.total()
        );
        assert!(p.bias == 0.0 || p.bias == 1.0);
        assert!((0.0..=1.0).contains(&p.variance));
        assert!((-1.0..=1.0).contains(&p.c_n));
        assert_eq!(p.c_v == 1.0, p.y_main == p.y_star);
    }
}

#[test]
fn zero_one_group_identity() {
    let (spec, eval, e, om) = discrete_setup(12);
    let g = group_decomposition(&e, &eval, &om, Loss::ZeroOne, None).unwrap();
    assert_eq!(g.mode, Mode::Known);
    for terms in &g.groups {
        let rows: Vec<usize> = (0..eval.len()).filter(|&i| eval.group()[i] == terms.group).collect();
        let want = rows
            .iter()
            .map(|&i| enumerate_zero_one(&spec, &eval, &e, i))
            .sum::<f64>()
            / rows.len() as f64;
        assert!((terms.cost - want).abs() <= tol(want));
        let sum = terms.noise.unwrap() + terms.bias.unwrap() + terms.variance.unwrap();
        assert!((terms.cost - sum).abs() <= tol(sum));
    }
    let gaps = g.gaps.unwrap();
    let delta = g.groups[0].cost - g.groups[1].cost;
    assert!((delta.abs() - g.gamma).abs() <= 1e-15);
    assert!(((gaps.noise + gaps.bias + gaps.variance).abs() - g.gamma).abs() <= 1e-12);
}

#[test]
fn class_conditional_identity() {
    let (spec, eval, e, om) = discrete_setup(13);
    for y in [0u8, 1] {
        for i in 0..eval.len() {
            let p = class_conditional_point(&e, &eval, i, &om, y).unwrap();
            let want =
                (0..e.n_members()).filter(|&m| e.member(m)[i] != f64::from(y)).count() as f64 / e.n_members() as f64;
            assert!((p.total() - want).abs() <= tol(want));
        }
        let g = group_decomposition(&e, &eval, &om, Loss::ZeroOne, Some(y)).unwrap();
        for terms in &g.groups {
            // weighted by p(y | x, a)
            let (mut num, mut den) = (0.0, 0.0);
            for i in (0..eval.len()).filter(|&i| eval.group()[i] == terms.group) {
                let p1 = spec.p_positive(spec.value_of(eval.features().row(i)), terms.group);
                let w = if y == 1 { p1 } else { 1.0 - p1 };
                let l = (0..e.n_members()).filter(|&m| e.member(m)[i] != f64::from(y)).count() as f64
                    / e.n_members() as f64;
                num += w * l;
                den += w;
            }
            assert!((terms.cost - num / den).abs() <= tol(terms.cost));
            let sum = terms.noise.unwrap() + terms.bias.unwrap() + terms.variance.unwrap();
            assert!((terms.cost - sum).abs() <= tol(sum));
        }
    }
}

#[test]
fn squared_identity_on_regression() {
    let spec = RegressionSynthSpec::default().with_noise_sd(0.01);
    let (eval, om) = gen_regression(&spec, 500, 21).unwrap();
    let learner = LearnerSpec::new(LearnerParams::tree(3), 0);
    let cfg = EnsembleConfig {
        members: 50,
        n_train: 200,
        threshold: 0.5,
        seed: 21,
        exec: Execution::Parallel,
    };
    let e = ensemble_train(&learner, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
    for i in 0..eval.len() {
        let x = eval.features().get(i, 0);
        let (m, v) = (spec.conditional_mean(x), spec.conditional_variance(x));
        let want = (0..e.n_members())
            .map(|t| (m - e.member(t)[i]).powi(2) + v)
            .sum::<f64>()
            / e.n_members() as f64;
        let p = point_decomposition(&e, &eval, i, &om, Loss::Squared).unwrap();
        assert_eq!((p.c_n, p.c_v), (1.0, 1.0));
        assert!((p.total() - want).abs() <= tol(want), "{} vs {want}", p.total());
    }
    let g = group_decomposition(&e, &eval, &om, Loss::Squared, None).unwrap();
    for t in &g.groups {
        let sum = t.noise.unwrap() + t.bias.unwrap() + t.variance.unwrap();
        assert!((t.cost - sum).abs() <= tol(sum));
        assert_eq!(t.variance.unwrap(), t.variance_unsigned);
    }
}

#[test]
fn unknown_mode_variance_matches_known_mode() {
    let (_, eval, e, om) = discrete_setup(14);
    let known = group_decomposition(&e, &eval, &om, Loss::ZeroOne, None).unwrap();
    let unknown = group_decomposition(&e, &eval, &ConditionalOutcomeModel::Unknown, Loss::ZeroOne, None).unwrap();
    for (k, u) in known.groups.iter().zip(&unknown.groups) {
        assert_eq!(k.variance_unsigned, u.variance_unsigned);
        assert!(u.bias.is_none() && u.noise.is_none());
    }
}

#[test]
fn bayes_optimal_ensemble_has_only_noise() {
    let spec = DiscreteSynthSpec::default();
    let (eval, om) = gen_discrete(&spec, 2000, 5).unwrap();
    let e = EnsemblePredictions::bayes_optimal(&eval, om.known().unwrap(), Loss::ZeroOne, 10).unwrap();
    let g = group_decomposition(&e, &eval, &om, Loss::ZeroOne, None).unwrap();
    for t in &g.groups {
        assert_eq!(t.bias, Some(0.0));
        assert_eq!(t.variance, Some(0.0));
        assert!((t.cost - t.noise.unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn ensembles_are_reproducible() {
    let (_, _, a, _) = discrete_setup(15);
    let (_, _, b, _) = discrete_setup(15);
    assert_eq!(a, b);
    assert_eq!(a.n_members(), 50);
    assert_eq!(a.n_points(), 500);
}

#[test]
fn parallel_and_sequential_ensembles_agree() {
    let spec = DiscreteSynthSpec::default();
    let (eval, _) = gen_discrete(&spec, 100, 1).unwrap();
    let learner = LearnerSpec::new(LearnerParams::bagged_trees(5, 3, 0.7), 0);
    let mut cfg = EnsembleConfig {
        members: 8,
        n_train: 150,
        threshold: 0.5,
        seed: 3,
        exec: Execution::Parallel,
    };
    let a = ensemble_train(&learner, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
    cfg.exec = Execution::Sequential;
    let b = ensemble_train(&learner, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bootstrap_and_subsample_sources() {
    let spec = DiscreteSynthSpec::default();
    let (pool, _) = gen_discrete(&spec, 100, 2).unwrap();
    let learner = LearnerSpec::new(LearnerParams::tree(2), 0);
    let mut cfg = EnsembleConfig {
        members: 4,
        n_train: 100,
        threshold: 0.5,
        seed: 9,
        exec: Execution::Sequential,
    };
    assert!(ensemble_train(&learner, TrainingSource::Bootstrap(&pool), &pool, &cfg).is_ok());
    assert!(ensemble_train(&learner, TrainingSource::Subsample(&pool), &pool, &cfg).is_ok());
    cfg.n_train = 101;
    assert!(ensemble_train(&learner, TrainingSource::Subsample(&pool), &pool, &cfg).is_err());
    assert!(ensemble_train(&learner, TrainingSource::Bootstrap(&pool), &pool, &cfg).is_ok());
}

#[test]
fn model_comparison_of_identical_ensembles() {
    let (_, eval, e, _) = discrete_setup(16);
    let r = compare_models_bias_variance(&e, &e, &eval, Loss::ZeroOne, (0, 1), 0.05).unwrap();
    assert_eq!(r.statistic, 0.0);
    assert_eq!(r.p_value, 1.0);
}

#[test]
fn model_comparison_matches_exact_cost_gaps() {
    // Evaluate on the whole domain, one row per cell, so the statistic on
    // observed Bayes labels can be compared with exact expectations.
    let spec = DiscreteSynthSpec::default();
    let (eval, _) = gen_discrete(&spec, 4000, 31).unwrap();
    let shallow = LearnerSpec::new(LearnerParams::tree(1), 0);
    let deep = LearnerSpec::new(LearnerParams::tree(4), 0);
    let cfg = EnsembleConfig {
        members: 20,
        n_train: 300,
        threshold: 0.5,
        seed: 31,
        exec: Execution::Parallel,
    };
    let e1 = ensemble_train(&shallow, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
    let e2 = ensemble_train(&deep, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
    let r = compare_models_bias_variance(&e1, &e2, &eval, Loss::ZeroOne, (0, 1), 0.05).unwrap();
    // Oracle: exact expected-loss gap difference on the evaluation points.
    let gap = |e: &EnsemblePredictions| {
        let mean = |a: usize| {
            let rows: Vec<usize> = (0..eval.len()).filter(|&i| eval.group()[i] == a).collect();
            rows.iter()
                .map(|&i| enumerate_zero_one(&spec, &eval, e, i))
                .sum::<f64>()
                / rows.len() as f64
        };
        mean(0) - mean(1)
    };
    let exact = gap(&e1) - gap(&e2);
    let se = r.aux["std_error"];
    assert!(
        (r.statistic - exact).abs() < 4.0 * se,
        "{} vs {exact} (se {se})",
        r.statistic
    );
}

#[test]
fn shared_label_noise_leaves_comparison_unbiased() {
    // Flipping outcomes with the same probability in both groups changes
    // each model's costs but not the expected difference of gaps.
    let spec = DiscreteSynthSpec::default();
    let mut noisy = spec.clone();
    for row in &mut noisy.outcome_table {
        row.iter_mut().for_each(|p| *p = 0.8 * *p + 0.2 * (1.0 - *p));
    }
    let shallow = LearnerSpec::new(LearnerParams::tree(1), 0);
    let deep = LearnerSpec::new(LearnerParams::tree(3), 0);
    let (mut clean_stats, mut noisy_stats) = (Vec::new(), Vec::new());
    for s in 0..100u64 {
        let (eval, _) = gen_discrete(&spec, 400, 1000 + s).unwrap();
        let (eval_noisy, _) = gen_discrete(&noisy, 400, 1000 + s).unwrap();
        let cfg = EnsembleConfig {
            members: 4,
            n_train: 200,
            threshold: 0.5,
            seed: s,
            exec: Execution::Sequential,
        };
        let e1 = ensemble_train(&shallow, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
        let e2 = ensemble_train(&deep, TrainingSource::Synthetic(&spec), &eval, &cfg).unwrap();
        clean_stats.push(
            compare_models_bias_variance(&e1, &e2, &eval, Loss::ZeroOne, (0, 1), 0.05)
                .unwrap()
                .statistic,
        );
        let e1 = ensemble_train(&shallow, TrainingSource::Synthetic(&spec), &eval_noisy, &cfg).unwrap();
        let e2 = ensemble_train(&deep, TrainingSource::Synthetic(&spec), &eval_noisy, &cfg).unwrap();
        noisy_stats.push(
            compare_models_bias_variance(&e1, &e2, &eval_noisy, Loss::ZeroOne, (0, 1), 0.05)
                .unwrap()
                .statistic,
        );
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    // Symmetric flips scale every loss difference by 0.6, so compare the
    // clean mean shrunk by that factor.
    let (mc, mn) = (0.6 * mean(&clean_stats), mean(&noisy_stats));
    let se = (0.36 * sd(&clean_stats).powi(2) / 100.0 + sd(&noisy_stats).powi(2) / 100.0).sqrt();
    assert!((mc - mn).abs() < 4.0 * se, "{mc} vs {mn} (se {se})");
}

#[test]
fn noise_gap_of_regression_model() {
    let spec = RegressionSynthSpec::default().with_noise_sd(0.5).homoskedastic();
    let (eval, om) = gen_regression(&spec, 1000, 4).unwrap();
    assert_eq!(homoskedastic_noise_gap(&om, &eval, (0, 1)).unwrap(), 0.0);

    let spec = RegressionSynthSpec::default().with_noise_sd(0.5);
    let (eval, om) = gen_regression(&spec, 1000, 4).unwrap();
    let gap = homoskedastic_noise_gap(&om, &eval, (0, 1)).unwrap();
    // direct summation over the evaluation rows
    let mean = |a: usize| {
        let xs: Vec<f64> = (0..eval.len())
            .filter(|&i| eval.group()[i] == a)
            .map(|i| 0.25 * eval.features().get(i, 0).powi(4))
            .collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    assert!((gap - (mean(0) - mean(1))).abs() < 1e-12 * gap.abs().max(1.0));
}
