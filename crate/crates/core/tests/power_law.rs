use fairaudit::costs::CostKind;
use fairaudit::curves::{
    fit_power_law, power_law_critical_point, power_law_crossings, run_curve_experiment, CurveConfig, PowerLaw,
};
use fairaudit::exec::Execution;
use fairaudit::learners::{LearnerParams, LearnerSpec};
use fairaudit::synth::{gen_discrete, DiscreteSynthSpec};
use proptest::prelude::*;

fn noiseless(c: PowerLaw, ns: &[f64]) -> Vec<(f64, f64, f64)> {
    ns.iter().map(|&n| (n, c.eval(n), 1.0)).collect()
}

#[test]
fn recovers_noiseless_parameters() {
    let truth = PowerLaw::new(2.0, 0.5, 0.1);
    let ns = [10.0, 1e2, 1e3, 1e4, 1e5];
    let f = fit_power_law(&noiseless(truth, &ns)).unwrap();
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    assert!(rel(f.curve.alpha, 2.0) < 0.01, "{:?}", f.curve);
    assert!(rel(f.curve.beta, 0.5) < 0.01, "{:?}", f.curve);
    assert!(rel(f.curve.delta, 0.1) < 0.01, "{:?}", f.curve);
}

#[test]
fn two_crossings_and_critical_point() {
    let f = PowerLaw::new(100.0, 2.0, 1.0);
    let g = PowerLaw::new(50.0, 1.0, 0.0);
    let x = power_law_critical_point(&f, &g).unwrap();
    assert!((x - 4.0).abs() < 1e-9);
    let c = power_law_crossings(&f, &g, 0.5, 1000.0).unwrap();
    // roots of x^2 - 50x + 100 = 0
    let disc = (2500.0f64 - 400.0).sqrt();
    let want = [(50.0 - disc) / 2.0, (50.0 + disc) / 2.0];
    assert_eq!(c.roots.len(), 2);
    for (r, w) in c.roots.iter().zip(want) {
        assert!((r - w).abs() < 1e-6 && ((r - w) / w).abs() < 1e-10, "{r} vs {w}");
    }
}

/// Sign changes of `f - g` on a dense log grid.
fn grid_sign_changes(f: &PowerLaw, g: &PowerLaw, lo: f64, hi: f64) -> usize {
    let m = 4000;
    let mut prev = None;
    let mut changes = 0;
    for i in 0..=m {
        let x = lo * (hi / lo).powf(i as f64 / m as f64);
        let d = f.eval(x) - g.eval(x);
        if d == 0.0 {
            continue;
        }
        let s = d > 0.0;
        if prev.is_some_and(|p| p != s) {
            changes += 1;
        }
        prev = Some(s);
    }
    changes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn at_most_two_crossings(
        a in 0.01f64..100.0, b in 0.05f64..3.0, c in 0.0f64..1.0,
        d in 0.01f64..100.0, e in 0.05f64..3.0, h in 0.0f64..1.0,
    ) {
        let f = PowerLaw::new(a, b, c);
        let g = PowerLaw::new(d, e, h);
        let (lo, hi) = (1.0, 1e6);
        let cr = power_law_crossings(&f, &g, lo, hi).unwrap();
        prop_assert!(cr.roots.len() <= 2);
        prop_assert!(grid_sign_changes(&f, &g, lo, hi) <= 2);
        for r in &cr.roots {
            let scale = f.eval(*r).abs().max(g.eval(*r).abs());
            prop_assert!((f.eval(*r) - g.eval(*r)).abs() <= 1e-8 * scale.max(1e-300) + 1e-12);
        }
    }

    #[test]
    fn fit_never_worse_than_flat(
        a in 0.0f64..5.0, b in 0.1f64..2.0, c in 0.0f64..0.5,
        noise in proptest::collection::vec(-0.05f64..0.05, 6),
    ) {
        let ns: [f64; 6] = [50.0, 100.0, 200.0, 500.0, 1000.0, 5000.0];
        let pts: Vec<(f64, f64, f64)> = ns
            .iter()
            .zip(&noise)
            .map(|(&n, e)| (n, (a * n.powf(-b) + c + e).max(0.0), 1.0))
            .collect();
        let f = fit_power_law(&pts).unwrap();
        let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let flat: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
        prop_assert!(f.rss <= flat + 1e-12);
        prop_assert!(f.curve.alpha >= 0.0 && f.curve.delta >= 0.0);
        prop_assert!((0.01..=3.0).contains(&f.curve.beta));
        prop_assert!(f.eval(1e4) <= f.eval(ns[0]) + 1e-15);
    }
}

#[test]
fn curve_experiment_is_reproducible() {
    let spec = DiscreteSynthSpec::default();
    let (d, _) = gen_discrete(&spec, 1000, 8).unwrap();
    let cfg = CurveConfig {
        n_grid: vec![50, 100, 200, 400],
        trials: 3,
        holdout: 0.2,
        kinds: vec![CostKind::ZeroOne, CostKind::Fnr],
        threshold: 0.5,
        seed: 77,
    };
    let learner = LearnerSpec::new(LearnerParams::tree(3), 0);
    let a = run_curve_experiment(&learner, &d, &cfg, Execution::Parallel).unwrap();
    let b = run_curve_experiment(&learner, &d, &cfg, Execution::Sequential).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.cells.len(), 4 * 3 * 2 * 2);
    assert_eq!(a.group_curve(0, CostKind::ZeroOne).len(), 4);
    assert!(a.fit(0, CostKind::ZeroOne).is_ok());

    let mut bad = cfg.clone();
    bad.n_grid = vec![100, 900];
    assert!(run_curve_experiment(&learner, &d, &bad, Execution::Sequential).is_err());
    bad = cfg.clone();
    bad.holdout = 0.1;
    assert!(run_curve_experiment(&learner, &d, &bad, Execution::Sequential).is_err());
}

#[test]
fn single_size_single_trial() {
    let spec = DiscreteSynthSpec::default();
    let (d, _) = gen_discrete(&spec, 500, 8).unwrap();
    let cfg = CurveConfig {
        n_grid: vec![100],
        trials: 1,
        holdout: 0.25,
        kinds: vec![CostKind::ZeroOne],
        threshold: 0.5,
        seed: 1,
    };
    let e = run_curve_experiment(
        &LearnerSpec::new(LearnerParams::knn(5), 0),
        &d,
        &cfg,
        Execution::Sequential,
    )
    .unwrap();
    assert_eq!(e.cells.len(), 2);
    assert!(e.cells.iter().all(|c| c.cost.is_some()));
}

#[test]
fn measured_curve_tracks_large_sample_oracle() {
    // A depth-4 tree on the discrete domain: its expected test error at n
    // is estimated independently by a large-sample simulation.
    let spec = DiscreteSynthSpec::default();
    let (d, _) = gen_discrete(&spec, 5000, 3).unwrap();
    let learner = LearnerSpec::new(LearnerParams::tree(4), 0);
    let cfg = CurveConfig {
        n_grid: vec![200],
        trials: 40,
        holdout: 0.2,
        kinds: vec![CostKind::ZeroOne],
        threshold: 0.5,
        seed: 5,
    };
    let e = run_curve_experiment(&learner, &d, &cfg, Execution::Parallel).unwrap();
    let measured = e.group_curve(0, CostKind::ZeroOne)[0].clone();
    // oracle: train on fresh draws, evaluate on a large fresh sample
    let (big, _) = gen_discrete(&spec, 50_000, 99).unwrap();
    let big0 = big.filter_group(0);
    let mut errs = Vec::new();
    for t in 0..40u64 {
        let (train, _) = gen_discrete(&spec, 200, 500 + t).unwrap();
        let m = fairaudit::learners::train(&learner, &train).unwrap();
        let s = m.predict_dataset(&big0).unwrap();
        let err = s
            .iter()
            .zip(big0.outcome())
            .filter(|(s, y)| f64::from(**s >= 0.5) != **y)
            .count() as f64
            / big0.len() as f64;
        errs.push(err);
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    let sd = (errs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (errs.len() - 1) as f64).sqrt();
    let se = (measured.stderr.powi(2) + sd * sd / errs.len() as f64).sqrt();
    assert!(
        (measured.mean - mean).abs() < 4.0 * se + 0.01,
        "{} vs {mean}",
        measured.mean
    );
}
