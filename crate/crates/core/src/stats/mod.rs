//! Significance tests for group cost gaps, plus one-way ANOVA and pairwise
//! Welch tests with Holm correction for more than two groups.

pub mod dist;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::costs::{self, max_min_gap, CostKind, PredictionSet};
use crate::data::{bootstrap_indices, Dataset};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::seed;

/// Default significance level.
pub const DEFAULT_LEVEL: f64 = 0.05;

/// Below this many samples per group the normal approximation is flagged.
pub const SMALL_SAMPLE: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub level: f64,
    pub reject: bool,
    #[serde(default)]
    pub aux: BTreeMap<String, f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TestResult {
    fn new(test: &str, statistic: f64, p_value: f64, level: f64) -> Self {
        let p_value = p_value.clamp(0.0, 1.0);
        TestResult {
            test: test.to_string(),
            statistic,
            p_value,
            level,
            reject: p_value < level,
            aux: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn with_aux(mut self, key: &str, value: f64) -> Self {
        self.aux.insert(key.to_string(), value);
        self
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("significance level {level} not in (0, 1)")))
    }
}

fn check_pair(d: &Dataset, (a, b): (usize, usize)) -> Result<()> {
    if a == b {
        return Err(Error::InsufficientGroups { needed: 2, found: 1 });
    }
    if a >= d.n_groups() || b >= d.n_groups() {
        return Err(invalid(format!("group pair ({a}, {b}) out of range")));
    }
    Ok(())
}

/// z statistic and two-tailed p for a difference with a given squared
/// standard error. A zero standard error gives p = 1 for a zero difference
/// and p = 0 otherwise.
fn z_and_p(diff: f64, var: f64) -> (f64, f64) {
    if var > 0.0 {
        let z = diff / var.sqrt();
        (z, dist::normal_two_tailed(z))
    } else if diff == 0.0 {
        (0.0, 1.0)
    } else {
        (diff.signum() * f64::INFINITY, 0.0)
    }
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Two-tailed z-test of `gamma_a - gamma_b = 0` under the normal
/// approximation with unbiased per-group loss variances.
pub fn gamma_z_test(
    preds: &PredictionSet,
    d: &Dataset,
    kind: CostKind,
    pair: (usize, usize),
    level: f64,
) -> Result<TestResult> {
    check_level(level)?;
    check_pair(d, pair)?;
    let a = costs::group_cost(preds, d, kind, pair.0)?;
    let b = costs::group_cost(preds, d, kind, pair.1)?;
    let diff = a.cost - b.cost;
    let var = a.variance / a.count as f64 + b.variance / b.count as f64;
    let (z, p) = z_and_p(diff, var);
    let mut r = TestResult::new("gamma_z_test", z, p, level)
        .with_aux("cost_a", a.cost)
        .with_aux("cost_b", b.cost)
        .with_aux("count_a", a.count as f64)
        .with_aux("count_b", b.count as f64)
        .with_aux("var_a", a.variance)
        .with_aux("var_b", b.variance)
        .with_aux("gap", diff.abs());
    if a.count < SMALL_SAMPLE || b.count < SMALL_SAMPLE {
        r.warnings.push(format!(
            "small sample ({} / {} rows): normal approximation may be poor",
            a.count, b.count
        ));
    }
    Ok(r)
}

/// Test `H0: Gamma(A) = Gamma(B)` for two prediction sets on the same data.
///
/// For `s` in {+1, -1}, `Z_s = s (gA_a - gA_b) - (gB_a - gB_b)`. Each `Z_s`
/// is standardized with per-row paired contributions `s lA_i - lB_i`, since
/// both models are evaluated on the same rows. `H0` is rejected only when
/// both are significant; the reported statistic is `min |Z_s|` and the
/// p-value the larger of the two.
pub fn compare_discrimination_test(
    preds_a: &PredictionSet,
    preds_b: &PredictionSet,
    d: &Dataset,
    kind: CostKind,
    pair: (usize, usize),
    level: f64,
) -> Result<TestResult> {
    check_level(level)?;
    check_pair(d, pair)?;
    let la = costs::per_sample_losses(preds_a, d, kind)?;
    let lb = costs::per_sample_losses(preds_b, d, kind)?;
    let mut out = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        let contrib = |g: usize| -> Vec<f64> {
            (0..d.len())
                .filter(|&i| d.group()[i] == g)
                .filter_map(|i| Some(sign * la[i]? - lb[i]?))
                .collect()
        };
        let (u, v) = (contrib(pair.0), contrib(pair.1));
        if u.is_empty() || v.is_empty() {
            return Err(Error::EmptySubset(format!(
                "no rows for {kind} in one of groups {} / {}",
                pair.0, pair.1
            )));
        }
        let (mu, vu) = mean_var(&u);
        let (mv, vv) = mean_var(&v);
        let z_raw = mu - mv;
        let var = vu / u.len() as f64 + vv / v.len() as f64;
        let (z, p) = z_and_p(z_raw, var);
        out.push((z_raw, z, p));
    }
    let (zp_raw, zp, pp) = out[0];
    let (zm_raw, zm, pm) = out[1];
    let p = pp.max(pm);
    let mut r = TestResult::new("compare_discrimination_test", zp_raw.abs().min(zm_raw.abs()), p, level)
        .with_aux("z_plus", zp_raw)
        .with_aux("z_minus", zm_raw)
        .with_aux("z_plus_std", zp)
        .with_aux("z_minus_std", zm)
        .with_aux("p_plus", pp)
        .with_aux("p_minus", pm);
    r.reject = pp < level && pm < level;
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub kind: CostKind,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    /// Significance level; the interval covers `1 - level`.
    pub level: f64,
    pub reps: usize,
    /// Replicates skipped because a group was missing from the resample.
    pub skipped: usize,
    pub standard_error: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct BootstrapConfig {
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub exec: Execution,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the discrimination level over
/// resamples of the evaluation rows.
pub fn bootstrap_gamma_ci(
    preds: &PredictionSet,
    d: &Dataset,
    kind: CostKind,
    cfg: BootstrapConfig,
) -> Result<BootstrapInterval> {
    check_level(cfg.level)?;
    if cfg.reps < 100 {
        return Err(invalid(format!("bootstrap needs at least 100 reps, got {}", cfg.reps)));
    }
    let report = costs::discrimination_level(preds, d, kind)?;
    let groups: Vec<usize> = report.groups.iter().map(|e| e.group).collect();
    let losses = costs::per_sample_losses(preds, d, kind)?;
    let n = d.len();
    let g = d.n_groups();
    let gammas: Vec<Option<f64>> = exec::map_indices(cfg.exec, cfg.reps, |r| {
        let idx = bootstrap_indices(n, n, seed::derive(cfg.seed, "bootstrap", r as u64)).expect("n >= 1");
        let mut sum = vec![0.0; g];
        let mut cnt = vec![0usize; g];
        for i in idx {
            if let Some(l) = losses[i] {
                sum[d.group()[i]] += l;
                cnt[d.group()[i]] += 1;
            }
        }
        if groups.iter().any(|&a| cnt[a] == 0) {
            return None;
        }
        Some(max_min_gap(groups.iter().map(|&a| sum[a] / cnt[a] as f64)))
    });
    let mut vals: Vec<f64> = gammas.iter().filter_map(|v| *v).collect();
    let skipped = cfg.reps - vals.len();
    if skipped * 10 > cfg.reps {
        return Err(Error::EmptySubset(format!(
            "{skipped} of {} bootstrap replicates lacked a group",
            cfg.reps
        )));
    }
    vals.sort_by(f64::total_cmp);
    let (_, var) = mean_var(&vals);
    Ok(BootstrapInterval {
        kind,
        point: report.gap,
        lower: quantile_sorted(&vals, cfg.level / 2.0),
        upper: quantile_sorted(&vals, 1.0 - cfg.level / 2.0),
        level: cfg.level,
        reps: cfg.reps,
        skipped,
        standard_error: var.sqrt(),
    })
}

/// One-way ANOVA F test across groups.
pub fn anova_f(groups: &[Vec<f64>], level: f64) -> Result<TestResult> {
    check_level(level)?;
    if groups.len() < 2 {
        return Err(Error::InsufficientGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(invalid(format!("group {i} has fewer than 2 samples")));
    }
    let k = groups.len() as f64;
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let m = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (m - grand) * (m - grand);
        ssw += g.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    }
    let (df1, df2) = (k - 1.0, n - k);
    let (f, p) = if ssw > 0.0 {
        let f = (ssb / df1) / (ssw / df2);
        (f, dist::f_sf(f, df1, df2))
    } else if ssb <= 1e-300 {
        (0.0, 1.0)
    } else {
        (f64::INFINITY, 0.0)
    };
    Ok(TestResult::new("anova_f", f, p, level)
        .with_aux("df_between", df1)
        .with_aux("df_within", df2)
        .with_aux("ss_between", ssb)
        .with_aux("ss_within", ssw))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: usize,
    pub b: usize,
    /// Holm-adjusted result; `aux["raw_p"]` holds the unadjusted p-value.
    pub result: TestResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub pairs: Vec<PairTest>,
}

impl PairwiseComparison {
    pub fn get(&self, a: usize, b: usize) -> Option<&TestResult> {
        let (a, b) = (a.min(b), a.max(b));
        self.pairs.iter().find(|p| p.a == a && p.b == b).map(|p| &p.result)
    }

    pub fn n_rejected(&self) -> usize {
        self.pairs.iter().filter(|p| p.result.reject).count()
    }
}

/// Welch two-sample t-test: (t, Welch–Satterthwaite df, two-tailed p).
pub fn welch_t(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let (sx, sy) = (vx / x.len() as f64, vy / y.len() as f64);
    let se2 = sx + sy;
    if se2 <= 0.0 {
        return if mx == my {
            (0.0, f64::NAN, 1.0)
        } else {
            ((mx - my).signum() * f64::INFINITY, f64::NAN, 0.0)
        };
    }
    let t = (mx - my) / se2.sqrt();
    let df = se2 * se2 / (sx * sx / (x.len() as f64 - 1.0) + sy * sy / (y.len() as f64 - 1.0));
    (t, df, dist::student_t_two_tailed(t, df))
}

/// Holm step-down adjusted p-values (same order as input).
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        let v = ((m - rank) as f64 * p[i]).min(1.0);
        running = running.max(v);
        adjusted[i] = running;
    }
    adjusted
}

/// Welch t-tests for every pair of groups with Holm correction.
pub fn pairwise_welch_holm(groups: &[Vec<f64>], level: f64) -> Result<PairwiseComparison> {
    check_level(level)?;
    if groups.len() < 2 {
        return Err(Error::InsufficientGroups {
            needed: 2,
            found: groups.len(),
        });
    }
    if let Some(i) = groups.iter().position(|g| g.len() < 2) {
        return Err(invalid(format!("group {i} has fewer than 2 samples")));
    }
    let mut raw = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let (t, df, p) = welch_t(&groups[a], &groups[b]);
            raw.push((a, b, t, df, p));
        }
    }
    let adjusted = holm_adjust(&raw.iter().map(|r| r.4).collect::<Vec<_>>());
    let pairs = raw
        .into_iter()
        .zip(adjusted)
        .map(|((a, b, t, df, p), adj)| PairTest {
            a,
            b,
            result: TestResult::new("welch_t_holm", t, adj, level)
                .with_aux("raw_p", p)
                .with_aux("df", if df.is_nan() { 0.0 } else { df }),
        })
        .collect();
    Ok(PairwiseComparison { pairs })
}
