//! Learning curves: repeated subsampling experiments, inverse power-law
//! fits `alpha * n^-beta + delta`, and where two such curves cross.

use serde::{Deserialize, Serialize};

use crate::costs::{self, max_min_gap, CostKind, PredictionSet};
use crate::data::{split_indices, subsample_indices, Dataset};
use crate::error::{invalid, Error, Result};
use crate::exec::{self, Execution};
use crate::learners::{self, LearnerSpec};
use crate::seed;

/// Smallest accepted held-out fraction.
pub const MIN_HOLDOUT: f64 = 0.2;
pub const BETA_RANGE: (f64, f64) = (0.01, 3.0);
const BETA_GRID: usize = 200;
/// Extrapolating beyond this multiple of the largest fitted size is flagged.
pub const EXTRAPOLATION_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub holdout: f64,
    pub kinds: Vec<CostKind>,
    pub threshold: f64,
    pub seed: u64,
}

/// Cost of one group for one kind, at one training size and trial. `None`
/// when the group has no rows of the conditioning class in that test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveCell {
    pub n: usize,
    pub trial: usize,
    pub group: usize,
    pub kind: CostKind,
    pub cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveExperiment {
    pub learner: LearnerSpec,
    pub config: CurveConfig,
    pub group_labels: Vec<String>,
    pub cells: Vec<CurveCell>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let se = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        0.0
    };
    (mean, se)
}

impl CurveExperiment {
    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    /// Mean cost per training size for one group and kind.
    pub fn group_curve(&self, group: usize, kind: CostKind) -> Vec<CurvePoint> {
        self.config
            .n_grid
            .iter()
            .filter_map(|&n| {
                let xs: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.n == n && c.group == group && c.kind == kind)
                    .filter_map(|c| c.cost)
                    .collect();
                (!xs.is_empty()).then(|| {
                    let (mean, stderr) = mean_stderr(&xs);
                    CurvePoint {
                        n,
                        mean,
                        stderr,
                        count: xs.len(),
                    }
                })
            })
            .collect()
    }

    /// Discrimination level per training size: the per-trial `max - min`
    /// gap over groups, averaged over trials where every group is present.
    pub fn gamma_curve(&self, kind: CostKind) -> Vec<CurvePoint> {
        let g = self.n_groups();
        self.config
            .n_grid
            .iter()
            .filter_map(|&n| {
                let xs: Vec<f64> = (0..self.config.trials)
                    .filter_map(|t| {
                        let costs: Option<Vec<f64>> = (0..g)
                            .map(|a| {
                                self.cells
                                    .iter()
                                    .find(|c| c.n == n && c.trial == t && c.group == a && c.kind == kind)
                                    .and_then(|c| c.cost)
                            })
                            .collect();
                        costs.map(|c| max_min_gap(c.into_iter()))
                    })
                    .collect();
                (!xs.is_empty()).then(|| {
                    let (mean, stderr) = mean_stderr(&xs);
                    CurvePoint {
                        n,
                        mean,
                        stderr,
                        count: xs.len(),
                    }
                })
            })
            .collect()
    }

    /// Power-law fit for one group and kind, weighted by trial counts.
    pub fn fit(&self, group: usize, kind: CostKind) -> Result<PowerLawFit> {
        let pts: Vec<(f64, f64, f64)> = self
            .group_curve(group, kind)
            .iter()
            .map(|p| (p.n as f64, p.mean, p.count as f64))
            .collect();
        let mut f = fit_power_law(&pts)?;
        f.group = Some(group);
        f.kind = Some(kind);
        Ok(f)
    }
}

/// For every size in the grid and every trial: hold out a test split,
/// subsample `n` training rows from the rest, train and record each
/// group's cost of each kind on the test split.
pub fn run_curve_experiment(
    spec: &LearnerSpec,
    d: &Dataset,
    cfg: &CurveConfig,
    exec: Execution,
) -> Result<CurveExperiment> {
    if cfg.trials == 0 {
        return Err(invalid("curve experiment needs at least one trial"));
    }
    if cfg.n_grid.is_empty() || cfg.n_grid.windows(2).any(|w| w[0] >= w[1]) || cfg.n_grid[0] == 0 {
        return Err(invalid("training-size grid must be positive and strictly increasing"));
    }
    if !(cfg.holdout >= MIN_HOLDOUT && cfg.holdout < 1.0) {
        return Err(invalid(format!(
            "holdout fraction {} not in [{MIN_HOLDOUT}, 1)",
            cfg.holdout
        )));
    }
    if cfg.kinds.is_empty() {
        return Err(invalid("no cost kinds requested"));
    }
    for k in &cfg.kinds {
        k.check_task(d.task())?;
    }
    let n_test = ((d.len() as f64) * cfg.holdout).round() as usize;
    let budget = d.len() - n_test;
    let n_max = *cfg.n_grid.last().expect("non-empty");
    if n_max > budget {
        return Err(invalid(format!(
            "largest training size {n_max} exceeds the {budget} rows left after holding out {n_test}"
        )));
    }
    let jobs = cfg.n_grid.len() * cfg.trials;
    let per_job = exec::try_map_indices(exec, jobs, |job| {
        let (si, t) = (job / cfg.trials, job % cfg.trials);
        let n = cfg.n_grid[si];
        let trial_seed = seed::derive(cfg.seed, "curve-trial", t as u64);
        let (train_rows, test_rows) = split_indices(d, cfg.holdout, seed::derive(trial_seed, "split", 0), false)?;
        let sizes_seed = seed::derive(trial_seed, "size", si as u64);
        let pick = subsample_indices(train_rows.len(), n, seed::derive(sizes_seed, "rows", 0))?;
        let rows: Vec<usize> = pick.iter().map(|&i| train_rows[i]).collect();
        let train = d.select(&rows);
        let test = d.select(&test_rows);
        let model = learners::train(&spec.with_seed(seed::derive(sizes_seed, "learner", 0)), &train)?;
        let scores = model.predict_dataset(&test)?;
        let mut cells = Vec::new();
        for &kind in &cfg.kinds {
            let preds = if kind.uses_scores() || d.task() == crate::data::Task::Regression {
                PredictionSet::from_values(scores.clone())
            } else {
                PredictionSet::from_scores(scores.clone(), cfg.threshold)?
            };
            let losses = costs::per_sample_losses(&preds, &test, kind)?;
            for a in 0..d.n_groups() {
                cells.push(CurveCell {
                    n,
                    trial: t,
                    group: a,
                    kind,
                    cost: costs::group_estimate(&losses, &test, a).map(|e| e.cost),
                });
            }
        }
        Ok(cells)
    })?;
    Ok(CurveExperiment {
        learner: spec.clone(),
        config: cfg.clone(),
        group_labels: d.group_labels().to_vec(),
        cells: per_job.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
}

impl PowerLaw {
    pub fn new(alpha: f64, beta: f64, delta: f64) -> Self {
        PowerLaw { alpha, beta, delta }
    }

    pub fn eval(&self, n: f64) -> f64 {
        self.alpha * n.powf(-self.beta) + self.delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub curve: PowerLaw,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub group: Option<usize>,
    pub kind: Option<CostKind>,
}

impl PowerLawFit {
    pub fn eval(&self, n: f64) -> f64 {
        self.curve.eval(n)
    }
}

struct Weighted<'a> {
    n: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
}

impl Weighted<'_> {
    fn rss(&self, alpha: f64, beta: f64, delta: f64) -> f64 {
        (0..self.n.len())
            .map(|i| {
                let r = self.y[i] - alpha * self.n[i].powf(-beta) - delta;
                self.w[i] * r * r
            })
            .sum()
    }

    /// Best `(alpha, delta) >= 0` for fixed `beta`, as `(rss, alpha, delta)`.
    fn profile(&self, beta: f64) -> (f64, f64, f64) {
        let (mut sw, mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..self.n.len() {
            let (u, y, w) = (self.n[i].powf(-beta), self.y[i], self.w[i]);
            sw += w;
            su += w * u;
            suu += w * u * u;
            sy += w * y;
            suy += w * u * y;
        }
        let mut candidates = vec![(0.0, 0.0), (0.0, (sy / sw).max(0.0))];
        if suu > 0.0 {
            candidates.push(((suy / suu).max(0.0), 0.0));
        }
        let det = sw * suu - su * su;
        if det > 1e-14 * sw * suu {
            let alpha = (sw * suy - su * sy) / det;
            let delta = (suu * sy - su * suy) / det;
            if alpha >= 0.0 && delta >= 0.0 {
                candidates.push((alpha, delta));
            }
        }
        candidates
            .into_iter()
            .map(|(a, d)| (self.rss(a, beta, d), a, d))
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .expect("at least one candidate")
    }
}

/// Weighted least-squares fit of `alpha n^-beta + delta` with
/// `alpha, delta >= 0` and `beta` in [`BETA_RANGE`]. Points are
/// `(n, mean cost, weight)`.
///
/// The model is linear in `(alpha, delta)` for fixed `beta`, so `beta` is
/// searched on a log-spaced grid and refined by golden-section search.
pub fn fit_power_law(points: &[(f64, f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(invalid(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points
        .iter()
        .any(|&(n, y, w)| !(n > 0.0 && n.is_finite() && y.is_finite() && w > 0.0 && w.is_finite()))
    {
        return Err(invalid("power-law points need positive n and weight and finite cost"));
    }
    let n: Vec<f64> = points.iter().map(|p| p.0).collect();
    let mut distinct = n.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(invalid("power-law fit needs at least 3 distinct sizes"));
    }
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let w: Vec<f64> = points.iter().map(|p| p.2).collect();
    let data = Weighted { n: &n, y: &y, w: &w };

    let (lo, hi) = (BETA_RANGE.0.ln(), BETA_RANGE.1.ln());
    let grid: Vec<f64> = (0..BETA_GRID)
        .map(|i| {
            (lo + (hi - lo) * i as f64 / (BETA_GRID - 1) as f64)
                .exp()
                .clamp(BETA_RANGE.0, BETA_RANGE.1)
        })
        .collect();
    let scores: Vec<f64> = grid.iter().map(|&b| data.profile(b).0).collect();
    let best = (0..BETA_GRID)
        .min_by(|&i, &j| scores[i].total_cmp(&scores[j]))
        .expect("non-empty grid");
    let mut a = grid[best.saturating_sub(1)].ln();
    let mut b = grid[(best + 1).min(BETA_GRID - 1)].ln();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let f = |lb: f64| data.profile(lb.exp()).0;
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    for _ in 0..200 {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = f(e);
        }
    }
    let mut candidates = vec![(grid[best], scores[best])];
    let refined = (0.5 * (a + b)).exp().clamp(BETA_RANGE.0, BETA_RANGE.1);
    candidates.push((refined, data.profile(refined).0));
    let (beta, _) = candidates
        .into_iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("non-empty");
    let (rss, alpha, delta) = data.profile(beta);
    Ok(PowerLawFit {
        curve: PowerLaw { alpha, beta, delta },
        rss,
        n_min: distinct[0],
        n_max: *distinct.last().expect("non-empty"),
        group: None,
        kind: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub horizon: Horizon,
    pub gamma: f64,
    /// Set when the horizon lies beyond `EXTRAPOLATION_FACTOR * n_max`.
    pub beyond_range: bool,
}

/// `|f0(n) - f1(n)|`, or `|delta0 - delta1|` at infinity.
pub fn extrapolate_gamma(f0: &PowerLawFit, f1: &PowerLawFit, horizon: Horizon) -> Result<Extrapolation> {
    if let (Some(k0), Some(k1)) = (f0.kind, f1.kind) {
        if k0 != k1 {
            return Err(invalid(format!("cannot compare a {k0} curve with a {k1} curve")));
        }
    }
    let n_max = f0.n_max.max(f1.n_max);
    let (gamma, beyond_range) = match horizon {
        Horizon::Finite(n) => {
            if n.is_nan() || n <= 0.0 {
                return Err(invalid(format!("extrapolation size {n} must be positive")));
            }
            ((f0.eval(n) - f1.eval(n)).abs(), n > EXTRAPOLATION_FACTOR * n_max)
        }
        Horizon::Infinite => ((f0.curve.delta - f1.curve.delta).abs(), true),
    };
    Ok(Extrapolation {
        horizon,
        gamma,
        beyond_range,
    })
}

/// Stationary point of `f - g` for `f = a x^-b + c`, `g = d x^-e + h`.
///
/// For `b != e` this is `(ba / (de))^(1/(b-e))`. For `b == e` the
/// difference is monotone and the result is its zero
/// `((c - h) / (d - a))^(-1/b)` when that exists.
pub fn power_law_critical_point(f: &PowerLaw, g: &PowerLaw) -> Option<f64> {
    let (a, b, c) = (f.alpha, f.beta, f.delta);
    let (d, e, h) = (g.alpha, g.beta, g.delta);
    let x = if b != e {
        if a <= 0.0 || d <= 0.0 {
            return None;
        }
        (b * a / (d * e)).powf(1.0 / (b - e))
    } else {
        let ratio = (c - h) / (d - a);
        if d == a || ratio.is_nan() || ratio <= 0.0 {
            return None;
        }
        ratio.powf(-1.0 / b)
    };
    (x.is_finite() && x > 0.0).then_some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crossings {
    pub roots: Vec<f64>,
    /// The curves are identical.
    pub degenerate: bool,
}

fn bisect(h: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut h_lo = h(lo);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 1e-13 * mid.abs() || mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            return mid;
        }
        if (hm > 0.0) == (h_lo > 0.0) {
            lo = mid;
            h_lo = hm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Points in `[lo, hi]` where two power-law curves cross. The difference
/// changes monotonicity at most once, so there are at most two.
pub fn power_law_crossings(f: &PowerLaw, g: &PowerLaw, lo: f64, hi: f64) -> Result<Crossings> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(format!("invalid crossing domain [{lo}, {hi}]")));
    }
    let same =
        |p: &PowerLaw, q: &PowerLaw| p.delta == q.delta && (p.alpha == q.alpha && (p.beta == q.beta || p.alpha == 0.0));
    if same(f, g) {
        return Ok(Crossings {
            roots: Vec::new(),
            degenerate: true,
        });
    }
    let h = |x: f64| f.eval(x) - g.eval(x);
    let mut knots = vec![lo];
    if f.beta != g.beta {
        if let Some(x) = power_law_critical_point(f, g) {
            if x > lo && x < hi {
                knots.push(x);
            }
        }
    }
    knots.push(hi);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (ha, hb) = (h(a), h(b));
        let root = if ha == 0.0 {
            Some(a)
        } else if hb == 0.0 {
            Some(b)
        } else if (ha > 0.0) != (hb > 0.0) {
            Some(bisect(h, a, b))
        } else {
            None
        };
        if let Some(r) = root {
            if roots.last().is_none_or(|&p| (r - p).abs() > 1e-12 * r) {
                roots.push(r);
            }
        }
    }
    debug_assert!(roots.len() <= 2);
    Ok(Crossings {
        roots,
        degenerate: false,
    })
}

/// Group curves are fitted separately; this pairs two fits for reporting.
pub fn fit_pair(exp: &CurveExperiment, kind: CostKind, groups: (usize, usize)) -> Result<(PowerLawFit, PowerLawFit)> {
    if groups.0 >= exp.n_groups() || groups.1 >= exp.n_groups() {
        return Err(Error::InsufficientGroups {
            needed: groups.0.max(groups.1) + 1,
            found: exp.n_groups(),
        });
    }
    Ok((exp.fit(groups.0, kind)?, exp.fit(groups.1, kind)?))
}
