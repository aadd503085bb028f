//! The split-sample test, p-value aggregation and test inversion.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::direction::{compute_weights, resolve_jstar, solve_direction, solve_prelim, JStar, MethodChoice};
use crate::matrix::{singular_values, DEFAULT_RANK_TOL};
use crate::moments::{estimate_with, sigma_at, Dataset, EstimationResult, MomentModel, SigmaEstimate};
use crate::normal::{normal_cdf, normal_quantile};
use crate::rng::{self, derive_seed};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n: usize,
    pub fraction: f64,
    pub seed: u64,
    /// Sorted, zero-based.
    pub indices_1: Vec<usize>,
    pub indices_2: Vec<usize>,
}

pub fn split(n: usize, fraction: f64, seed: u64) -> Result<SplitPlan> {
    if n < 4 {
        return Err(Error::Data(format!("need at least 4 observations to split, got {n}")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n1 = ((fraction * n as f64).round() as usize).clamp(2, n - 2);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));
    let mut indices_1 = perm[..n1].to_vec();
    let mut indices_2 = perm[n1..].to_vec();
    indices_1.sort_unstable();
    indices_2.sort_unstable();
    Ok(SplitPlan { n, fraction, seed, indices_1, indices_2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub t_n: f64,
    /// Column attaining the minimum; `None` when `y_hat = 0`.
    pub argmin_j: Option<usize>,
    /// Studentised value per column in `J*`, in `J*` order.
    pub per_j: Vec<f64>,
    /// Second-split standard errors for every column `0..=d1`.
    pub sigma: Vec<SigmaEstimate>,
}

/// `min_{j in J*} sqrt(n2) b_j' M0 y / sigma_j(y)` on the second split.
pub fn test_statistic(est2: &EstimationResult, y_hat: &Vector, js: &JStar, sigma_floor: f64) -> Result<Statistic> {
    if y_hat.len() != est2.p() {
        return Err(Error::Dimension(format!("y has length {}, expected {}", y_hat.len(), est2.p())));
    }
    if js.j_star.is_empty() || js.j_star.iter().any(|&j| j > est2.d1()) {
        return Err(Error::InvalidArgument("J* is empty or refers to a missing column".into()));
    }
    let sigma = (0..=est2.d1())
        .map(|j| sigma_at(est2, j, y_hat, sigma_floor))
        .collect::<Result<Vec<_>>>()?;
    if y_hat.iter().all(|&v| v == 0.0) {
        return Ok(Statistic { t_n: 0.0, argmin_j: None, per_j: vec![0.0; js.j_star.len()], sigma });
    }
    let s = (est2.n as f64).sqrt();
    let per_j: Vec<f64> = js
        .j_star
        .iter()
        .map(|&j| s * est2.projected_row(j).dot(y_hat) / sigma[j].sigma)
        .collect();
    let (k, t_n) = per_j
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    Ok(Statistic { t_n, argmin_j: Some(js.j_star[k]), per_j, sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// `min(1, 2 mean(p))`.
    #[default]
    TwiceAverage,
    /// Reserved; not implemented.
    ExchangeableImproved,
}

pub fn aggregate_pvalues(p: &[f64], combiner: Combiner) -> Result<f64> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("no p-values to aggregate".into()));
    }
    if let Some(v) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("p-value {v} outside [0, 1]")));
    }
    match combiner {
        Combiner::TwiceAverage => Ok((2.0 * p.iter().sum::<f64>() / p.len() as f64).min(1.0)),
        Combiner::ExchangeableImproved => Err(Error::UnsupportedCombiner(
            "the exchangeable improvement of twice-the-average is not implemented".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOptions {
    pub split_fraction: f64,
    pub sigma_floor: f64,
    /// Do not reject when the smallest singular value of the first-split
    /// `A0` is at most this value. `None` disables the gate.
    pub rank_tau: Option<f64>,
    pub rank_tol: f64,
    /// Number of independent splits; more than one aggregates p-values.
    pub splits: usize,
    pub combiner: Combiner,
}

impl Default for TestOptions {
    fn default() -> Self {
        Self {
            split_fraction: 0.5,
            sigma_floor: 1e-6,
            rank_tau: None,
            rank_tol: DEFAULT_RANK_TOL,
            splits: 1,
            combiner: Combiner::TwiceAverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub t_n: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub critical_value: f64,
    pub y_hat: Vec<f64>,
    pub direction_feasible: bool,
    /// Zero-based column attaining the minimum, if any.
    pub argmin_j: Option<usize>,
    /// Second-split standard errors for columns `0..=d1`.
    pub sigma_values: Vec<f64>,
    /// Floored standard errors across both splits.
    pub truncation_hits: usize,
    pub rank_gate_triggered: bool,
    pub t_star: Option<f64>,
    pub j_star_set: Vec<usize>,
    pub weights: Vec<f64>,
    pub c_n: Option<f64>,
    pub n1: usize,
    pub n2: usize,
    pub seed: u64,
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    normal_quantile(1.0 - alpha)
}

pub fn p_value(t_n: f64) -> f64 {
    normal_cdf(-t_n)
}

/// Smallest of the `d0` singular values of `a0`; zero when `d0 > p`.
fn smallest_singular_value(a0: &crate::Matrix) -> Result<f64> {
    if a0.ncols() > a0.nrows() {
        return Ok(0.0);
    }
    Ok(singular_values(a0)?.iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn run_test(
    model: &MomentModel,
    data: &Dataset,
    method: &MethodChoice,
    alpha: f64,
    seed: u64,
    opts: &TestOptions,
) -> Result<TestOutcome> {
    let z = check_alpha(alpha)?;
    let plan = split(data.n(), opts.split_fraction, seed)?;
    let js = resolve_jstar(model, &method.method)?;
    let est1 = estimate_with(model, &data.select_rows(&plan.indices_1), opts.rank_tol)
        .map_err(|e| e.context("first split"))?;
    let est2 = estimate_with(model, &data.select_rows(&plan.indices_2), opts.rank_tol)
        .map_err(|e| e.context("second split"))?;

    let mut out = TestOutcome {
        t_n: 0.0,
        p_value: 0.5,
        reject: false,
        alpha,
        critical_value: z,
        y_hat: vec![0.0; model.p()],
        direction_feasible: false,
        argmin_j: None,
        sigma_values: Vec::new(),
        truncation_hits: 0,
        rank_gate_triggered: false,
        t_star: None,
        j_star_set: js.j_star.clone(),
        weights: Vec::new(),
        c_n: None,
        n1: plan.indices_1.len(),
        n2: plan.indices_2.len(),
        seed,
    };

    if let (Some(tau), Some(a0)) = (opts.rank_tau, &est1.a0_hat) {
        if smallest_singular_value(a0)? <= tau {
            out.rank_gate_triggered = true;
            return Ok(out);
        }
    }

    let y0 = solve_prelim(&est1, &js)?;
    let weights = compute_weights(&est1, &y0, &js, method.cn, opts.sigma_floor)?;
    let dir = solve_direction(&est1, &weights, &js)?;
    let y = dir.y();
    let stat = test_statistic(&est2, &y, &js, opts.sigma_floor)?;

    out.truncation_hits = weights.sigma.iter().chain(&stat.sigma).filter(|s| s.truncated).count();
    out.t_n = stat.t_n;
    out.p_value = p_value(stat.t_n);
    out.reject = stat.t_n > z;
    out.y_hat = dir.y_hat;
    out.direction_feasible = dir.feasible;
    out.argmin_j = stat.argmin_j;
    out.sigma_values = stat.sigma.iter().map(|s| s.sigma).collect();
    out.t_star = dir.t_star;
    out.weights = weights.omega;
    out.c_n = weights.c_n;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSplitOutcome {
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub combiner: Combiner,
    pub splits: Vec<TestOutcome>,
}

/// Seed of split `m` among `M`; a single split uses `seed` itself.
pub fn split_seed(seed: u64, m: usize, total: usize) -> u64 {
    if total == 1 {
        seed
    } else {
        derive_seed(seed, &[m as u64])
    }
}

/// Runs `opts.splits` independent splits. With one split the p-value and
/// decision are those of [`run_test`]; otherwise the aggregated p-value is
/// compared with `alpha`.
pub fn run_multi_split(
    model: &MomentModel,
    data: &Dataset,
    method: &MethodChoice,
    alpha: f64,
    seed: u64,
    opts: &TestOptions,
) -> Result<MultiSplitOutcome> {
    if opts.splits == 0 {
        return Err(Error::InvalidArgument("need at least one split".into()));
    }
    let splits = (0..opts.splits)
        .map(|m| run_test(model, data, method, alpha, split_seed(seed, m, opts.splits), opts))
        .collect::<Result<Vec<_>>>()?;
    let (p_value, reject) = if splits.len() == 1 {
        (splits[0].p_value, splits[0].reject)
    } else {
        let ps: Vec<f64> = splits.iter().map(|s| s.p_value).collect();
        let p = aggregate_pvalues(&ps, opts.combiner)?;
        (p, p < alpha)
    };
    Ok(MultiSplitOutcome { p_value, reject, alpha, combiner: opts.combiner, splits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Same split at every hypothesised value.
    #[default]
    Shared,
    /// Split seed derived from the hypothesised value.
    PerPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub alpha: f64,
    pub grid: Vec<f64>,
    pub p_values: Vec<f64>,
    pub accepted: Vec<bool>,
    /// Smallest and largest accepted values, refined by bisection at the
    /// outer accept/reject transitions when requested.
    pub interval_hull: Option<(f64, f64)>,
    /// Whether the accepted grid points form one contiguous run.
    pub contiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertOptions {
    pub seed_policy: SeedPolicy,
    pub refine: bool,
    /// Bisection stops when the bracket is narrower than the local grid
    /// step divided by this.
    pub refine_divisor: f64,
}

impl Default for InvertOptions {
    fn default() -> Self {
        Self { seed_policy: SeedPolicy::Shared, refine: true, refine_divisor: 256.0 }
    }
}

pub fn invert_ci<F>(
    family: F,
    data: &Dataset,
    method: &MethodChoice,
    alpha: f64,
    grid: &[f64],
    seed: u64,
    test_opts: &TestOptions,
    inv_opts: &InvertOptions,
) -> Result<ConfidenceSet>
where
    F: Fn(f64) -> Result<MomentModel> + Sync,
{
    check_alpha(alpha)?;
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
    }
    let p_at = |v: f64| -> Result<f64> {
        let s = match inv_opts.seed_policy {
            SeedPolicy::Shared => seed,
            SeedPolicy::PerPoint => derive_seed(seed, &[v.to_bits()]),
        };
        let model = family(v).map_err(|e| e.context(format!("null value {v}")))?;
        run_multi_split(&model, data, method, alpha, s, test_opts)
            .map(|o| o.p_value)
            .map_err(|e| e.context(format!("null value {v}")))
    };
    let p_values = grid.par_iter().map(|&v| p_at(v)).collect::<Result<Vec<_>>>()?;
    let accepted: Vec<bool> = p_values.iter().map(|&p| p >= alpha).collect();

    let first = accepted.iter().position(|&a| a);
    let last = accepted.iter().rposition(|&a| a);
    let contiguous = match (first, last) {
        (Some(a), Some(b)) => accepted[a..=b].iter().all(|&x| x),
        _ => true,
    };
    let interval_hull = match (first, last) {
        (Some(a), Some(b)) => {
            let mut lo = grid[a];
            let mut hi = grid[b];
            if inv_opts.refine {
                if a > 0 {
                    lo = bisect(&p_at, grid[a - 1], grid[a], alpha, inv_opts.refine_divisor)?;
                }
                if b + 1 < grid.len() {
                    hi = bisect(&p_at, grid[b + 1], grid[b], alpha, inv_opts.refine_divisor)?;
                }
            }
            Some((lo, hi))
        }
        _ => None,
    };
    Ok(ConfidenceSet { alpha, grid: grid.to_vec(), p_values, accepted, interval_hull, contiguous })
}

/// Shrinks `[rejected, accepted]` (in either order) and returns the
/// accepted end.
fn bisect(p_at: &impl Fn(f64) -> Result<f64>, mut rejected: f64, mut accepted: f64, alpha: f64, divisor: f64) -> Result<f64> {
    let tol = (accepted - rejected).abs() / divisor;
    while (accepted - rejected).abs() > tol {
        let mid = 0.5 * (accepted + rejected);
        if p_at(mid)? >= alpha {
            accepted = mid;
        } else {
            rejected = mid;
        }
    }
    Ok(accepted)
}
