//! First-split direction search.
//!
//! With `g_j = M0_hat b_hat_j` the direction solves
//!
//! ```text
//! max t  s.t.  sqrt(n1) g_j' y >= t w_j   for j in J*
//!              sqrt(n1) g_j' y >= w_j     for j in (J*)^c
//!              |y|_1 <= 1
//! ```
//!
//! with `y = y+ - y-`. The weights come from standard errors evaluated at a
//! preliminary direction, inflated by `c_n` on the screened columns.
//! Column indices here are zero-based; column `d1` is `-beta`.

use serde::{Deserialize, Serialize};

use crate::lp::{LinearProgram, LpOptions, LpOutcome};
use crate::moments::{sigma_at, EstimationResult, MomentModel, SigmaEstimate};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Screen exactly the deterministic columns.
    Direct,
    /// Keep a single column in the minimum; `None` means `d1` (the `-beta`
    /// column).
    Screening { j_star: Option<usize> },
}

impl Method {
    pub fn screening() -> Self {
        Method::Screening { j_star: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Screening { .. } => "screening",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnRegime {
    /// `sqrt(ln ln n1)`
    LowDim,
    /// `sqrt(ln ln ln n1 * ln(p + d1))`
    #[default]
    HighDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodChoice {
    pub method: Method,
    pub cn: CnRegime,
}

impl MethodChoice {
    pub fn direct() -> Self {
        Self { method: Method::Direct, cn: CnRegime::default() }
    }

    pub fn screening() -> Self {
        Self { method: Method::screening(), cn: CnRegime::default() }
    }
}

/// Partition of the columns `0..=d1` into the minimised set and the
/// screened set, both sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JStar {
    pub j_star: Vec<usize>,
    pub screened: Vec<usize>,
}

impl JStar {
    pub fn new(j_star: Vec<usize>, screened: Vec<usize>) -> Self {
        Self { j_star, screened }
    }
}

pub fn resolve_jstar(model: &MomentModel, method: &Method) -> Result<JStar> {
    let all = 0..=model.d1();
    let (j_star, screened): (Vec<usize>, Vec<usize>) = match method {
        Method::Direct => all.partition(|j| !model.deterministic_columns().contains(j)),
        Method::Screening { j_star } => {
            let k = j_star.unwrap_or(model.d1());
            if k > model.d1() {
                return Err(Error::InvalidArgument(format!(
                    "j* = {} is outside 1..={}",
                    k + 1,
                    model.d1() + 1
                )));
            }
            all.partition(|&j| j == k)
        }
    };
    if j_star.is_empty() {
        return Err(Error::Model("every column is deterministic, nothing left to test".into()));
    }
    Ok(JStar { j_star, screened })
}

pub fn c_n(regime: CnRegime, n1: usize, p: usize, d1: usize) -> Result<f64> {
    let n = n1 as f64;
    let v = match regime {
        CnRegime::LowDim => n.ln().ln(),
        CnRegime::HighDim => n.ln().ln().ln() * ((p + d1) as f64).ln(),
    };
    if !(v > 0.0) {
        return Err(Error::Domain(format!("c_n is undefined for n1 = {n1} in the {regime:?} regime")));
    }
    Ok(v.sqrt())
}

/// Column variables: `y+ (p)`, `y- (p)`, then the extra objective columns.
fn l1_program(p: usize, extra: usize, objective: &[f64]) -> Result<LinearProgram> {
    let mut lp = LinearProgram::new(2 * p + extra);
    let mut c = vec![0.0; 2 * p + extra];
    c[2 * p..].copy_from_slice(objective);
    lp.maximize(c)?;
    let mut l1 = vec![1.0; 2 * p + extra];
    l1[2 * p..].iter_mut().for_each(|v| *v = 0.0);
    lp.add_le(l1, 1.0)?;
    Ok(lp)
}

/// `(s g', -s g', tail...)`
fn split_row(g: &Vector, s: f64, tail: &[f64]) -> Vec<f64> {
    let mut row: Vec<f64> = g.iter().map(|v| s * v).collect();
    row.extend(g.iter().map(|v| -s * v));
    row.extend_from_slice(tail);
    row
}

fn read_y(x: &[f64], p: usize) -> Vector {
    Vector::from_fn(p, |i, _| x[i] - x[p + i])
}

fn check_rows(rows: &[Vector], js: &JStar) -> Result<usize> {
    let p = rows.first().map(|r| r.len()).ok_or_else(|| Error::InvalidArgument("no rows".into()))?;
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("rows have different lengths".into()));
    }
    if js.j_star.is_empty() || js.j_star.iter().chain(&js.screened).any(|&j| j >= rows.len()) {
        return Err(Error::InvalidArgument("J* is empty or refers to a missing column".into()));
    }
    Ok(p)
}

/// Preliminary direction from projected rows `g_j`; returns `(y0, value)`.
pub fn solve_prelim_rows(rows: &[Vector], js: &JStar, n1: usize) -> Result<(Vector, f64)> {
    let p = check_rows(rows, js)?;
    let s = (n1 as f64).sqrt();
    let mut lp = l1_program(p, 1, &[1.0])?;
    for &j in &js.j_star {
        // t - s g'y <= 0
        lp.add_le(split_row(&rows[j], -s, &[1.0]), 0.0)?;
    }
    for &j in &js.screened {
        lp.add_ge(split_row(&rows[j], s, &[0.0]), 0.0)?;
    }
    let (y0, value) = match lp.solve()? {
        LpOutcome::Optimal(sol) => (read_y(&sol.x, p), sol.value),
        other => return Err(Error::Numeric(format!("preliminary program returned {other:?}"))),
    };
    let scale = rows.iter().map(|g| s * g.amax()).fold(0.0, f64::max);
    if value > PRELIM_ZERO_TOL * (1.0 + scale) {
        return Ok((y0, value));
    }
    Ok((widest_zero_optimizer(rows, js, s, scale)?.unwrap_or(y0), value))
}

/// Relative size below which the preliminary optimum counts as zero.
pub const PRELIM_ZERO_TOL: f64 = 1e-10;

/// With a zero optimum every `y` in the cone `{g_j'y >= 0 for all j}` is an
/// optimizer, `y = 0` included, and `y = 0` gives weights with no scale.
/// Among the `2p` coordinate extremes of the cone inside the unit ball this
/// returns the one of largest l1 norm, or `None` when the cone is `{0}`.
fn widest_zero_optimizer(rows: &[Vector], js: &JStar, s: f64, scale: f64) -> Result<Option<Vector>> {
    let p = rows[0].len();
    let slack = -PRELIM_ZERO_TOL * (1.0 + scale);
    let mut best: Option<Vector> = None;
    for k in 0..2 * p {
        let mut lp = l1_program(p, 0, &[])?;
        let mut c = vec![0.0; 2 * p];
        c[k] = 1.0;
        c[(k + p) % (2 * p)] = -1.0;
        lp.maximize(c)?;
        for &j in js.j_star.iter().chain(&js.screened) {
            lp.add_ge(split_row(&rows[j], s, &[]), slack)?;
        }
        if let LpOutcome::Optimal(sol) = lp.solve()? {
            let y = read_y(&sol.x, p);
            if y.lp_norm(1) > best.as_ref().map_or(1e-9, |b| b.lp_norm(1) + 1e-12) {
                best = Some(y);
            }
        }
    }
    Ok(best)
}

pub fn solve_prelim(est: &EstimationResult, js: &JStar) -> Result<Vector> {
    let rows: Vec<Vector> = (0..=est.d1()).map(|j| est.projected_row(j)).collect();
    Ok(solve_prelim_rows(&rows, js, est.n)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Indexed by column `0..=d1`.
    pub omega: Vec<f64>,
    pub sigma: Vec<SigmaEstimate>,
    /// `None` when nothing is screened.
    pub c_n: Option<f64>,
}

pub fn compute_weights(
    est1: &EstimationResult,
    y0: &Vector,
    js: &JStar,
    regime: CnRegime,
    sigma_floor: f64,
) -> Result<Weights> {
    let sigma = (0..=est1.d1())
        .map(|j| sigma_at(est1, j, y0, sigma_floor))
        .collect::<Result<Vec<_>>>()?;
    let c = if js.screened.is_empty() {
        None
    } else {
        Some(c_n(regime, est1.n, est1.p(), est1.d1())?)
    };
    let omega = (0..=est1.d1())
        .map(|j| {
            let s = sigma[j].sigma;
            if js.screened.contains(&j) {
                c.expect("c_n computed when screening") * s
            } else {
                s
            }
        })
        .collect();
    Ok(Weights { omega, sigma, c_n: c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub y_hat: Vec<f64>,
    pub feasible: bool,
    /// Optimal `t`; `None` when infeasible.
    pub t_star: Option<f64>,
    pub weights: Vec<f64>,
    pub j_star_set: Vec<usize>,
}

impl DirectionResult {
    pub fn y(&self) -> Vector {
        Vector::from_column_slice(&self.y_hat)
    }
}

/// Residual above which the first phase counts as infeasible.
pub const DIRECTION_FEASIBILITY_TOL: f64 = 1e-7;

pub fn solve_direction_rows(rows: &[Vector], omega: &[f64], js: &JStar, n1: usize) -> Result<DirectionResult> {
    let p = check_rows(rows, js)?;
    if omega.len() != rows.len() {
        return Err(Error::Dimension(format!("{} weights for {} columns", omega.len(), rows.len())));
    }
    if let Some(w) = omega.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument(format!("weights must be positive and finite, got {w}")));
    }
    let s = (n1 as f64).sqrt();
    // t = t+ - t-
    let mut lp = l1_program(p, 2, &[1.0, -1.0])?;
    for &j in &js.j_star {
        lp.add_le(split_row(&rows[j], -s, &[omega[j], -omega[j]]), 0.0)?;
    }
    for &j in &js.screened {
        lp.add_ge(split_row(&rows[j], s, &[0.0, 0.0]), omega[j])?;
    }
    let opts = LpOptions {
        feasibility_tol: DIRECTION_FEASIBILITY_TOL,
        ..LpOptions::default()
    };
    let infeasible = || DirectionResult {
        y_hat: vec![0.0; p],
        feasible: false,
        t_star: None,
        weights: omega.to_vec(),
        j_star_set: js.j_star.clone(),
    };
    match lp.solve_with(&opts)? {
        LpOutcome::Optimal(sol) => {
            let y = read_y(&sol.x, p);
            // The first phase accepts residuals relative to the largest
            // right-hand side; insist on the absolute bound as well.
            let violated = js
                .screened
                .iter()
                .any(|&j| s * rows[j].dot(&y) - omega[j] < -DIRECTION_FEASIBILITY_TOL * omega[j].max(1.0));
            if violated {
                return Ok(infeasible());
            }
            Ok(DirectionResult {
                y_hat: y.iter().copied().collect(),
                feasible: true,
                t_star: Some(sol.value),
                weights: omega.to_vec(),
                j_star_set: js.j_star.clone(),
            })
        }
        LpOutcome::Infeasible { .. } => Ok(infeasible()),
        LpOutcome::Unbounded => Err(Error::Numeric("direction program reported unbounded".into())),
    }
}

pub fn solve_direction(est1: &EstimationResult, weights: &Weights, js: &JStar) -> Result<DirectionResult> {
    let rows: Vec<Vector> = (0..=est1.d1()).map(|j| est1.projected_row(j)).collect();
    solve_direction_rows(&rows, &weights.omega, js, est1.n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{estimate, Dataset, EntrySpec};
    use crate::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn c_n_values() {
        assert!((c_n(CnRegime::LowDim, 100, 1, 1).unwrap() - 1.235_791_1).abs() < 1e-6);
        let want = ((5000f64).ln().ln().ln() * 50f64.ln()).sqrt();
        let got = c_n(CnRegime::HighDim, 5000, 45, 5).unwrap();
        assert_eq!(got, want);
        assert!((got - 1.7263).abs() < 1e-3);
        assert!(matches!(c_n(CnRegime::LowDim, 2, 1, 1), Err(Error::Domain(_))));
        assert!(matches!(c_n(CnRegime::HighDim, 15, 1, 1), Err(Error::Domain(_))));
        assert!(c_n(CnRegime::HighDim, 16, 1, 1).is_ok());
    }

    fn model(det: &[usize]) -> MomentModel {
        let c = EntrySpec::Constant;
        MomentModel::new(
            1,
            None,
            vec![
                vec![c(1.0), EntrySpec::mean(0), c(0.0), EntrySpec::mean(0)],
                vec![c(0.0), EntrySpec::mean(0), c(1.0), c(2.0)],
            ],
            det.iter().copied(),
        )
        .unwrap()
    }

    #[test]
    fn jstar_resolution() {
        let js = resolve_jstar(&model(&[]), &Method::Direct).unwrap();
        assert_eq!(js, JStar::new(vec![0, 1, 2, 3], vec![]));
        let js = resolve_jstar(&model(&[0, 2]), &Method::Direct).unwrap();
        assert_eq!(js, JStar::new(vec![1, 3], vec![0, 2]));
        let js = resolve_jstar(&model(&[0]), &Method::screening()).unwrap();
        assert_eq!(js, JStar::new(vec![3], vec![0, 1, 2]));
        let js = resolve_jstar(&model(&[]), &Method::Screening { j_star: Some(1) }).unwrap();
        assert_eq!(js, JStar::new(vec![1], vec![0, 2, 3]));
        assert!(resolve_jstar(&model(&[]), &Method::Screening { j_star: Some(4) }).is_err());
    }

    #[test]
    fn prelim_single_row() {
        let js = JStar::new(vec![0], vec![]);
        let (y, value) = solve_prelim_rows(&[v(&[2.0, 0.0])], &js, 100).unwrap();
        assert!((value - 20.0).abs() < 1e-9);
        assert!((y[0] - 1.0).abs() < 1e-9);

        let (y, value) = solve_prelim_rows(&[v(&[0.0, 0.0])], &js, 100).unwrap();
        assert!(value.abs() < 1e-12);
        assert!(v(&[0.0, 0.0]).dot(&y).abs() < 1e-12);
    }

    #[test]
    fn prelim_zero_optimum_prefers_a_nonzero_point() {
        // -y1 <= 0 whenever y1 >= 0, so the optimum is 0 on the face y1 = 0
        let js = JStar::new(vec![0], vec![1]);
        let rows = [v(&[-1.0, 0.0]), v(&[1.0, 0.0])];
        let (y, value) = solve_prelim_rows(&rows, &js, 100).unwrap();
        assert!(value.abs() < 1e-12);
        assert!(y[0].abs() < 1e-9);
        assert!((y.lp_norm(1) - 1.0).abs() < 1e-9);

        // the cone is {0}: only the origin is optimal
        let rows = [v(&[-1.0, 0.0]), v(&[1.0, 1.0]), v(&[1.0, -1.0])];
        let (y, _) = solve_prelim_rows(&rows, &JStar::new(vec![0], vec![1, 2]), 100).unwrap();
        assert!(y.lp_norm(1) < 1e-9);
    }

    #[test]
    fn prelim_single_row_matches_sup_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let js = JStar::new(vec![0], vec![]);
        for _ in 0..200 {
            let p = rng.random_range(1..6);
            let g = Vector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
            let n1 = rng.random_range(16..2000);
            let (y, value) = solve_prelim_rows(&[g.clone()], &js, n1).unwrap();
            let want = (n1 as f64).sqrt() * g.amax();
            assert!((value - want).abs() <= 1e-9 * (1.0 + want));
            assert!(y.lp_norm(1) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn direction_examples() {
        let js = JStar::new(vec![0], vec![1]);
        let r = solve_direction_rows(&[v(&[2.0, 0.0]), v(&[0.0, 0.0])], &[1.0, 1.0], &js, 100).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.y_hat, vec![0.0, 0.0]);
        assert_eq!(r.t_star, None);

        let js = JStar::new(vec![0], vec![]);
        let r = solve_direction_rows(&[v(&[2.0, 0.0])], &[1.0], &js, 100).unwrap();
        assert!(r.feasible);
        assert!((r.t_star.unwrap() - 20.0).abs() < 1e-9);
        assert!((r.y_hat[0] - 1.0).abs() < 1e-9 && r.y_hat[1].abs() < 1e-9);
    }

    #[test]
    fn negative_optimum_is_allowed() {
        // min(g1'y, g2'y) with g2 = -g1 peaks at 0; with a screening row
        // forcing g1'y >= 1 the best t is negative.
        let js = JStar::new(vec![1], vec![0]);
        let r = solve_direction_rows(&[v(&[1.0]), v(&[-1.0])], &[0.5, 1.0], &js, 4).unwrap();
        assert!(r.feasible);
        // 2 y >= 0.5, maximise -2y => y = 0.25, t = -0.5
        assert!((r.t_star.unwrap() + 0.5).abs() < 1e-9);
        assert!((r.y_hat[0] - 0.25).abs() < 1e-9);
    }

    /// Grid search over the l1 ball at step `h` in two dimensions.
    fn grid_feasible(rows: &[Vector], omega: &[f64], screened: &[usize], s: f64, h: f64) -> bool {
        let k = (1.0 / h).round() as i64;
        for a in -k..=k {
            let y1 = a as f64 * h;
            let rest = k - a.abs();
            for b in -rest..=rest {
                let y = v(&[y1, b as f64 * h]);
                if screened.iter().all(|&j| s * rows[j].dot(&y) >= omega[j]) {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn feasibility_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut checked = 0;
        for _ in 0..300 {
            let rows: Vec<Vector> = (0..3).map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0))).collect();
            let omega: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..1.0)).collect();
            let js = JStar::new(vec![2], vec![0, 1]);
            let r = solve_direction_rows(&rows, &omega, &js, 1).unwrap();
            // skip instances too close to the feasibility boundary for the grid
            let margin = 5e-3 * rows.iter().map(|g| g.amax()).fold(0.0, f64::max);
            let shrunk: Vec<f64> = omega.iter().map(|w| w + margin).collect();
            let grown: Vec<f64> = omega.iter().map(|w| w - margin).collect();
            let strict = grid_feasible(&rows, &shrunk, &js.screened, 1.0, 1e-3);
            let loose = grid_feasible(&rows, &grown, &js.screened, 1.0, 1e-3);
            if strict == loose {
                assert_eq!(r.feasible, strict, "{rows:?} {omega:?}");
                checked += 1;
            }
        }
        assert!(checked > 250);
    }

    #[test]
    fn output_respects_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..300 {
            let p = rng.random_range(1..5);
            let d = rng.random_range(2..5);
            let rows: Vec<Vector> = (0..d).map(|_| Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))).collect();
            let omega: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..0.5)).collect();
            let js = JStar::new(vec![d - 1], (0..d - 1).collect());
            let n1 = 50;
            let r = solve_direction_rows(&rows, &omega, &js, n1).unwrap();
            let y = r.y();
            assert!(y.lp_norm(1) <= 1.0 + 1e-9);
            if r.feasible {
                for &j in &js.screened {
                    let slack = (n1 as f64).sqrt() * rows[j].dot(&y) - omega[j];
                    assert!(slack >= -1e-7 * omega[j]);
                }
                let t = r.t_star.unwrap();
                let achieved = (n1 as f64).sqrt() * rows[d - 1].dot(&y) / omega[d - 1];
                assert!((achieved - t).abs() <= 1e-8 * (1.0 + t.abs()));
            } else {
                assert!(r.y_hat.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let p = rng.random_range(1..4);
            let rows: Vec<Vector> = (0..3).map(|_| Vector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))).collect();
            let omega: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..0.5)).collect();
            let js = JStar::new(vec![1, 2], vec![0]);
            let a = solve_direction_rows(&rows, &omega, &js, 9).unwrap();
            let c = rng.random_range(0.1..10.0);
            let rows_c: Vec<Vector> = rows.iter().map(|g| g * c).collect();
            let omega_c: Vec<f64> = omega.iter().map(|w| w * c).collect();
            let b = solve_direction_rows(&rows_c, &omega_c, &js, 9).unwrap();
            assert_eq!(a.feasible, b.feasible);
            if let (Some(ta), Some(tb)) = (a.t_star, b.t_star) {
                assert!((ta - tb).abs() <= 1e-9 * (1.0 + ta.abs()), "{ta} {tb}");
                // b's point attains the same objective in a's problem
                let obj = js
                    .j_star
                    .iter()
                    .map(|&j| 3.0 * rows[j].dot(&b.y()) / omega[j])
                    .fold(f64::INFINITY, f64::min);
                assert!((obj - ta).abs() <= 1e-8 * (1.0 + ta.abs()));
            }
        }
    }

    #[test]
    fn weights_follow_the_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = Dataset::from_matrix(Matrix::from_fn(40, 1, |_, _| rng.random_range(0.0..1.0))).unwrap();
        let m = model(&[0, 2]);
        let est = estimate(&m, &data).unwrap();
        let y0 = v(&[0.6, -0.4]);
        let js = resolve_jstar(&m, &Method::Direct).unwrap();
        let w = compute_weights(&est, &y0, &js, CnRegime::LowDim, 1e-6).unwrap();
        let cn = c_n(CnRegime::LowDim, 40, 2, 3).unwrap();
        assert_eq!(w.c_n, Some(cn));
        for j in 0..4 {
            let s = sigma_at(&est, j, &y0, 1e-6).unwrap().sigma;
            let want = if js.screened.contains(&j) { cn * s } else { s };
            assert_eq!(w.omega[j], want);
        }
        // deterministic columns have zero variance, so the floor binds
        assert_eq!(w.omega[0], cn * 1e-6);
        assert!(w.sigma[0].truncated);

        // scalar hand computation: b_1 = mean(x), y = 0.6, sigma = 0.6 sd(x)
        let x = data.values().column(0);
        let m_x = x.mean();
        let sd = (x.iter().map(|v| (v - m_x).powi(2)).sum::<f64>() / 40.0).sqrt();
        assert!((w.sigma[1].sigma - 0.2 * sd).abs() < 1e-12);

        let js = resolve_jstar(&model(&[]), &Method::Direct).unwrap();
        let w = compute_weights(&est, &y0, &js, CnRegime::HighDim, 1e-6).unwrap();
        assert_eq!(w.c_n, None);
        assert!(w.omega.iter().zip(&w.sigma).all(|(o, s)| *o == s.sigma));
    }
}
