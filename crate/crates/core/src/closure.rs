//! Membership oracles for the null set of triples `(A0, A1, beta)` and its
//! Euclidean closure.
//!
//! * `C0`: `A0 x0 + A1 x1 = beta` for some `x0` and some `x1 >= 0`.
//! * `C̄0`: `sup_{|y|_1 <= 1} min{ min_j a_j' M0 y, -beta' M0 y } <= 0`.
//! * `C^RD`: `A0` has rank below its column count.
//!
//! The closure of `C0` is the union of the last two.

use serde::{Deserialize, Serialize};

use crate::lp::{LinearProgram, LpOutcome};
use crate::matrix::{self, annihilator_with_tol, Matrix, Vector};
use crate::{Error, Result};

/// A deterministic linear-system instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    a0: Option<Matrix>,
    a1: Matrix,
    beta: Vector,
}

impl Triple {
    pub fn new(a0: Option<Matrix>, a1: Matrix, beta: Vector) -> Result<Self> {
        let p = beta.len();
        if p == 0 {
            return Err(Error::Dimension("beta is empty".into()));
        }
        if a1.nrows() != p {
            return Err(Error::Dimension(format!("A1 has {} rows, beta has {p}", a1.nrows())));
        }
        if a1.ncols() == 0 {
            return Err(Error::Dimension("A1 needs at least one column".into()));
        }
        if let Some(a0) = &a0 {
            if a0.nrows() != p {
                return Err(Error::Dimension(format!("A0 has {} rows, beta has {p}", a0.nrows())));
            }
            if a0.ncols() == 0 {
                return Err(Error::Dimension("A0 is present but has no columns".into()));
            }
            matrix::ensure_finite(a0, "A0")?;
        }
        matrix::ensure_finite(&a1, "A1")?;
        if beta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("beta".into()));
        }
        Ok(Self { a0, a1, beta })
    }

    pub fn a0(&self) -> Option<&Matrix> {
        self.a0.as_ref()
    }

    pub fn a1(&self) -> &Matrix {
        &self.a1
    }

    pub fn beta(&self) -> &Vector {
        &self.beta
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    pub fn d0(&self) -> usize {
        self.a0.as_ref().map_or(0, |a| a.ncols())
    }

    pub fn d1(&self) -> usize {
        self.a1.ncols()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: TripleJson = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn to_json(&self) -> TripleJson {
        let rows = |m: &Matrix| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        TripleJson {
            a0: self.a0.as_ref().map(rows),
            a1: rows(&self.a1),
            beta: self.beta.iter().copied().collect(),
        }
    }
}

/// Wire format: `{"a0": [[...]] | null, "a1": [[...]], "beta": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleJson {
    #[serde(default)]
    pub a0: Option<Vec<Vec<f64>>>,
    pub a1: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

impl TryFrom<TripleJson> for Triple {
    type Error = Error;

    fn try_from(raw: TripleJson) -> Result<Self> {
        if raw.a1.is_empty() || raw.a1.iter().all(|r| r.is_empty()) {
            return Err(Error::Dimension("a1 is empty".into()));
        }
        let a0 = raw.a0.as_deref().map(matrix::matrix_from_rows).transpose()?;
        let a1 = matrix::matrix_from_rows(&raw.a1)?;
        let beta = matrix::vector_from_slice(&raw.beta)?;
        Triple::new(a0, a1, beta)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClosureOptions {
    /// Half-width of the band replacing each equality in the `C0` check.
    pub band_tol: f64,
    /// `t*` at or below this value counts as membership in `C̄0`.
    pub feasibility_tol: f64,
    /// Relative singular-value cutoff for rank decisions.
    pub rank_tol: f64,
}

impl Default for ClosureOptions {
    fn default() -> Self {
        Self {
            band_tol: 1e-8,
            feasibility_tol: 1e-8,
            rank_tol: matrix::DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub in_c0: bool,
    pub in_cbar0: bool,
    pub in_crd: bool,
    pub in_closure: bool,
    /// Optimal value of the max-min program defining `C̄0`.
    pub lp_value: f64,
    /// `x1` when `in_c0`, otherwise the separating `y` when not in `C̄0`.
    pub witness: Option<Vec<f64>>,
    /// `|lp_value|` is within ten feasibility tolerances of zero.
    pub near_boundary: bool,
}

/// Feasibility of `{x >= 0 : |G x - h|_inf <= tol}`.
fn band_feasible(g: &Matrix, h: &Vector, tol: f64) -> Result<Option<Vec<f64>>> {
    let mut lp = LinearProgram::new(g.ncols());
    for (i, row) in g.row_iter().enumerate() {
        let r: Vec<f64> = row.iter().copied().collect();
        lp.add_le(r.clone(), h[i] + tol)?;
        lp.add_ge(r, h[i] - tol)?;
    }
    Ok(lp.solve()?.optimal().map(|s| s.x))
}

/// Membership in `C0` through the projected system `M0 A1 x1 = M0 beta`.
/// Returns a feasible `x1` when one exists.
pub fn member_c0(t: &Triple, tol: f64) -> Result<(bool, Option<Vector>)> {
    member_c0_with(t, tol, matrix::DEFAULT_RANK_TOL)
}

pub fn member_c0_with(t: &Triple, tol: f64, rank_tol: f64) -> Result<(bool, Option<Vector>)> {
    let m0 = annihilator_with_tol(t.a0(), t.p(), rank_tol)?;
    let g = &m0 * t.a1();
    let h = &m0 * t.beta();
    let x = band_feasible(&g, &h, tol)?;
    Ok((x.is_some(), x.map(Vector::from_vec)))
}

/// Membership in `C0` straight from `A0 x0 + A1 x1 = beta` with `x0` split
/// into positive and negative parts. Returns `(x0, x1)` when feasible.
pub fn member_c0_unprojected(t: &Triple, tol: f64) -> Result<(bool, Option<(Vector, Vector)>)> {
    let p = t.p();
    let d0 = t.d0();
    let d1 = t.d1();
    let mut g = Matrix::zeros(p, 2 * d0 + d1);
    if let Some(a0) = t.a0() {
        g.columns_mut(0, d0).copy_from(a0);
        g.columns_mut(d0, d0).copy_from(&(-a0));
    }
    g.columns_mut(2 * d0, d1).copy_from(t.a1());
    let Some(x) = band_feasible(&g, t.beta(), tol)? else {
        return Ok((false, None));
    };
    let x0 = Vector::from_fn(d0, |i, _| x[i] - x[d0 + i]);
    let x1 = Vector::from_column_slice(&x[2 * d0..]);
    Ok((true, Some((x0, x1))))
}

/// `A0` is present and numerically rank deficient. Always true when `p < d0`.
pub fn member_crd(a0: Option<&Matrix>, tol: f64) -> Result<bool> {
    let Some(a0) = a0 else {
        return Ok(false);
    };
    let d0 = a0.ncols();
    if a0.nrows() < d0 {
        return Ok(true);
    }
    Ok(matrix::numerical_rank(a0, tol)? < d0)
}

/// Optimal value and maximiser of
/// `max t  s.t.  g_j' y >= t (all j),  |y|_1 <= 1,  t >= 0`.
///
/// `y = 0` is always feasible, so the optimum is non-negative.
pub(crate) fn max_min_over_l1_ball(rows: &[Vector]) -> Result<(f64, Vector)> {
    let p = rows.first().map_or(0, |r| r.len());
    let t_col = 2 * p;
    let mut lp = LinearProgram::new(2 * p + 1);
    let mut c = vec![0.0; 2 * p + 1];
    c[t_col] = 1.0;
    lp.maximize(c)?;
    for g in rows {
        // -g'(y+ - y-) + t <= 0
        let mut row = vec![0.0; 2 * p + 1];
        for i in 0..p {
            row[i] = -g[i];
            row[p + i] = g[i];
        }
        row[t_col] = 1.0;
        lp.add_le(row, 0.0)?;
    }
    let mut l1 = vec![1.0; 2 * p + 1];
    l1[t_col] = 0.0;
    lp.add_le(l1, 1.0)?;
    match lp.solve()? {
        LpOutcome::Optimal(s) => {
            let y = Vector::from_fn(p, |i, _| s.x[i] - s.x[p + i]);
            Ok((s.value, y))
        }
        other => Err(Error::Numeric(format!("max-min program over the l1 ball returned {other:?}"))),
    }
}

/// Membership in `C̄0`; returns the verdict, `t*` and the maximising `y`.
pub fn member_cbar0(t: &Triple, opts: &ClosureOptions) -> Result<(bool, f64, Vector)> {
    let m0 = annihilator_with_tol(t.a0(), t.p(), opts.rank_tol)?;
    // M0 is symmetric, so a_j' M0 y = (M0 a_j)' y.
    let mut rows: Vec<Vector> = t.a1().column_iter().map(|a| &m0 * a).collect();
    rows.push(-(&m0 * t.beta()));
    let (value, y) = max_min_over_l1_ball(&rows)?;
    Ok((value <= opts.feasibility_tol, value, y))
}

pub fn member_closure(t: &Triple, opts: &ClosureOptions) -> Result<MembershipReport> {
    let (in_c0, x1) = member_c0_with(t, opts.band_tol, opts.rank_tol)?;
    let (in_cbar0, lp_value, y) = member_cbar0(t, opts)?;
    let in_crd = member_crd(t.a0(), opts.rank_tol)?;
    let witness = if in_c0 {
        x1.map(|x| x.iter().copied().collect())
    } else if !in_cbar0 {
        Some(y.iter().copied().collect())
    } else {
        None
    };
    Ok(MembershipReport {
        in_c0,
        in_cbar0,
        in_crd,
        in_closure: in_cbar0 || in_crd,
        lp_value,
        witness,
        near_boundary: lp_value.abs() <= 10.0 * opts.feasibility_tol,
    })
}
