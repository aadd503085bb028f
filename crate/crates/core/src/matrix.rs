//! Dense linear-algebra kernel.
//!
//! Thin layer over `nalgebra` providing the handful of operations the rest of
//! the crate needs: SVD-based pseudoinverse, the annihilator of a column
//! space, the column-major `vec` operator and Kronecker products of vectors.

use nalgebra::{DMatrix, DVector, SVD};

use crate::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values below `DEFAULT_RANK_TOL * s_max` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;

/// Build a matrix from row slices, rejecting ragged input and non-finite
/// entries.
pub fn matrix_from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.as_ref().len());
    let mut out = Matrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != ncols {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("entry ({i}, {j}) = {v}")));
            }
            out[(i, j)] = v;
        }
    }
    Ok(out)
}

/// Build a vector, rejecting non-finite entries.
pub fn vector_from_slice(values: &[f64]) -> Result<Vector> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite(format!("entry {i} = {v}")));
    }
    Ok(Vector::from_column_slice(values))
}

pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

fn svd(m: &Matrix) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    ensure_finite(m, "matrix passed to SVD")?;
    m.clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITER)
        .ok_or_else(|| Error::Numeric("SVD did not converge".into()))
}

/// Singular values in non-increasing order; length `min(rows, cols)`.
pub fn singular_values(m: &Matrix) -> Result<Vector> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(Vector::zeros(0));
    }
    let mut s: Vec<f64> = svd(m)?.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(Vector::from_vec(s))
}

/// Number of singular values exceeding `rank_tol * s_max`.
pub fn numerical_rank(m: &Matrix, rank_tol: f64) -> Result<usize> {
    let s = singular_values(m)?;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    if s_max == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rank_tol * s_max).count())
}

/// Moore–Penrose pseudoinverse with the default relative rank tolerance.
pub fn pseudoinverse(m: &Matrix) -> Result<Matrix> {
    pseudoinverse_with_tol(m, DEFAULT_RANK_TOL)
}

pub fn pseudoinverse_with_tol(m: &Matrix, rank_tol: f64) -> Result<Matrix> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Matrix::zeros(c, r));
    }
    let dec = svd(m)?;
    let u = dec.u.as_ref().expect("u requested");
    let v_t = dec.v_t.as_ref().expect("v_t requested");
    let s_max = dec.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = Matrix::zeros(c, r);
    if s_max == 0.0 {
        return Ok(out);
    }
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s > rank_tol * s_max {
            // out += v_k u_k' / s_k
            out += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    Ok(out)
}

/// Orthogonal projector onto the complement of the column space of `a0`,
/// `I_p - A0 A0^+`. Returns `I_p` when `a0` is absent.
///
/// Built as `I - U_r U_r'` from the retained left singular vectors, so the
/// result is exactly symmetric.
pub fn annihilator(a0: Option<&Matrix>, p: usize) -> Result<Matrix> {
    annihilator_with_tol(a0, p, DEFAULT_RANK_TOL)
}

pub fn annihilator_with_tol(a0: Option<&Matrix>, p: usize, rank_tol: f64) -> Result<Matrix> {
    let mut out = Matrix::identity(p, p);
    let Some(a0) = a0 else {
        return Ok(out);
    };
    if a0.nrows() != p {
        return Err(Error::Dimension(format!(
            "A0 has {} rows, expected {p}",
            a0.nrows()
        )));
    }
    if a0.ncols() == 0 || p == 0 {
        return Ok(out);
    }
    let dec = svd(a0)?;
    let u = dec.u.as_ref().expect("u requested");
    let s_max = dec.singular_values.iter().copied().fold(0.0, f64::max);
    if s_max == 0.0 {
        return Ok(out);
    }
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s > rank_tol * s_max {
            let uk = u.column(k);
            out -= uk * uk.transpose();
        }
    }
    Ok(out)
}

/// Column-major vectorisation: stacks the columns of `m` top to bottom.
pub fn vec(m: &Matrix) -> Vector {
    // nalgebra storage is column-major already.
    Vector::from_column_slice(m.as_slice())
}

/// Kronecker product of two column vectors, `a ⊗ b`.
pub fn kron(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() * b.len());
    for (i, &ai) in a.iter().enumerate() {
        out.rows_mut(i * b.len(), b.len()).copy_from(&(b * ai));
    }
    out
}

/// General Kronecker product of matrices.
pub fn kron_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// Annihilator and pseudoinverse of a (possibly absent) `A0`, computed once
/// and shared by everything downstream of an estimate.
#[derive(Debug, Clone)]
pub struct Projection {
    pub p: usize,
    pub m0: Matrix,
    /// `d0 x p`; absent together with `A0`.
    pub a0_pinv: Option<Matrix>,
}

impl Projection {
    pub fn new(a0: Option<&Matrix>, p: usize, rank_tol: f64) -> Result<Self> {
        let m0 = annihilator_with_tol(a0, p, rank_tol)?;
        let a0_pinv = a0.map(|a| pseudoinverse_with_tol(a, rank_tol)).transpose()?;
        Ok(Self { p, m0, a0_pinv })
    }
}
