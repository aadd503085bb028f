//! Plug-in estimation of `(A0, b_1, ..., b_{d1+1})` with influence functions.
//!
//! Every coefficient is declared as an [`EntrySpec`]: a constant, a (scaled,
//! shifted) sample mean of one feature, or a smooth function of several
//! feature means. Smooth entries get their influence function from the delta
//! method with a central finite-difference gradient.
//!
//! Column `j < d1` of `b` is the j-th column of `A1`; column `d1` is `-beta`.

pub mod json;

use std::collections::BTreeSet;

use crate::expr::Expr;
use crate::matrix::{kron, Matrix, Projection, Vector, DEFAULT_RANK_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum EntrySpec {
    Constant(f64),
    /// `scale * mean(feature) + offset`.
    Mean { feature: usize, scale: f64, offset: f64 },
    /// `expr` evaluated at the means of `features`; `m[k]` in the expression
    /// is the mean of `features[k]`.
    Smooth { expr: Expr, features: Vec<usize> },
}

impl EntrySpec {
    pub fn mean(feature: usize) -> Self {
        EntrySpec::Mean { feature, scale: 1.0, offset: 0.0 }
    }

    pub fn smooth(src: &str, features: Vec<usize>) -> Result<Self> {
        Ok(EntrySpec::Smooth { expr: Expr::parse(src)?, features })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, EntrySpec::Constant(_))
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        match self {
            EntrySpec::Constant(v) if !v.is_finite() => Err(Error::Model(format!("constant {v} is not finite"))),
            EntrySpec::Constant(_) => Ok(()),
            EntrySpec::Mean { feature, scale, offset } => {
                if *feature >= n_features {
                    return Err(Error::Model(format!("feature index {feature} out of range ({n_features} features)")));
                }
                if !scale.is_finite() || !offset.is_finite() {
                    return Err(Error::Model("mean entry has a non-finite scale or offset".into()));
                }
                Ok(())
            }
            EntrySpec::Smooth { expr, features } => {
                if let Some(&f) = features.iter().find(|&&f| f >= n_features) {
                    return Err(Error::Model(format!("feature index {f} out of range ({n_features} features)")));
                }
                if let Some(k) = expr.max_mean_index() {
                    if k >= features.len() {
                        return Err(Error::Model(format!(
                            "expression uses m[{k}] but only {} features are listed",
                            features.len()
                        )));
                    }
                }
                if let Some(p) = expr.params().first() {
                    return Err(Error::Model(format!("expression parameter `{p}` is unbound")));
                }
                Ok(())
            }
        }
    }
}

/// Observations in rows, features in columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    names: Vec<String>,
    values: Matrix,
}

impl Dataset {
    pub fn new(names: Vec<String>, values: Matrix) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Data(format!(
                "{} feature names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if let Some((idx, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (r, c) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::Data(format!("row {r}, column `{}` is {v}", names[c])));
        }
        Ok(Self { names, values })
    }

    /// Unnamed features `f0, f1, ...`.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        let names = (0..values.ncols()).map(|k| format!("f{k}")).collect();
        Self::new(names, values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            names: self.names.clone(),
            values: self.values.select_rows(rows),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentModel {
    p: usize,
    d0: usize,
    d1: usize,
    n_features: usize,
    /// `p x d0`, row-major.
    a0: Option<Vec<Vec<EntrySpec>>>,
    /// `p x (d1 + 1)`, row-major; last column is `-beta`.
    b: Vec<Vec<EntrySpec>>,
    deterministic_columns: BTreeSet<usize>,
}

impl MomentModel {
    /// `a0` and `b` are row-major grids. Column indices in
    /// `deterministic_columns` are zero-based.
    pub fn new(
        n_features: usize,
        a0: Option<Vec<Vec<EntrySpec>>>,
        b: Vec<Vec<EntrySpec>>,
        deterministic_columns: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let p = b.len();
        if p == 0 {
            return Err(Error::Model("b has no rows".into()));
        }
        let ncols = b[0].len();
        if ncols < 2 {
            return Err(Error::Model("b needs at least one A1 column plus the -beta column".into()));
        }
        if b.iter().any(|r| r.len() != ncols) {
            return Err(Error::Model("b rows have different lengths".into()));
        }
        let d1 = ncols - 1;
        let d0 = match &a0 {
            None => 0,
            Some(rows) => {
                if rows.len() != p {
                    return Err(Error::Model(format!("a0 has {} rows, b has {p}", rows.len())));
                }
                let d0 = rows[0].len();
                if d0 == 0 || rows.iter().any(|r| r.len() != d0) {
                    return Err(Error::Model("a0 rows must be non-empty and of equal length".into()));
                }
                d0
            }
        };
        for e in b.iter().flatten().chain(a0.iter().flatten().flatten()) {
            e.validate(n_features)?;
        }
        let deterministic_columns: BTreeSet<usize> = deterministic_columns.into_iter().collect();
        let a0_constant = a0.iter().flatten().flatten().all(EntrySpec::is_constant);
        for &j in &deterministic_columns {
            if j > d1 {
                return Err(Error::Model(format!("deterministic column {j} out of range")));
            }
            if !a0_constant || !b.iter().all(|row| row[j].is_constant()) {
                return Err(Error::Model(format!(
                    "column {j} is declared deterministic but depends on the data"
                )));
            }
        }
        Ok(Self {
            p,
            d0,
            d1,
            n_features,
            a0,
            b,
            deterministic_columns,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn has_a0(&self) -> bool {
        self.a0.is_some()
    }

    pub fn deterministic_columns(&self) -> &BTreeSet<usize> {
        &self.deterministic_columns
    }

    pub fn a0_entries(&self) -> Option<&[Vec<EntrySpec>]> {
        self.a0.as_deref()
    }

    pub fn b_entries(&self) -> &[Vec<EntrySpec>] {
        &self.b
    }
}

/// Plug-in estimates with per-observation influence samples.
#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub n: usize,
    pub a0_hat: Option<Matrix>,
    /// `d1 + 1` vectors of length `p`.
    pub b_hat: Vec<Vector>,
    /// `n x (p d0)`; row `i` is `vec(Psi_i)'` (column-major vec).
    pub psi: Option<Matrix>,
    /// Per column `j`, an `n x p` matrix whose row `i` is `phi_{j,i}'`.
    pub phi: Vec<Matrix>,
    /// Annihilator and pseudoinverse of `a0_hat`.
    pub projection: Projection,
}

impl EstimationResult {
    pub fn p(&self) -> usize {
        self.projection.p
    }

    pub fn d0(&self) -> usize {
        self.a0_hat.as_ref().map_or(0, |a| a.ncols())
    }

    pub fn d1(&self) -> usize {
        self.b_hat.len() - 1
    }

    pub fn psi_sample(&self, i: usize) -> Option<Matrix> {
        let (p, d0) = (self.p(), self.d0());
        self.psi
            .as_ref()
            .map(|psi| Matrix::from_iterator(p, d0, psi.row(i).iter().copied()))
    }

    pub fn phi_sample(&self, j: usize, i: usize) -> Vector {
        self.phi[j].row(i).transpose()
    }

    /// `n x (p d0 + p)` matrix with rows `(vec Psi_i, phi_{j,i})`.
    pub fn stacked_samples(&self, j: usize) -> Matrix {
        let pd0 = self.p() * self.d0();
        let mut out = Matrix::zeros(self.n, pd0 + self.p());
        if let Some(psi) = &self.psi {
            out.columns_mut(0, pd0).copy_from(psi);
        }
        out.columns_mut(pd0, self.p()).copy_from(&self.phi[j]);
        out
    }

    /// `M0_hat b_hat_j`, so that `b_hat_j' M0_hat y = row' y`.
    pub fn projected_row(&self, j: usize) -> Vector {
        &self.projection.m0 * &self.b_hat[j]
    }
}

/// Relative finite-difference step for smooth entries.
const FD_REL_STEP: f64 = 1e-6;

pub fn estimate(model: &MomentModel, data: &Dataset) -> Result<EstimationResult> {
    estimate_with(model, data, DEFAULT_RANK_TOL)
}

pub fn estimate_with(model: &MomentModel, data: &Dataset, rank_tol: f64) -> Result<EstimationResult> {
    let n = data.n();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 observations, got {n}")));
    }
    if data.n_features() != model.n_features() {
        return Err(Error::Dimension(format!(
            "model expects {} features, data has {}",
            model.n_features(),
            data.n_features()
        )));
    }
    let x = data.values();
    let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
    let (p, d0, d1) = (model.p, model.d0, model.d1);

    let (a0_hat, psi) = match &model.a0 {
        None => (None, None),
        Some(rows) => {
            let mut a = Matrix::zeros(p, d0);
            let mut psi = Matrix::zeros(n, p * d0);
            for (r, row) in rows.iter().enumerate() {
                for (c, spec) in row.iter().enumerate() {
                    let mut col = psi.column_mut(c * p + r);
                    a[(r, c)] = eval_entry(spec, &means, x, col.as_mut_slice())
                        .map_err(|e| e.context(format!("a0[{r}][{c}]")))?;
                }
            }
            (Some(a), Some(psi))
        }
    };

    let mut b_hat = vec![Vector::zeros(p); d1 + 1];
    let mut phi = vec![Matrix::zeros(n, p); d1 + 1];
    for (r, row) in model.b.iter().enumerate() {
        for (j, spec) in row.iter().enumerate() {
            let mut col = phi[j].column_mut(r);
            b_hat[j][r] = eval_entry(spec, &means, x, col.as_mut_slice())
                .map_err(|e| e.context(format!("b[{r}][{j}]")))?;
        }
    }

    let projection = Projection::new(a0_hat.as_ref(), p, rank_tol)?;
    Ok(EstimationResult {
        n,
        a0_hat,
        b_hat,
        psi,
        phi,
        projection,
    })
}

/// Writes the influence samples into `infl` (already zeroed) and returns the
/// point estimate.
fn eval_entry(spec: &EntrySpec, means: &[f64], x: &Matrix, infl: &mut [f64]) -> Result<f64> {
    match spec {
        EntrySpec::Constant(v) => Ok(*v),
        EntrySpec::Mean { feature, scale, offset } => {
            let m = means[*feature];
            for (out, xi) in infl.iter_mut().zip(x.column(*feature).iter()) {
                *out = scale * (xi - m);
            }
            Ok(scale * m + offset)
        }
        EntrySpec::Smooth { expr, features } => {
            let base: Vec<f64> = features.iter().map(|&f| means[f]).collect();
            let value = expr.eval(&base)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("smooth entry evaluates to {value} at the sample means")));
            }
            let mut probe = base.clone();
            for (k, &f) in features.iter().enumerate() {
                let h = FD_REL_STEP * (1.0 + base[k].abs());
                probe[k] = base[k] + h;
                let up = expr.eval(&probe)?;
                probe[k] = base[k] - h;
                let down = expr.eval(&probe)?;
                probe[k] = base[k];
                let grad = (up - down) / (2.0 * h);
                if !grad.is_finite() {
                    return Err(Error::NonFinite(format!("smooth entry is not differentiable in m[{k}]")));
                }
                if grad != 0.0 {
                    for (out, xi) in infl.iter_mut().zip(x.column(f).iter()) {
                        *out += grad * (xi - base[k]);
                    }
                }
            }
            Ok(value)
        }
    }
}

/// Sample covariance (divisor `n`) of `(vec Psi_i, phi_{j,i})`.
pub fn covariance_vj(res: &EstimationResult, j: usize) -> Result<Matrix> {
    check_j(res, j)?;
    if res.n < 2 {
        return Err(Error::Data("covariance needs at least 2 observations".into()));
    }
    let mut s = res.stacked_samples(j);
    for mut col in s.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    Ok(s.transpose() * &s / res.n as f64)
}

fn check_j(res: &EstimationResult, j: usize) -> Result<()> {
    if j > res.d1() {
        return Err(Error::InvalidArgument(format!("column index {j} exceeds d1 = {}", res.d1())));
    }
    Ok(())
}

/// Delta-method gradient of `(A0, b_j) -> b_j' M0(A0) y`, ordered as
/// `(vec A0, b_j)`:
///
/// `( -(A0^+ y ⊗ M0 b_j + A0^+ b_j ⊗ M0 y), M0 y )`.
pub fn gradient_dj(a0_hat: Option<&Matrix>, b_hat_j: &Vector, y: &Vector) -> Result<Vector> {
    let p = b_hat_j.len();
    if y.len() != p {
        return Err(Error::Dimension(format!("y has length {}, expected {p}", y.len())));
    }
    let proj = Projection::new(a0_hat, p, DEFAULT_RANK_TOL)?;
    Ok(gradient_with(&proj, b_hat_j, y))
}

pub fn gradient_with(proj: &Projection, b: &Vector, y: &Vector) -> Vector {
    let my = &proj.m0 * y;
    let Some(pinv) = &proj.a0_pinv else {
        return my;
    };
    let mb = &proj.m0 * b;
    let top = -(kron(&(pinv * y), &mb) + kron(&(pinv * b), &my));
    let mut out = Vector::zeros(top.len() + my.len());
    out.rows_mut(0, top.len()).copy_from(&top);
    out.rows_mut(top.len(), my.len()).copy_from(&my);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SigmaEstimate {
    pub sigma: f64,
    pub raw_variance: f64,
    pub truncated: bool,
}

impl SigmaEstimate {
    fn from_variance(raw_variance: f64, sigma_floor: f64) -> Self {
        let floor_sq = sigma_floor * sigma_floor;
        let truncated = !(raw_variance > floor_sq);
        Self {
            sigma: raw_variance.max(floor_sq).sqrt(),
            raw_variance,
            truncated,
        }
    }
}

/// `sqrt(max(d' V d, floor^2))`.
pub fn sigma_hat(vj: &Matrix, dj: &Vector, sigma_floor: f64) -> Result<SigmaEstimate> {
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma floor must be positive, got {sigma_floor}")));
    }
    if vj.nrows() != vj.ncols() || vj.nrows() != dj.len() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, gradient has length {}",
            vj.nrows(),
            vj.ncols(),
            dj.len()
        )));
    }
    let q = dj.dot(&(vj * dj));
    Ok(SigmaEstimate::from_variance(q, sigma_floor))
}

/// Same quantity as `sigma_hat(covariance_vj(res, j), gradient, floor)`,
/// computed as the sample variance of the scalar influence samples
/// `D' (vec Psi_i, phi_{j,i})` without forming the covariance matrix.
pub fn sigma_at(res: &EstimationResult, j: usize, y: &Vector, sigma_floor: f64) -> Result<SigmaEstimate> {
    check_j(res, j)?;
    if !(sigma_floor > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma floor must be positive, got {sigma_floor}")));
    }
    let d = gradient_with(&res.projection, &res.b_hat[j], y);
    let pd0 = res.p() * res.d0();
    let mut w = &res.phi[j] * d.rows(pd0, res.p());
    if let Some(psi) = &res.psi {
        w += psi * d.rows(0, pd0);
    }
    let mean = w.mean();
    let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / res.n as f64;
    Ok(SigmaEstimate::from_variance(var, sigma_floor))
}

/// Influence samples of `b_j' M0` (as a column vector), one row per
/// observation:
/// `xi_i = M0 phi_i - M0 Psi_i A0^+ b_j - (A0^+)' Psi_i' M0 b_j`.
pub fn xi_samples(res: &EstimationResult, j: usize) -> Result<Matrix> {
    check_j(res, j)?;
    let m0 = &res.projection.m0;
    let b = &res.b_hat[j];
    let mut out = &res.phi[j] * m0; // rows phi_i' M0 = (M0 phi_i)'
    if let Some(pinv) = &res.projection.a0_pinv {
        let pinv_b = pinv * b;
        let m0_b = m0 * b;
        for i in 0..res.n {
            let psi = res.psi_sample(i).expect("psi present with A0");
            let corr = m0 * (&psi * &pinv_b) + pinv.transpose() * (psi.transpose() * &m0_b);
            let mut row = out.row_mut(i);
            row -= corr.transpose();
        }
    }
    Ok(out)
}
