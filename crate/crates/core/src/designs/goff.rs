//! Marginal treatment response design with a binary instrument.
//!
//! `Z ~ Bernoulli(1/2)`, `U, V ~ U(0, 1)`, `D = 1{p(Z) >= U}` with
//! `p(0) = 1/3`, `p(1) = 2/3`, and `Y = D 1{V <= 1 - U + U^2 / 2}`.
//! The unknowns are `(theta0, -theta1, delta, s1, s2)`; the last row of the
//! system pins the average treated outcome to `tau0`.

use rand::Rng;

use super::check_n;
use crate::closure::Triple;
use crate::moments::json::{EntryJson, FeatureRef, ModelJson};
use crate::moments::Dataset;
use crate::{rng, Matrix, Result, Vector};

pub const PROPENSITY: [f64; 2] = [1.0 / 3.0, 2.0 / 3.0];
/// Coefficients of `E[Y(1) | U = u]`.
pub const MTR: [f64; 3] = [1.0, -1.0, 0.5];

/// `z0, z1, d_z0, d_z1, yd_z0, yd_z1`: indicators of each instrument value
/// and their products with `D` and `Y D`.
pub fn feature_names() -> Vec<String> {
    ["z0", "z1", "d_z0", "d_z1", "yd_z0", "yd_z1"].iter().map(|s| s.to_string()).collect()
}

fn name(s: &str) -> FeatureRef {
    FeatureRef::Name(s.to_string())
}

fn constant(value: f64) -> EntryJson {
    EntryJson::Constant { value }
}

/// Coefficients of `(theta0, -theta1, delta)` in `E[YD | Z = z]` as
/// functions of the propensity.
fn moment_row(p: f64) -> [f64; 3] {
    [p - p.powi(3) / 3.0, p.powi(3) / 3.0 - p * p / 2.0, p.powi(3) / 3.0]
}

const MOMENT_EXPR: [&str; 3] = [
    "m[0]/m[1] - (m[0]/m[1])^3/3",
    "(m[0]/m[1])^3/3 - (m[0]/m[1])^2/2",
    "(m[0]/m[1])^3/3",
];

pub fn model_json() -> ModelJson {
    let mut b = Vec::new();
    for z in 0..2 {
        let prop = vec![name(&format!("d_z{z}")), name(&format!("z{z}"))];
        let mut row: Vec<EntryJson> = MOMENT_EXPR
            .iter()
            .map(|e| EntryJson::Smooth { expr: e.to_string(), features: prop.clone() })
            .collect();
        row.extend([constant(0.0), constant(0.0)]);
        row.push(EntryJson::Smooth {
            expr: "-m[0]/m[1]".into(),
            features: vec![name(&format!("yd_z{z}")), name(&format!("z{z}"))],
        });
        b.push(row);
    }
    let tail: [([f64; 5], Option<f64>); 3] = [
        ([1.0, 0.0, 0.0, 1.0, 0.0], Some(-1.0)),
        ([-2.0, 1.0, 2.0, 0.0, 1.0], Some(0.0)),
        ([2.0 / 3.0, -1.0 / 6.0, 1.0 / 3.0, 0.0, 0.0], None),
    ];
    for (coef, rhs) in tail {
        let mut row: Vec<EntryJson> = coef.iter().map(|&c| constant(c)).collect();
        row.push(match rhs {
            Some(v) => constant(v),
            None => EntryJson::NullValue { scale: -1.0, offset: 0.0 },
        });
        b.push(row);
    }
    ModelJson { a0: None, b, deterministic_columns: vec![4, 5] }
}

fn mtr(u: f64) -> f64 {
    MTR[0] + MTR[1] * u + MTR[2] * u * u
}

pub fn generate(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    let mut values = Matrix::zeros(n, 6);
    for i in 0..n {
        let z = usize::from(r.random_bool(0.5));
        let u: f64 = r.random();
        let v: f64 = r.random();
        let d = if PROPENSITY[z] >= u { 1.0 } else { 0.0 };
        let y = d * if v <= mtr(u) { 1.0 } else { 0.0 };
        values[(i, z)] = 1.0;
        values[(i, 2 + z)] = d;
        values[(i, 4 + z)] = y;
    }
    Dataset::new(feature_names(), values)
}

/// `E[YD | Z = z] = int_0^{p(z)} E[Y(1) | U = u] du`.
pub fn treated_outcome_mean(z: usize) -> f64 {
    let p = PROPENSITY[z];
    MTR[0] * p + MTR[1] * p * p / 2.0 + MTR[2] * p.powi(3) / 3.0
}

pub fn population(tau0: f64) -> Result<Triple> {
    let mut a1 = Matrix::zeros(5, 5);
    for z in 0..2 {
        let row = moment_row(PROPENSITY[z]);
        for c in 0..3 {
            a1[(z, c)] = row[c];
        }
    }
    let tail = [
        [1.0, 0.0, 0.0, 1.0, 0.0],
        [-2.0, 1.0, 2.0, 0.0, 1.0],
        [2.0 / 3.0, -1.0 / 6.0, 1.0 / 3.0, 0.0, 0.0],
    ];
    for (r, row) in tail.iter().enumerate() {
        for c in 0..5 {
            a1[(2 + r, c)] = row[c];
        }
    }
    let beta = Vector::from_vec(vec![treated_outcome_mean(0), treated_outcome_mean(1), 1.0, 0.0, tau0]);
    Triple::new(None, a1, beta)
}
