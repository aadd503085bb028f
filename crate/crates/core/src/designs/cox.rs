//! One-sided design with `H` inequalities and a scalar nuisance.
//!
//! `A0 = E[C]`, `A1 = I_H`, `beta = -E[X] - v theta` with
//! `v = (1, 1, 0, ..., 0)`, `X ~ N(mu, I_H)`, `C ~ N(nu, 2 I_H)`,
//! `mu = (-1, 1, ..., 1)` and `nu = (1, -1, ..., -1)`.

use rand_distr::{Distribution, StandardNormal};

use super::check_n;
use crate::closure::Triple;
use crate::moments::json::{EntryJson, FeatureRef, ModelJson};
use crate::moments::Dataset;
use crate::{rng, Error, Matrix, Result, Vector};

pub fn check_h(h: usize) -> Result<()> {
    if h < 2 {
        return Err(Error::InvalidArgument(format!("H must be at least 2, got {h}")));
    }
    Ok(())
}

pub fn mu(h: usize) -> Vector {
    Vector::from_fn(h, |i, _| if i == 0 { -1.0 } else { 1.0 })
}

pub fn nu(h: usize) -> Vector {
    -mu(h)
}

pub fn v(h: usize) -> Vector {
    Vector::from_fn(h, |i, _| if i < 2 { 1.0 } else { 0.0 })
}

/// `x1 .. xH, c1 .. cH`.
pub fn feature_names(h: usize) -> Vec<String> {
    (1..=h).map(|k| format!("x{k}")).chain((1..=h).map(|k| format!("c{k}"))).collect()
}

pub fn model_json(h: usize) -> ModelJson {
    let v = v(h);
    let a0 = (0..h)
        .map(|r| {
            vec![EntryJson::Mean {
                feature: FeatureRef::Name(format!("c{}", r + 1)),
                scale: 1.0,
                offset: 0.0,
                null_scale: 0.0,
            }]
        })
        .collect();
    let b = (0..h)
        .map(|r| {
            let mut row: Vec<EntryJson> = (0..h)
                .map(|c| EntryJson::Constant { value: if r == c { 1.0 } else { 0.0 } })
                .collect();
            // -beta_r = mu_r + v_r theta
            row.push(EntryJson::Mean {
                feature: FeatureRef::Name(format!("x{}", r + 1)),
                scale: 1.0,
                offset: 0.0,
                null_scale: v[r],
            });
            row
        })
        .collect();
    ModelJson { a0: Some(a0), b, deterministic_columns: vec![] }
}

pub fn generate(h: usize, n: usize, seed: u64) -> Result<Dataset> {
    check_h(h)?;
    check_n(n)?;
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    let (mu, nu) = (mu(h), nu(h));
    let sd_c = 2f64.sqrt();
    let mut values = Matrix::zeros(n, 2 * h);
    for i in 0..n {
        for k in 0..h {
            let z: f64 = StandardNormal.sample(&mut r);
            values[(i, k)] = mu[k] + z;
        }
        for k in 0..h {
            let z: f64 = StandardNormal.sample(&mut r);
            values[(i, h + k)] = nu[k] + sd_c * z;
        }
    }
    Dataset::new(feature_names(h), values)
}

pub fn population(h: usize, theta: f64) -> Result<Triple> {
    check_h(h)?;
    let a0 = Matrix::from_column_slice(h, 1, nu(h).as_slice());
    let beta = -mu(h) - v(h) * theta;
    Triple::new(Some(a0), Matrix::identity(h, h), beta)
}
