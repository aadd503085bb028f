//! Discrete instrumental-variables design with a monotone structural
//! function.
//!
//! `X in {2, ..., 7}`, `W in {0, 1}` with joint probabilities [`PI`],
//! `Z ~ N(0, 1)` independent, and `Y = g(X) + X Z^2 - E[X | W]`. The unknown
//! `g` solves `Pi' g = m` with `m_k = E[Y 1{W = w_k}]`, first differences of
//! `g` are non-positive, and `g(2) = L0`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::check_n;
use crate::closure::Triple;
use crate::moments::json::{EntryJson, FeatureRef, ModelJson};
use crate::moments::Dataset;
use crate::{rng, Matrix, Result, Vector};

pub const X_SUPPORT: [f64; 6] = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
pub const W_SUPPORT: [f64; 2] = [0.0, 1.0];
/// `PI[h][k] = P(X = x_h, W = w_k)`.
pub const PI: [[f64; 2]; 6] = [
    [0.20, 0.15],
    [0.10, 0.12],
    [0.06, 0.07],
    [0.05, 0.08],
    [0.03, 0.06],
    [0.03, 0.05],
];
pub const G: [f64; 6] = [23.0, 17.0, 13.0, 11.0, 9.0, 8.0];

const H: usize = 6;
const K: usize = 2;
/// Rows of the constraint block.
const M: usize = H - 1;

/// `E[X | W = w_k]` implied by [`PI`].
pub fn conditional_mean_x(k: usize) -> f64 {
    let mass: f64 = PI.iter().map(|r| r[k]).sum();
    PI.iter().zip(X_SUPPORT).map(|(r, x)| x * r[k]).sum::<f64>() / mass
}

/// First-difference matrix: row `r` is `g_{r+1} - g_r`.
pub fn shape_matrix() -> Matrix {
    Matrix::from_fn(M, H, |r, c| {
        if c == r {
            -1.0
        } else if c == r + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// `pi_x{h}_w{k}` indicators in row-major `(h, k)` order, then `y_w0`,
/// `y_w1` (the outcome times the instrument indicator).
pub fn feature_names() -> Vec<String> {
    let mut names: Vec<String> = (0..H)
        .flat_map(|h| (0..K).map(move |k| format!("pi_x{}_w{}", X_SUPPORT[h], W_SUPPORT[k])))
        .collect();
    names.extend((0..K).map(|k| format!("y_w{}", W_SUPPORT[k])));
    names
}

fn indicator_index(h: usize, k: usize) -> usize {
    h * K + k
}

pub fn model_json() -> ModelJson {
    let names = feature_names();
    let s = shape_matrix();
    let constant = |value: f64| EntryJson::Constant { value };
    let mut a0 = Vec::new();
    for k in 0..K {
        a0.push(
            (0..H)
                .map(|h| EntryJson::Mean {
                    feature: FeatureRef::Name(names[indicator_index(h, k)].clone()),
                    scale: 1.0,
                    offset: 0.0,
                    null_scale: 0.0,
                })
                .collect(),
        );
    }
    for r in 0..M {
        a0.push((0..H).map(|c| constant(s[(r, c)])).collect());
    }
    a0.push((0..H).map(|c| constant(if c == 0 { 1.0 } else { 0.0 })).collect());

    let mut b = Vec::new();
    for k in 0..K {
        let mut row: Vec<EntryJson> = (0..M).map(|_| constant(0.0)).collect();
        row.push(EntryJson::Mean {
            feature: FeatureRef::Name(names[H * K + k].clone()),
            scale: -1.0,
            offset: 0.0,
            null_scale: 0.0,
        });
        b.push(row);
    }
    for r in 0..M {
        let mut row: Vec<EntryJson> = (0..M).map(|c| constant(if c == r { 1.0 } else { 0.0 })).collect();
        row.push(constant(0.0));
        b.push(row);
    }
    let mut last: Vec<EntryJson> = (0..M).map(|_| constant(0.0)).collect();
    last.push(EntryJson::NullValue { scale: -1.0, offset: 0.0 });
    b.push(last);
    ModelJson { a0: Some(a0), b, deterministic_columns: vec![] }
}

/// Draws `(h, k)` from [`PI`] by inversion.
fn draw_cell(r: &mut impl Rng) -> (usize, usize) {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for h in 0..H {
        for k in 0..K {
            acc += PI[h][k];
            if u < acc {
                return (h, k);
            }
        }
    }
    (H - 1, K - 1)
}

pub fn generate(n: usize, seed: u64) -> Result<Dataset> {
    check_n(n)?;
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    let cond = [conditional_mean_x(0), conditional_mean_x(1)];
    let mut values = Matrix::zeros(n, H * K + K);
    for i in 0..n {
        let (h, k) = draw_cell(&mut r);
        let z: f64 = StandardNormal.sample(&mut r);
        let x = X_SUPPORT[h];
        let y = G[h] + x * z * z - cond[k];
        values[(i, indicator_index(h, k))] = 1.0;
        values[(i, H * K + k)] = y;
    }
    Dataset::new(feature_names(), values)
}

pub fn population(l0: f64) -> Result<Triple> {
    let p = K + M + 1;
    let mut a0 = Matrix::zeros(p, H);
    for k in 0..K {
        for h in 0..H {
            a0[(k, h)] = PI[h][k];
        }
    }
    a0.view_mut((K, 0), (M, H)).copy_from(&shape_matrix());
    a0[(K + M, 0)] = 1.0;
    let mut a1 = Matrix::zeros(p, M);
    a1.view_mut((K, 0), (M, M)).copy_from(&Matrix::identity(M, M));
    let mut beta = Vector::zeros(p);
    for k in 0..K {
        beta[k] = (0..H).map(|h| PI[h][k] * G[h]).sum();
    }
    beta[K + M] = l0;
    Triple::new(Some(a0), a1, beta)
}
