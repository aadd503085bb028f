//! Testing whether a linear system with estimated coefficients admits a
//! solution whose constrained block is non-negative.
//!
//! The null hypothesis is that `A0 x0 + A1 x1 = beta` holds for some free
//! `x0` and some `x1 >= 0`, where `A0`, `A1` and `beta` are functionals of an
//! unknown distribution estimated from data. The crate provides
//!
//! * deterministic membership oracles for the null set and its closure
//!   ([`closure`]),
//! * plug-in estimation with influence functions and delta-method standard
//!   errors ([`moments`]),
//! * the first-split direction search ([`direction`]),
//! * the sample-splitting test, p-value aggregation and test inversion
//!   ([`testkit`]),
//! * canned simulation designs and a Monte Carlo driver ([`designs`]).

pub mod closure;
pub mod designs;
pub mod direction;
mod error;
pub mod expr;
pub mod io;
pub mod lp;
pub mod matrix;
pub mod moments;
pub mod normal;
pub mod rng;
pub mod testkit;

pub use error::{Error, Result};
pub use matrix::{Matrix, Vector};
