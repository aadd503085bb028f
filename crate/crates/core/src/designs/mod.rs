//! Canned data-generating processes with their moment models and
//! population triples, plus the Monte Carlo driver.

pub mod cox;
pub mod fh;
pub mod goff;
pub mod montecarlo;

use serde::{Deserialize, Serialize};

use crate::closure::Triple;
use crate::moments::json::ModelJson;
use crate::moments::{Dataset, MomentModel};
use crate::{Error, Result};

pub use montecarlo::{mc_se, monte_carlo, McOptions, RejectionCurve};

pub const MIN_N: usize = 20;

fn check_n(n: usize) -> Result<()> {
    if n < MIN_N {
        return Err(Error::InvalidArgument(format!("designs need n >= {MIN_N}, got {n}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Cox { h: usize },
    Goff,
    Fh,
}

impl Design {
    pub fn validate(&self) -> Result<()> {
        match self {
            Design::Cox { h } => cox::check_h(*h),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Design::Cox { .. } => "cox",
            Design::Goff => "goff",
            Design::Fh => "fh",
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self {
            Design::Cox { h } => cox::feature_names(*h),
            Design::Goff => goff::feature_names(),
            Design::Fh => fh::feature_names(),
        }
    }

    /// Model with the hypothesised value left open.
    pub fn model_json(&self) -> ModelJson {
        match self {
            Design::Cox { h } => cox::model_json(*h),
            Design::Goff => goff::model_json(),
            Design::Fh => fh::model_json(),
        }
    }

    pub fn model(&self, value: f64) -> Result<MomentModel> {
        self.validate()?;
        self.model_json().instantiate(&self.feature_names(), Some(value))
    }

    /// The data do not depend on the hypothesised value.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            Design::Cox { h } => cox::generate(*h, n, seed),
            Design::Goff => goff::generate(n, seed),
            Design::Fh => fh::generate(n, seed),
        }
    }

    pub fn population(&self, value: f64) -> Result<Triple> {
        match self {
            Design::Cox { h } => cox::population(*h, value),
            Design::Goff => goff::population(value),
            Design::Fh => fh::population(value),
        }
    }

    /// Identified set of the hypothesised parameter, as published.
    pub fn identified_set(&self) -> (f64, f64) {
        match self {
            Design::Cox { .. } => (f64::NEG_INFINITY, 0.0),
            Design::Goff => (0.58, 0.67),
            Design::Fh => (20.21, 24.61),
        }
    }
}

pub fn gen_cox(h: usize, theta: f64, n: usize, seed: u64) -> Result<(Dataset, MomentModel)> {
    let d = Design::Cox { h };
    Ok((d.generate(n, seed)?, d.model(theta)?))
}

pub fn gen_goff(tau0: f64, n: usize, seed: u64) -> Result<(Dataset, MomentModel)> {
    Ok((Design::Goff.generate(n, seed)?, Design::Goff.model(tau0)?))
}

pub fn gen_fh(l0: f64, n: usize, seed: u64) -> Result<(Dataset, MomentModel)> {
    Ok((Design::Fh.generate(n, seed)?, Design::Fh.model(l0)?))
}
