//! JSON form of a [`MomentModel`].
//!
//! ```json
//! {
//!   "a0": [[{"kind": "mean", "feature": "c1"}], ...] | null,
//!   "b":  [[{"kind": "constant", "value": 1}, ..., {"kind": "smooth", "expr": "-m[0]/m[1]", "features": ["yd", "z"]}], ...],
//!   "deterministic_columns": [4, 5]
//! }
//! ```
//!
//! `b` is `p x (d1 + 1)` with the last column holding `-beta`. Features are
//! referenced by column name or zero-based index. `deterministic_columns`
//! are one-based positions in `1..=d1+1`.
//!
//! A hypothesised scalar for test inversion enters through
//! `{"kind": "null_value", "scale": s, "offset": o}` (value `o + s * v`), the
//! optional `null_scale` of a mean entry, or the identifier `theta` inside a
//! smooth expression.

use serde::{Deserialize, Serialize};

use super::{EntrySpec, MomentModel};
use crate::expr::Expr;
use crate::{Error, Result};

pub const NULL_PARAM: &str = "theta";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureRef {
    Index(usize),
    Name(String),
}

impl FeatureRef {
    fn resolve(&self, names: &[String]) -> Result<usize> {
        match self {
            FeatureRef::Index(k) if *k < names.len() => Ok(*k),
            FeatureRef::Index(k) => Err(Error::Model(format!("feature index {k} out of range"))),
            FeatureRef::Name(n) => names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::Model(format!("unknown feature name `{n}`"))),
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntryJson {
    Constant {
        value: f64,
    },
    Mean {
        feature: FeatureRef,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        null_scale: f64,
    },
    Smooth {
        expr: String,
        features: Vec<FeatureRef>,
    },
    NullValue {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

impl EntryJson {
    fn uses_null_value(&self) -> bool {
        match self {
            EntryJson::NullValue { .. } => true,
            EntryJson::Mean { null_scale, .. } => *null_scale != 0.0,
            EntryJson::Smooth { expr, .. } => Expr::parse(expr)
                .map(|e| e.params().iter().any(|p| p == NULL_PARAM))
                .unwrap_or(false),
            EntryJson::Constant { .. } => false,
        }
    }

    fn instantiate(&self, names: &[String], null_value: Option<f64>) -> Result<EntrySpec> {
        let need = || {
            null_value.ok_or_else(|| Error::Model("model depends on a null value but none was given".into()))
        };
        Ok(match self {
            EntryJson::Constant { value } => EntrySpec::Constant(*value),
            EntryJson::Mean { feature, scale, offset, null_scale } => {
                let shift = if *null_scale != 0.0 { null_scale * need()? } else { 0.0 };
                EntrySpec::Mean {
                    feature: feature.resolve(names)?,
                    scale: *scale,
                    offset: offset + shift,
                }
            }
            EntryJson::Smooth { expr, features } => {
                let mut e = Expr::parse(expr)?;
                if e.params().iter().any(|p| p == NULL_PARAM) {
                    e = e.bind(NULL_PARAM, need()?);
                }
                EntrySpec::Smooth {
                    expr: e,
                    features: features.iter().map(|f| f.resolve(names)).collect::<Result<_>>()?,
                }
            }
            EntryJson::NullValue { scale, offset } => EntrySpec::Constant(offset + scale * need()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    #[serde(default)]
    pub a0: Option<Vec<Vec<EntryJson>>>,
    pub b: Vec<Vec<EntryJson>>,
    #[serde(default)]
    pub deterministic_columns: Vec<usize>,
}

impl ModelJson {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn uses_null_value(&self) -> bool {
        self.b
            .iter()
            .flatten()
            .chain(self.a0.iter().flatten().flatten())
            .any(EntryJson::uses_null_value)
    }

    /// Resolve feature names against `names` and bind the null value.
    pub fn instantiate(&self, names: &[String], null_value: Option<f64>) -> Result<MomentModel> {
        let grid = |rows: &Vec<Vec<EntryJson>>| -> Result<Vec<Vec<EntrySpec>>> {
            rows.iter()
                .map(|r| r.iter().map(|e| e.instantiate(names, null_value)).collect())
                .collect()
        };
        let a0 = self.a0.as_ref().map(grid).transpose()?;
        let b = grid(&self.b)?;
        let det = self
            .deterministic_columns
            .iter()
            .map(|&j| {
                j.checked_sub(1)
                    .ok_or_else(|| Error::Model("deterministic_columns are one-based".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        MomentModel::new(names.len(), a0, b, det)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        ["x", "z"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_all_entry_kinds() {
        let src = r#"{
            "a0": [[{"kind": "mean", "feature": "z"}], [{"kind": "constant", "value": 2}]],
            "b": [
                [{"kind": "constant", "value": 1}, {"kind": "mean", "feature": 0, "scale": -1, "null_scale": 1}],
                [{"kind": "smooth", "expr": "m[0]^2 + theta", "features": ["x"]}, {"kind": "null_value", "scale": -1}]
            ],
            "deterministic_columns": []
        }"#;
        let m = ModelJson::from_json_str(src).unwrap();
        assert!(m.uses_null_value());
        assert!(m.instantiate(&names(), None).is_err());
        let model = m.instantiate(&names(), Some(0.5)).unwrap();
        assert_eq!((model.p(), model.d0(), model.d1()), (2, 1, 1));
        assert_eq!(model.b_entries()[1][1], EntrySpec::Constant(-0.5));
        assert_eq!(
            model.b_entries()[0][1],
            EntrySpec::Mean { feature: 0, scale: -1.0, offset: 0.5 }
        );
    }

    #[test]
    fn unknown_feature_and_kind_are_rejected() {
        let bad_name = r#"{"b": [[{"kind": "mean", "feature": "nope"}, {"kind": "constant", "value": 0}]]}"#;
        let m = ModelJson::from_json_str(bad_name).unwrap();
        let err = m.instantiate(&names(), None).unwrap_err();
        assert!(err.to_string().contains("unknown feature name"), "{err}");

        let bad_kind = r#"{"b": [[{"kind": "median", "feature": 0}]]}"#;
        assert!(ModelJson::from_json_str(bad_kind).is_err());
    }

    #[test]
    fn deterministic_columns_are_one_based_and_checked() {
        let src = r#"{"b": [[{"kind": "constant", "value": 1}, {"kind": "mean", "feature": 0}]], "deterministic_columns": [1]}"#;
        let model = ModelJson::from_json_str(src).unwrap().instantiate(&names(), None).unwrap();
        assert!(model.deterministic_columns().contains(&0));

        let wrong = r#"{"b": [[{"kind": "constant", "value": 1}, {"kind": "mean", "feature": 0}]], "deterministic_columns": [2]}"#;
        assert!(ModelJson::from_json_str(wrong).unwrap().instantiate(&names(), None).is_err());
        let zero = r#"{"b": [[{"kind": "constant", "value": 1}, {"kind": "mean", "feature": 0}]], "deterministic_columns": [0]}"#;
        assert!(ModelJson::from_json_str(zero).unwrap().instantiate(&names(), None).is_err());
    }
}
