//! TOML documents describing tables and Markov measures.
//!
//! A table:
//!
//! ```toml
//! d0 = 0.9
//! r0 = 0.05
//! c1 = 0.5
//! c2 = 0.9
//! balls = [
//!   { centre = [0.0, 0.0, 0.0], radius = 0.05 },
//!   { centre = [1.0, 0.0, 0.0], radius = 0.05 },
//!   { centre = [0.5, 0.8660254037844386, 0.0], radius = 0.05 },
//! ]
//! ```
//!
//! A measure is either `kind = "uniform"` with `k0`, or a `transitions`
//! matrix with an optional `stationary` vector (solved for when absent).

use crate::geometry::{BilliardTable, Constants, StructuralError};
use crate::linalg::Vec3;
use crate::symbolic::{MarkovMeasure, SymbolicError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Structural(#[from] StructuralError),
    #[error(transparent)]
    Measure(#[from] SymbolicError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub centre: [f64; 3],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub d0: f64,
    pub r0: f64,
    pub c1: f64,
    pub c2: f64,
    pub balls: Vec<BallSpec>,
}

impl TableSpec {
    pub fn build(&self) -> Result<BilliardTable<f64>, StructuralError> {
        BilliardTable::new(
            self.balls.iter().map(|b| (Vec3::new(b.centre[0], b.centre[1], b.centre[2]), b.radius)),
            Constants { d0: self.d0, r0: self.r0, c1: self.c1, c2: self.c2 },
        )
    }

    pub fn from_table(table: &BilliardTable<f64>) -> Self {
        let c = table.constants;
        Self {
            d0: c.d0,
            r0: c.r0,
            c1: c.c1,
            c2: c.c2,
            balls: table.balls().iter().map(|b| BallSpec { centre: b.centre.to_array(), radius: b.radius }).collect(),
        }
    }
}

pub fn parse_table(text: &str) -> Result<BilliardTable<f64>, ConfigError> {
    let spec: TableSpec = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    Ok(spec.build()?)
}

pub fn table_to_toml(table: &BilliardTable<f64>) -> String {
    toml::to_string(&TableSpec::from_table(table)).expect("table serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub k0: Option<usize>,
    #[serde(default)]
    pub stationary: Option<Vec<f64>>,
    #[serde(default)]
    pub transitions: Option<Vec<Vec<f64>>>,
}

impl MeasureSpec {
    pub fn build(&self) -> Result<MarkovMeasure<f64>, ConfigError> {
        let parse = |m: &str| ConfigError::Parse(m.to_string());
        match (self.kind.as_deref(), &self.transitions) {
            (Some("uniform"), None) => {
                let k0 = self.k0.ok_or_else(|| parse("field `k0` is required for kind = \"uniform\""))?;
                Ok(MarkovMeasure::uniform(k0)?)
            }
            (Some("uniform"), Some(_)) => Err(parse("kind = \"uniform\" does not take `transitions`")),
            (Some("markov") | None, Some(p)) => {
                if let Some(k0) = self.k0 {
                    if k0 != p.len() {
                        return Err(parse(&format!("`k0` = {k0} but `transitions` has {} rows", p.len())));
                    }
                }
                Ok(match &self.stationary {
                    Some(pi) => MarkovMeasure::new(pi.clone(), p.clone())?,
                    None => MarkovMeasure::from_transitions(p.clone())?,
                })
            }
            (Some(other), _) if other != "markov" => Err(parse(&format!("unknown measure kind {other:?}"))),
            _ => Err(parse("field `transitions` is required")),
        }
    }
}

pub fn parse_measure(text: &str) -> Result<MarkovMeasure<f64>, ConfigError> {
    let spec: MeasureSpec = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    spec.build()
}

/// Text of the default equilateral table.
pub const EQUILATERAL_TOML: &str = r#"d0 = 0.9
r0 = 0.05
c1 = 0.5
c2 = 0.9
balls = [
  { centre = [0.0, 0.0, 0.0], radius = 0.05 },
  { centre = [1.0, 0.0, 0.0], radius = 0.05 },
  { centre = [0.5, 0.8660254037844386, 0.0], radius = 0.05 },
]
"#;
