//! Problem files and bundled instances.
//!
//! A problem file is TOML with the sections `[problem]`, `[discretization]`,
//! `[noise]` and `[picard]`. Expression values are quoted strings in the
//! coefficient language (see [`crate::dsl`]); an absent `lower`/`upper` means
//! no barrier on that side.
//!
//! ```toml
//! [problem]
//! T = 1.0
//! psi = "0"
//! f = "1"
//! upper = "0.3"
//!
//! [discretization]
//! R = 2.0
//! nx = 200
//! nt = 400
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{parse, Expr, ParseError};
use crate::model::{Discretization, LipschitzData, ModelError, ProblemSpec, SeparabilityWitness};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("malformed problem file: {0}")]
    Syntax(String),
    #[error("field `{field}`: {source}")]
    Expr {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn one() -> usize {
    1
}

fn zero_expr() -> String {
    "0".into()
}

fn unit_theta() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "one")]
    pub d1: usize,
    pub psi: String,
    #[serde(default = "zero_expr")]
    pub f: String,
    #[serde(default = "zero_expr")]
    pub g: String,
    /// One expression per noise component; defaults to `d1` zeros.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<String>,
    #[serde(rename = "C", default)]
    pub lip_c: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_psi: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_g: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness_h: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    #[serde(rename = "R")]
    pub radius: f64,
    pub nx: usize,
    pub nt: usize,
    #[serde(default = "unit_theta")]
    pub theta: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PicardSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    50
}

impl Default for PicardSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
        }
    }
}

/// A parsed but not yet compiled problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub problem: ProblemSection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub picard: PicardSection,
}

fn expr(field: &str, src: &str) -> Result<Expr, ConfigError> {
    parse(src).map_err(|source| ConfigError::Expr {
        field: field.to_string(),
        source,
    })
}

fn expr_list(field: &str, srcs: &[String]) -> Result<Vec<Expr>, ConfigError> {
    srcs.iter()
        .enumerate()
        .map(|(i, s)| expr(&format!("{field}[{i}]"), s))
        .collect()
}

impl ProblemFile {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem file serializes")
    }

    /// Reads a file, or falls back to a bundled instance of that name.
    pub fn load(path_or_name: &str) -> Result<Self, ConfigError> {
        match std::fs::read_to_string(path_or_name) {
            Ok(text) => Self::from_toml(&text),
            Err(_) => match bundled(path_or_name) {
                Some(text) => Self::from_toml(text),
                None => Err(ConfigError::NotFound(path_or_name.to_string())),
            },
        }
    }

    pub fn spec(&self) -> Result<ProblemSpec, ConfigError> {
        let p = &self.problem;
        let h = match &p.h {
            Some(h) => expr_list("h", h)?,
            None => vec![Expr::zero(); p.d1],
        };
        let witness = if p.witness_psi.is_some() || p.witness_f.is_some() || p.witness_g.is_some() || p.witness_h.is_some() {
            Some(SeparabilityWitness {
                psi: expr("witness_psi", p.witness_psi.as_deref().unwrap_or("0"))?,
                f: expr("witness_f", p.witness_f.as_deref().unwrap_or("0"))?,
                g: expr("witness_g", p.witness_g.as_deref().unwrap_or("0"))?,
                h: match &p.witness_h {
                    Some(h) => expr_list("witness_h", h)?,
                    None => vec![Expr::zero(); p.d1],
                },
            })
        } else {
            None
        };
        let spec = ProblemSpec {
            horizon: p.horizon,
            dim: p.dim,
            d1: p.d1,
            psi: expr("psi", &p.psi)?,
            f: expr("f", &p.f)?,
            g: expr("g", &p.g)?,
            h,
            lower: p.lower.as_deref().map(|s| expr("lower", s)).transpose()?,
            upper: p.upper.as_deref().map(|s| expr("upper", s)).transpose()?,
            lip: LipschitzData::new(p.lip_c, p.alpha, p.beta)?,
            witness,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn discretization(&self) -> Result<Discretization, ConfigError> {
        let d = &self.discretization;
        Ok(Discretization::new(d.radius, d.nx, d.nt, d.theta)?)
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("reflected_ode", include_str!("../instances/reflected_ode.toml")),
    ("reflected_ode_lower", include_str!("../instances/reflected_ode_lower.toml")),
    ("exp_decay", include_str!("../instances/exp_decay.toml")),
    ("gradient_coupled", include_str!("../instances/gradient_coupled.toml")),
    ("gaussian_heat", include_str!("../instances/gaussian_heat.toml")),
    ("noisy_two_obstacle", include_str!("../instances/noisy_two_obstacle.toml")),
    ("bump_energy", include_str!("../instances/bump_energy.toml")),
    ("separable", include_str!("../instances/separable.toml")),
    ("broken_contraction", include_str!("../instances/broken_contraction.toml")),
];

/// Source text of a bundled instance.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Parsed bundled instance; panics if the embedded file is malformed.
pub fn bundled_file(name: &str) -> Option<ProblemFile> {
    bundled(name).map(|s| ProblemFile::from_toml(s).expect("bundled instance parses"))
}
