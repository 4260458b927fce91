//! Polynomials, semialgebraic sets, noise and the closed-loop system model.

pub mod model;
pub mod noise;
pub mod polynomial;
pub mod set;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{load_model, parse_model, Mode, ModelJson, SystemModel};
pub use noise::{NoiseDist, NoiseJson, NoiseSpec};
pub use polynomial::{CompiledPoly, Polynomial};
pub use set::{Aabb, Atom, CompiledSet, Relation, SemialgebraicSet, SetJson};

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("composition arity: outer has {expected} variables, {got} inner polynomials given")]
    Arity { expected: usize, got: usize },
    #[error("outer polynomial of a composition must not mention noise variables")]
    NoiseInOuter,
    #[error("set constraints must only mention state variables")]
    NoiseInSet,
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("cannot read model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model schema violation: {0}")]
    Schema(String),
    #[error("ill-posed model: {0}")]
    IllPosed(String),
}

/// File representation of a polynomial: `{"terms": [{"c", "x", "w"}..]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PolyJson {
    pub terms: Vec<TermJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermJson {
    pub c: f64,
    pub x: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w: Vec<u32>,
}

impl PolyJson {
    /// An omitted or empty `w` means all noise exponents are zero.
    pub fn to_poly(&self, num_state: usize, num_noise: usize) -> Result<Polynomial, PolyError> {
        Polynomial::from_terms(
            num_state,
            num_noise,
            self.terms.iter().map(|t| {
                let w = if t.w.is_empty() {
                    vec![0; num_noise]
                } else {
                    t.w.clone()
                };
                (t.x.clone(), w, t.c)
            }),
        )
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        Self {
            terms: p
                .terms()
                .map(|(xe, we, c)| TermJson {
                    c,
                    x: xe.to_vec(),
                    w: if we.iter().all(|&k| k == 0) {
                        Vec::new()
                    } else {
                        we.to_vec()
                    },
                })
                .collect(),
        }
    }
}
