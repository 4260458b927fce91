use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::noise::{NoiseJson, NoiseSpec};
use super::polynomial::{CompiledPoly, Polynomial};
use super::set::{Aabb, SemialgebraicSet, SetJson};
use super::{PolyError, PolyJson};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Safety,
    ReachAvoid,
}

/// Closed-loop system `x' = F(x, w)` with its sets.
#[derive(Clone, Debug)]
pub struct SystemModel {
    pub name: String,
    pub mode: Mode,
    pub asserts_absorption: bool,
    pub dynamics: Vec<Polynomial>,
    pub noise: NoiseSpec,
    pub x_set: SemialgebraicSet,
    pub init: SemialgebraicSet,
    pub unsafe_set: SemialgebraicSet,
    pub target: Option<SemialgebraicSet>,
    /// Offline bound published for this benchmark, used for bench verdicts.
    pub reference_bound: Option<f64>,
    compiled: Vec<CompiledPoly>,
}

const WELL_POSED_SAMPLES: usize = 10_000;
const WELL_POSED_SEED: u64 = 0x5eed_0b5e;

impl SystemModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        mode: Mode,
        asserts_absorption: bool,
        dynamics: Vec<Polynomial>,
        noise: NoiseSpec,
        x_set: SemialgebraicSet,
        init: SemialgebraicSet,
        unsafe_set: SemialgebraicSet,
        target: Option<SemialgebraicSet>,
    ) -> Result<Self, PolyError> {
        let n = dynamics.len();
        if n == 0 {
            return Err(PolyError::Schema("dynamics must be nonempty".into()));
        }
        for f in &dynamics {
            if f.num_state() != n {
                return Err(PolyError::DimensionMismatch {
                    what: "dynamics state dimension",
                    expected: n,
                    got: f.num_state(),
                });
            }
            if f.num_noise() != noise.dims() {
                return Err(PolyError::DimensionMismatch {
                    what: "dynamics noise dimension",
                    expected: noise.dims(),
                    got: f.num_noise(),
                });
            }
        }
        for (what, s) in [("X", &x_set), ("I", &init), ("U", &unsafe_set)]
            .into_iter()
            .chain(target.as_ref().map(|t| ("T", t)))
        {
            if s.dim() != n {
                return Err(PolyError::Schema(format!(
                    "set {what} has dimension {}, state has {n}",
                    s.dim()
                )));
            }
        }
        if mode == Mode::ReachAvoid && target.is_none() {
            return Err(PolyError::Schema("reach_avoid mode requires a target set T".into()));
        }
        let compiled = dynamics.iter().map(CompiledPoly::new).collect();
        let m = Self {
            name: name.into(),
            mode,
            asserts_absorption,
            dynamics,
            noise,
            x_set,
            init,
            unsafe_set,
            target,
            reference_bound: None,
            compiled,
        };
        m.check_well_posed()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.len()
    }

    pub fn noise_dim(&self) -> usize {
        self.noise.dims()
    }

    /// One step of the dynamics.
    #[inline]
    pub fn step(&self, x: &[f64], w: &[f64], out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.compiled) {
            *o = f.eval(x, w);
        }
    }

    /// Initial states that are also inside the state space.
    pub fn effective_init(&self) -> SemialgebraicSet {
        self.init.intersect(&self.x_set)
    }

    pub fn in_target(&self, x: &[f64]) -> bool {
        self.target.as_ref().is_some_and(|t| t.contains(x))
    }

    /// Set the recursion must avoid: `U`, plus `T` in reach-avoid mode
    /// (where reaching `T` stops the process).
    pub fn stop_set(&self) -> SemialgebraicSet {
        match (&self.mode, &self.target) {
            (Mode::ReachAvoid, Some(t)) => self.unsafe_set.union(t),
            _ => self.unsafe_set.clone(),
        }
    }

    /// Bounding box of `X`, when the set analysis can bound every axis.
    pub fn state_box(&self) -> Option<Aabb> {
        self.x_set.bounding_box()
    }

    /// Same model with noise forced to zero.
    pub fn noise_free(&self) -> Self {
        let mut m = self.clone();
        m.noise = NoiseSpec::degenerate(self.noise.dims());
        m
    }

    /// Sampled check that `I` and `T` do not meet `U`.
    pub fn check_well_posed(&self) -> Result<(), PolyError> {
        let mut rng = ChaCha8Rng::seed_from_u64(WELL_POSED_SEED);
        let mut checks = vec![("I", &self.init)];
        if let Some(t) = &self.target {
            checks.push(("T", t));
        }
        let mut x = vec![0.0; self.state_dim()];
        for (what, s) in checks {
            let Some(bb) = s.bounding_box().or_else(|| self.x_set.bounding_box()) else {
                log::warn!("{}: {what} is unbounded, well-posedness not checked", self.name);
                continue;
            };
            for _ in 0..WELL_POSED_SAMPLES {
                bb.sample(&mut rng, &mut x);
                if s.contains(&x) && self.unsafe_set.contains(&x) {
                    return Err(PolyError::IllPosed(format!(
                        "{what} meets U at {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(j: &ModelJson) -> Result<Self, PolyError> {
        let n = j.state_dim;
        let nw = j.noise_dim;
        let noise = j.noise.to_spec(nw)?;
        if j.dynamics.len() != n {
            return Err(PolyError::Schema(format!(
                "{} dynamics polynomials for state_dim {n}",
                j.dynamics.len()
            )));
        }
        let dynamics = match &j.policy {
            None => j
                .dynamics
                .iter()
                .map(|p| p.to_poly(n, nw))
                .collect::<Result<Vec<_>, _>>()?,
            Some(policy) => {
                let m = policy.len();
                let open = j
                    .dynamics
                    .iter()
                    .map(|p| p.to_poly(n + m, nw))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut inner: Vec<Polynomial> =
                    (0..n).map(|i| Polynomial::state_var(n, nw, i)).collect();
                for p in policy {
                    inner.push(p.to_poly(n, 0)?.with_noise_dims(nw)?);
                }
                open.iter()
                    .map(|f| f.substitute_state(&inner))
                    .collect::<Result<Vec<_>, _>>()?
            }
        };
        let mut m = Self::new(
            j.name.clone(),
            j.mode,
            j.asserts_absorption,
            dynamics,
            noise,
            j.x.to_set(n)?,
            j.i.to_set(n)?,
            j.u.to_set(n)?,
            j.t.as_ref().map(|t| t.to_set(n)).transpose()?,
        )?;
        m.reference_bound = j.reference_bound;
        Ok(m)
    }

    pub fn to_json(&self) -> ModelJson {
        ModelJson {
            name: self.name.clone(),
            state_dim: self.state_dim(),
            noise_dim: self.noise_dim(),
            mode: self.mode,
            asserts_absorption: self.asserts_absorption,
            dynamics: self.dynamics.iter().map(PolyJson::from_poly).collect(),
            policy: None,
            noise: NoiseJson::from_spec(&self.noise),
            x: self.x_set.to_json(),
            i: self.init.to_json(),
            u: self.unsafe_set.to_json(),
            t: self.target.as_ref().map(SemialgebraicSet::to_json),
            reference_bound: self.reference_bound,
        }
    }
}

/// Model file schema.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelJson {
    pub name: String,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub mode: Mode,
    pub asserts_absorption: bool,
    pub dynamics: Vec<PolyJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<Vec<PolyJson>>,
    pub noise: NoiseJson,
    #[serde(rename = "X")]
    pub x: SetJson,
    #[serde(rename = "I")]
    pub i: SetJson,
    #[serde(rename = "U")]
    pub u: SetJson,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t: Option<SetJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_bound: Option<f64>,
}

pub fn parse_model(text: &str) -> Result<SystemModel, PolyError> {
    let j: ModelJson = serde_json::from_str(text)?;
    SystemModel::from_json(&j)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SystemModel, PolyError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| PolyError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}
