use super::{compile_obs, OracleError, Sets};
use crate::grid::ObservationEvent;
use crate::poly::{CompiledSet, NoiseDist, SystemModel};

const MAX_PATHS: f64 = 1e8;

/// Exact path sums from a single start state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Enumeration {
    /// Probability of staying in `X \ U` up to the last observation time and
    /// matching every observation.
    pub q: f64,
    /// `E[tail(x_{t_k + 1}) ; same event]`, with `tail` clamped at 0 on `X`
    /// and replaced by `outside` off `X`.
    pub p: f64,
}

/// Sums over every noise path of length `t_k + 1` for a model whose noise is
/// a finite set of atoms in each dimension.
pub fn enumerate_observed(
    model: &SystemModel,
    x0: &[f64],
    obs: &[ObservationEvent],
    tail: &dyn Fn(&[f64]) -> f64,
    outside: f64,
) -> Result<Enumeration, OracleError> {
    let mut atoms: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for d in model.noise.dists() {
        let NoiseDist::DiscreteAtoms(a) = d else {
            return Err(OracleError::NotDiscrete);
        };
        atoms = atoms
            .iter()
            .flat_map(|(w, p)| {
                a.iter().map(move |&(v, q)| {
                    let mut w = w.clone();
                    w.push(v);
                    (w, p * q)
                })
            })
            .collect();
    }
    let Some(last) = obs.last() else {
        return Err(OracleError::BadParameter("no observations".into()));
    };
    if (atoms.len() as f64).powi(last.time as i32 + 1) > MAX_PATHS {
        return Err(OracleError::BadParameter(format!(
            "{} atoms over {} steps is too many paths",
            atoms.len(),
            last.time + 1
        )));
    }
    let ctx = Ctx {
        model,
        sets: Sets::new(model),
        obs: compile_obs(obs),
        atoms,
        tail,
        outside,
        tk: last.time,
    };
    let mut acc = Enumeration { q: 0.0, p: 0.0 };
    ctx.visit(x0.to_vec(), 0, 1.0, &mut acc);
    Ok(acc)
}

struct Ctx<'a> {
    model: &'a SystemModel,
    sets: Sets,
    obs: Vec<(u32, CompiledSet)>,
    atoms: Vec<(Vec<f64>, f64)>,
    tail: &'a dyn Fn(&[f64]) -> f64,
    outside: f64,
    tk: u32,
}

impl Ctx<'_> {
    fn visit(&self, x: Vec<f64>, t: u32, prob: f64, acc: &mut Enumeration) {
        if t > self.tk {
            acc.p += prob
                * if self.sets.x.contains(&x) {
                    (self.tail)(&x).max(0.0)
                } else {
                    self.outside
                };
            return;
        }
        if self.sets.failure(&x, t).is_some() {
            return;
        }
        if let Some((_, o)) = self.obs.iter().find(|(s, _)| *s == t) {
            if !o.contains(&x) {
                return;
            }
        }
        if t == self.tk {
            acc.q += prob;
        }
        let mut next = vec![0.0; x.len()];
        for (w, pw) in &self.atoms {
            self.model.step(&x, w, &mut next);
            self.visit(next.clone(), t + 1, prob * pw, acc);
        }
    }
}
