//! Seeded Monte Carlo simulation and probability estimation with exact
//! binomial confidence intervals, plus exhaustive enumeration for models
//! with finitely many noise outcomes.
//!
//! Horizons are finite. Truncating at `H` can only overestimate the
//! probability of staying safe, so checking `bound <= estimate + CI` at a
//! finite horizon is a necessary condition for validity.

pub mod enumerate;
pub mod estimate;
pub mod observe;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::ObservationEvent;
use crate::poly::{CompiledSet, Mode, SystemModel};

pub use enumerate::{enumerate_observed, Enumeration};
pub use observe::{evenly_spaced, generate_observations};
pub use estimate::{
    absorption_check, clopper_pearson, estimate_conditional, estimate_safety, ConditionalEstimate,
    IntervalEstimate, SafetyEstimate, ABSORPTION_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("only {accepted} of {trials} trajectories matched the observations")]
    TooFewAccepted { accepted: u64, trials: u64 },
    #[error("could not sample an initial state inside I and X")]
    NoInitialState,
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("enumeration needs discrete noise in every dimension")]
    NotDiscrete,
}

/// First-hit outcome of one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "step")]
pub enum Outcome {
    SafeAtHorizon,
    HitU(u32),
    HitT(u32),
    LeftX(u32),
}

impl Outcome {
    /// Success in the model's sense: never unsafe (safety) or reaching `T`
    /// first (reach-avoid). Leaving `X` is a failure. Reach-avoid runs still
    /// undecided at the horizon count as successes, so truncation errs
    /// upward in both modes.
    pub fn success(&self, mode: Mode) -> bool {
        match mode {
            Mode::Safety => matches!(self, Outcome::SafeAtHorizon),
            Mode::ReachAvoid => matches!(self, Outcome::HitT(_) | Outcome::SafeAtHorizon),
        }
    }
}

/// Compiled sets of a model, shared by all trajectories.
pub(crate) struct Sets {
    x: CompiledSet,
    u: CompiledSet,
    t: Option<CompiledSet>,
    ra: bool,
}

impl Sets {
    pub(crate) fn new(model: &SystemModel) -> Self {
        Self {
            x: CompiledSet::new(&model.x_set),
            u: CompiledSet::new(&model.unsafe_set),
            t: model.target.as_ref().map(CompiledSet::new),
            ra: model.mode == Mode::ReachAvoid,
        }
    }

    /// Failure (`U` or outside `X`) at state index `n`, if any.
    #[inline]
    fn failure(&self, x: &[f64], n: u32) -> Option<Outcome> {
        if !self.x.contains(x) {
            Some(Outcome::LeftX(n))
        } else if self.u.contains(x) {
            Some(Outcome::HitU(n))
        } else {
            None
        }
    }

    #[inline]
    fn target(&self, x: &[f64]) -> bool {
        self.ra && self.t.as_ref().is_some_and(|t| t.contains(x))
    }
}

/// Per-trajectory generator: the run seed selects the key, the trajectory
/// index selects the stream.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Iterates `x' = F(x, w)` from `x0` for at most `horizon` steps and
/// returns the first event. Leaving `X` is reported separately but counts
/// as unsafe.
pub fn simulate(model: &SystemModel, x0: &[f64], horizon: u32, seed: u64) -> Outcome {
    let sets = Sets::new(model);
    let mut rng = substream(seed, 0);
    run(model, &sets, x0, horizon, &mut rng, &[]).outcome
}

pub(crate) struct Run {
    pub outcome: Outcome,
    /// Every observation matched and no failure at or before the last
    /// observation time.
    pub accepted: bool,
}

/// Core simulation loop. With observations, the trajectory is followed
/// through `T` until the last observation time (reach-avoid success is a
/// path property, so later states still matter for conditioning) and is
/// abandoned as soon as an observation fails.
pub(crate) fn run(
    model: &SystemModel,
    sets: &Sets,
    x0: &[f64],
    horizon: u32,
    rng: &mut ChaCha8Rng,
    obs: &[(u32, CompiledSet)],
) -> Run {
    let n = model.state_dim();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut w = vec![0.0; model.noise_dim()];
    let last_obs = obs.last().map_or(0, |o| o.0);
    let mut pending = obs.iter().peekable();
    let mut target_hit: Option<u32> = None;
    let mut step = 0u32;
    loop {
        if let Some(f) = sets.failure(&x, step) {
            let accepted = obs.is_empty() || (step > last_obs && pending.peek().is_none());
            let outcome = target_hit.map_or(f, Outcome::HitT);
            return Run { outcome, accepted };
        }
        if let Some((t, region)) = pending.peek() {
            if *t == step {
                if !region.contains(&x) {
                    return Run {
                        outcome: target_hit.map_or(Outcome::SafeAtHorizon, Outcome::HitT),
                        accepted: false,
                    };
                }
                pending.next();
            }
        }
        if target_hit.is_none() && sets.target(&x) {
            target_hit = Some(step);
        }
        if target_hit.is_some() && step >= last_obs {
            return Run {
                outcome: Outcome::HitT(target_hit.unwrap_or(step)),
                accepted: true,
            };
        }
        if step >= horizon {
            return Run {
                outcome: target_hit.map_or(Outcome::SafeAtHorizon, Outcome::HitT),
                accepted: pending.peek().is_none(),
            };
        }
        model.noise.sample_into(rng, &mut w);
        model.step(&x, &w, &mut next);
        std::mem::swap(&mut x, &mut next);
        step += 1;
    }
}

pub(crate) fn compile_obs(obs: &[ObservationEvent]) -> Vec<(u32, CompiledSet)> {
    obs.iter().map(|e| (e.time, CompiledSet::new(&e.region))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{NoiseDist, NoiseSpec, Polynomial, SemialgebraicSet};

    fn descent() -> SystemModel {
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        let one = Polynomial::constant(1, 1, 1.0);
        SystemModel::new(
            "descent",
            Mode::ReachAvoid,
            true,
            vec![&x + &(&w - &one).scale(0.2)],
            NoiseSpec::uniform(1),
            SemialgebraicSet::ball(&[1.0], 4.0),
            SemialgebraicSet::ball(&[1.0], 0.2),
            SemialgebraicSet::ball(&[3.0], 0.1),
            Some(SemialgebraicSet::ball(&[0.2], 0.1)),
        )
        .unwrap()
    }

    #[test]
    fn noise_free_descent_hits_target_at_step_four() {
        let m = descent().noise_free();
        assert_eq!(simulate(&m, &[1.0], 100, 0), Outcome::HitT(4));
    }

    #[test]
    fn simulation_is_reproducible() {
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        let m = SystemModel::new(
            "walk",
            Mode::Safety,
            false,
            vec![&x + &w.scale(0.5)],
            NoiseSpec::new(vec![NoiseDist::DiscreteAtoms(vec![(-1.0, 0.5), (1.0, 0.5)])]).unwrap(),
            SemialgebraicSet::boxed(&[-3.0], &[3.0]),
            SemialgebraicSet::boxed(&[-0.1], &[0.1]),
            SemialgebraicSet::from_poly(&Polynomial::state_var(1, 0, 0) - &Polynomial::constant(1, 0, 1.0)).unwrap(),
            None,
        )
        .unwrap();
        let a: Vec<Outcome> = (0..50).map(|s| simulate(&m, &[0.0], 40, s)).collect();
        let b: Vec<Outcome> = (0..50).map(|s| simulate(&m, &[0.0], 40, s)).collect();
        assert_eq!(a, b);
        assert!(a.iter().any(|o| matches!(o, Outcome::HitU(_))));
    }

    #[test]
    fn leaving_x_is_a_failure() {
        let m = descent().noise_free();
        // from -2.9 the next state -3.1 is outside X = [-3, 5]
        assert_eq!(simulate(&m, &[-2.9], 10, 0), Outcome::LeftX(1));
        assert!(!Outcome::LeftX(1).success(Mode::Safety));
    }
}
