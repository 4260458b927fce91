use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::{compile_obs, run, substream, OracleError, Outcome, Sets};
use crate::grid::ObservationEvent;
use crate::par::{self, Execution};
use crate::poly::{Aabb, Mode, SemialgebraicSet, SystemModel};

/// Absorption frequency below which the reach-avoid assumption is flagged.
pub const ABSORPTION_THRESHOLD: f64 = 0.99;
/// Minimum number of accepted runs for a conditional estimate.
pub const MIN_ACCEPTED: u64 = 100;
const CHUNK: u64 = 4096;
const INIT_TRIES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: u64,
    pub successes: u64,
    pub confidence: f64,
}

impl IntervalEstimate {
    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

/// Exact two-sided binomial interval.
pub fn clopper_pearson(successes: u64, n: u64, confidence: f64) -> IntervalEstimate {
    let alpha = 1.0 - confidence;
    let (k, nf) = (successes as f64, n as f64);
    let point = if n == 0 { 0.0 } else { k / nf };
    let lower = if successes == 0 || n == 0 {
        0.0
    } else {
        Beta::new(k, nf - k + 1.0).map_or(0.0, |b| b.inverse_cdf(alpha / 2.0))
    };
    let upper = if successes >= n {
        1.0
    } else {
        Beta::new(k + 1.0, nf - k).map_or(1.0, |b| b.inverse_cdf(1.0 - alpha / 2.0))
    };
    IntervalEstimate {
        point,
        lower: lower.min(point),
        upper: upper.max(point),
        n,
        successes,
        confidence,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyEstimate {
    pub overall: IntervalEstimate,
    /// Estimates from fixed starting points spread over `I`.
    pub per_start: Vec<(Vec<f64>, IntervalEstimate)>,
}

impl SafetyEstimate {
    pub fn worst_start(&self) -> Option<&IntervalEstimate> {
        self.per_start
            .iter()
            .map(|(_, e)| e)
            .min_by(|a, b| a.point.total_cmp(&b.point))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalEstimate {
    pub estimate: IntervalEstimate,
    pub accepted: u64,
    pub trials: u64,
}

impl ConditionalEstimate {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.trials.max(1) as f64
    }
}

fn init_box(model: &SystemModel) -> Result<Aabb, OracleError> {
    let xb = model.state_box();
    let ib = model.init.bounding_box();
    match (ib, xb) {
        (Some(i), Some(x)) => i.intersect(&x).ok_or(OracleError::NoInitialState),
        (Some(i), None) => Ok(i),
        (None, Some(x)) => Ok(x),
        (None, None) => Err(OracleError::NoInitialState),
    }
}

fn sample_init(init: &SemialgebraicSet, bb: &Aabb, rng: &mut rand_chacha::ChaCha8Rng) -> Option<Vec<f64>> {
    init.sample_in(bb, rng, INIT_TRIES)
}

fn check_samples(n: u64) -> Result<(), OracleError> {
    if n == 0 {
        return Err(OracleError::BadParameter("sample count must be positive".into()));
    }
    Ok(())
}

/// Fraction of `n` trajectories that succeed through `horizon`, starting
/// uniformly in `I` (rejection from its bounding box), plus ten fixed
/// starts with `n / 10` runs each.
pub fn estimate_safety(
    model: &SystemModel,
    horizon: u32,
    n: u64,
    confidence: f64,
    seed: u64,
    exec: Execution,
) -> Result<SafetyEstimate, OracleError> {
    check_samples(n)?;
    let bb = init_box(model)?;
    let init = model.effective_init();
    let sets = Sets::new(model);
    let mode = model.mode;
    let results = par::map_range(exec, n as usize, |i| {
        let mut rng = substream(seed, i as u64);
        sample_init(&init, &bb, &mut rng)
            .map(|x0| run(model, &sets, &x0, horizon, &mut rng, &[]).outcome.success(mode))
    });
    if results.iter().any(Option::is_none) {
        return Err(OracleError::NoInitialState);
    }
    let ok = results.iter().filter(|r| **r == Some(true)).count() as u64;
    let overall = clopper_pearson(ok, n, confidence);

    let per = (n / 10).max(1);
    let mut per_start = Vec::new();
    let mut rng = substream(seed ^ 0x5747_4154, u64::MAX);
    for s in 0..10u64 {
        let Some(x0) = sample_init(&init, &bb, &mut rng) else {
            return Err(OracleError::NoInitialState);
        };
        let wins = par::map_range(exec, per as usize, |i| {
            let mut r = substream(seed.wrapping_add(s + 1), i as u64);
            run(model, &sets, &x0, horizon, &mut r, &[]).outcome.success(mode)
        })
        .into_iter()
        .filter(|&b| b)
        .count() as u64;
        per_start.push((x0, clopper_pearson(wins, per, confidence)));
    }
    Ok(SafetyEstimate { overall, per_start })
}

/// Rejection-sampling estimate of the success probability given that the
/// trajectory stays in `X \ U` up to the last observation time and matches
/// every observation. Runs in fixed-size chunks until `accepted` runs are
/// kept or `max_trials` are spent.
#[allow(clippy::too_many_arguments)]
pub fn estimate_conditional(
    model: &SystemModel,
    obs: &[ObservationEvent],
    horizon: u32,
    accepted: u64,
    max_trials: u64,
    confidence: f64,
    seed: u64,
    exec: Execution,
) -> Result<ConditionalEstimate, OracleError> {
    check_samples(accepted)?;
    if let Some(last) = obs.last() {
        if last.time >= horizon {
            return Err(OracleError::BadParameter(format!(
                "last observation time {} must be below the horizon {horizon}",
                last.time
            )));
        }
    }
    let bb = init_box(model)?;
    let init = model.effective_init();
    let sets = Sets::new(model);
    let cobs = compile_obs(obs);
    let mode = model.mode;
    let (mut kept, mut wins, mut trials) = (0u64, 0u64, 0u64);
    while kept < accepted && trials < max_trials {
        let len = CHUNK.min(max_trials - trials);
        let start = trials;
        let chunk = par::map_range(exec, len as usize, |j| {
            let mut rng = substream(seed, start + j as u64);
            let x0 = sample_init(&init, &bb, &mut rng)?;
            let r = run(model, &sets, &x0, horizon, &mut rng, &cobs);
            Some((r.accepted, r.accepted && r.outcome.success(mode)))
        });
        for r in chunk {
            let (a, s) = r.ok_or(OracleError::NoInitialState)?;
            kept += a as u64;
            wins += s as u64;
        }
        trials += len;
    }
    if kept < MIN_ACCEPTED {
        return Err(OracleError::TooFewAccepted { accepted: kept, trials });
    }
    Ok(ConditionalEstimate {
        estimate: clopper_pearson(wins, kept, confidence),
        accepted: kept,
        trials,
    })
}

/// Fraction of `n` runs from `I` that enter `U` or `T` (or leave `X`)
/// within `horizon` steps.
pub fn absorption_check(
    model: &SystemModel,
    horizon: u32,
    n: u64,
    seed: u64,
    exec: Execution,
) -> Result<f64, OracleError> {
    if model.mode != Mode::ReachAvoid {
        return Err(OracleError::BadParameter("absorption applies to reach-avoid models".into()));
    }
    check_samples(n)?;
    let bb = init_box(model)?;
    let init = model.effective_init();
    let sets = Sets::new(model);
    let absorbed = par::map_range(exec, n as usize, |i| {
        let mut rng = substream(seed, i as u64);
        sample_init(&init, &bb, &mut rng)
            .map(|x0| !matches!(run(model, &sets, &x0, horizon, &mut rng, &[]).outcome, Outcome::SafeAtHorizon))
    });
    if absorbed.iter().any(Option::is_none) {
        return Err(OracleError::NoInitialState);
    }
    let k = absorbed.iter().filter(|a| **a == Some(true)).count();
    let frac = k as f64 / n as f64;
    if frac < ABSORPTION_THRESHOLD {
        log::warn!(
            "{}: only {:.3} of sampled runs absorbed in U or T by step {horizon}",
            model.name,
            frac
        );
    }
    Ok(frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{NoiseSpec, Polynomial, SemialgebraicSet};
    use rand::Rng;

    #[test]
    fn clopper_pearson_known_values() {
        // 5 of 10 at 95%: [0.187086, 0.812914]
        let e = clopper_pearson(5, 10, 0.95);
        assert!((e.lower - 0.187_086).abs() < 1e-5, "{e:?}");
        assert!((e.upper - 0.812_914).abs() < 1e-5, "{e:?}");
        let z = clopper_pearson(0, 100, 0.95);
        assert_eq!(z.lower, 0.0);
        assert!((z.upper - 0.036_217).abs() < 1e-5, "{z:?}");
        let f = clopper_pearson(100, 100, 0.95);
        assert_eq!(f.upper, 1.0);
    }

    #[test]
    fn coverage_smoke() {
        let mut covered = 0;
        for run in 0..100u64 {
            let mut rng = substream(99, run);
            let k = (0..1000).filter(|_| rng.random::<f64>() < 0.3).count() as u64;
            let e = clopper_pearson(k, 1000, 0.95);
            if e.lower <= 0.3 && 0.3 <= e.upper {
                covered += 1;
            }
        }
        assert!(covered >= 90, "{covered}");
    }

    fn contraction(u: SemialgebraicSet) -> SystemModel {
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        SystemModel::new(
            "contract",
            Mode::Safety,
            false,
            vec![&x.scale(0.5) + &w.scale(0.1)],
            NoiseSpec::uniform(1),
            SemialgebraicSet::boxed(&[-1.0], &[1.0]),
            SemialgebraicSet::boxed(&[-0.1], &[0.1]),
            u,
            None,
        )
        .unwrap()
    }

    #[test]
    fn empty_unsafe_set_is_always_safe() {
        let m = contraction(SemialgebraicSet::empty(1));
        let e = estimate_safety(&m, 50, 2000, 0.95, 3, Execution::default()).unwrap();
        assert_eq!(e.overall.point, 1.0);
        assert_eq!(e.overall.upper, 1.0);
        assert!(e.overall.lower > 0.99);
    }

    #[test]
    fn vacuous_observation_matches_unconditional() {
        // from |x0| <= 0.1 one step reaches at most 0.25, so U = {x >= 0.3}
        // cannot be hit before the observation and O = X is a sure event
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        let xs = Polynomial::state_var(1, 0, 0);
        let m = SystemModel::new(
            "c2",
            Mode::Safety,
            false,
            vec![&x.scale(0.5) + &w.scale(0.2)],
            NoiseSpec::uniform(1),
            SemialgebraicSet::boxed(&[-1.0], &[1.0]),
            SemialgebraicSet::boxed(&[-0.1], &[0.1]),
            SemialgebraicSet::from_poly(&xs - &Polynomial::constant(1, 0, 0.3)).unwrap(),
            None,
        )
        .unwrap();
        let obs = [ObservationEvent::new(1, m.x_set.clone())];
        let n = 5 * CHUNK;
        let c = estimate_conditional(&m, &obs, 60, n, 10 * n, 0.95, 5, Execution::default()).unwrap();
        let u = estimate_safety(&m, 60, n, 0.95, 5, Execution::default()).unwrap();
        assert_eq!(c.accepted, n);
        assert_eq!(c.estimate, u.overall);
        assert!(u.overall.point < 1.0 && u.overall.point > 0.0);
    }

    #[test]
    fn too_few_accepted() {
        let m = contraction(SemialgebraicSet::empty(1));
        let obs = [ObservationEvent::new(1, SemialgebraicSet::boxed(&[0.9], &[1.0]))];
        let r = estimate_conditional(&m, &obs, 10, 1000, 5000, 0.95, 1, Execution::default());
        assert!(matches!(r, Err(OracleError::TooFewAccepted { accepted: 0, .. })));
    }

    #[test]
    fn stable_interior_equilibrium_is_not_absorbed() {
        let mut m = contraction(SemialgebraicSet::ball(&[0.9], 0.05));
        m.mode = Mode::ReachAvoid;
        m.target = Some(SemialgebraicSet::ball(&[-0.9], 0.05));
        let f = absorption_check(&m, 200, 2000, 0, Execution::default()).unwrap();
        assert!(f < ABSORPTION_THRESHOLD);
    }

    #[test]
    fn schedule_independent() {
        let x = Polynomial::state_var(1, 0, 0);
        let u = SemialgebraicSet::from_poly(&x - &Polynomial::constant(1, 0, 0.12)).unwrap();
        let m = contraction(u);
        let a = estimate_safety(&m, 80, 5000, 0.95, 11, Execution::Sequential).unwrap();
        let b = estimate_safety(&m, 80, 5000, 0.95, 11, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
