use super::{substream, Sets};
use crate::grid::ObservationEvent;
use crate::poly::{Mode, SemialgebraicSet, SystemModel};

const MAX_ATTEMPTS: u64 = 10_000;

/// Observation times `gap, 2 gap, ..., len gap`.
pub fn evenly_spaced(len: usize, gap: u32) -> Vec<u32> {
    (1..=len as u32).map(|i| i * gap).collect()
}

/// Observation sequence read off one simulated trajectory: at each time, a
/// box of the given half-width around the current state with `U` (and `T`
/// in reach-avoid mode) cut out. Trajectories that fail, or reach `T`,
/// before the last time are discarded and redrawn. `None` if no trajectory
/// out of many qualifies.
pub fn generate_observations(
    model: &SystemModel,
    times: &[u32],
    half_width: f64,
    seed: u64,
) -> Option<Vec<ObservationEvent>> {
    let last = *times.last()?;
    let init = model.effective_init();
    let bb = init.bounding_box()?;
    let sets = Sets::new(model);
    let mut avoid = model.unsafe_set.clone();
    if model.mode == Mode::ReachAvoid {
        if let Some(t) = &model.target {
            avoid = avoid.union(t);
        }
    }
    let keep_out = avoid.complement();
    let n = model.state_dim();
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = substream(seed, attempt);
        let Some(mut x) = init.sample_in(&bb, &mut rng, 1000) else {
            continue;
        };
        let mut next = vec![0.0; n];
        let mut w = vec![0.0; model.noise_dim()];
        let mut states = Vec::with_capacity(times.len());
        let mut ok = true;
        for step in 0..=last {
            if sets.failure(&x, step).is_some() || sets.target(&x) {
                ok = false;
                break;
            }
            if times.contains(&step) {
                states.push(x.clone());
            }
            model.noise.sample_into(&mut rng, &mut w);
            model.step(&x, &w, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        if !ok {
            continue;
        }
        return Some(
            times
                .iter()
                .zip(states)
                .map(|(&t, c)| {
                    let lo: Vec<f64> = c.iter().map(|v| v - half_width).collect();
                    let hi: Vec<f64> = c.iter().map(|v| v + half_width).collect();
                    ObservationEvent::new(t, SemialgebraicSet::boxed(&lo, &hi).intersect(&keep_out))
                })
                .collect(),
        );
    }
    None
}
