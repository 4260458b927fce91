use std::sync::Arc;

use super::discretization::Discretization;
use super::mesh::GridFunction;
use super::GridError;
use crate::par;
use crate::poly::SemialgebraicSet;

/// The state is known to lie in `region` at step `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationEvent {
    pub time: u32,
    pub region: SemialgebraicSet,
}

impl ObservationEvent {
    pub fn new(time: u32, region: SemialgebraicSet) -> Self {
        Self { time, region }
    }
}

/// Output of a backward pass: the threshold at the initial set and the
/// time-indexed function, `layers[t]` for `t = 0..=t_k + 1`.
#[derive(Clone, Debug)]
pub struct BackwardPass {
    pub value: f64,
    pub layers: Vec<GridFunction>,
}

/// One backward update: at kept nodes the expectation of `next` over one
/// step, elsewhere 0.
pub fn backstep(disc: &Discretization, next: &GridFunction, keep: &[bool]) -> GridFunction {
    let mut values = vec![0.0; disc.num_nodes()];
    let nv = next.values();
    let outside = next.outside_value();
    par::fill(disc.exec(), &mut values, |i| {
        if keep[i] {
            disc.expectation(nv, outside, i)
        } else {
            0.0
        }
    });
    GridFunction::new(Arc::clone(disc.grid()), values, outside).expect("grid sizes match")
}

fn check_times(obs: &[ObservationEvent]) -> Result<u32, GridError> {
    let last = obs.last().ok_or(GridError::EmptyObservations)?;
    for pair in obs.windows(2) {
        if pair[1].time <= pair[0].time {
            return Err(GridError::NonIncreasingTimes {
                previous: pair[0].time,
                next: pair[1].time,
            });
        }
    }
    Ok(last.time)
}

fn run_backward(
    disc: &Discretization,
    obs: &[ObservationEvent],
    terminal: GridFunction,
) -> Result<Vec<GridFunction>, GridError> {
    let tk = check_times(obs)? as usize;
    let safe = disc.safe_mask();
    let mut layers = Vec::with_capacity(tk + 2);
    layers.push(terminal);
    let mut pending = obs.iter().rev().peekable();
    for t in (0..=tk).rev() {
        let next = layers.last().expect("terminal pushed");
        let layer = match pending.peek() {
            Some(e) if e.time as usize == t => {
                let mask = disc.observation_mask(&e.region);
                pending.next();
                backstep(disc, next, &mask)
            }
            _ => backstep(disc, next, &safe),
        };
        layers.push(layer);
    }
    layers.reverse();
    Ok(layers)
}

fn init_extreme(disc: &Discretization, f: &GridFunction, max: bool) -> Result<f64, GridError> {
    let nodes = disc.init_nodes();
    if nodes.is_empty() {
        return Err(GridError::NoInitialNode);
    }
    let vals = nodes.iter().map(|&i| f.values()[i]);
    Ok(if max {
        vals.fold(f64::NEG_INFINITY, f64::max)
    } else {
        vals.fold(f64::INFINITY, f64::min)
    })
}

/// Backward construction of the observation barrier; `value` is the lower
/// bound `q` on the probability of matching every observation while staying
/// in `X \ U`.
pub fn get_obf(disc: &Discretization, obs: &[ObservationEvent]) -> Result<BackwardPass, GridError> {
    let terminal = GridFunction::constant(Arc::clone(disc.grid()), 1.0, 0.0);
    let layers = run_backward(disc, obs, terminal)?;
    let q = init_extreme(disc, &layers[0], false)?;
    Ok(BackwardPass { value: q, layers })
}

/// Terminal layer for the safety/reach-avoid passes: the tail on nodes of
/// `X` (clamped at 0), `max(1, max tail)` on nodes outside `X` and outside
/// the grid box.
pub fn terminal_layer(disc: &Discretization, tail: &(dyn Fn(&[f64]) -> f64 + Sync)) -> GridFunction {
    let grid = disc.grid();
    let in_x = disc.in_x();
    let raw = par::map_range(disc.exec(), disc.num_nodes(), |i| {
        if in_x[i] {
            tail(&grid.node(i)).max(0.0)
        } else {
            f64::NAN
        }
    });
    let hi = raw
        .iter()
        .filter(|v| !v.is_nan())
        .copied()
        .fold(1.0, f64::max);
    let values = raw.into_iter().map(|v| if v.is_nan() { hi } else { v }).collect();
    GridFunction::new(Arc::clone(grid), values, hi).expect("grid sizes match")
}

/// Backward construction of the observation-aware safety barrier with tail
/// `v`; `value` is the upper bound `p`.
pub fn get_osbf(
    disc: &Discretization,
    obs: &[ObservationEvent],
    tail: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<BackwardPass, GridError> {
    let terminal = terminal_layer(disc, tail);
    let layers = run_backward(disc, obs, terminal)?;
    let p = init_extreme(disc, &layers[0], true)?;
    Ok(BackwardPass { value: p, layers })
}

/// Reach-avoid variant; only the tail differs.
pub fn get_orbf(
    disc: &Discretization,
    obs: &[ObservationEvent],
    tail: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<BackwardPass, GridError> {
    get_osbf(disc, obs, tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Execution;
    use crate::poly::{Mode, NoiseDist, NoiseSpec, Polynomial, SystemModel};
    use proptest::prelude::*;

    fn walk(unsafe_from: Option<f64>) -> Discretization {
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        let xs = Polynomial::state_var(1, 0, 0);
        let u = match unsafe_from {
            Some(c) => SemialgebraicSet::from_poly(&xs - &Polynomial::constant(1, 0, c)).unwrap(),
            None => SemialgebraicSet::empty(1),
        };
        let model = SystemModel::new(
            "walk",
            Mode::Safety,
            false,
            vec![&x + &w.scale(0.5)],
            NoiseSpec::new(vec![NoiseDist::DiscreteAtoms(vec![(-1.0, 0.5), (1.0, 0.5)])]).unwrap(),
            SemialgebraicSet::boxed(&[-3.0], &[3.0]),
            SemialgebraicSet::boxed(&[-0.1], &[0.1]),
            u,
            None,
        )
        .unwrap();
        Discretization::for_model(Arc::new(model), 13, 8, Execution::Sequential).unwrap()
    }

    fn half_line_ge(c: f64) -> SemialgebraicSet {
        let xs = Polynomial::state_var(1, 0, 0);
        SemialgebraicSet::from_poly(&xs - &Polynomial::constant(1, 0, c)).unwrap()
    }

    #[test]
    fn constant_one_is_preserved_without_unsafe_set() {
        let d = walk(None);
        let one = GridFunction::constant(Arc::clone(d.grid()), 1.0, 1.0);
        let r = backstep(&d, &one, &d.safe_mask());
        assert!(r.values().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn empty_keep_kills_everything() {
        let d = walk(None);
        let one = GridFunction::constant(Arc::clone(d.grid()), 1.0, 1.0);
        let r = backstep(&d, &one, &vec![false; d.num_nodes()]);
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lattice_backstep_is_two_point_average() {
        let d = walk(None);
        let vals: Vec<f64> = (0..13).map(|i| ((i * 7) % 5) as f64).collect();
        let next = GridFunction::new(Arc::clone(d.grid()), vals.clone(), 0.0).unwrap();
        let r = backstep(&d, &next, &d.safe_mask());
        for i in 1..12 {
            assert_eq!(r.values()[i], 0.5 * (vals[i - 1] + vals[i + 1]));
        }
    }

    #[test]
    fn obf_depth_two_matches_enumeration() {
        // from 0, two +-0.5 steps: P(x_2 >= 0) = P(not both down) = 3/4
        let d = walk(None);
        let r = get_obf(&d, &[ObservationEvent::new(2, half_line_ge(0.0))]).unwrap();
        assert!((r.value - 0.75).abs() < 1e-12);
        assert_eq!(r.layers.len(), 4);
    }

    #[test]
    fn obf_of_sure_event_is_one() {
        let d = walk(None);
        let x_all = d.model().x_set.clone();
        let r = get_obf(&d, &[ObservationEvent::new(1, x_all)]).unwrap();
        assert_eq!(r.value, 1.0);
    }

    #[test]
    fn unreachable_observation_gives_zero() {
        let d = walk(None);
        let r = get_obf(&d, &[ObservationEvent::new(1, half_line_ge(2.0))]).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn osbf_zero_tail_gives_zero() {
        let d = walk(None);
        let r = get_osbf(&d, &[ObservationEvent::new(2, half_line_ge(-1.0))], &|_| 0.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn osbf_matches_enumeration() {
        // U = {x >= 1}; observe x_1 <= 0 (i.e. the first step went down).
        // Tail = indicator of U or outside X. From 0: step 1 down to -0.5,
        // step 2 to -1 or 0; neither is unsafe, so p = 0.
        // Observe x_1 in X\U instead: p = P(x_2 >= 1) = 1/4.
        let d = walk(Some(1.0));
        let tail = |x: &[f64]| if x[0] >= 1.0 { 1.0 } else { 0.0 };
        let below = {
            let xs = Polynomial::state_var(1, 0, 0);
            SemialgebraicSet::from_poly(-&xs).unwrap()
        };
        let r = get_osbf(&d, &[ObservationEvent::new(1, below)], &tail).unwrap();
        assert_eq!(r.value, 0.0);
        let all = d.model().x_set.clone();
        let r = get_osbf(&d, &[ObservationEvent::new(1, all)], &tail).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_sequences() {
        let d = walk(None);
        assert!(matches!(get_obf(&d, &[]), Err(GridError::EmptyObservations)));
        let o = half_line_ge(0.0);
        assert!(matches!(
            get_obf(&d, &[ObservationEvent::new(2, o.clone()), ObservationEvent::new(2, o)]),
            Err(GridError::NonIncreasingTimes { .. })
        ));
    }

    proptest! {
        #[test]
        fn obf_layers_in_unit_interval(t in 1u32..6, c in -2.0f64..2.0) {
            let d = walk(Some(1.0));
            let r = get_obf(&d, &[ObservationEvent::new(t, half_line_ge(c))]).unwrap();
            for l in &r.layers {
                prop_assert!(l.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn shrinking_observation_never_increases_q_or_p(
            t in 1u32..6, lo in -2.5f64..0.0, w in 0.2f64..2.0, shrink in 0.0f64..1.0,
        ) {
            let d = walk(Some(1.0));
            let outer = SemialgebraicSet::boxed(&[lo], &[lo + w]);
            let inner = SemialgebraicSet::boxed(&[lo + 0.5 * shrink * w], &[lo + w - 0.5 * shrink * w]);
            let tail = |x: &[f64]| if x[0] >= 1.0 { 1.0 } else { 0.1 };
            let qo = get_obf(&d, &[ObservationEvent::new(t, outer.clone())]).unwrap();
            let qi = get_obf(&d, &[ObservationEvent::new(t, inner.clone())]).unwrap();
            let po = get_osbf(&d, &[ObservationEvent::new(t, outer)], &tail).unwrap();
            let pi = get_osbf(&d, &[ObservationEvent::new(t, inner)], &tail).unwrap();
            for (a, b) in qi.layers.iter().zip(&qo.layers) {
                prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
            }
            for (a, b) in pi.layers.iter().zip(&po.layers) {
                prop_assert!(a.values().iter().zip(b.values()).all(|(x, y)| x <= y));
            }
        }
    }
}
