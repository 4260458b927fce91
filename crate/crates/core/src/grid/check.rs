use serde::Serialize;

use super::backward::ObservationEvent;
use super::discretization::Discretization;
use super::mesh::GridFunction;
use super::GridError;
use crate::poly::Polynomial;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BarrierKind {
    Obf,
    Osbf,
    Orbf,
}

/// Stationary tail used for `t >= t_k + 1`.
#[derive(Clone, Copy, Debug)]
pub enum TailRef<'a> {
    Poly(&'a Polynomial),
    Grid(&'a GridFunction),
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub condition: u8,
    pub label: &'static str,
    pub max_violation: f64,
    /// `(time, node)` of the worst violation; time is `None` for the tail.
    pub worst: Option<(Option<usize>, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub kind: BarrierKind,
    pub tol: f64,
    pub conditions: Vec<ConditionReport>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.conditions.iter().all(|c| c.max_violation <= self.tol)
    }

    pub fn max_violation(&self) -> f64 {
        self.conditions
            .iter()
            .map(|c| c.max_violation)
            .fold(0.0, f64::max)
    }

    pub fn condition(&self, c: u8) -> Option<&ConditionReport> {
        self.conditions.iter().find(|r| r.condition == c)
    }
}

struct Acc {
    condition: u8,
    label: &'static str,
    max: f64,
    worst: Option<(Option<usize>, usize)>,
}

impl Acc {
    fn new(condition: u8, label: &'static str) -> Self {
        Self {
            condition,
            label,
            max: 0.0,
            worst: None,
        }
    }

    fn see(&mut self, v: f64, t: Option<usize>, node: usize) {
        if v > self.max || v.is_nan() {
            self.max = if v.is_nan() { f64::INFINITY } else { v };
            self.worst = Some((t, node));
        }
    }

    fn done(self) -> ConditionReport {
        ConditionReport {
            condition: self.condition,
            label: self.label,
            max_violation: self.max,
            worst: self.worst,
        }
    }
}

/// Evaluates every defining inequality of an OBF (`kind = Obf`, threshold
/// `q`) or OSBF/ORBF (threshold `p`) at the grid nodes of `X` and reports
/// the largest violation per condition.
///
/// Observation times use the observation branch only (the "safe before
/// observation" inequality is checked at the other times), matching the
/// backward construction. `tail` is required for conditions 3 and 6 of the
/// safety and reach-avoid kinds.
pub fn check_certificate(
    disc: &Discretization,
    obs: &[ObservationEvent],
    layers: &[GridFunction],
    threshold: f64,
    kind: BarrierKind,
    tail: Option<TailRef<'_>>,
    tol: f64,
) -> Result<CheckReport, GridError> {
    let tk = obs.last().ok_or(GridError::EmptyObservations)?.time as usize;
    if layers.len() != tk + 2 {
        return Err(GridError::BadParameter(format!(
            "expected {} layers, got {}",
            tk + 2,
            layers.len()
        )));
    }
    let in_x = disc.in_x();
    let in_u = disc.in_u();
    let safe = disc.safe_mask();
    let obs_masks: Vec<(usize, Vec<bool>)> = obs
        .iter()
        .map(|e| (e.time as usize, disc.observation_mask(&e.region)))
        .collect();
    let x_nodes: Vec<usize> = (0..disc.num_nodes()).filter(|&i| in_x[i]).collect();
    let obf = kind == BarrierKind::Obf;

    let mut c1 = Acc::new(1, if obf { "probability" } else { "nonnegativity" });
    let mut c2 = Acc::new(2, "initial");
    let mut c3 = Acc::new(3, if obf { "terminal" } else { "safety" });
    let mut c4 = Acc::new(4, "safe before observation");
    let mut c5 = Acc::new(5, if obf { "observation-aware increase" } else { "observation-aware decrease" });
    let mut c6 = Acc::new(6, "expected decrease after last observation");

    for (t, layer) in layers.iter().enumerate() {
        let vals = layer.values();
        for &i in &x_nodes {
            let v = vals[i];
            let low = -v;
            let high = if obf { v - 1.0 } else { f64::NEG_INFINITY };
            c1.see(low.max(high), Some(t), i);
        }
    }
    for &i in disc.init_nodes() {
        let v = layers[0].values()[i];
        let viol = if obf { threshold - v } else { v - threshold };
        c2.see(viol, Some(0), i);
    }
    let terminal = &layers[tk + 1];
    if obf {
        for &i in &x_nodes {
            c3.see((terminal.values()[i] - 1.0).abs(), Some(tk + 1), i);
        }
    } else {
        for &i in &x_nodes {
            if in_u[i] {
                c3.see(1.0 - terminal.values()[i], Some(tk + 1), i);
            }
        }
    }
    for t in 0..=tk {
        let (cond, mask) = match obs_masks.iter().find(|(ot, _)| *ot == t) {
            Some((_, m)) => (&mut c5, m),
            None => (&mut c4, &safe),
        };
        let next = &layers[t + 1];
        let cur = layers[t].values();
        for &i in &x_nodes {
            let e = if mask[i] { disc.expectation_of(next, i) } else { 0.0 };
            let viol = if obf { cur[i] - e } else { e - cur[i] };
            cond.see(viol, Some(t), i);
        }
    }

    let mut conditions = vec![c1.done(), c2.done(), c3.done(), c4.done(), c5.done()];
    if !obf {
        let cont = disc.continue_mask();
        match tail {
            Some(TailRef::Poly(v)) => {
                let model = disc.model();
                let ev = v
                    .compose(&model.dynamics)
                    .and_then(|p| p.expect(&model.noise))
                    .map_err(|e| GridError::BadParameter(e.to_string()))?;
                let grid = disc.grid();
                let mut x = vec![0.0; grid.dim()];
                for &i in &x_nodes {
                    if cont[i] {
                        grid.node_coords(i, &mut x);
                        c6.see(ev.eval_state(&x) - v.eval_state(&x), None, i);
                    }
                }
            }
            Some(TailRef::Grid(g)) => {
                for &i in &x_nodes {
                    if cont[i] {
                        c6.see(disc.expectation_of(g, i) - g.values()[i], None, i);
                    }
                }
            }
            None => {
                return Err(GridError::BadParameter(
                    "a tail is required to check a safety or reach-avoid barrier".into(),
                ))
            }
        }
        conditions.push(c6.done());
    }
    Ok(CheckReport {
        kind,
        tol,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::backward::{get_obf, get_osbf};
    use crate::par::Execution;
    use crate::poly::{Mode, NoiseDist, NoiseSpec, SemialgebraicSet, SystemModel};
    use std::sync::Arc;

    fn walk() -> Discretization {
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        let xs = Polynomial::state_var(1, 0, 0);
        let model = SystemModel::new(
            "walk",
            Mode::Safety,
            false,
            vec![&x + &w.scale(0.5)],
            NoiseSpec::new(vec![NoiseDist::DiscreteAtoms(vec![(-1.0, 0.5), (1.0, 0.5)])]).unwrap(),
            SemialgebraicSet::boxed(&[-3.0], &[3.0]),
            SemialgebraicSet::boxed(&[-0.1], &[0.1]),
            SemialgebraicSet::from_poly(&xs - &Polynomial::constant(1, 0, 1.0)).unwrap(),
            None,
        )
        .unwrap();
        Discretization::for_model(Arc::new(model), 13, 8, Execution::Sequential).unwrap()
    }

    fn obs() -> Vec<ObservationEvent> {
        vec![
            ObservationEvent::new(2, SemialgebraicSet::boxed(&[-1.0], &[0.5])),
            ObservationEvent::new(4, SemialgebraicSet::boxed(&[-2.0], &[0.0])),
        ]
    }

    #[test]
    fn constructed_obf_passes() {
        let d = walk();
        let r = get_obf(&d, &obs()).unwrap();
        let rep = check_certificate(&d, &obs(), &r.layers, r.value, BarrierKind::Obf, None, 1e-12).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn perturbed_obf_is_flagged() {
        let d = walk();
        let mut r = get_obf(&d, &obs()).unwrap();
        // raise one node of layer 1 above its expectation bound
        r.layers[1].values_mut()[5] += 0.01;
        let rep = check_certificate(&d, &obs(), &r.layers, r.value, BarrierKind::Obf, None, 1e-6).unwrap();
        assert!(!rep.passed());
        let c4 = rep.condition(4).unwrap();
        assert!(c4.max_violation > 1e-3);
        assert_eq!(c4.worst, Some((Some(1), 5)));
    }

    #[test]
    fn constructed_osbf_with_polynomial_tail() {
        // v(x) = ((x + 3) / 4)^2 is a supermartingale-free test function;
        // only conditions 1-5 are guaranteed by construction.
        let d = walk();
        let xs = Polynomial::state_var(1, 0, 0);
        let v = (&xs + &Polynomial::constant(1, 0, 3.0)).scale(0.25).pow(2);
        let f = |x: &[f64]| v.eval_state(x);
        let r = get_osbf(&d, &obs(), &f).unwrap();
        let rep = check_certificate(&d, &obs(), &r.layers, r.value, BarrierKind::Osbf, Some(TailRef::Poly(&v)), 1e-12)
            .unwrap();
        for c in 1..=5 {
            assert!(rep.condition(c).unwrap().max_violation <= 1e-12, "{rep:?}");
        }
        // E[v(x + 0.5w)] - v(x) = 0.25^2 * 0.25 > 0 on X\U
        let c6 = rep.condition(6).unwrap().max_violation;
        assert!((c6 - 0.015625).abs() < 1e-12, "{c6}");
    }
}
