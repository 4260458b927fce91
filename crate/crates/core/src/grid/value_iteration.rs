use std::sync::Arc;

use super::discretization::Discretization;
use super::mesh::GridFunction;
use super::GridError;
use crate::par;
use crate::poly::Mode;

#[derive(Clone, Debug)]
pub struct ValueIteration {
    pub v: GridFunction,
    pub residual: f64,
    pub iterations: usize,
}

/// Monotone fixed-point iteration for the probability of reaching `U`
/// (before `T` in reach-avoid mode), with leaving `X` counted as reaching
/// `U`. Starts from the indicator of `U` and the exterior of `X`.
pub fn value_iteration_v(
    disc: &Discretization,
    eps: f64,
    max_iters: usize,
) -> Result<ValueIteration, GridError> {
    if !(eps > 0.0) {
        return Err(GridError::BadParameter(format!("eps must be positive, got {eps}")));
    }
    let n = disc.num_nodes();
    let ra = disc.model().mode == Mode::ReachAvoid;
    let (in_x, in_u, in_t) = (disc.in_x(), disc.in_u(), disc.in_t());
    let fixed = |i: usize| -> Option<f64> {
        if in_u[i] || !in_x[i] {
            Some(1.0)
        } else if ra && in_t[i] {
            Some(0.0)
        } else {
            None
        }
    };
    let mut cur: Vec<f64> = (0..n).map(|i| fixed(i).unwrap_or(0.0)).collect();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=max_iters {
        par::fill(disc.exec(), &mut next, |i| {
            fixed(i).unwrap_or_else(|| disc.expectation(&cur, 1.0, i))
        });
        residual = cur
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut cur, &mut next);
        if residual < eps {
            let v = GridFunction::new(Arc::clone(disc.grid()), cur, 1.0)?;
            return Ok(ValueIteration {
                v,
                residual,
                iterations: it,
            });
        }
    }
    let v = GridFunction::new(Arc::clone(disc.grid()), cur, 1.0)?;
    Err(GridError::NotConverged {
        iterate: Box::new(v),
        residual,
        iterations: max_iters,
    })
}
