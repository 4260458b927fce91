//! Grid discretization, backward iteration and value iteration.

pub mod backward;
pub mod check;
pub mod discretization;
pub mod mesh;
pub mod quadrature;
pub mod value_iteration;

use thiserror::Error;

pub use backward::{backstep, get_obf, get_orbf, get_osbf, terminal_layer, BackwardPass, ObservationEvent};
pub use check::{check_certificate, BarrierKind, CheckReport, ConditionReport, TailRef};
pub use discretization::Discretization;
pub use mesh::{Grid, GridFunction};
pub use quadrature::{gauss_legendre, QuadratureRule};
pub use value_iteration::{value_iteration_v, ValueIteration};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("state space X is unbounded along some axis; cannot place a grid")]
    UnboundedStateSpace,
    #[error("no grid node lies in the initial set; refine the grid")]
    NoInitialNode,
    #[error("observation sequence is empty")]
    EmptyObservations,
    #[error("observation times must increase: {next} follows {previous}")]
    NonIncreasingTimes { previous: u32, next: u32 },
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged {
        iterate: Box<GridFunction>,
        residual: f64,
        iterations: usize,
    },
}
