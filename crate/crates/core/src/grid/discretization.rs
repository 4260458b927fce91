use std::sync::Arc;

use super::mesh::{Grid, GridFunction, MAX_DIM};
use super::quadrature::QuadratureRule;
use super::GridError;
use crate::par::{self, Execution};
use crate::poly::{Mode, SemialgebraicSet, SystemModel};

const OUTSIDE: u32 = u32::MAX;

/// A model bound to a grid and a quadrature rule, with the one-step
/// transition images of every (node, quadrature point) pair precomputed.
///
/// The transition table is built once and shared by every backward pass,
/// value iteration and check that uses the same discretization.
#[derive(Debug)]
pub struct Discretization {
    model: Arc<SystemModel>,
    grid: Arc<Grid>,
    quad: QuadratureRule,
    weights: Vec<f64>,
    base: Vec<u32>,
    fracs: Vec<f64>,
    in_x: Vec<bool>,
    in_u: Vec<bool>,
    in_t: Vec<bool>,
    init_nodes: Vec<usize>,
    exec: Execution,
}

impl Discretization {
    pub fn new(
        model: Arc<SystemModel>,
        grid: Arc<Grid>,
        quad: QuadratureRule,
        exec: Execution,
    ) -> Result<Self, GridError> {
        let d = grid.dim();
        if d != model.state_dim() {
            return Err(GridError::BadGrid(format!(
                "grid has {d} axes, model state has {}",
                model.state_dim()
            )));
        }
        if quad.dims() != model.noise_dim() {
            return Err(GridError::BadGrid(format!(
                "quadrature has {} dimensions, model noise has {}",
                quad.dims(),
                model.noise_dim()
            )));
        }
        let n = grid.num_nodes();
        if n >= OUTSIDE as usize {
            return Err(GridError::BadGrid("grid too large".into()));
        }
        let points = quad.points();
        let nq = points.len();
        let weights: Vec<f64> = points.iter().map(|p| p.1).collect();

        let images: Vec<(Vec<u32>, Vec<f64>)> = par::map_range(exec, n, |node| {
            let x = grid.node(node);
            let mut y = [0.0; MAX_DIM];
            let mut fr = [0.0; MAX_DIM];
            let mut bases = Vec::with_capacity(nq);
            let mut fracs = vec![0.0; nq * d];
            for (q, (w, _)) in points.iter().enumerate() {
                model.step(&x, w, &mut y[..d]);
                match grid.locate(&y[..d], &mut fr[..d]) {
                    Some(b) => {
                        bases.push(b as u32);
                        fracs[q * d..(q + 1) * d].copy_from_slice(&fr[..d]);
                    }
                    None => bases.push(OUTSIDE),
                }
            }
            (bases, fracs)
        });
        let mut base = Vec::with_capacity(n * nq);
        let mut fracs = Vec::with_capacity(n * nq * d);
        for (b, f) in images {
            base.extend(b);
            fracs.extend(f);
        }

        let in_x = node_mask(exec, &grid, &model.x_set);
        let in_u = node_mask(exec, &grid, &model.unsafe_set);
        let in_t = match &model.target {
            Some(t) => node_mask(exec, &grid, t),
            None => vec![false; n],
        };
        let init = node_mask(exec, &grid, &model.init);
        let init_nodes = (0..n).filter(|&i| init[i] && in_x[i]).collect();
        Ok(Self {
            model,
            grid,
            quad,
            weights,
            base,
            fracs,
            in_x,
            in_u,
            in_t,
            init_nodes,
            exec,
        })
    }

    /// Grid with `res` nodes per axis over the bounding box of `X` and a
    /// Gauss-Legendre rule of the given order.
    pub fn for_model(
        model: Arc<SystemModel>,
        res: usize,
        quad_order: usize,
        exec: Execution,
    ) -> Result<Self, GridError> {
        let bb = model.state_box().ok_or(GridError::UnboundedStateSpace)?;
        let grid = Arc::new(Grid::over_box(&bb, res)?);
        let quad = QuadratureRule::for_noise(&model.noise, quad_order);
        Self::new(model, grid, quad, exec)
    }

    pub fn model(&self) -> &Arc<SystemModel> {
        &self.model
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn quad(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn exec(&self) -> Execution {
        self.exec
    }

    pub fn num_nodes(&self) -> usize {
        self.grid.num_nodes()
    }

    pub fn in_x(&self) -> &[bool] {
        &self.in_x
    }

    pub fn in_u(&self) -> &[bool] {
        &self.in_u
    }

    pub fn in_t(&self) -> &[bool] {
        &self.in_t
    }

    /// Nodes of `I` that are also in `X`.
    pub fn init_nodes(&self) -> &[usize] {
        &self.init_nodes
    }

    /// `X \ U` at the nodes.
    pub fn safe_mask(&self) -> Vec<bool> {
        self.in_x
            .iter()
            .zip(&self.in_u)
            .map(|(&x, &u)| x && !u)
            .collect()
    }

    /// `O ∩ X \ U` at the nodes.
    pub fn observation_mask(&self, region: &SemialgebraicSet) -> Vec<bool> {
        let o = node_mask(self.exec, &self.grid, region);
        o.into_iter()
            .zip(self.safe_mask())
            .map(|(a, b)| a && b)
            .collect()
    }

    /// `X \ (U ∪ T)` in reach-avoid mode, `X \ U` otherwise.
    pub fn continue_mask(&self) -> Vec<bool> {
        let ra = self.model.mode == Mode::ReachAvoid;
        (0..self.num_nodes())
            .map(|i| self.in_x[i] && !self.in_u[i] && !(ra && self.in_t[i]))
            .collect()
    }

    /// `E_w[f(F(x_node, w))]` by the quadrature rule, with `outside` used
    /// for images that leave the grid box. Summation order is fixed.
    #[inline]
    pub fn expectation(&self, values: &[f64], outside: f64, node: usize) -> f64 {
        let d = self.grid.dim();
        let nq = self.weights.len();
        let mut s = 0.0;
        for q in 0..nq {
            let k = node * nq + q;
            let b = self.base[k];
            let v = if b == OUTSIDE {
                outside
            } else {
                self.grid
                    .interpolate(values, b as usize, &self.fracs[k * d..(k + 1) * d])
            };
            s += self.weights[q] * v;
        }
        s
    }

    pub fn expectation_of(&self, f: &GridFunction, node: usize) -> f64 {
        self.expectation(f.values(), f.outside_value(), node)
    }

    /// Mask of grid nodes inside `set`.
    pub fn mask(&self, set: &SemialgebraicSet) -> Vec<bool> {
        node_mask(self.exec, &self.grid, set)
    }
}

fn node_mask(exec: Execution, grid: &Grid, set: &SemialgebraicSet) -> Vec<bool> {
    par::map_range(exec, grid.num_nodes(), |i| set.contains(&grid.node(i)))
}
