use std::sync::Arc;

use super::GridError;
use crate::poly::Aabb;

pub const MAX_DIM: usize = 6;

/// Rectangular tensor grid. Nodes are stored row-major (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    strides: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self, GridError> {
        let d = lower.len();
        if upper.len() != d || counts.len() != d || d == 0 {
            return Err(GridError::BadGrid("axis arrays must have equal nonzero length".into()));
        }
        if d > MAX_DIM {
            return Err(GridError::BadGrid(format!("at most {MAX_DIM} axes supported")));
        }
        for a in 0..d {
            if !(lower[a] < upper[a]) || !lower[a].is_finite() || !upper[a].is_finite() {
                return Err(GridError::BadGrid(format!(
                    "axis {a}: lower {} must be below upper {}",
                    lower[a], upper[a]
                )));
            }
            if counts[a] < 2 {
                return Err(GridError::BadGrid(format!("axis {a}: need at least 2 nodes")));
            }
        }
        let mut strides = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * counts[a + 1];
        }
        let spacing = (0..d)
            .map(|a| (upper[a] - lower[a]) / (counts[a] - 1) as f64)
            .collect();
        Ok(Self {
            lower,
            upper,
            counts,
            strides,
            spacing,
        })
    }

    /// Grid over a box with `res` nodes on every axis.
    pub fn over_box(bb: &Aabb, res: usize) -> Result<Self, GridError> {
        Self::new(bb.lower.clone(), bb.upper.clone(), vec![res; bb.dim()])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn num_nodes(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + i as f64 * self.spacing[axis]
        }
    }

    pub fn node_coords(&self, idx: usize, out: &mut [f64]) {
        let mut r = idx;
        for a in 0..self.dim() {
            let i = r / self.strides[a];
            r %= self.strides[a];
            out[a] = self.axis_coord(a, i);
        }
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.node_coords(idx, &mut x);
        x
    }

    /// Cell containing `x`: the lowest corner index and the per-axis
    /// fractional offsets in `[0, 1]`. `None` outside the grid box.
    #[inline]
    pub fn locate(&self, x: &[f64], fracs: &mut [f64]) -> Option<usize> {
        let mut base = 0;
        for a in 0..self.dim() {
            let v = x[a];
            if !(v >= self.lower[a] && v <= self.upper[a]) {
                return None;
            }
            let t = (v - self.lower[a]) / self.spacing[a];
            let mut i = t.floor() as usize;
            if i >= self.counts[a] - 1 {
                i = self.counts[a] - 2;
            }
            fracs[a] = (t - i as f64).clamp(0.0, 1.0);
            base += i * self.strides[a];
        }
        Some(base)
    }

    /// Multilinear interpolation of node `values` in the cell at `base`.
    #[inline]
    pub fn interpolate(&self, values: &[f64], base: usize, fracs: &[f64]) -> f64 {
        let d = self.dim();
        let mut s = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    w *= fracs[a];
                    idx += self.strides[a];
                } else {
                    w *= 1.0 - fracs[a];
                }
            }
            if w != 0.0 {
                s += w * values[idx];
            }
        }
        s
    }
}

/// Scalar field sampled on a grid, multilinear inside the box and constant
/// outside it.
#[derive(Clone, Debug)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    outside_value: f64,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, outside_value: f64) -> Result<Self, GridError> {
        if values.len() != grid.num_nodes() {
            return Err(GridError::BadGrid(format!(
                "{} values for {} nodes",
                values.len(),
                grid.num_nodes()
            )));
        }
        Ok(Self {
            grid,
            values,
            outside_value,
        })
    }

    pub fn constant(grid: Arc<Grid>, c: f64, outside_value: f64) -> Self {
        let n = grid.num_nodes();
        Self {
            grid,
            values: vec![c; n],
            outside_value,
        }
    }

    pub fn from_fn(grid: Arc<Grid>, outside_value: f64, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.num_nodes())
            .map(|i| {
                grid.node_coords(i, &mut x);
                f(&x)
            })
            .collect();
        Self {
            grid,
            values,
            outside_value,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn outside_value(&self) -> f64 {
        self.outside_value
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut fracs = [0.0; MAX_DIM];
        let fr = &mut fracs[..self.grid.dim()];
        match self.grid.locate(x, fr) {
            Some(b) => self.grid.interpolate(&self.values, b, fr),
            None => self.outside_value,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn node_layout_row_major() {
        let g = Grid::new(vec![0.0, -1.0], vec![1.0, 1.0], vec![3, 5]).unwrap();
        assert_eq!(g.num_nodes(), 15);
        assert_eq!(g.node(0), vec![0.0, -1.0]);
        assert_eq!(g.node(1), vec![0.0, -0.5]);
        assert_eq!(g.node(5), vec![0.5, -1.0]);
        assert_eq!(g.node(14), vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_degenerate_axes() {
        assert!(Grid::new(vec![0.0], vec![0.0], vec![3]).is_err());
        assert!(Grid::new(vec![0.0], vec![1.0], vec![1]).is_err());
    }

    #[test]
    fn interpolation_reproduces_affine_functions() {
        let g = Arc::new(Grid::new(vec![-1.0, 0.0], vec![1.0, 2.0], vec![5, 9]).unwrap());
        let f = GridFunction::from_fn(g, -7.0, |x| 2.0 * x[0] - 0.5 * x[1] + 0.25);
        for p in [[0.13, 1.71], [-1.0, 0.0], [1.0, 2.0], [0.5, 0.3333]] {
            let want = 2.0 * p[0] - 0.5 * p[1] + 0.25;
            assert!((f.eval(&p) - want).abs() < 1e-12);
        }
        assert_eq!(f.eval(&[1.01, 0.5]), -7.0);
    }

    #[test]
    fn lattice_points_are_exact() {
        let g = Arc::new(Grid::new(vec![-3.0], vec![3.0], vec![13]).unwrap());
        let f = GridFunction::from_fn(g, 0.0, |x| x[0] * x[0]);
        for k in 0..13 {
            let x = -3.0 + 0.5 * k as f64;
            assert_eq!(f.eval(&[x]), x * x);
        }
    }

    proptest! {
        #[test]
        fn interpolation_stays_within_node_range(
            vals in proptest::collection::vec(0.0f64..1.0, 16),
            px in 0.0f64..3.0, py in 0.0f64..3.0,
        ) {
            let g = Arc::new(Grid::new(vec![0.0, 0.0], vec![3.0, 3.0], vec![4, 4]).unwrap());
            let f = GridFunction::new(g, vals.clone(), 0.0).unwrap();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let v = f.eval(&[px, py]);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
