use gauss_quad::GaussLegendre;

use crate::poly::{NoiseDist, NoiseSpec};

/// Tensor-product rule for the noise expectation. Each dimension's weights
/// sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    per_dim: Vec<Vec<(f64, f64)>>,
}

impl QuadratureRule {
    /// Gauss-Legendre of the given order for uniform dimensions, the atoms
    /// themselves for discrete ones.
    pub fn for_noise(noise: &NoiseSpec, order: usize) -> Self {
        let per_dim = noise
            .dists()
            .iter()
            .map(|d| match d {
                NoiseDist::UniformSymmetric => gauss_legendre(order),
                NoiseDist::DiscreteAtoms(a) => a.clone(),
            })
            .collect();
        Self { per_dim }
    }

    pub fn from_pairs(per_dim: Vec<Vec<(f64, f64)>>) -> Self {
        Self { per_dim }
    }

    pub fn dims(&self) -> usize {
        self.per_dim.len()
    }

    pub fn per_dim(&self) -> &[Vec<(f64, f64)>] {
        &self.per_dim
    }

    pub fn num_points(&self) -> usize {
        self.per_dim.iter().map(Vec::len).product()
    }

    /// Tensor-product points `(w, weight)`, first dimension slowest.
    pub fn points(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out = vec![(Vec::with_capacity(self.dims()), 1.0)];
        for rule in &self.per_dim {
            let mut next = Vec::with_capacity(out.len() * rule.len());
            for (w, wt) in &out {
                for &(node, weight) in rule {
                    let mut v = w.clone();
                    v.push(node);
                    next.push((v, wt * weight));
                }
            }
            out = next;
        }
        out
    }
}

/// Gauss-Legendre nodes on `[-1, 1]` in ascending order, weights rescaled to
/// sum to one.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    if order <= 1 {
        return vec![(0.0, 1.0)];
    }
    let rule = GaussLegendre::new(order).expect("order >= 2");
    let mut pairs: Vec<(f64, f64)> = rule.as_node_weight_pairs().to_vec();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    for p in &mut pairs {
        p.1 /= total;
    }
    pairs
}
