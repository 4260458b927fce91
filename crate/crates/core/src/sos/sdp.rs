use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::linpoly::monomials_up_to;
use super::program::SosProgram;
use super::SosError;

/// Number of entries in the packed upper triangle of an `n x n` matrix.
pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Position of entry `(i, j)` in the packed upper triangle, stored column
/// by column. Off-diagonal entries are stored scaled by `sqrt(2)`.
pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// `sum coefs[k].1 * x[coefs[k].0] = rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Equality {
    pub coefs: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// Standard-form SDP over the variable vector `[free scalars, svec(Q_1),
/// svec(Q_2), ...]`: minimize `objective . x` subject to the equalities
/// and every `Q_b` positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub num_free: usize,
    pub blocks: Vec<usize>,
    pub block_offsets: Vec<usize>,
    pub equalities: Vec<Equality>,
    pub objective: Vec<(usize, f64)>,
    pub objective_constant: f64,
    /// Monomial half-basis of each block.
    pub bases: Vec<Vec<Vec<u32>>>,
    pub labels: Vec<String>,
}

impl SdpProblem {
    pub fn num_vars(&self) -> usize {
        self.block_offsets
            .last()
            .zip(self.blocks.last())
            .map_or(self.num_free, |(o, &b)| o + svec_len(b))
    }

    /// Symmetric matrix of block `b` from a solution vector.
    pub fn gram(&self, x: &[f64], b: usize) -> DMatrix<f64> {
        let n = self.blocks[b];
        let off = self.block_offsets[b];
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DMatrix::from_fn(n, n, |i, j| {
            let v = x[off + svec_index(i, j)];
            if i == j {
                v
            } else {
                v * s
            }
        })
    }

    /// Largest equality residual and largest negative eigenvalue magnitude.
    pub fn primal_residual(&self, x: &[f64]) -> f64 {
        let eq = self
            .equalities
            .iter()
            .map(|e| (e.coefs.iter().map(|&(k, a)| a * x[k]).sum::<f64>() - e.rhs).abs())
            .fold(0.0, f64::max);
        let psd = (0..self.blocks.len())
            .map(|b| {
                let m = self.gram(x, b);
                let min = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
                (-min).max(0.0)
            })
            .fold(0.0, f64::max);
        eq.max(psd)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective_constant + self.objective.iter().map(|&(k, a)| a * x[k]).sum::<f64>()
    }
}

/// Lowers every SOS constraint `p(x; a)` to `p = z^T Q z` with a PSD Gram
/// block `Q` over all monomials of degree `<= ceil(deg p / 2)`, matching
/// coefficients monomial by monomial.
pub fn sos_to_sdp(program: &SosProgram, max_block: usize) -> Result<SdpProblem, SosError> {
    let n = program.num_state;
    let mut sdp = SdpProblem {
        num_free: program.num_vars,
        blocks: Vec::new(),
        block_offsets: Vec::new(),
        equalities: Vec::new(),
        objective: program.objective.terms.iter().map(|(&k, &a)| (k, a)).collect(),
        objective_constant: program.objective.constant,
        bases: Vec::new(),
        labels: Vec::new(),
    };
    let mut offset = program.num_vars;
    let sqrt2 = std::f64::consts::SQRT_2;
    for c in &program.constraints {
        let half = c.poly.degree().div_ceil(2);
        let basis = monomials_up_to(n, half);
        let size = basis.len();
        if size > max_block {
            return Err(SosError::BlockTooLarge { size, cap: max_block });
        }
        // monomial -> contributions of Gram entries
        let mut rows: BTreeMap<Vec<u32>, Vec<(usize, f64)>> = BTreeMap::new();
        for j in 0..size {
            for i in 0..=j {
                let m: Vec<u32> = basis[i].iter().zip(&basis[j]).map(|(a, b)| a + b).collect();
                let w = if i == j { 1.0 } else { sqrt2 };
                rows.entry(m).or_default().push((offset + svec_index(i, j), w));
            }
        }
        for m in c.poly.terms().keys() {
            rows.entry(m.clone()).or_default();
        }
        for (m, mut coefs) in rows {
            let (rhs, lin) = match c.poly.terms().get(&m) {
                Some(a) => (a.constant, Some(a)),
                None => (0.0, None),
            };
            if let Some(a) = lin {
                coefs.extend(a.terms.iter().map(|(&k, &v)| (k, -v)));
            }
            sdp.equalities.push(Equality { coefs, rhs });
        }
        sdp.blocks.push(size);
        sdp.block_offsets.push(offset);
        sdp.bases.push(basis);
        sdp.labels.push(c.label.clone());
        offset += svec_len(size);
    }
    Ok(sdp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use crate::sos::linpoly::LinPoly;
    use crate::sos::program::SosConstraint;

    #[test]
    fn svec_layout_is_column_major_upper() {
        assert_eq!(svec_index(0, 0), 0);
        assert_eq!(svec_index(0, 1), 1);
        assert_eq!(svec_index(1, 1), 2);
        assert_eq!(svec_index(0, 2), 3);
        assert_eq!(svec_index(2, 1), 4);
        assert_eq!(svec_index(2, 2), 5);
        assert_eq!(svec_len(3), 6);
    }

    #[test]
    fn gram_unpacks_scaled_offdiagonals() {
        let mut sdp = SdpProblem {
            num_free: 0,
            blocks: vec![2],
            block_offsets: vec![0],
            equalities: vec![],
            objective: vec![],
            objective_constant: 0.0,
            bases: vec![],
            labels: vec![],
        };
        let x = [1.0, 2f64.sqrt() * 0.5, 3.0];
        let g = sdp.gram(&x, 0);
        assert!((g[(0, 1)] - 0.5).abs() < 1e-15 && (g[(1, 0)] - 0.5).abs() < 1e-15);
        assert_eq!(sdp.num_vars(), 3);
        sdp.equalities.push(Equality {
            coefs: vec![(0, 1.0)],
            rhs: 1.0,
        });
        assert!(sdp.primal_residual(&x) < 1e-15);
    }

    #[test]
    fn one_plus_x_squared_equalities() {
        let mut prog = SosProgram::empty(1);
        let p = &Polynomial::constant(1, 0, 1.0) + &Polynomial::monomial(&[2], &[], 1.0);
        prog.constraints.push(SosConstraint {
            label: "p".into(),
            poly: LinPoly::from_poly(&p),
        });
        let sdp = sos_to_sdp(&prog, 300).unwrap();
        assert_eq!(sdp.blocks, vec![2]);
        assert_eq!(sdp.equalities.len(), 3);
        // Q = I is a witness
        let x = [1.0, 0.0, 1.0];
        assert!(sdp.primal_residual(&x) < 1e-15);
    }

    #[test]
    fn block_cap() {
        let mut prog = SosProgram::empty(2);
        prog.constraints.push(SosConstraint {
            label: "p".into(),
            poly: LinPoly::from_poly(&Polynomial::monomial(&[4, 4], &[], 1.0)),
        });
        assert!(matches!(sos_to_sdp(&prog, 10), Err(SosError::BlockTooLarge { size: 15, cap: 10 })));
    }
}
