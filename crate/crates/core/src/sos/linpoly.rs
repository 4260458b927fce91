use std::collections::BTreeMap;

use crate::poly::Polynomial;

/// Affine expression `c + sum_i a_i * var_i` over decision variables.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffExpr {
    pub constant: f64,
    pub terms: BTreeMap<usize, f64>,
}

impl AffExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(id: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(id, 1.0);
        Self { constant: 0.0, terms }
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn add_scaled(&mut self, other: &AffExpr, s: f64) {
        if s == 0.0 {
            return;
        }
        self.constant += s * other.constant;
        for (&id, &a) in &other.terms {
            let e = self.terms.entry(id).or_insert(0.0);
            *e += s * a;
            if *e == 0.0 {
                self.terms.remove(&id);
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(&i, &a)| a * x[i]).sum::<f64>()
    }
}

/// Polynomial in state variables whose coefficients are affine in the
/// decision variables.
#[derive(Clone, Debug, PartialEq)]
pub struct LinPoly {
    num_state: usize,
    terms: BTreeMap<Vec<u32>, AffExpr>,
}

impl LinPoly {
    pub fn zero(num_state: usize) -> Self {
        Self {
            num_state,
            terms: BTreeMap::new(),
        }
    }

    /// Numeric polynomial (state variables only) as a constant-coefficient
    /// template.
    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = Self::zero(p.num_state());
        for (xe, we, c) in p.terms() {
            debug_assert!(we.iter().all(|&k| k == 0));
            out.add_term(xe.to_vec(), &AffExpr::constant(c), 1.0);
        }
        out
    }

    /// `sum_m var(ids[m]) * m(x)` over the given monomials.
    pub fn template(num_state: usize, basis: &[Vec<u32>], ids: &[usize]) -> Self {
        let mut out = Self::zero(num_state);
        for (m, &id) in basis.iter().zip(ids) {
            out.add_term(m.clone(), &AffExpr::var(id), 1.0);
        }
        out
    }

    pub fn num_state(&self) -> usize {
        self.num_state
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, AffExpr> {
        &self.terms
    }

    pub fn add_term(&mut self, e: Vec<u32>, a: &AffExpr, s: f64) {
        let entry = self.terms.entry(e.clone()).or_default();
        entry.add_scaled(a, s);
        if entry.is_zero() {
            self.terms.remove(&e);
        }
    }

    pub fn add_scaled(&mut self, other: &LinPoly, s: f64) {
        for (e, a) in &other.terms {
            self.add_term(e.clone(), a, s);
        }
    }

    /// `self * p` for a numeric polynomial `p`.
    pub fn mul_poly(&self, p: &Polynomial) -> LinPoly {
        let mut out = Self::zero(self.num_state);
        for (e, a) in &self.terms {
            for (xe, _, c) in p.terms() {
                let m: Vec<u32> = e.iter().zip(xe).map(|(i, j)| i + j).collect();
                out.add_term(m, a, c);
            }
        }
        out
    }

    /// Adds `s * var(id) * p`.
    pub fn add_var_times(&mut self, id: usize, p: &Polynomial, s: f64) {
        let v = AffExpr::var(id);
        for (xe, _, c) in p.terms() {
            self.add_term(xe.to_vec(), &v, s * c);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    /// Numeric polynomial at a decision vector.
    pub fn instantiate(&self, vars: &[f64]) -> Polynomial {
        Polynomial::from_terms(
            self.num_state,
            0,
            self.terms.iter().map(|(e, a)| (e.clone(), vec![], a.eval(vars))),
        )
        .expect("exponent lengths are consistent")
    }
}

/// All exponent vectors in `n` variables of total degree `<= d`, graded
/// then lexicographic (constant first).
pub fn monomials_up_to(n: usize, d: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for deg in 0..=d {
        let mut cur = vec![0u32; n];
        push_of_degree(n, deg, 0, &mut cur, &mut out);
    }
    out
}

fn push_of_degree(n: usize, left: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if n == 0 {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        push_of_degree(n, left - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}
