use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::polynomial::{CompiledPoly, Polynomial};
use super::{PolyError, PolyJson};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `p(x) >= 0`
    Ge,
    /// `p(x) > 0`; membership tests treat it as `>= 0`.
    Gt,
}

/// One polynomial constraint `poly(x) rel 0` over state variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub poly: Polynomial,
    pub rel: Relation,
}

impl Atom {
    pub fn ge(poly: Polynomial) -> Self {
        Self {
            poly,
            rel: Relation::Ge,
        }
    }

    pub fn holds(&self, x: &[f64]) -> bool {
        self.poly.eval_state(x) >= 0.0
    }

    fn negated(&self) -> Atom {
        Atom {
            poly: -&self.poly,
            rel: match self.rel {
                Relation::Ge => Relation::Gt,
                Relation::Gt => Relation::Ge,
            },
        }
    }
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct Aabb {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Aabb {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| v >= l && v <= u)
    }

    pub fn intersect(&self, other: &Aabb) -> Option<Aabb> {
        let lower: Vec<f64> = self.lower.iter().zip(&other.lower).map(|(a, b)| a.max(*b)).collect();
        let upper: Vec<f64> = self.upper.iter().zip(&other.upper).map(|(a, b)| a.min(*b)).collect();
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            None
        } else {
            Some(Aabb { lower, upper })
        }
    }

    pub fn hull(&self, other: &Aabb) -> Aabb {
        Aabb {
            lower: self.lower.iter().zip(&other.lower).map(|(a, b)| a.min(*b)).collect(),
            upper: self.upper.iter().zip(&other.upper).map(|(a, b)| a.max(*b)).collect(),
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let (l, u) = (self.lower[i], self.upper[i]);
            *o = if u > l { rng.random_range(l..=u) } else { l };
        }
    }
}

/// Finite union of conjunctions of polynomial constraints over the state.
///
/// An empty disjunct list is the empty set; a disjunct with no atoms is the
/// whole space.
#[derive(Clone, Debug, PartialEq)]
pub struct SemialgebraicSet {
    dim: usize,
    disjuncts: Vec<Vec<Atom>>,
}

impl SemialgebraicSet {
    pub fn new(dim: usize, disjuncts: Vec<Vec<Atom>>) -> Result<Self, PolyError> {
        for atom in disjuncts.iter().flatten() {
            if atom.poly.num_state() != dim {
                return Err(PolyError::DimensionMismatch {
                    what: "set constraint state dimension",
                    expected: dim,
                    got: atom.poly.num_state(),
                });
            }
            if !atom.poly.is_state_only() {
                return Err(PolyError::NoiseInSet);
            }
        }
        // normalize to zero noise variables
        let disjuncts = disjuncts
            .into_iter()
            .map(|d| {
                d.into_iter()
                    .map(|a| Atom {
                        poly: if a.poly.num_noise() == 0 {
                            a.poly
                        } else {
                            strip_noise(&a.poly)
                        },
                        rel: a.rel,
                    })
                    .collect()
            })
            .collect();
        Ok(Self { dim, disjuncts })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            disjuncts: Vec::new(),
        }
    }

    pub fn whole(dim: usize) -> Self {
        Self {
            dim,
            disjuncts: vec![Vec::new()],
        }
    }

    /// `{x : p(x) >= 0}`.
    pub fn from_poly(p: Polynomial) -> Result<Self, PolyError> {
        let dim = p.num_state();
        Self::new(dim, vec![vec![Atom::ge(p)]])
    }

    /// Box `low <= x <= high` as one disjunct of linear constraints.
    pub fn boxed(low: &[f64], high: &[f64]) -> Self {
        let n = low.len();
        let mut atoms = Vec::with_capacity(2 * n);
        for i in 0..n {
            let xi = Polynomial::state_var(n, 0, i);
            atoms.push(Atom::ge(&xi - &Polynomial::constant(n, 0, low[i])));
            atoms.push(Atom::ge(&Polynomial::constant(n, 0, high[i]) - &xi));
        }
        Self {
            dim: n,
            disjuncts: vec![atoms],
        }
    }

    /// Closed ball `|x - center|^2 <= radius^2`.
    pub fn ball(center: &[f64], radius: f64) -> Self {
        let n = center.len();
        let mut p = Polynomial::constant(n, 0, radius * radius);
        for (i, &c) in center.iter().enumerate() {
            let d = &Polynomial::state_var(n, 0, i) - &Polynomial::constant(n, 0, c);
            p = &p - &(&d * &d);
        }
        Self {
            dim: n,
            disjuncts: vec![vec![Atom::ge(p)]],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn disjuncts(&self) -> &[Vec<Atom>] {
        &self.disjuncts
    }

    pub fn is_empty_syntactically(&self) -> bool {
        self.disjuncts.is_empty()
    }

    /// Membership; strict relations are evaluated as non-strict.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.disjuncts.iter().any(|d| d.iter().all(|a| a.holds(x)))
    }

    pub fn intersect(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = Vec::with_capacity(self.disjuncts.len() * other.disjuncts.len());
        for a in &self.disjuncts {
            for b in &other.disjuncts {
                let mut d = a.clone();
                d.extend(b.iter().cloned());
                out.push(d);
            }
        }
        Self {
            dim: self.dim,
            disjuncts: out,
        }
    }

    pub fn union(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut d = self.disjuncts.clone();
        d.extend(other.disjuncts.iter().cloned());
        Self {
            dim: self.dim,
            disjuncts: d,
        }
    }

    /// Set complement in disjunctive normal form (De Morgan, then
    /// distribution). Boundaries are shared with the original set under the
    /// non-strict membership convention.
    pub fn complement(&self) -> Self {
        // not(or_i and_j a_ij) = and_i or_j not(a_ij)
        let mut acc = Self::whole(self.dim);
        for d in &self.disjuncts {
            let negated = Self {
                dim: self.dim,
                disjuncts: d.iter().map(|a| vec![a.negated()]).collect(),
            };
            acc = acc.intersect(&negated);
        }
        acc
    }

    /// Per-axis bounds implied by the constraints, `None` on axes the
    /// analysis cannot bound. Handles constraints of degree <= 2 whose
    /// quadratic part is negative definite on the variables it mentions,
    /// and single-variable linear constraints.
    pub fn axis_bounds(&self) -> Vec<Option<(f64, f64)>> {
        let mut out: Option<Vec<Option<(f64, f64)>>> = None;
        for d in &self.disjuncts {
            let mut b: Vec<(f64, f64)> = vec![(f64::NEG_INFINITY, f64::INFINITY); self.dim];
            for a in d {
                if let Some(ab) = atom_bounds(&a.poly) {
                    for i in 0..self.dim {
                        b[i].0 = b[i].0.max(ab[i].0);
                        b[i].1 = b[i].1.min(ab[i].1);
                    }
                }
            }
            if b.iter().any(|(l, u)| l > u) {
                // disjunct provably empty
                continue;
            }
            let b: Vec<Option<(f64, f64)>> = b
                .into_iter()
                .map(|(l, u)| (l.is_finite() && u.is_finite()).then_some((l, u)))
                .collect();
            out = Some(match out {
                None => b,
                Some(prev) => prev
                    .into_iter()
                    .zip(b)
                    .map(|(p, q)| match (p, q) {
                        (Some(p), Some(q)) => Some((p.0.min(q.0), p.1.max(q.1))),
                        _ => None,
                    })
                    .collect(),
            });
        }
        out.unwrap_or_else(|| vec![None; self.dim])
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        if self.disjuncts.is_empty() {
            return None;
        }
        let ab = self.axis_bounds();
        if ab.iter().any(Option::is_none) {
            return None;
        }
        Some(Aabb {
            lower: ab.iter().map(|b| b.unwrap().0).collect(),
            upper: ab.iter().map(|b| b.unwrap().1).collect(),
        })
    }

    /// Rejection-samples a point of the set from `within`; `None` after
    /// `max_tries` misses.
    pub fn sample_in<R: Rng + ?Sized>(
        &self,
        within: &Aabb,
        rng: &mut R,
        max_tries: usize,
    ) -> Option<Vec<f64>> {
        let mut x = vec![0.0; self.dim];
        for _ in 0..max_tries {
            within.sample(rng, &mut x);
            if self.contains(&x) {
                return Some(x);
            }
        }
        None
    }

    pub fn to_json(&self) -> SetJson {
        SetJson {
            disjuncts: self
                .disjuncts
                .iter()
                .map(|d| {
                    d.iter()
                        .map(|a| AtomJson {
                            poly: PolyJson::from_poly(&a.poly),
                            rel: a.rel,
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

fn strip_noise(p: &Polynomial) -> Polynomial {
    let n = p.num_state();
    Polynomial::from_terms(n, 0, p.terms().map(|(xe, _, c)| (xe.to_vec(), vec![], c)))
        .expect("state exponents keep their length")
}

fn atom_bounds(p: &Polynomial) -> Option<Vec<(f64, f64)>> {
    let n = p.num_state();
    let deg = p.degree();
    let mut out = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
    if deg == 1 {
        // single-variable linear constraint a*x_i + c >= 0
        let mut var = None;
        let mut a = 0.0;
        let mut c = 0.0;
        for (xe, _, coef) in p.terms() {
            match xe.iter().position(|&k| k == 1) {
                Some(i) => {
                    if var.is_some_and(|v| v != i) {
                        return None;
                    }
                    var = Some(i);
                    a = coef;
                }
                None => c = coef,
            }
        }
        let i = var?;
        let t = -c / a;
        if a > 0.0 {
            out[i].0 = t;
        } else {
            out[i].1 = t;
        }
        return Some(out);
    }
    if deg != 2 {
        return None;
    }
    // p = c + b.x + x^T A x
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let mut c = 0.0;
    for (xe, _, coef) in p.terms() {
        let idx: Vec<usize> = xe
            .iter()
            .enumerate()
            .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
            .collect();
        match idx.as_slice() {
            [] => c = coef,
            [i] => b[*i] = coef,
            [i, j] if i == j => a[(*i, *i)] = coef,
            [i, j] => {
                a[(*i, *j)] = coef / 2.0;
                a[(*j, *i)] = coef / 2.0;
            }
            _ => unreachable!(),
        }
    }
    let vars: Vec<usize> = (0..n)
        .filter(|&i| b[i] != 0.0 || (0..n).any(|j| a[(i, j)] != 0.0))
        .collect();
    if vars.is_empty() {
        return None;
    }
    let m = vars.len();
    let neg_a = DMatrix::from_fn(m, m, |r, s| -a[(vars[r], vars[s])]);
    let bv = DVector::from_fn(m, |r, _| b[vars[r]]);
    let chol = neg_a.clone().cholesky()?;
    // maximizer of c + b.y - y^T N y is y* = N^{-1} b / 2
    let inv = chol.inverse();
    let center = &inv * &bv * 0.5;
    let peak = c + bv.dot(&center) - center.dot(&(&neg_a * &center));
    if peak < 0.0 {
        // empty: report an inverted interval
        for &v in &vars {
            out[v] = (1.0, -1.0);
        }
        return Some(out);
    }
    for (r, &v) in vars.iter().enumerate() {
        let h = (peak * inv[(r, r)]).sqrt();
        out[v] = (center[r] - h, center[r] + h);
    }
    Some(out)
}

/// Flattened form of a set for fast repeated membership tests.
#[derive(Clone, Debug)]
pub struct CompiledSet {
    disjuncts: Vec<Vec<CompiledPoly>>,
}

impl CompiledSet {
    pub fn new(s: &SemialgebraicSet) -> Self {
        Self {
            disjuncts: s
                .disjuncts
                .iter()
                .map(|d| d.iter().map(|a| CompiledPoly::new(&a.poly)).collect())
                .collect(),
        }
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.disjuncts
            .iter()
            .any(|d| d.iter().all(|p| p.eval(x, &[]) >= 0.0))
    }
}

/// Model-file representation of a set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetJson {
    pub disjuncts: Vec<Vec<AtomJson>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomJson {
    pub poly: PolyJson,
    pub rel: Relation,
}

impl SetJson {
    pub fn to_set(&self, dim: usize) -> Result<SemialgebraicSet, PolyError> {
        let disjuncts = self
            .disjuncts
            .iter()
            .map(|d| {
                d.iter()
                    .map(|a| {
                        Ok(Atom {
                            poly: a.poly.to_poly(dim, 0)?,
                            rel: a.rel,
                        })
                    })
                    .collect::<Result<Vec<_>, PolyError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        SemialgebraicSet::new(dim, disjuncts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn half_plane_u() -> SemialgebraicSet {
        // 0.3 - x <= 0  <=>  x - 0.3 >= 0
        let x = Polynomial::state_var(2, 0, 0);
        SemialgebraicSet::from_poly(&x - &Polynomial::constant(2, 0, 0.3)).unwrap()
    }

    #[test]
    fn vanderpol_unsafe_membership() {
        let u = half_plane_u();
        assert!(u.contains(&[0.4, 0.0]));
        assert!(!u.contains(&[0.0, 0.0]));
    }

    #[test]
    fn empty_set_contains_nothing() {
        let e = SemialgebraicSet::empty(2);
        assert!(!e.contains(&[0.0, 0.0]));
        assert!(SemialgebraicSet::whole(2).contains(&[1e9, -3.0]));
    }

    #[test]
    fn ball_and_box_bounds() {
        let b = SemialgebraicSet::ball(&[1.0, -2.0], 0.5);
        let bb = b.bounding_box().unwrap();
        for (got, want) in bb.lower.iter().zip([0.5, -2.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        for (got, want) in bb.upper.iter().zip([1.5, -1.5]) {
            assert!((got - want).abs() < 1e-12);
        }
        let bx = SemialgebraicSet::boxed(&[-1.0, 0.0], &[2.0, 3.0]);
        let bb = bx.bounding_box().unwrap();
        assert_eq!(bb.lower, vec![-1.0, 0.0]);
        assert_eq!(bb.upper, vec![2.0, 3.0]);
    }

    #[test]
    fn ellipse_bounds() {
        // x^2 + 4y^2 <= 4
        let x = Polynomial::state_var(2, 0, 0);
        let y = Polynomial::state_var(2, 0, 1);
        let p = &Polynomial::constant(2, 0, 4.0) - &(&(&x * &x) + &(&y * &y).scale(4.0));
        let s = SemialgebraicSet::from_poly(p).unwrap();
        let bb = s.bounding_box().unwrap();
        assert!((bb.upper[0] - 2.0).abs() < 1e-12 && (bb.upper[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cylinder_is_unbounded_along_free_axis() {
        let x = Polynomial::state_var(3, 0, 0);
        let y = Polynomial::state_var(3, 0, 1);
        let p = &Polynomial::constant(3, 0, 0.04) - &(&(&x * &x) + &(&y * &y));
        let s = SemialgebraicSet::from_poly(p).unwrap();
        let ab = s.axis_bounds();
        assert!(ab[0].is_some() && ab[1].is_some() && ab[2].is_none());
        assert!(s.bounding_box().is_none());
    }

    #[test]
    fn complement_of_union() {
        let a = SemialgebraicSet::ball(&[0.0, 0.0], 1.0);
        let b = SemialgebraicSet::ball(&[3.0, 0.0], 1.0);
        let u = a.union(&b);
        let c = u.complement();
        for p in [[0.0, 0.0], [3.0, 0.5], [1.5, 0.0], [0.0, 2.0]] {
            assert_eq!(c.contains(&p), !u.contains(&p), "{p:?}");
        }
    }

    #[test]
    fn json_roundtrip_membership() {
        let s = SemialgebraicSet::ball(&[0.2, -0.1], 0.3).union(&half_plane_u());
        let j = serde_json::to_string(&s.to_json()).unwrap();
        let back: SetJson = serde_json::from_str(&j).unwrap();
        let t = back.to_set(2).unwrap();
        assert_eq!(s, t);
    }

    proptest! {
        #[test]
        fn contains_matches_direct_inequalities(px in -1.0f64..1.0, py in -1.0f64..1.0) {
            // (x-0.2)^2 + y^2 <= 0.25  or  (x >= 0.3 and y >= 0)
            let x = Polynomial::state_var(2, 0, 0);
            let y = Polynomial::state_var(2, 0, 1);
            let ball = SemialgebraicSet::ball(&[0.2, 0.0], 0.5);
            let quad = SemialgebraicSet::new(2, vec![vec![
                Atom::ge(&x - &Polynomial::constant(2, 0, 0.3)),
                Atom::ge(y.clone()),
            ]]).unwrap();
            let s = ball.union(&quad);
            let direct = (px - 0.2).powi(2) + py * py <= 0.25 || (px >= 0.3 && py >= 0.0);
            prop_assert_eq!(s.contains(&[px, py]), direct);
            prop_assert_eq!(s.complement().contains(&[px, py]), !direct || on_boundary(px, py));
        }
    }

    fn on_boundary(px: f64, py: f64) -> bool {
        ((px - 0.2).powi(2) + py * py - 0.25).abs() < 1e-15 || px == 0.3 || py == 0.0
    }
}
