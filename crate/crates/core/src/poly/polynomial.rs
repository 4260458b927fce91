use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use super::noise::NoiseSpec;
use super::PolyError;

/// Sparse multivariate polynomial over state variables `x` and noise
/// variables `w`.
///
/// A term key is the concatenated exponent vector `[x exps.., w exps..]`.
/// Terms are kept in a `BTreeMap` so iteration order (and therefore every
/// floating-point summation over terms) is deterministic. Zero coefficients
/// are never stored.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    num_state: usize,
    num_noise: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(num_state: usize, num_noise: usize) -> Self {
        Self {
            num_state,
            num_noise,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_state: usize, num_noise: usize, c: f64) -> Self {
        let mut p = Self::zero(num_state, num_noise);
        p.add_term(vec![0; num_state + num_noise], c);
        p
    }

    /// The state variable `x_i`.
    pub fn state_var(num_state: usize, num_noise: usize, i: usize) -> Self {
        assert!(i < num_state, "state variable index out of range");
        let mut e = vec![0; num_state + num_noise];
        e[i] = 1;
        let mut p = Self::zero(num_state, num_noise);
        p.add_term(e, 1.0);
        p
    }

    /// The noise variable `w_j`.
    pub fn noise_var(num_state: usize, num_noise: usize, j: usize) -> Self {
        assert!(j < num_noise, "noise variable index out of range");
        let mut e = vec![0; num_state + num_noise];
        e[num_state + j] = 1;
        let mut p = Self::zero(num_state, num_noise);
        p.add_term(e, 1.0);
        p
    }

    /// Monomial `c * x^xe * w^we`.
    pub fn monomial(xe: &[u32], we: &[u32], c: f64) -> Self {
        let mut p = Self::zero(xe.len(), we.len());
        let mut e = xe.to_vec();
        e.extend_from_slice(we);
        p.add_term(e, c);
        p
    }

    /// Builds a polynomial from `(x exponents, w exponents, coefficient)`
    /// triples. Repeated monomials are summed.
    pub fn from_terms<I>(num_state: usize, num_noise: usize, terms: I) -> Result<Self, PolyError>
    where
        I: IntoIterator<Item = (Vec<u32>, Vec<u32>, f64)>,
    {
        let mut p = Self::zero(num_state, num_noise);
        for (xe, we, c) in terms {
            if xe.len() != num_state {
                return Err(PolyError::DimensionMismatch {
                    what: "state exponent vector",
                    expected: num_state,
                    got: xe.len(),
                });
            }
            if we.len() != num_noise {
                return Err(PolyError::DimensionMismatch {
                    what: "noise exponent vector",
                    expected: num_noise,
                    got: we.len(),
                });
            }
            let mut e = xe;
            e.extend(we);
            p.add_term(e, c);
        }
        Ok(p)
    }

    pub fn num_state(&self) -> usize {
        self.num_state
    }

    pub fn num_noise(&self) -> usize {
        self.num_noise
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// True when no term mentions a noise variable.
    pub fn is_state_only(&self) -> bool {
        self.terms
            .keys()
            .all(|e| e[self.num_state..].iter().all(|&k| k == 0))
    }

    /// Iterates `(x exponents, w exponents, coefficient)`.
    pub fn terms(&self) -> impl Iterator<Item = (&[u32], &[u32], f64)> + '_ {
        self.terms
            .iter()
            .map(move |(e, &c)| (&e[..self.num_state], &e[self.num_state..], c))
    }

    /// Coefficient of `x^xe w^we` (zero when absent).
    pub fn coefficient(&self, xe: &[u32], we: &[u32]) -> f64 {
        let mut e = xe.to_vec();
        e.extend_from_slice(we);
        self.terms.get(&e).copied().unwrap_or(0.0)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Degree counting state variables only.
    pub fn state_degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e[..self.num_state].iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    fn add_term(&mut self, e: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        match self.terms.entry(e) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = *o.get() + c;
                if s == 0.0 {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    fn check_same_space(&self, other: &Self) {
        assert!(
            self.num_state == other.num_state && self.num_noise == other.num_noise,
            "polynomials live in different variable spaces: ({}, {}) vs ({}, {})",
            self.num_state,
            self.num_noise,
            other.num_state,
            other.num_noise
        );
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = Self::zero(self.num_state, self.num_noise);
        if c != 0.0 {
            for (e, &v) in &self.terms {
                out.add_term(e.clone(), v * c);
            }
        }
        out
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::constant(self.num_state, self.num_noise, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                acc = &acc * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Drops terms with `|c| <= tol`.
    pub fn prune(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|_, c| c.abs() > tol);
        out
    }

    /// Re-embeds a state-only polynomial in a space with `num_noise` noise
    /// variables.
    pub fn with_noise_dims(&self, num_noise: usize) -> Result<Self, PolyError> {
        if !self.is_state_only() {
            return Err(PolyError::NoiseInOuter);
        }
        let mut out = Self::zero(self.num_state, num_noise);
        for (e, &c) in &self.terms {
            let mut ne = e[..self.num_state].to_vec();
            ne.resize(self.num_state + num_noise, 0);
            out.add_term(ne, c);
        }
        Ok(out)
    }

    /// Exact evaluation at `(x, w)`.
    pub fn eval(&self, x: &[f64], w: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.num_state {
            return Err(PolyError::DimensionMismatch {
                what: "state vector",
                expected: self.num_state,
                got: x.len(),
            });
        }
        if w.len() != self.num_noise {
            return Err(PolyError::DimensionMismatch {
                what: "noise vector",
                expected: self.num_noise,
                got: w.len(),
            });
        }
        Ok(self.eval_unchecked(x, w))
    }

    /// Evaluation without length checks; panics on short slices.
    pub fn eval_unchecked(&self, x: &[f64], w: &[f64]) -> f64 {
        let ns = self.num_state;
        self.terms
            .iter()
            .map(|(e, &c)| {
                let mut m = c;
                for (i, &k) in e.iter().enumerate() {
                    if k > 0 {
                        let v = if i < ns { x[i] } else { w[i - ns] };
                        m *= v.powi(k as i32);
                    }
                }
                m
            })
            .sum()
    }

    /// Evaluates a state-only polynomial at `x`.
    pub fn eval_state(&self, x: &[f64]) -> f64 {
        debug_assert!(self.num_noise == 0 || self.is_state_only());
        let ns = self.num_state;
        self.terms
            .iter()
            .map(|(e, &c)| {
                let mut m = c;
                for (i, &k) in e[..ns].iter().enumerate() {
                    if k > 0 {
                        m *= x[i].powi(k as i32);
                    }
                }
                m
            })
            .sum()
    }

    /// Substitutes `x_i := inner[i]` into a noise-free polynomial.
    ///
    /// `inner` polynomials may mention noise variables; the result lives in
    /// their `(x, w)` space.
    pub fn compose(&self, inner: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if !self.is_state_only() {
            return Err(PolyError::NoiseInOuter);
        }
        if inner.len() != self.num_state {
            return Err(PolyError::Arity {
                expected: self.num_state,
                got: inner.len(),
            });
        }
        let (ns, nw) = match inner.first() {
            Some(p) => (p.num_state, p.num_noise),
            None => {
                // outer is a constant in zero variables
                let c = self.terms.values().sum();
                return Ok(Polynomial::constant(0, 0, c));
            }
        };
        for p in inner {
            if p.num_state != ns || p.num_noise != nw {
                return Err(PolyError::DimensionMismatch {
                    what: "inner polynomial space",
                    expected: ns,
                    got: p.num_state,
                });
            }
        }
        Ok(self.substitute_all(inner, ns, nw))
    }

    /// Substitutes `x_i := inner[i]` while keeping the noise variables.
    ///
    /// `inner` polynomials live in `(y, w)` with the same noise dimension
    /// as `self`; the result lives in that space.
    pub fn substitute_state(&self, inner: &[Polynomial]) -> Result<Polynomial, PolyError> {
        if inner.len() != self.num_state {
            return Err(PolyError::Arity {
                expected: self.num_state,
                got: inner.len(),
            });
        }
        let ns = inner.first().map_or(0, |p| p.num_state);
        let nw = self.num_noise;
        for p in inner {
            if p.num_state != ns || p.num_noise != nw {
                return Err(PolyError::DimensionMismatch {
                    what: "substituted polynomial space",
                    expected: ns,
                    got: p.num_state,
                });
            }
        }
        let mut subs = inner.to_vec();
        subs.extend((0..nw).map(|j| Polynomial::noise_var(ns, nw, j)));
        Ok(self.substitute_all(&subs, ns, nw))
    }

    // `subs` has one entry per variable of the full exponent key.
    fn substitute_all(&self, subs: &[Polynomial], ns: usize, nw: usize) -> Polynomial {
        let mut powers: Vec<Vec<Polynomial>> = subs
            .iter()
            .map(|p| vec![Polynomial::constant(ns, nw, 1.0), p.clone()])
            .collect();
        let mut out = Polynomial::zero(ns, nw);
        for (e, &c) in &self.terms {
            let mut m = Polynomial::constant(ns, nw, c);
            for (i, &k) in e.iter().enumerate().take(subs.len()) {
                if k == 0 {
                    continue;
                }
                let k = k as usize;
                while powers[i].len() <= k {
                    let next = &powers[i][powers[i].len() - 1] * &subs[i];
                    powers[i].push(next);
                }
                m = &m * &powers[i][k];
            }
            out = &out + &m;
        }
        out
    }

    /// Integrates out the noise variables: every `w^k` is replaced by the
    /// product of per-dimension moments. The result has no noise variables.
    pub fn expect(&self, noise: &NoiseSpec) -> Result<Polynomial, PolyError> {
        if noise.dims() != self.num_noise {
            return Err(PolyError::DimensionMismatch {
                what: "noise dimension",
                expected: self.num_noise,
                got: noise.dims(),
            });
        }
        let ns = self.num_state;
        let mut out = Polynomial::zero(ns, 0);
        for (e, &c) in &self.terms {
            let mut m = c;
            for (j, &k) in e[ns..].iter().enumerate() {
                m *= noise.moment(j, k);
            }
            out.add_term(e[..ns].to_vec(), m);
        }
        Ok(out)
    }

    /// Interval enclosure of the polynomial over a box in `(x, w)` space.
    pub fn interval_eval(&self, x_box: &[(f64, f64)], w_box: &[(f64, f64)]) -> (f64, f64) {
        let ns = self.num_state;
        let mut lo = 0.0;
        let mut hi = 0.0;
        for (e, &c) in &self.terms {
            let mut m = (c, c);
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let iv = if i < ns { x_box[i] } else { w_box[i - ns] };
                m = interval_mul(m, interval_pow(iv, k));
            }
            lo += m.0;
            hi += m.1;
        }
        (lo, hi)
    }
}

fn interval_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let c = [a.0 * b.0, a.0 * b.1, a.1 * b.0, a.1 * b.1];
    (
        c.iter().copied().fold(f64::INFINITY, f64::min),
        c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )
}

fn interval_pow(a: (f64, f64), k: u32) -> (f64, f64) {
    let (l, h) = a;
    let pl = l.powi(k as i32);
    let ph = h.powi(k as i32);
    if k % 2 == 1 {
        (pl, ph)
    } else if l >= 0.0 {
        (pl, ph)
    } else if h <= 0.0 {
        (ph, pl)
    } else {
        (0.0, pl.max(ph))
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.check_same_space(rhs);
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), c);
        }
        out
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.check_same_space(rhs);
        let mut out = self.clone();
        for (e, &c) in &rhs.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.check_same_space(rhs);
        let mut out = Polynomial::zero(self.num_state, self.num_noise);
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &rhs.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: Polynomial) -> Polynomial {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Polynomial> for Polynomial {
            type Output = Polynomial;
            fn $m(self, rhs: &Polynomial) -> Polynomial {
                (&self).$m(rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (e, &c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                let name = if i < self.num_state {
                    format!("x{}", i)
                } else {
                    format!("w{}", i - self.num_state)
                };
                if k == 1 {
                    write!(f, "*{name}")?;
                } else {
                    write!(f, "*{name}^{k}")?;
                }
            }
        }
        Ok(())
    }
}

/// Flattened polynomial for hot evaluation loops (grid stencils, Monte
/// Carlo). Same arithmetic as [`Polynomial::eval_unchecked`].
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    nvars: usize,
    num_state: usize,
    coeffs: Vec<f64>,
    exps: Vec<u32>,
}

impl CompiledPoly {
    pub fn new(p: &Polynomial) -> Self {
        let nvars = p.num_state + p.num_noise;
        let mut coeffs = Vec::with_capacity(p.terms.len());
        let mut exps = Vec::with_capacity(p.terms.len() * nvars);
        for (e, &c) in &p.terms {
            coeffs.push(c);
            exps.extend_from_slice(e);
        }
        Self {
            nvars,
            num_state: p.num_state,
            coeffs,
            exps,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], w: &[f64]) -> f64 {
        let mut s = 0.0;
        for (t, &c) in self.coeffs.iter().enumerate() {
            let e = &self.exps[t * self.nvars..(t + 1) * self.nvars];
            let mut m = c;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    let v = if i < self.num_state {
                        x[i]
                    } else {
                        w[i - self.num_state]
                    };
                    m *= v.powi(k as i32);
                }
            }
            s += m;
        }
        s
    }
}
