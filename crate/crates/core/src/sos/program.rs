use super::linpoly::{monomials_up_to, AffExpr, LinPoly};
use super::{ExitConstraint, PutinarSign, SosError, SynthesisConfig};
use crate::poly::{Aabb, Atom, Mode, Polynomial, SemialgebraicSet, SystemModel};

/// `x = center + half * y`, mapping `[-1, 1]^n` onto the box of `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineScaling {
    pub center: Vec<f64>,
    pub half: Vec<f64>,
}

impl AffineScaling {
    pub fn for_box(bb: &Aabb) -> Self {
        let center = bb.center();
        let half = bb
            .lower
            .iter()
            .zip(&bb.upper)
            .map(|(l, u)| ((u - l) / 2.0).max(f64::MIN_POSITIVE))
            .collect();
        Self { center, half }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `x_i` written in the scaled variables, as polynomials in `(y, w)`.
    pub fn forward(&self, num_noise: usize) -> Vec<Polynomial> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                &Polynomial::state_var(n, num_noise, i).scale(self.half[i])
                    + &Polynomial::constant(n, num_noise, self.center[i])
            })
            .collect()
    }

    /// `y_i` written in the original variables.
    pub fn inverse(&self) -> Vec<Polynomial> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                (&Polynomial::state_var(n, 0, i) - &Polynomial::constant(n, 0, self.center[i]))
                    .scale(1.0 / self.half[i])
            })
            .collect()
    }

    pub fn to_original(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| self.center[i] + self.half[i] * v)
            .collect()
    }

    /// A state-only polynomial in `x` rewritten in `y`.
    pub fn scale_poly(&self, p: &Polynomial) -> Result<Polynomial, SosError> {
        Ok(p.compose(&self.forward(0))?)
    }

    pub fn scale_set(&self, s: &SemialgebraicSet) -> Result<SemialgebraicSet, SosError> {
        let disjuncts = s
            .disjuncts()
            .iter()
            .map(|d| {
                d.iter()
                    .map(|a| {
                        Ok(Atom {
                            poly: self.scale_poly(&a.poly)?,
                            rel: a.rel,
                        })
                    })
                    .collect::<Result<Vec<_>, SosError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SemialgebraicSet::new(s.dim(), disjuncts)?)
    }
}

/// Polynomial with one decision variable per basis monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTemplate {
    pub basis: Vec<Vec<u32>>,
    pub ids: Vec<usize>,
}

impl PolyTemplate {
    pub fn linpoly(&self, num_state: usize) -> LinPoly {
        LinPoly::template(num_state, &self.basis, &self.ids)
    }

    pub fn instantiate(&self, num_state: usize, vars: &[f64]) -> Polynomial {
        self.linpoly(num_state).instantiate(vars)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SosConstraint {
    pub label: String,
    pub poly: LinPoly,
}

/// Minimize `objective` subject to every constraint polynomial being a sum
/// of squares, over free real decision variables `0..num_vars`.
#[derive(Clone, Debug, PartialEq)]
pub struct SosProgram {
    pub num_state: usize,
    pub num_vars: usize,
    pub objective: AffExpr,
    pub constraints: Vec<SosConstraint>,
    pub v: PolyTemplate,
    pub gamma: usize,
    pub scaling: AffineScaling,
    /// Radius of the ball (in scaled variables) that holds `[-1, 1]^n` and
    /// every one-step successor.
    pub radius: f64,
    pub exit_applied: bool,
    pub degree: u32,
}

impl SosProgram {
    pub fn empty(num_state: usize) -> Self {
        Self {
            num_state,
            num_vars: 0,
            objective: AffExpr::default(),
            constraints: Vec::new(),
            v: PolyTemplate {
                basis: Vec::new(),
                ids: Vec::new(),
            },
            gamma: 0,
            scaling: AffineScaling {
                center: vec![0.0; num_state],
                half: vec![1.0; num_state],
            },
            radius: 1.0,
            exit_applied: false,
            degree: 0,
        }
    }

    pub fn new_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn new_template(&mut self, degree: u32) -> PolyTemplate {
        let basis = monomials_up_to(self.num_state, degree);
        let ids = basis.iter().map(|_| self.new_var()).collect();
        PolyTemplate { basis, ids }
    }

    /// `v` in the original state coordinates at a decision vector.
    pub fn v_original(&self, vars: &[f64]) -> Result<Polynomial, SosError> {
        let v = self.v.instantiate(self.num_state, vars);
        Ok(v.compose(&self.scaling.inverse())?)
    }
}

fn even_ceil(d: u32) -> u32 {
    d + d % 2
}

/// Encodes `target >= 0 on set` with one group of SOS constraints per
/// disjunct: `target - sum_j sigma_j P_j` and every `sigma_j` are SOS.
///
/// `extra` atoms are appended to every disjunct (used for the bounding
/// ball). Strict relations are relaxed to non-strict ones.
pub fn putinar_encode(
    prog: &mut SosProgram,
    label: &str,
    target: &LinPoly,
    set: &SemialgebraicSet,
    extra: &[Polynomial],
    mult_degree: Option<u32>,
    sign: PutinarSign,
) {
    let n = prog.num_state;
    let s = match sign {
        PutinarSign::Sound => -1.0,
        PutinarSign::Plus => 1.0,
    };
    for (k, d) in set.disjuncts().iter().enumerate() {
        let atoms: Vec<&Polynomial> = d.iter().map(|a| &a.poly).chain(extra).collect();
        let top = atoms
            .iter()
            .map(|p| p.state_degree())
            .chain(std::iter::once(target.degree()))
            .max()
            .unwrap_or(0);
        let top = even_ceil(top);
        let mut main = target.clone();
        for (j, p) in atoms.iter().enumerate() {
            let pd = p.state_degree();
            let md = match mult_degree {
                Some(m) => m,
                None => {
                    let room = top.saturating_sub(pd);
                    room - room % 2
                }
            };
            let sigma = prog.new_template(md);
            let sl = sigma.linpoly(n);
            main.add_scaled(&sl.mul_poly(p), s);
            prog.constraints.push(SosConstraint {
                label: format!("{label}[{k}].sigma{j}"),
                poly: sl,
            });
        }
        prog.constraints.push(SosConstraint {
            label: format!("{label}[{k}]"),
            poly: main,
        });
    }
}

/// Program for the mode of `model`.
pub fn build_program(model: &SystemModel, cfg: &SynthesisConfig) -> Result<SosProgram, SosError> {
    let avoid = match model.mode {
        Mode::Safety => model.unsafe_set.clone(),
        Mode::ReachAvoid => model.stop_set(),
    };
    build(model, cfg, &avoid)
}

/// Minimize `gamma` subject to `v <= gamma` on `I`, `v >= 0` on `X`,
/// `v >= 1` on `U` and `E[v(F(x, w))] <= v(x)` on `X \ U`.
pub fn build_safety_program(model: &SystemModel, cfg: &SynthesisConfig) -> Result<SosProgram, SosError> {
    if model.mode != Mode::Safety {
        return Err(SosError::WrongMode("reach-avoid"));
    }
    build(model, cfg, &model.unsafe_set)
}

/// As the safety program, with the decrease condition on `X \ (U u T)`.
pub fn build_ra_program(model: &SystemModel, cfg: &SynthesisConfig) -> Result<SosProgram, SosError> {
    if model.mode != Mode::ReachAvoid {
        return Err(SosError::WrongMode("safety"));
    }
    build(model, cfg, &model.stop_set())
}

fn build(model: &SystemModel, cfg: &SynthesisConfig, avoid: &SemialgebraicSet) -> Result<SosProgram, SosError> {
    if cfg.degree == 0 || cfg.degree % 2 == 1 {
        return Err(SosError::OddDegree(cfg.degree));
    }
    let n = model.state_dim();
    let nw = model.noise_dim();
    let bb = model.state_box().ok_or(SosError::UnboundedStateSpace)?;
    let scaling = AffineScaling::for_box(&bb);

    // scaled dynamics G(y, w) = (F(c + h y, w) - c) / h
    let fwd = scaling.forward(nw);
    let dyn_scaled: Vec<Polynomial> = model
        .dynamics
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let g = f.substitute_state(&fwd)?;
            Ok((&g - &Polynomial::constant(n, nw, scaling.center[i])).scale(1.0 / scaling.half[i]))
        })
        .collect::<Result<_, SosError>>()?;

    let unit = vec![(-1.0, 1.0); n];
    let wbox = model.noise.support_box();
    let image: Vec<(f64, f64)> = dyn_scaled.iter().map(|g| g.interval_eval(&unit, &wbox)).collect();
    let far: f64 = image
        .iter()
        .map(|(l, h)| l.abs().max(h.abs()).powi(2))
        .sum::<f64>()
        .sqrt();
    let radius = far.max((n as f64).sqrt()) * (1.0 + 1e-9);
    let mut ball = Polynomial::constant(n, 0, radius * radius);
    for i in 0..n {
        let y = Polynomial::state_var(n, 0, i);
        ball = &ball - &(&y * &y);
    }

    let x_set = scaling.scale_set(&model.x_set)?;
    let init = scaling.scale_set(&model.effective_init())?;
    let unsafe_set = scaling.scale_set(&model.unsafe_set)?;
    let cont = scaling.scale_set(&model.x_set.intersect(&avoid.complement()))?;

    let mut prog = SosProgram::empty(n);
    prog.scaling = scaling;
    prog.radius = radius;
    prog.degree = cfg.degree;
    prog.v = prog.new_template(cfg.degree);
    prog.gamma = prog.new_var();
    prog.objective = AffExpr::var(prog.gamma);
    let v = prog.v.linpoly(n);
    let margin = AffExpr::constant(cfg.margin);

    // E[v(G(y, w))] by linearity in the coefficients of v
    let mut ev = LinPoly::zero(n);
    for (m, &id) in prog.v.basis.iter().zip(&prog.v.ids) {
        let mono = Polynomial::monomial(m, &[], 1.0);
        let e = mono.compose(&dyn_scaled)?.expect(&model.noise)?;
        let deg = e.state_degree();
        if deg > cfg.max_composed_degree {
            return Err(SosError::DegreeCap {
                composed: deg,
                cap: cfg.max_composed_degree,
            });
        }
        ev.add_var_times(id, &e, 1.0);
    }

    let extra = [ball.clone()];
    let md = cfg.mult_degree;

    // gamma - v >= 0 on I
    let mut t = LinPoly::zero(n);
    t.add_term(vec![0; n], &AffExpr::var(prog.gamma), 1.0);
    t.add_scaled(&v, -1.0);
    t.add_term(vec![0; n], &margin, -1.0);
    putinar_encode(&mut prog, "init", &t, &init, &extra, md, cfg.sign);

    // v >= 0 on X
    let mut t = v.clone();
    t.add_term(vec![0; n], &margin, -1.0);
    putinar_encode(&mut prog, "nonneg", &t, &x_set, &extra, md, cfg.sign);

    // v - 1 >= 0 on U
    let mut t = v.clone();
    t.add_term(vec![0; n], &AffExpr::constant(1.0 + cfg.margin), -1.0);
    putinar_encode(&mut prog, "unsafe", &t, &unsafe_set, &extra, md, cfg.sign);

    // v - E[v o G] >= 0 where the process continues
    let mut t = v.clone();
    t.add_scaled(&ev, -1.0);
    putinar_encode(&mut prog, "decrease", &t, &cont, &extra, md, cfg.sign);

    // v - 1 >= 0 outside X, where successors may land
    let stays = image_inside(&x_set, &image);
    if cfg.exit == ExitConstraint::Auto && !stays {
        let mut t = v.clone();
        t.add_term(vec![0; n], &AffExpr::constant(1.0 + cfg.margin), -1.0);
        putinar_encode(&mut prog, "exit", &t, &x_set.complement(), &extra, md, cfg.sign);
        prog.exit_applied = true;
    }

    let mut t = LinPoly::zero(n);
    t.add_term(vec![0; n], &AffExpr::var(prog.gamma), 1.0);
    prog.constraints.push(SosConstraint {
        label: "gamma".into(),
        poly: t,
    });
    Ok(prog)
}

/// True when some disjunct of `set` provably contains the whole box.
fn image_inside(set: &SemialgebraicSet, image: &[(f64, f64)]) -> bool {
    set.disjuncts()
        .iter()
        .any(|d| d.iter().all(|a| a.poly.interval_eval(image, &[]).0 >= 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::NoiseSpec;

    fn contraction(u: SemialgebraicSet) -> SystemModel {
        let x = Polynomial::state_var(1, 1, 0);
        let w = Polynomial::noise_var(1, 1, 0);
        SystemModel::new(
            "contract",
            Mode::Safety,
            false,
            vec![&x.scale(0.5) + &w.scale(0.1)],
            NoiseSpec::uniform(1),
            SemialgebraicSet::boxed(&[-1.0], &[1.0]),
            SemialgebraicSet::boxed(&[-0.1], &[0.1]),
            u,
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_inequality_instantiation() {
        let g = Polynomial::state_var(1, 0, 0);
        let set = SemialgebraicSet::from_poly(g).unwrap();
        let mut prog = SosProgram::empty(1);
        let v = prog.new_template(2);
        let mut t = v.linpoly(1);
        t.add_term(vec![0], &AffExpr::constant(1.0), -1.0);
        putinar_encode(&mut prog, "u", &t, &set, &[], None, PutinarSign::Sound);
        assert_eq!(prog.constraints.len(), 2);
        assert_eq!(prog.constraints[0].label, "u[0].sigma0");
        // sigma has degree 0 (2 - 1 rounded down to even)
        assert_eq!(prog.constraints[0].poly.degree(), 0);
        let id = *prog.constraints[0].poly.terms()[&vec![0]].terms.keys().next().unwrap();
        // main = v - 1 - sigma * x
        let main = &prog.constraints[1].poly;
        assert_eq!(main.terms()[&vec![1]].terms.get(&id), Some(&-1.0));
        assert_eq!(main.terms()[&vec![0]].constant, -1.0);
    }

    #[test]
    fn disjunct_fan_out_and_whole_space() {
        let x = Polynomial::state_var(1, 0, 0);
        let two = SemialgebraicSet::from_poly(x.clone())
            .unwrap()
            .union(&SemialgebraicSet::from_poly(-&x).unwrap());
        let mut prog = SosProgram::empty(1);
        let t = LinPoly::from_poly(&Polynomial::constant(1, 0, 1.0));
        putinar_encode(&mut prog, "a", &t, &two, &[], None, PutinarSign::Sound);
        assert_eq!(prog.constraints.iter().filter(|c| !c.label.contains("sigma")).count(), 2);

        let mut prog = SosProgram::empty(1);
        putinar_encode(&mut prog, "b", &t, &SemialgebraicSet::whole(1), &[], None, PutinarSign::Sound);
        assert_eq!(prog.constraints.len(), 1);
        assert_eq!(prog.constraints[0].poly, t);
    }

    #[test]
    fn plus_sign_hook_flips_multiplier_term() {
        let g = Polynomial::state_var(1, 0, 0);
        let set = SemialgebraicSet::from_poly(g).unwrap();
        let t = LinPoly::from_poly(&Polynomial::constant(1, 0, 1.0));
        let mut a = SosProgram::empty(1);
        putinar_encode(&mut a, "u", &t, &set, &[], Some(0), PutinarSign::Sound);
        let mut b = SosProgram::empty(1);
        putinar_encode(&mut b, "u", &t, &set, &[], Some(0), PutinarSign::Plus);
        let ca = &a.constraints[1].poly.terms()[&vec![1]];
        let cb = &b.constraints[1].poly.terms()[&vec![1]];
        assert_eq!(ca.terms.values().next(), Some(&-1.0));
        assert_eq!(cb.terms.values().next(), Some(&1.0));
    }

    #[test]
    fn empty_target_matches_safety_program() {
        let x = Polynomial::state_var(1, 0, 0);
        let u = SemialgebraicSet::from_poly(&x - &Polynomial::constant(1, 0, 0.6)).unwrap();
        let safety = contraction(u.clone());
        let mut ra = safety.clone();
        ra.mode = Mode::ReachAvoid;
        ra.target = Some(SemialgebraicSet::empty(1));
        let cfg = SynthesisConfig::default();
        let a = build_safety_program(&safety, &cfg).unwrap();
        let b = build_ra_program(&ra, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(matches!(build_ra_program(&safety, &cfg), Err(SosError::WrongMode(_))));
    }

    #[test]
    fn exit_constraint_skipped_when_image_stays_inside() {
        let p = build_safety_program(&contraction(SemialgebraicSet::empty(1)), &SynthesisConfig::default()).unwrap();
        assert!(!p.exit_applied);
        assert!(p.constraints.iter().all(|c| !c.label.starts_with("unsafe")));
    }

    #[test]
    fn vanderpol_continuation_set() {
        // X \ U for X = {0.25 - x^2 - y^2 >= 0}, U = {x - 0.3 >= 0}
        let x = Polynomial::state_var(2, 0, 0);
        let y = Polynomial::state_var(2, 0, 1);
        let xs = SemialgebraicSet::ball(&[0.0, 0.0], 0.5);
        let u = SemialgebraicSet::from_poly(&x - &Polynomial::constant(2, 0, 0.3)).unwrap();
        let cont = xs.intersect(&u.complement());
        assert_eq!(cont.disjuncts().len(), 1);
        let d = &cont.disjuncts()[0];
        assert_eq!(d.len(), 2);
        let expect_x = &(&Polynomial::constant(2, 0, 0.25) - &(&x * &x)) - &(&y * &y);
        assert_eq!(d[0].poly, expect_x);
        assert_eq!(d[1].poly, &Polynomial::constant(2, 0, 0.3) - &x);
    }

    #[test]
    fn odd_degree_rejected() {
        let m = contraction(SemialgebraicSet::empty(1));
        let cfg = SynthesisConfig {
            degree: 3,
            ..Default::default()
        };
        assert!(matches!(build_safety_program(&m, &cfg), Err(SosError::OddDegree(3))));
    }

    #[test]
    fn composed_degree_cap() {
        let m = contraction(SemialgebraicSet::empty(1));
        let cfg = SynthesisConfig {
            degree: 6,
            max_composed_degree: 4,
            ..Default::default()
        };
        assert!(matches!(build_safety_program(&m, &cfg), Err(SosError::DegreeCap { .. })));
    }
}
