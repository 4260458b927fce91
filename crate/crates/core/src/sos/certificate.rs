use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::program::{build_program, SosProgram};
use super::sdp::sos_to_sdp;
use super::solver::{SdpSolution, SolveOutcome, SolveStatus, SolverInterface};
use super::{SosError, SynthesisConfig};
use crate::poly::{Aabb, PolyJson, Polynomial, SemialgebraicSet, SystemModel};

/// Stationary tail `v` with level `gamma`: `v <= gamma` on `I`, so
/// `1 - gamma` lower-bounds the offline safety (or reach-avoid)
/// probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub v: Polynomial,
    pub gamma: f64,
    pub degree: u32,
    pub status: SolveStatus,
    /// Largest sampled violation per condition.
    pub residuals: BTreeMap<String, f64>,
    pub certified: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateJson {
    pub gamma: f64,
    pub v: PolyJson,
    pub degree: u32,
    pub residuals: BTreeMap<String, f64>,
    pub certified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<SolveStatus>,
}

impl Certificate {
    pub fn offline_bound(&self) -> f64 {
        (1.0 - self.gamma).clamp(0.0, 1.0)
    }

    pub fn to_json(&self) -> CertificateJson {
        CertificateJson {
            gamma: self.gamma,
            v: PolyJson::from_poly(&self.v),
            degree: self.degree,
            residuals: self.residuals.clone(),
            certified: self.certified,
            status: Some(self.status),
        }
    }

    pub fn from_json(j: &CertificateJson, num_state: usize) -> Result<Self, SosError> {
        Ok(Self {
            v: j.v.to_poly(num_state, 0)?,
            gamma: j.gamma,
            degree: j.degree,
            status: j.status.unwrap_or(SolveStatus::Optimal),
            residuals: j.residuals.clone(),
            certified: j.certified,
        })
    }
}

const MAX_TRIES: usize = 100_000;

/// Largest violation of each certificate condition over `samples` random
/// points per condition. The decrease condition uses the exact expectation
/// of `v` after one step.
pub fn verify_certificate(
    model: &SystemModel,
    v: &Polynomial,
    gamma: f64,
    check_exit: bool,
    samples: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>, SosError> {
    let bx = model.state_box().ok_or(SosError::UnboundedStateSpace)?;
    let wbox = model.noise.support_box();
    let xb: Vec<(f64, f64)> = bx.lower.iter().copied().zip(bx.upper.iter().copied()).collect();
    let image: Vec<(f64, f64)> = model.dynamics.iter().map(|f| f.interval_eval(&xb, &wbox)).collect();
    let reach = bx.hull(&Aabb {
        lower: image.iter().map(|b| b.0).collect(),
        upper: image.iter().map(|b| b.1).collect(),
    });
    let ev = v.compose(&model.dynamics)?.expect(&model.noise)?;
    let cont = model.x_set.intersect(&model.stop_set().complement());
    let init = model.effective_init();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    out.insert("gamma".to_string(), (-gamma).max(0.0));
    let mut run = |name: &str, set: &SemialgebraicSet, within: &Aabb, f: &dyn Fn(&[f64]) -> f64| {
        let within = set
            .bounding_box()
            .and_then(|b| b.intersect(within))
            .unwrap_or_else(|| within.clone());
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let Some(x) = set.sample_in(&within, &mut rng, MAX_TRIES) else {
                break;
            };
            let viol = f(&x);
            worst = if viol.is_nan() { f64::INFINITY } else { worst.max(viol) };
        }
        out.insert(name.to_string(), worst);
    };
    run("init", &init, &bx, &|x| v.eval_state(x) - gamma);
    run("nonneg", &model.x_set, &bx, &|x| -v.eval_state(x));
    run("unsafe", &model.unsafe_set, &reach, &|x| 1.0 - v.eval_state(x));
    run("decrease", &cont, &bx, &|x| ev.eval_state(x) - v.eval_state(x));
    if check_exit {
        run("exit", &model.x_set.complement(), &reach, &|x| 1.0 - v.eval_state(x));
    }
    Ok(out)
}

/// Residuals in `init` or `nonneg` up to this size are absorbed by
/// shifting `v` and `gamma`.
const REPAIR_LIMIT: f64 = 1e-3;

fn repair_offsets(residuals: &BTreeMap<String, f64>, tol: f64) -> Option<(f64, f64)> {
    let get = |k: &str| residuals.get(k).copied().unwrap_or(0.0);
    let (init, nonneg) = (get("init"), get("nonneg"));
    if init <= tol && nonneg <= tol {
        return None;
    }
    if init > REPAIR_LIMIT || nonneg > REPAIR_LIMIT {
        return None;
    }
    let shift = if nonneg > tol { 2.0 * nonneg } else { 0.0 };
    let raise = shift + if init > tol { 2.0 * init } else { 0.0 };
    Some((shift, raise))
}

/// Reads `v` and `gamma` from a solver answer and re-checks every
/// condition by sampling in the original coordinates.
pub fn extract_and_verify(
    outcome: &SolveOutcome,
    program: &SosProgram,
    model: &SystemModel,
    cfg: &SynthesisConfig,
) -> Result<Certificate, SosError> {
    let sol: &SdpSolution = match outcome {
        SolveOutcome::Optimal(s) | SolveOutcome::Inaccurate(s) => s,
        SolveOutcome::Infeasible => return Err(SosError::Infeasible),
        SolveOutcome::Failed(m) => return Err(SosError::SolverFailed(m.clone())),
    };
    if sol.x.len() < program.num_vars {
        return Err(SosError::SolverFailed(format!(
            "solution has {} entries, program needs {}",
            sol.x.len(),
            program.num_vars
        )));
    }
    let mut v = program.v_original(&sol.x)?.prune(1e-14);
    let mut gamma = sol.x[program.gamma];
    let mut residuals = verify_certificate(model, &v, gamma, program.exit_applied, cfg.verify_samples, cfg.seed)?;
    if let Some((shift, raise)) = repair_offsets(&residuals, cfg.verify_tol) {
        // lifting v by a constant keeps decrease, unsafe and exit intact
        v = &v + &Polynomial::constant(v.num_state(), v.num_noise(), shift);
        gamma = (gamma + raise).min(1.0);
        residuals = verify_certificate(model, &v, gamma, program.exit_applied, cfg.verify_samples, cfg.seed)?;
    }
    let worst = residuals
        .iter()
        .filter(|(_, &r)| r > cfg.verify_tol)
        .max_by(|a, b| a.1.total_cmp(b.1));
    if let (Some((name, &r)), true) = (worst, cfg.reject_unverified) {
        return Err(SosError::VerificationFailed {
            condition: name.clone(),
            residual: r,
        });
    }
    Ok(Certificate {
        v,
        gamma,
        degree: program.degree,
        status: outcome.status(),
        certified: worst.is_none(),
        residuals,
    })
}

/// Builds, lowers, solves and verifies the tail program for `model`.
pub fn synthesize(
    model: &SystemModel,
    cfg: &SynthesisConfig,
    solver: &dyn SolverInterface,
) -> Result<Certificate, SosError> {
    let program = build_program(model, cfg)?;
    if model.unsafe_set.is_empty_syntactically() && !program.exit_applied {
        // nothing to avoid and no way out of X: v = 0 works
        let v = Polynomial::zero(model.state_dim(), 0);
        let residuals = verify_certificate(model, &v, 0.0, false, cfg.verify_samples, cfg.seed)?;
        return Ok(Certificate {
            v,
            gamma: 0.0,
            degree: 0,
            status: SolveStatus::Optimal,
            residuals,
            certified: true,
        });
    }
    let sdp = sos_to_sdp(&program, cfg.max_block)?;
    log::debug!(
        "{}: {} variables, {} equalities, {} blocks (largest {})",
        model.name,
        sdp.num_vars(),
        sdp.equalities.len(),
        sdp.blocks.len(),
        sdp.blocks.iter().max().unwrap_or(&0)
    );
    let outcome = solver.solve(&sdp);
    extract_and_verify(&outcome, &program, model, cfg)
}
