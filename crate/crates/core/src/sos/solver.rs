use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::sdp::SdpProblem;

/// Largest primal residual an `Optimal` answer may carry.
pub const OPTIMAL_RESIDUAL: f64 = 1e-7;
/// Residual below which a non-converged answer is still usable.
#[cfg(feature = "clarabel")]
const INACCURATE_RESIDUAL: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Inaccurate,
    Failed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub iterations: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveOutcome {
    Optimal(SdpSolution),
    Infeasible,
    Inaccurate(SdpSolution),
    Failed(String),
}

impl SolveOutcome {
    pub fn status(&self) -> SolveStatus {
        match self {
            SolveOutcome::Optimal(_) => SolveStatus::Optimal,
            SolveOutcome::Infeasible => SolveStatus::Infeasible,
            SolveOutcome::Inaccurate(_) => SolveStatus::Inaccurate,
            SolveOutcome::Failed(_) => SolveStatus::Failed,
        }
    }

    pub fn solution(&self) -> Option<&SdpSolution> {
        match self {
            SolveOutcome::Optimal(s) | SolveOutcome::Inaccurate(s) => Some(s),
            _ => None,
        }
    }

    /// Records the measured primal residual and downgrades an `Optimal`
    /// answer whose residual is too large.
    pub fn audited(self, sdp: &SdpProblem) -> Self {
        match self {
            SolveOutcome::Optimal(mut s) => {
                s.primal_residual = sdp.primal_residual(&s.x);
                if s.primal_residual <= OPTIMAL_RESIDUAL {
                    SolveOutcome::Optimal(s)
                } else {
                    SolveOutcome::Inaccurate(s)
                }
            }
            SolveOutcome::Inaccurate(mut s) => {
                s.primal_residual = sdp.primal_residual(&s.x);
                SolveOutcome::Inaccurate(s)
            }
            other => other,
        }
    }
}

/// A conic solver that handles PSD blocks and linear equalities.
pub trait SolverInterface: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, sdp: &SdpProblem) -> SolveOutcome;
}

/// Always fails; selected when no solver is configured.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoSolver;

impl SolverInterface for NoSolver {
    fn name(&self) -> &str {
        "none"
    }

    fn solve(&self, _sdp: &SdpProblem) -> SolveOutcome {
        SolveOutcome::Failed("no SDP solver configured".into())
    }
}

/// Replays canned outcomes in order, then fails.
#[derive(Debug, Default)]
pub struct ScriptedSolver {
    script: Mutex<Vec<SolveOutcome>>,
}

impl ScriptedSolver {
    pub fn new(mut outcomes: Vec<SolveOutcome>) -> Self {
        outcomes.reverse();
        Self {
            script: Mutex::new(outcomes),
        }
    }
}

impl SolverInterface for ScriptedSolver {
    fn name(&self) -> &str {
        "scripted"
    }

    fn solve(&self, _sdp: &SdpProblem) -> SolveOutcome {
        self.script
            .lock()
            .expect("script lock")
            .pop()
            .unwrap_or_else(|| SolveOutcome::Failed("script exhausted".into()))
    }
}

/// Solver named by `OBARRIER_SOLVER` (`clarabel` or `none`); defaults to
/// the bundled adapter when one is compiled in.
pub fn solver_from_env() -> Result<Box<dyn SolverInterface>, String> {
    let name = std::env::var("OBARRIER_SOLVER").unwrap_or_default();
    match name.as_str() {
        "none" => Ok(Box::new(NoSolver)),
        #[cfg(feature = "clarabel")]
        "" | "clarabel" => Ok(Box::new(ClarabelSolver::default())),
        #[cfg(not(feature = "clarabel"))]
        "" => Ok(Box::new(NoSolver)),
        other => Err(format!("unknown solver `{other}`")),
    }
}

#[cfg(feature = "clarabel")]
pub use clarabel_adapter::ClarabelSolver;

#[cfg(feature = "clarabel")]
mod clarabel_adapter {
    extern crate blas_src;
    extern crate lapack_src;

    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{
        DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    };

    use super::*;
    use crate::sos::sdp::svec_len;

    #[derive(Clone, Debug)]
    pub struct ClarabelSolver {
        pub max_iter: u32,
        pub tol: f64,
    }

    impl Default for ClarabelSolver {
        fn default() -> Self {
            Self {
                max_iter: 200,
                tol: 1e-9,
            }
        }
    }

    impl SolverInterface for ClarabelSolver {
        fn name(&self) -> &str {
            "clarabel"
        }

        fn solve(&self, sdp: &SdpProblem) -> SolveOutcome {
            let nv = sdp.num_vars();
            let neq = sdp.equalities.len();
            let (mut ri, mut ci, mut vals) = (Vec::new(), Vec::new(), Vec::new());
            let mut b = Vec::with_capacity(neq + nv);
            for (r, e) in sdp.equalities.iter().enumerate() {
                for &(k, a) in &e.coefs {
                    ri.push(r);
                    ci.push(k);
                    vals.push(a);
                }
                b.push(e.rhs);
            }
            let mut cones = vec![SupportedConeT::ZeroConeT(neq)];
            let mut row = neq;
            for (&size, &off) in sdp.blocks.iter().zip(&sdp.block_offsets) {
                for k in 0..svec_len(size) {
                    ri.push(row + k);
                    ci.push(off + k);
                    vals.push(-1.0);
                    b.push(0.0);
                }
                row += svec_len(size);
                cones.push(SupportedConeT::PSDTriangleConeT(size));
            }
            let a = CscMatrix::new_from_triplets(row, nv, ri, ci, vals);
            let p = CscMatrix::<f64>::zeros((nv, nv));
            let mut q = vec![0.0; nv];
            for &(k, c) in &sdp.objective {
                q[k] += c;
            }
            let settings = match DefaultSettingsBuilder::default()
                .verbose(std::env::var_os("OBARRIER_SOLVER_VERBOSE").is_some())
                .direct_solve_method("faer".into())
                .max_iter(self.max_iter)
                .tol_gap_abs(self.tol)
                .tol_gap_rel(self.tol)
                .tol_feas(self.tol)
                .build()
            {
                Ok(s) => s,
                Err(e) => return SolveOutcome::Failed(format!("settings: {e:?}")),
            };
            let mut solver = match DefaultSolver::new(&p, &q, &a, &b, &cones, settings) {
                Ok(s) => s,
                Err(e) => return SolveOutcome::Failed(format!("setup: {e:?}")),
            };
            solver.solve();
            let sol = &solver.solution;
            let out = SdpSolution {
                x: sol.x.clone(),
                objective: sdp.objective_constant + sol.obj_val,
                primal_residual: f64::NAN,
                iterations: sol.iterations,
            };
            match sol.status {
                SolverStatus::Solved => SolveOutcome::Optimal(out).audited(sdp),
                SolverStatus::AlmostSolved => SolveOutcome::Inaccurate(out).audited(sdp),
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveOutcome::Infeasible,
                other => {
                    if out.x.iter().all(|v| v.is_finite()) && sdp.primal_residual(&out.x) <= INACCURATE_RESIDUAL {
                        SolveOutcome::Inaccurate(out).audited(sdp)
                    } else {
                        SolveOutcome::Failed(format!("{other:?}"))
                    }
                }
            }
        }
    }
}
