//! Offline synthesis of the stationary tail certificate `v`.
//!
//! The pipeline is: build a sum-of-squares program over polynomial
//! templates ([`program`]), lower it to a semidefinite program ([`sdp`]),
//! solve it with a pluggable conic solver ([`solver`]) and read back a
//! numerically verified certificate ([`certificate`]).

pub mod certificate;
pub mod linpoly;
pub mod program;
pub mod sdp;
pub mod solver;

use thiserror::Error;

use crate::poly::PolyError;

pub use certificate::{extract_and_verify, synthesize, verify_certificate, Certificate, CertificateJson};
pub use linpoly::{monomials_up_to, AffExpr, LinPoly};
pub use program::{
    build_program, build_ra_program, build_safety_program, putinar_encode, AffineScaling, PolyTemplate,
    SosConstraint, SosProgram,
};
pub use sdp::{sos_to_sdp, svec_index, svec_len, Equality, SdpProblem};
pub use solver::{solver_from_env, NoSolver, ScriptedSolver, SdpSolution, SolveOutcome, SolveStatus, SolverInterface};

#[cfg(feature = "clarabel")]
pub use solver::ClarabelSolver;

#[derive(Debug, Error)]
pub enum SosError {
    #[error("template degree must be even and positive, got {0}")]
    OddDegree(u32),
    #[error("composed polynomial degree {composed} exceeds the cap {cap}")]
    DegreeCap { composed: u32, cap: u32 },
    #[error("Gram block of size {size} exceeds the cap {cap}")]
    BlockTooLarge { size: usize, cap: usize },
    #[error("state space X must be bounded to scale the program")]
    UnboundedStateSpace,
    #[error("wrong program for a {0} model")]
    WrongMode(&'static str),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("the semidefinite program is infeasible")]
    Infeasible,
    #[error("solver failure: {0}")]
    SolverFailed(String),
    #[error("certificate violates `{condition}` by {residual:e}")]
    VerificationFailed { condition: String, residual: f64 },
}

/// Whether to require `v >= 1` where the dynamics can leave `X`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitConstraint {
    /// Added unless interval arithmetic proves every successor stays in `X`.
    Auto,
    Off,
}

/// Sign used for the multiplier sum in the Putinar encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PutinarSign {
    /// `p - sum sigma_j g_j` is SOS.
    Sound,
    /// `p + sum sigma_j g_j` is SOS. Unsound; kept as a test hook.
    Plus,
}

#[derive(Clone, Debug)]
pub struct SynthesisConfig {
    pub degree: u32,
    /// Multiplier degree; `None` picks the largest even degree that keeps
    /// every constraint within the degree of its target polynomial.
    pub mult_degree: Option<u32>,
    pub max_composed_degree: u32,
    pub max_block: usize,
    pub exit: ExitConstraint,
    pub sign: PutinarSign,
    /// Slack subtracted from the level-set constraints before the SOS
    /// requirement. The decrease condition gets none: a strict decrease is
    /// infeasible whenever paths can stay in `X` forever.
    pub margin: f64,
    pub verify_samples: usize,
    pub verify_tol: f64,
    /// Reject certificates whose sampled residuals exceed `verify_tol`.
    /// When off, such certificates are returned with `certified = false`.
    pub reject_unverified: bool,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            degree: 4,
            mult_degree: None,
            max_composed_degree: 16,
            max_block: 300,
            exit: ExitConstraint::Auto,
            sign: PutinarSign::Sound,
            margin: 1e-7,
            verify_samples: 10_000,
            verify_tol: 1e-6,
            reject_unverified: true,
            seed: 0,
        }
    }
}
