//! Offline tail synthesis and online bound updates.
//!
//! A [`PredictionSession`] holds the model, a stationary tail and the
//! discretization. Every observation triggers a full backward pass over the
//! whole log; nothing is cached between observations except the transition
//! table.

pub mod stream;

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{get_obf, get_orbf, get_osbf, value_iteration_v, Discretization, GridError, GridFunction, ObservationEvent};
use crate::oracle::{absorption_check, OracleError};
use crate::par::Execution;
use crate::poly::{Mode, SemialgebraicSet, SystemModel};
use crate::sos::{synthesize, Certificate, SolverInterface, SosError, SynthesisConfig};

pub use stream::{parse_event, run_stream, EventJson, LogEntry, StreamError};

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("reach-avoid prediction needs a model that asserts absorption into U or T")]
    AbsorptionNotAsserted,
    #[error("tail synthesis failed: {0}")]
    Synthesis(#[from] SosError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("observation time {time} must be after {previous}")]
    NonIncreasingTime { previous: u32, time: u32 },
    #[error("observations at time 0 are not allowed; the initial set plays that role")]
    ObservationAtZero,
    #[error("observation region at time {time} meets the {set} set")]
    RegionOverlaps { time: u32, set: &'static str },
    #[error("observation region has dimension {got}, model has {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("probability of the observations vanished at grid resolution (q = 0 after {k} observations)")]
    VanishingObservationProbability { k: usize },
}

/// One line of the report stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub k: usize,
    pub q: f64,
    pub p: f64,
    /// `max(0, 1 - p/q)`; absent when `q = 0`.
    pub bound: Option<f64>,
    pub certified: bool,
    pub elapsed_offline_ms: f64,
    pub elapsed_online_ms: f64,
}

impl PredictionReport {
    /// The same report without wall-clock fields.
    pub fn timeless(&self) -> Self {
        Self {
            elapsed_offline_ms: 0.0,
            elapsed_online_ms: 0.0,
            ..self.clone()
        }
    }
}

/// `max(0, 1 - p/q)`, or `None` when `q` is not positive.
pub fn combine_bound(p: f64, q: f64) -> Option<f64> {
    (q > 0.0).then(|| (1.0 - p / q).clamp(0.0, 1.0))
}

/// Stationary function used after the last observation.
#[derive(Clone, Debug)]
pub enum Tail {
    Certificate(Certificate),
    /// Value-iteration fallback; never certified.
    Grid { v: GridFunction, residual: f64 },
}

impl Tail {
    pub fn certified(&self) -> bool {
        match self {
            Tail::Certificate(c) => c.certified,
            Tail::Grid { .. } => false,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Tail::Certificate(c) => c.v.eval_state(x),
            Tail::Grid { v, .. } => v.eval(x),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PredictorConfig {
    pub synthesis: SynthesisConfig,
    /// Nodes per axis; `None` picks 201 for up to two dimensions and 81 above.
    pub grid_res: Option<usize>,
    pub quad_order: usize,
    /// Use value iteration as the tail when synthesis fails.
    pub fallback_vi: bool,
    pub vi_eps: f64,
    pub vi_max_iters: usize,
    pub absorption_horizon: u32,
    pub absorption_samples: u64,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            synthesis: SynthesisConfig::default(),
            grid_res: None,
            quad_order: 8,
            fallback_vi: false,
            vi_eps: 1e-7,
            vi_max_iters: 100_000,
            absorption_horizon: 500,
            absorption_samples: 2000,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

impl PredictorConfig {
    pub fn resolution(&self, dim: usize) -> usize {
        self.grid_res.unwrap_or(if dim <= 2 { 201 } else { 81 })
    }
}

const OVERLAP_SAMPLES: usize = 2000;

#[derive(Debug)]
pub struct PredictionSession {
    model: Arc<SystemModel>,
    tail: Tail,
    disc: Discretization,
    obs_log: Vec<ObservationEvent>,
    last_report: PredictionReport,
    offline_report: PredictionReport,
    absorption: Option<f64>,
    seed: u64,
}

impl PredictionSession {
    /// Synthesizes the tail (or falls back to value iteration when allowed)
    /// and returns a session holding the offline report.
    pub fn init_offline(
        model: SystemModel,
        cfg: &PredictorConfig,
        solver: &dyn SolverInterface,
    ) -> Result<Self, RuntimeError> {
        let start = Instant::now();
        let model = Arc::new(model);
        let absorption = precheck(&model, cfg)?;
        let disc = discretize(&model, cfg)?;
        let tail = match synthesize(&model, &cfg.synthesis, solver) {
            Ok(c) => Tail::Certificate(c),
            Err(e) if cfg.fallback_vi => {
                log::warn!("{}: synthesis failed ({e}); using value iteration", model.name);
                value_iteration_tail(&disc, cfg)?
            }
            Err(e) => return Err(e.into()),
        };
        let mut s = Self::assemble(model, tail, disc, cfg, absorption)?;
        s.last_report.elapsed_offline_ms = ms(start);
        s.offline_report = s.last_report.clone();
        Ok(s)
    }

    /// Session around a tail computed elsewhere, e.g. a certificate file.
    pub fn with_tail(model: SystemModel, tail: Tail, cfg: &PredictorConfig) -> Result<Self, RuntimeError> {
        let start = Instant::now();
        let model = Arc::new(model);
        let absorption = precheck(&model, cfg)?;
        let disc = discretize(&model, cfg)?;
        let mut s = Self::assemble(model, tail, disc, cfg, absorption)?;
        s.last_report.elapsed_offline_ms = ms(start);
        s.offline_report = s.last_report.clone();
        Ok(s)
    }

    fn assemble(
        model: Arc<SystemModel>,
        tail: Tail,
        disc: Discretization,
        cfg: &PredictorConfig,
        absorption: Option<f64>,
    ) -> Result<Self, RuntimeError> {
        let nodes = disc.init_nodes();
        if nodes.is_empty() {
            return Err(GridError::NoInitialNode.into());
        }
        let grid = Arc::clone(disc.grid());
        let p = nodes
            .iter()
            .map(|&i| tail.eval(&grid.node(i)).max(0.0))
            .fold(0.0, f64::max);
        let last_report = PredictionReport {
            k: 0,
            q: 1.0,
            p,
            bound: combine_bound(p, 1.0),
            certified: tail.certified(),
            elapsed_offline_ms: 0.0,
            elapsed_online_ms: 0.0,
        };
        Ok(Self {
            model,
            tail,
            disc,
            obs_log: Vec::new(),
            offline_report: last_report.clone(),
            last_report,
            absorption,
            seed: cfg.seed,
        })
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn obs_log(&self) -> &[ObservationEvent] {
        &self.obs_log
    }

    pub fn last_report(&self) -> &PredictionReport {
        &self.last_report
    }

    /// Clears the observation log and restores the offline report.
    pub fn reset(&mut self) {
        self.obs_log.clear();
        self.last_report = self.offline_report.clone();
    }

    /// Sampled absorption frequency (reach-avoid sessions only).
    pub fn absorption(&self) -> Option<f64> {
        self.absorption
    }

    /// Appends `event` and recomputes `q` and `p` over the whole log. On
    /// error the log is left unchanged.
    pub fn on_observation(&mut self, event: ObservationEvent) -> Result<PredictionReport, RuntimeError> {
        let start = Instant::now();
        self.admit(&event)?;
        self.obs_log.push(event);
        match self.evaluate() {
            Ok((q, p)) => {
                let report = PredictionReport {
                    k: self.obs_log.len(),
                    q,
                    p,
                    bound: combine_bound(p, q),
                    certified: self.tail.certified(),
                    elapsed_offline_ms: self.last_report.elapsed_offline_ms,
                    elapsed_online_ms: ms(start),
                };
                self.last_report = report.clone();
                Ok(report)
            }
            Err(e) => {
                self.obs_log.pop();
                Err(e)
            }
        }
    }

    fn evaluate(&self) -> Result<(f64, f64), RuntimeError> {
        let q = get_obf(&self.disc, &self.obs_log)?.value;
        if q <= 0.0 {
            return Err(RuntimeError::VanishingObservationProbability { k: self.obs_log.len() });
        }
        let tail = |x: &[f64]| self.tail.eval(x);
        let p = match self.model.mode {
            Mode::Safety => get_osbf(&self.disc, &self.obs_log, &tail)?.value,
            Mode::ReachAvoid => get_orbf(&self.disc, &self.obs_log, &tail)?.value,
        };
        Ok((q, p))
    }

    fn admit(&self, event: &ObservationEvent) -> Result<(), RuntimeError> {
        let n = self.model.state_dim();
        if event.region.dim() != n {
            return Err(RuntimeError::DimensionMismatch {
                got: event.region.dim(),
                want: n,
            });
        }
        if event.time == 0 {
            return Err(RuntimeError::ObservationAtZero);
        }
        if let Some(last) = self.obs_log.last() {
            if event.time <= last.time {
                return Err(RuntimeError::NonIncreasingTime {
                    previous: last.time,
                    time: event.time,
                });
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from(event.time));
        if overlaps(&event.region, &self.model.unsafe_set, &self.model, &mut rng) {
            return Err(RuntimeError::RegionOverlaps {
                time: event.time,
                set: "unsafe",
            });
        }
        if self.model.mode == Mode::ReachAvoid {
            if let Some(t) = &self.model.target {
                if overlaps(&event.region, t, &self.model, &mut rng) {
                    return Err(RuntimeError::RegionOverlaps {
                        time: event.time,
                        set: "target",
                    });
                }
            }
        }
        Ok(())
    }
}

/// Sampled test for `region ∩ other ∩ X` being nonempty.
fn overlaps(region: &SemialgebraicSet, other: &SemialgebraicSet, model: &SystemModel, rng: &mut ChaCha8Rng) -> bool {
    if other.is_empty_syntactically() {
        return false;
    }
    let Some(xb) = model.state_box() else {
        return false;
    };
    let within = region
        .bounding_box()
        .and_then(|b| b.intersect(&xb))
        .unwrap_or(xb);
    let both = region.intersect(&model.x_set);
    (0..OVERLAP_SAMPLES)
        .filter_map(|_| both.sample_in(&within, rng, 200))
        .any(|x| other.contains(&x))
}

fn precheck(model: &SystemModel, cfg: &PredictorConfig) -> Result<Option<f64>, RuntimeError> {
    if model.mode != Mode::ReachAvoid {
        return Ok(None);
    }
    if !model.asserts_absorption {
        return Err(RuntimeError::AbsorptionNotAsserted);
    }
    let frac = absorption_check(model, cfg.absorption_horizon, cfg.absorption_samples, cfg.seed, cfg.exec)?;
    Ok(Some(frac))
}

pub fn discretize(model: &Arc<SystemModel>, cfg: &PredictorConfig) -> Result<Discretization, GridError> {
    let res = cfg.resolution(model.state_dim());
    Discretization::for_model(Arc::clone(model), res, cfg.quad_order, cfg.exec)
}

/// Value-iteration tail on `disc`. A run that hits the sweep limit still
/// yields its last iterate.
pub fn value_iteration_tail(disc: &Discretization, cfg: &PredictorConfig) -> Result<Tail, GridError> {
    match value_iteration_v(disc, cfg.vi_eps, cfg.vi_max_iters) {
        Ok(r) => Ok(Tail::Grid {
            v: r.v,
            residual: r.residual,
        }),
        Err(GridError::NotConverged { iterate, residual, .. }) => {
            log::warn!("value iteration stopped at residual {residual:e}");
            Ok(Tail::Grid { v: *iterate, residual })
        }
        Err(e) => Err(e),
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
