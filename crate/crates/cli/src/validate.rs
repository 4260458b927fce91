use obarrier::grid::ObservationEvent;
use obarrier::oracle::{
    estimate_conditional, estimate_safety, evenly_spaced, generate_observations, IntervalEstimate,
};
use obarrier::poly::SystemModel;
use obarrier::runtime::{EventJson, PredictionReport, PredictionSession};
use obarrier::sos::PutinarSign;
use serde::{Deserialize, Serialize};

use crate::args::ValidateArgs;
use crate::commands::{default_horizon, exec, load, predictor_config, session, write_json};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    Violated,
    Inconclusive,
}

/// One emitted bound against its Monte Carlo estimate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub k: usize,
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub bound: Option<f64>,
    pub mc_point: Option<f64>,
    pub mc_ci: Option<[f64; 2]>,
    pub accepted: Option<u64>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub sequence: usize,
    pub half_width: f64,
    pub events: Vec<EventJson>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Summary {
    pub valid: usize,
    pub violated: usize,
    pub inconclusive: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationOutput {
    pub model: String,
    pub certified: bool,
    pub horizon: u32,
    pub offline: Check,
    pub sequences: Vec<SequenceRecord>,
    pub summary: Summary,
}

impl ValidationOutput {
    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        std::iter::once(&self.offline).chain(self.sequences.iter().flat_map(|s| s.checks.iter()))
    }
}

fn judge(report: &PredictionReport, est: &IntervalEstimate, accepted: u64) -> Check {
    let bound = report.bound;
    let verdict = match bound {
        Some(b) if b <= est.point + est.half_width() => Verdict::Valid,
        Some(_) => Verdict::Violated,
        None => Verdict::Inconclusive,
    };
    Check {
        k: report.k,
        q: Some(report.q),
        p: Some(report.p),
        bound,
        mc_point: Some(est.point),
        mc_ci: Some([est.lower, est.upper]),
        accepted: Some(accepted),
        verdict,
        note: None,
    }
}

fn inconclusive(k: usize, report: Option<&PredictionReport>, note: String) -> Check {
    Check {
        k,
        q: report.map(|r| r.q),
        p: report.map(|r| r.p),
        bound: report.and_then(|r| r.bound),
        mc_point: None,
        mc_ci: None,
        accepted: None,
        verdict: Verdict::Inconclusive,
        note: Some(note),
    }
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(a.wrapping_mul(1_000_003))
        .wrapping_add(b)
}

pub(crate) struct McSettings {
    pub horizon: u32,
    pub samples: u64,
    pub max_trials: u64,
    pub confidence: f64,
    pub seed: u64,
    pub exec: obarrier::par::Execution,
}

const WIDEN_STEPS: usize = 6;

/// Boxes around one simulated trajectory, doubled in width (at most
/// `WIDEN_STEPS` times) until every observation keeps `q > 0` on the grid.
/// `q` is a minimum over the initial nodes, so a box that one trajectory
/// hits can still be unreachable from elsewhere in `I`. Returns the last
/// attempt when no width works.
pub(crate) fn reachable_sequence(
    s: &mut PredictionSession,
    model: &SystemModel,
    times: &[u32],
    half_width: f64,
    seed: u64,
) -> Option<(Vec<ObservationEvent>, f64)> {
    let mut w = half_width;
    let mut last = None;
    for _ in 0..=WIDEN_STEPS {
        let events = generate_observations(model, times, w, seed)?;
        s.reset();
        let ok = events.iter().all(|e| s.on_observation(e.clone()).is_ok());
        s.reset();
        if ok {
            return Some((events, w));
        }
        last = Some((events, w));
        w *= 2.0;
    }
    last
}

/// Feeds `events` into a reset session and checks every report.
pub(crate) fn check_sequence(
    s: &mut PredictionSession,
    model: &SystemModel,
    events: &[ObservationEvent],
    mc: &McSettings,
    index: u64,
) -> Vec<Check> {
    s.reset();
    let mut checks = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let k = i + 1;
        let report = match s.on_observation(e.clone()) {
            Ok(r) => r,
            Err(err) => {
                checks.push(inconclusive(k, None, err.to_string()));
                break;
            }
        };
        let est = estimate_conditional(
            model,
            &events[..k],
            mc.horizon,
            mc.samples,
            mc.max_trials,
            mc.confidence,
            mix(mc.seed, index, k as u64),
            mc.exec,
        );
        checks.push(match est {
            Ok(c) => judge(&report, &c.estimate, c.accepted),
            Err(e) => inconclusive(k, Some(&report), e.to_string()),
        });
    }
    checks
}

pub(crate) fn offline_check(s: &PredictionSession, model: &SystemModel, mc: &McSettings) -> Check {
    let report = s.last_report().clone();
    match estimate_safety(model, mc.horizon, mc.samples, mc.confidence, mc.seed, mc.exec) {
        Ok(e) => judge(&report, &e.overall, mc.samples),
        Err(e) => inconclusive(0, Some(&report), e.to_string()),
    }
}

pub fn validate(a: &ValidateArgs) -> Result<(), CliError> {
    let c = &a.common;
    if !(a.half_width > 0.0) {
        return Err(CliError::Usage("--half-width must be positive".into()));
    }
    let model = load(c)?;
    let mut cfg = predictor_config(c)?;
    if a.putinar_plus {
        cfg.synthesis.sign = PutinarSign::Plus;
        cfg.synthesis.reject_unverified = false;
    }
    let samples = c.samples.unwrap_or(50_000);
    let mc = McSettings {
        horizon: c.horizon.unwrap_or_else(|| default_horizon(&model)),
        samples,
        max_trials: a.max_trials.unwrap_or(samples.saturating_mul(100)),
        confidence: c.confidence,
        seed: c.seed,
        exec: exec(c),
    };
    let mut s = session(c, model.clone(), &cfg)?;
    let offline = offline_check(&s, &model, &mc);
    let mut sequences = Vec::with_capacity(a.runs);
    for r in 0..a.runs {
        let len = 1 + r % a.obs_len as usize;
        let times = evenly_spaced(len, a.gap);
        let gen_seed = mix(c.seed, r as u64, 0xb0c5);
        let Some((events, half_width)) = reachable_sequence(&mut s, &model, &times, a.half_width, gen_seed) else {
            sequences.push(SequenceRecord {
                sequence: r,
                half_width: a.half_width,
                events: Vec::new(),
                checks: vec![inconclusive(0, None, "no trajectory stays safe long enough".into())],
            });
            continue;
        };
        let checks = check_sequence(&mut s, &model, &events, &mc, r as u64);
        sequences.push(SequenceRecord {
            sequence: r,
            half_width,
            events: events.iter().map(|e| EventJson::from_region(e.time, &e.region)).collect(),
            checks,
        });
    }
    let mut out = ValidationOutput {
        model: model.name.clone(),
        certified: s.tail().certified(),
        horizon: mc.horizon,
        offline,
        sequences,
        summary: Summary::default(),
    };
    let mut summary = Summary::default();
    for ch in out.checks() {
        match ch.verdict {
            Verdict::Valid => summary.valid += 1,
            Verdict::Violated => summary.violated += 1,
            Verdict::Inconclusive => summary.inconclusive += 1,
        }
    }
    out.summary = summary;
    write_json(c.out.as_deref(), &out)?;
    eprintln!(
        "{}: {} valid, {} violated, {} inconclusive",
        out.model, out.summary.valid, out.summary.violated, out.summary.inconclusive
    );
    if out.summary.violated > 0 {
        return Err(CliError::Violations {
            violated: out.summary.violated,
            checked: out.summary.valid + out.summary.violated,
        });
    }
    Ok(())
}
