use std::fmt::Write as _;
use std::time::Instant;

use obarrier::oracle::evenly_spaced;
use obarrier::poly::Mode;
use obarrier::runtime::{EventJson, PredictionSession, Tail};
use obarrier::sos::synthesize;
use serde::{Deserialize, Serialize};

use crate::args::BenchArgs;
use crate::commands::{predictor_config, solver, write_json};
use crate::models::{self, BENCHMARKS, POSITIVE_ONLY};
use crate::validate::reachable_sequence;
use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SequenceResult {
    pub length: usize,
    pub half_width: f64,
    pub events: Vec<EventJson>,
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub mode: Mode,
    pub gamma: Option<f64>,
    pub offline_bound: Option<f64>,
    pub reference_bound: Option<f64>,
    /// `comparable` / `below` against the reference value, or `positive` /
    /// `zero` where only a positive bound is expected.
    pub verdict: Option<String>,
    pub certified: bool,
    pub sequences: Vec<SequenceResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Table contents. Wall-clock times go to the text table only, so reruns
/// with the same seed reproduce this byte for byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchOutput {
    pub seed: u64,
    pub degree: u32,
    pub grid_res: Option<u64>,
    pub quad_order: u64,
    pub gap: u32,
    pub half_width: f64,
    pub rows: Vec<BenchRow>,
}

struct Timing {
    offline_s: f64,
    online_ms: Vec<f64>,
}

const TOLERANCE: f64 = 0.15;

fn verdict(name: &str, bound: f64, reference: Option<f64>) -> Option<String> {
    if POSITIVE_ONLY.contains(&name) {
        return Some(if bound > 0.0 { "positive" } else { "zero" }.into());
    }
    reference.map(|r| if bound >= r - TOLERANCE { "comparable" } else { "below" }.into())
}

fn run_row(name: &str, a: &BenchArgs) -> Result<(BenchRow, Timing), CliError> {
    let c = &a.common;
    let model = models::resolve(name)?;
    let mut cfg = predictor_config(c)?;
    cfg.seed = c.seed;
    let mut row = BenchRow {
        model: model.name.clone(),
        mode: model.mode,
        gamma: None,
        offline_bound: None,
        reference_bound: model.reference_bound,
        verdict: None,
        certified: false,
        sequences: Vec::new(),
        error: None,
    };
    let mut timing = Timing {
        offline_s: 0.0,
        online_ms: Vec::new(),
    };
    let start = Instant::now();
    let cert = match synthesize(&model, &cfg.synthesis, solver()?.as_ref()) {
        Ok(cert) => cert,
        Err(e) => {
            timing.offline_s = start.elapsed().as_secs_f64();
            row.error = Some(format!("synthesis: {e}"));
            return Ok((row, timing));
        }
    };
    timing.offline_s = start.elapsed().as_secs_f64();
    row.gamma = Some(cert.gamma);
    row.offline_bound = Some(cert.offline_bound());
    row.verdict = verdict(name, cert.offline_bound(), model.reference_bound);
    row.certified = cert.certified;
    let mut s = match PredictionSession::with_tail(model.clone(), Tail::Certificate(cert), &cfg) {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(format!("session: {e}"));
            return Ok((row, timing));
        }
    };
    for &len in &a.lengths {
        let seed = c.seed.wrapping_add(len as u64);
        let mut res = SequenceResult {
            length: len,
            half_width: a.half_width,
            events: Vec::new(),
            q: None,
            p: None,
            bound: None,
            error: None,
        };
        let Some((events, half_width)) = reachable_sequence(&mut s, &model, &evenly_spaced(len, a.gap), a.half_width, seed)
        else {
            res.error = Some("no trajectory stays safe long enough".into());
            row.sequences.push(res);
            continue;
        };
        res.half_width = half_width;
        res.events = events.iter().map(|e| EventJson::from_region(e.time, &e.region)).collect();
        s.reset();
        let mut last_ms = 0.0;
        for e in events {
            match s.on_observation(e) {
                Ok(r) => {
                    res.q = Some(r.q);
                    res.p = Some(r.p);
                    res.bound = r.bound;
                    last_ms = r.elapsed_online_ms;
                }
                Err(err) => {
                    res.error = Some(err.to_string());
                    break;
                }
            }
        }
        timing.online_ms.push(last_ms);
        row.sequences.push(res);
    }
    Ok((row, timing))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

pub fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let names: Vec<String> = a
        .models
        .clone()
        .unwrap_or_else(|| BENCHMARKS.iter().map(|s| s.to_string()).collect());
    if a.lengths.is_empty() || a.lengths.contains(&0) {
        return Err(CliError::Usage("--lengths must be positive".into()));
    }
    let c = &a.common;
    let mut rows = Vec::new();
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<14} {:>5} {:>9} {:>9} {:>11} {:>9}  online (len: bound / ms)",
        "model", "mode", "offline", "reference", "verdict", "time(s)"
    );
    for name in &names {
        let (row, t) = match run_row(name, a) {
            Ok(r) => r,
            Err(e) => {
                let _ = writeln!(table, "{name:<14} error: {e}");
                rows.push(BenchRow {
                    model: name.clone(),
                    mode: Mode::Safety,
                    gamma: None,
                    offline_bound: None,
                    reference_bound: None,
                    verdict: None,
                    certified: false,
                    sequences: Vec::new(),
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        let mode = if row.mode == Mode::Safety { "S" } else { "RA" };
        let mut line = format!(
            "{:<14} {:>5} {:>9} {:>9} {:>11} {:>9.2} ",
            row.model,
            mode,
            fmt_opt(row.offline_bound),
            fmt_opt(row.reference_bound),
            row.verdict.as_deref().unwrap_or("-"),
            t.offline_s
        );
        for (s, ms) in row.sequences.iter().zip(t.online_ms.iter().chain(std::iter::repeat(&0.0))) {
            let _ = write!(line, " {}: {} / {:.0}", s.length, fmt_opt(s.bound), ms);
        }
        if let Some(e) = &row.error {
            let _ = write!(line, " [{e}]");
        }
        let _ = writeln!(table, "{line}");
        rows.push(row);
    }
    print!("{table}");
    let out = BenchOutput {
        seed: c.seed,
        degree: c.degree,
        grid_res: c.grid_res,
        quad_order: c.quad_order,
        gap: a.gap,
        half_width: a.half_width,
        rows,
    };
    if let Some(p) = &c.out {
        write_json(Some(p), &out)?;
    }
    Ok(())
}
