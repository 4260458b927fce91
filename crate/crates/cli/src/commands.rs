use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use obarrier::par::Execution;
use obarrier::poly::{Mode, SystemModel};
use obarrier::runtime::{
    discretize, run_stream, value_iteration_tail, LogEntry, PredictionSession, PredictorConfig, Tail,
};
use obarrier::sos::{solver_from_env, synthesize as synthesize_tail, SolverInterface, SynthesisConfig};

use crate::args::{Common, PredictArgs};
use crate::models;
use crate::tailfile::TailFile;
use crate::CliError;

pub(crate) fn load(c: &Common) -> Result<SystemModel, CliError> {
    let spec = c.model.as_deref().ok_or_else(|| CliError::Usage("--model is required".into()))?;
    models::resolve(spec)
}

pub(crate) fn exec(c: &Common) -> Execution {
    if c.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

pub(crate) fn default_horizon(m: &SystemModel) -> u32 {
    if m.mode == Mode::ReachAvoid || m.state_dim() >= 3 {
        500
    } else {
        200
    }
}

pub(crate) fn predictor_config(c: &Common) -> Result<PredictorConfig, CliError> {
    if !(c.confidence > 0.0 && c.confidence < 1.0) {
        return Err(CliError::Usage(format!("--confidence must be in (0, 1), got {}", c.confidence)));
    }
    Ok(PredictorConfig {
        synthesis: SynthesisConfig {
            degree: c.degree,
            mult_degree: c.mult_degree,
            seed: c.seed,
            ..SynthesisConfig::default()
        },
        grid_res: c.grid_res.map(|r| r as usize),
        quad_order: c.quad_order as usize,
        fallback_vi: c.fallback_vi,
        seed: c.seed,
        exec: exec(c),
        ..PredictorConfig::default()
    })
}

pub(crate) fn solver() -> Result<Box<dyn SolverInterface>, CliError> {
    solver_from_env().map_err(CliError::Usage)
}

/// Session from `--cert` if given, otherwise from in-process synthesis.
pub(crate) fn session(c: &Common, model: SystemModel, cfg: &PredictorConfig) -> Result<PredictionSession, CliError> {
    match &c.cert {
        Some(path) => {
            let tail = TailFile::read(path, model.state_dim())?;
            Ok(PredictionSession::with_tail(model, tail, cfg)?)
        }
        None => Ok(PredictionSession::init_offline(model, cfg, solver()?.as_ref())?),
    }
}

pub(crate) fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

pub(crate) fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn synthesize(c: &Common) -> Result<(), CliError> {
    let model = load(c)?;
    let cfg = predictor_config(c)?;
    let start = Instant::now();
    let mut grid_bound = f64::NAN;
    let tail = match synthesize_tail(&model, &cfg.synthesis, solver()?.as_ref()) {
        Ok(cert) => Tail::Certificate(cert),
        Err(e) if c.fallback_vi => {
            log::warn!("{}: synthesis failed ({e}); writing a value-iteration tail", model.name);
            let disc = discretize(&Arc::new(model.clone()), &cfg).map_err(|e| CliError::Runtime(e.into()))?;
            let tail = value_iteration_tail(&disc, &cfg).map_err(|e| CliError::Runtime(e.into()))?;
            if let Tail::Grid { v, .. } = &tail {
                let p = disc.init_nodes().iter().map(|&i| v.values()[i]).fold(0.0, f64::max);
                grid_bound = (1.0 - p).clamp(0.0, 1.0);
            }
            tail
        }
        Err(e) => return Err(CliError::Synthesis(e)),
    };
    let secs = start.elapsed().as_secs_f64();
    let summary = match &tail {
        Tail::Certificate(cert) => format!(
            "{}: gamma {:.6}, offline bound {:.6}, {}, {secs:.2} s",
            model.name,
            cert.gamma,
            cert.offline_bound(),
            if cert.certified { "certified" } else { "not certified" },
        ),
        Tail::Grid { residual, .. } => format!(
            "{}: value-iteration tail (residual {residual:.2e}), offline bound {grid_bound:.6}, not certified, {secs:.2} s",
            model.name
        ),
    };
    let file = TailFile::from_tail(&tail);
    match &c.out {
        Some(p) => {
            write_json(Some(p), &file)?;
            println!("{summary}");
        }
        None => {
            write_json(None, &file)?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

pub fn predict(a: &PredictArgs) -> Result<(), CliError> {
    let c = &a.common;
    let obs_path = c.obs.as_deref().ok_or_else(|| CliError::Usage("--obs is required".into()))?;
    let input = BufReader::new(File::open(obs_path)?);
    let model = load(c)?;
    let cfg = predictor_config(c)?;
    let mut s = session(c, model, &cfg)?;
    let mut out = output(c.out.as_deref())?;
    let mut log = match &a.log {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            let header = LogEntry::Header {
                model: c.model.clone().unwrap_or_default(),
                config: serde_json::to_value(c)?,
            };
            serde_json::to_writer(&mut f, &header)?;
            f.write_all(b"\n")?;
            Some(f)
        }
        None => None,
    };
    let result = run_stream(&mut s, input, &mut out, log.as_mut().map(|l| l as &mut dyn Write));
    out.flush()?;
    if let Some(l) = log.as_mut() {
        l.flush()?;
    }
    result?;
    Ok(())
}

pub fn monitor(c: &Common) -> Result<(), CliError> {
    let model = load(c)?;
    let cfg = predictor_config(c)?;
    let mut s = session(c, model, &cfg)?;
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    serde_json::to_writer(&mut out, s.last_report())?;
    out.write_all(b"\n")?;
    out.flush()?;
    run_stream(&mut s, stdin.lock(), &mut out, None)?;
    Ok(())
}
