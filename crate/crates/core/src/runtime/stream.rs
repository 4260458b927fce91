use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PredictionReport, PredictionSession, RuntimeError};
use crate::grid::ObservationEvent;
use crate::poly::{SemialgebraicSet, SetJson};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: malformed event: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Rejected {
        line: usize,
        #[source]
        source: RuntimeError,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl StreamError {
    pub fn line(&self) -> Option<usize> {
        match self {
            StreamError::Malformed { line, .. } | StreamError::Rejected { line, .. } => Some(*line),
            StreamError::Io(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxJson {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallJson {
    pub center: Vec<f64>,
    pub radius: f64,
}

/// One observation line: a time and exactly one of `region`, `box`, `ball`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventJson {
    pub time: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<SetJson>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub boxed: Option<BoxJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ball: Option<BallJson>,
}

impl EventJson {
    pub fn from_box(time: u32, low: Vec<f64>, high: Vec<f64>) -> Self {
        Self {
            time,
            region: None,
            boxed: Some(BoxJson { low, high }),
            ball: None,
        }
    }

    pub fn from_region(time: u32, region: &SemialgebraicSet) -> Self {
        Self {
            time,
            region: Some(region.to_json()),
            boxed: None,
            ball: None,
        }
    }

    pub fn to_event(&self, dim: usize) -> Result<ObservationEvent, String> {
        let region = match (&self.region, &self.boxed, &self.ball) {
            (Some(r), None, None) => r.to_set(dim).map_err(|e| e.to_string())?,
            (None, Some(b), None) => {
                check_len("box.low", b.low.len(), dim)?;
                check_len("box.high", b.high.len(), dim)?;
                if b.low.iter().zip(&b.high).any(|(l, h)| !(l <= h)) {
                    return Err("box.low must not exceed box.high".into());
                }
                SemialgebraicSet::boxed(&b.low, &b.high)
            }
            (None, None, Some(b)) => {
                check_len("ball.center", b.center.len(), dim)?;
                if !(b.radius >= 0.0) {
                    return Err("ball.radius must be nonnegative".into());
                }
                SemialgebraicSet::ball(&b.center, b.radius)
            }
            _ => return Err("expected exactly one of `region`, `box`, `ball`".into()),
        };
        Ok(ObservationEvent::new(self.time, region))
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<(), String> {
    if got != want {
        return Err(format!("{what} has {got} entries, state has {want}"));
    }
    Ok(())
}

pub fn parse_event(text: &str, dim: usize) -> Result<(EventJson, ObservationEvent), String> {
    let j: EventJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let e = j.to_event(dim)?;
    Ok((j, e))
}

/// One line of a session log. A log starts with a header and then holds
/// every accepted observation with the report it produced.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEntry {
    Header { model: String, config: serde_json::Value },
    Observation { event: EventJson, report: PredictionReport },
}

/// Feeds line-delimited events into `session`, writing one report line to
/// `out` per event (flushed immediately) and an entry to `log` if given.
/// Blank lines are skipped. Returns the last report, which is the offline
/// report when the stream is empty.
pub fn run_stream<R: BufRead>(
    session: &mut PredictionSession,
    input: R,
    out: &mut dyn Write,
    mut log: Option<&mut dyn Write>,
) -> Result<PredictionReport, StreamError> {
    let dim = session.model().state_dim();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (json, event) = parse_event(&line, dim).map_err(|message| StreamError::Malformed {
            line: line_no,
            message,
        })?;
        let report = session
            .on_observation(event)
            .map_err(|source| StreamError::Rejected { line: line_no, source })?;
        serde_json::to_writer(&mut *out, &report).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        out.flush()?;
        if let Some(log) = log.as_deref_mut() {
            let entry = LogEntry::Observation { event: json, report };
            serde_json::to_writer(&mut *log, &entry).map_err(std::io::Error::from)?;
            log.write_all(b"\n")?;
            log.flush()?;
        }
    }
    Ok(session.last_report().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sugar_forms_desugar() {
        let (_, e) = parse_event(r#"{"time": 3, "box": {"low": [0, 1], "high": [1, 2]}}"#, 2).unwrap();
        assert_eq!(e.time, 3);
        assert!(e.region.contains(&[0.5, 1.5]));
        assert!(!e.region.contains(&[1.5, 1.5]));
        let (_, e) = parse_event(r#"{"time": 1, "ball": {"center": [0, 0], "radius": 0.5}}"#, 2).unwrap();
        assert!(e.region.contains(&[0.3, 0.3]));
        assert!(!e.region.contains(&[0.4, 0.4]));
    }

    #[test]
    fn bad_events_are_rejected() {
        for bad in [
            "garbage",
            r#"{"time": 1}"#,
            r#"{"time": 1, "box": {"low": [0], "high": [1, 2]}}"#,
            r#"{"time": 1, "ball": {"center": [0, 0], "radius": -1}}"#,
            r#"{"time": -1, "ball": {"center": [0, 0], "radius": 1}}"#,
            r#"{"time": 1, "ball": {"center": [0, 0], "radius": 1}, "extra": 2}"#,
        ] {
            assert!(parse_event(bad, 2).is_err(), "{bad}");
        }
    }

    #[test]
    fn region_form_round_trips() {
        let set = SemialgebraicSet::ball(&[1.0, -1.0], 0.25);
        let j = serde_json::to_string(&EventJson::from_region(4, &set)).unwrap();
        let (_, e) = parse_event(&j, 2).unwrap();
        assert_eq!(e.region, set);
    }
}
