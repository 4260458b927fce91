use std::sync::Arc;

use obarrier::grid::{Grid, GridFunction};
use obarrier::runtime::Tail;
use obarrier::sos::{Certificate, CertificateJson};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridTailJson {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
    pub outside_value: f64,
    pub residual: f64,
}

/// On-disk tail: an SOS certificate, or a value-iteration grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TailFile {
    Certificate(CertificateJson),
    Grid { grid_tail: GridTailJson, certified: bool },
}

impl TailFile {
    pub fn from_tail(t: &Tail) -> Self {
        match t {
            Tail::Certificate(c) => TailFile::Certificate(c.to_json()),
            Tail::Grid { v, residual } => {
                let g = v.grid();
                TailFile::Grid {
                    grid_tail: GridTailJson {
                        lower: g.lower().to_vec(),
                        upper: g.upper().to_vec(),
                        counts: g.counts().to_vec(),
                        values: v.values().to_vec(),
                        outside_value: v.outside_value(),
                        residual: *residual,
                    },
                    certified: false,
                }
            }
        }
    }

    pub fn into_tail(self, num_state: usize) -> Result<Tail, CliError> {
        match self {
            TailFile::Certificate(j) => {
                let c = Certificate::from_json(&j, num_state).map_err(|e| CliError::Usage(format!("certificate: {e}")))?;
                Ok(Tail::Certificate(c))
            }
            TailFile::Grid { grid_tail: g, .. } => {
                let grid = Grid::new(g.lower, g.upper, g.counts).map_err(|e| CliError::Usage(format!("grid tail: {e}")))?;
                if grid.dim() != num_state {
                    return Err(CliError::Usage(format!(
                        "grid tail has {} axes, model has {num_state}",
                        grid.dim()
                    )));
                }
                let v = GridFunction::new(Arc::new(grid), g.values, g.outside_value)
                    .map_err(|e| CliError::Usage(format!("grid tail: {e}")))?;
                Ok(Tail::Grid { v, residual: g.residual })
            }
        }
    }

    pub fn read(path: &std::path::Path, num_state: usize) -> Result<Tail, CliError> {
        let text = std::fs::read_to_string(path)?;
        let f: TailFile = serde_json::from_str(&text)?;
        f.into_tail(num_state)
    }
}
