use std::path::Path;

use obarrier::poly::{load_model, parse_model, SystemModel};

use crate::CliError;

/// The nine benchmark systems, in table order.
pub const BENCHMARKS: [&str; 9] = [
    "vanderpol1",
    "vanderpol2",
    "osc",
    "arch",
    "liederivative",
    "lyapunov",
    "lotka",
    "descent",
    "equil",
];

/// Benchmarks whose reference comparison only asks for a positive bound.
pub const POSITIVE_ONLY: [&str; 3] = ["liederivative", "lyapunov", "lotka"];

const BUNDLED: [(&str, &str); 11] = [
    ("arch", include_str!("../models/arch.json")),
    ("descent", include_str!("../models/descent.json")),
    ("equil", include_str!("../models/equil.json")),
    ("liederivative", include_str!("../models/liederivative.json")),
    ("lotka", include_str!("../models/lotka.json")),
    ("lyapunov", include_str!("../models/lyapunov.json")),
    ("osc", include_str!("../models/osc.json")),
    ("vanderpol1", include_str!("../models/vanderpol1.json")),
    ("vanderpol2", include_str!("../models/vanderpol2.json")),
    ("walk", include_str!("../models/walk.json")),
    ("ruin", include_str!("../models/ruin.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// A model file path, or the name of a bundled model.
pub fn resolve(spec: &str) -> Result<SystemModel, CliError> {
    if Path::new(spec).exists() {
        return Ok(load_model(spec)?);
    }
    match bundled(spec) {
        Some(text) => Ok(parse_model(text)?),
        None => Err(CliError::Usage(format!("no model file or bundled model named `{spec}`"))),
    }
}
