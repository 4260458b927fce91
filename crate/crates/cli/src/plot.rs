use std::io::Write;

use obarrier::oracle::substream;
use obarrier::poly::{Aabb, SemialgebraicSet, SystemModel};

use crate::args::PlotArgs;
use crate::commands::{default_horizon, load, output};
use crate::CliError;

/// Writes `step,x0,..` rows in blocks headed by `# trajectory k` and
/// `# boundary S`. Boundary blocks list grid points of `S` next to a point
/// outside it; their step column counts points.
pub fn plot_data(a: &PlotArgs) -> Result<(), CliError> {
    let c = &a.common;
    let model = load(c)?;
    let bb = model
        .state_box()
        .ok_or_else(|| CliError::Usage("X must be bounded to place boundary samples".into()))?;
    let horizon = c.horizon.unwrap_or_else(|| default_horizon(&model));
    let mut out = output(c.out.as_deref())?;
    let n = model.state_dim();
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((0..n).map(|i| format!("x{i}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;

    let init = model.effective_init();
    let ib = init.bounding_box().unwrap_or_else(|| bb.clone());
    for k in 0..a.trajectories {
        let mut rng = substream(c.seed, k as u64);
        let Some(x0) = init.sample_in(&ib, &mut rng, 100_000) else {
            return Err(CliError::Usage("could not sample an initial state".into()));
        };
        writeln!(out, "# trajectory {k}")?;
        for (t, x) in trajectory(&model, x0, horizon, &mut rng).iter().enumerate() {
            row(&mut out, t, x)?;
        }
    }
    let mut sets = vec![("U", &model.unsafe_set), ("I", &model.init)];
    if let Some(t) = &model.target {
        sets.push(("T", t));
    }
    for (name, set) in sets {
        writeln!(out, "# boundary {name}")?;
        for (i, x) in boundary_points(set, &bb).iter().enumerate() {
            row(&mut out, i, x)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn row(out: &mut dyn Write, step: usize, x: &[f64]) -> std::io::Result<()> {
    write!(out, "{step}")?;
    for v in x {
        write!(out, ",{v}")?;
    }
    writeln!(out)
}

/// States until the first exit from `X \ U`, entry into `T`, or the horizon,
/// including the state that ended the run.
fn trajectory(model: &SystemModel, x0: Vec<f64>, horizon: u32, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut w = vec![0.0; model.noise_dim()];
    let mut next = vec![0.0; x0.len()];
    let mut path = vec![x0];
    for _ in 0..horizon {
        let x = path.last().expect("nonempty");
        if !model.x_set.contains(x) || model.unsafe_set.contains(x) || model.in_target(x) {
            break;
        }
        model.noise.sample_into(rng, &mut w);
        model.step(x, &w, &mut next);
        path.push(next.clone());
    }
    path
}

fn boundary_points(set: &SemialgebraicSet, bb: &Aabb) -> Vec<Vec<f64>> {
    let n = bb.dim();
    let res: usize = match n {
        1 => 2001,
        2 => 241,
        3 => 41,
        _ => 11,
    };
    let total = res.pow(n as u32);
    let coord = |idx: usize| -> Vec<f64> {
        let mut r = idx;
        (0..n)
            .map(|a| {
                let i = r % res;
                r /= res;
                bb.lower[a] + (bb.upper[a] - bb.lower[a]) * i as f64 / (res - 1) as f64
            })
            .collect()
    };
    let inside: Vec<bool> = (0..total).map(|i| set.contains(&coord(i))).collect();
    let mut pts = Vec::new();
    for idx in 0..total {
        if !inside[idx] {
            continue;
        }
        let mut stride = 1;
        let mut edge = false;
        for _ in 0..n {
            let i = (idx / stride) % res;
            if (i > 0 && !inside[idx - stride]) || (i + 1 < res && !inside[idx + stride]) {
                edge = true;
                break;
            }
            stride *= res;
        }
        if edge {
            pts.push(coord(idx));
        }
    }
    pts
}
