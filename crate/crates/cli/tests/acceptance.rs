//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line to stderr; tests hold a shared lock so timings are not disturbed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use obarrier::grid::{
    check_certificate, get_obf, get_osbf, value_iteration_v, BarrierKind, Discretization, GridError,
    ObservationEvent, TailRef,
};
use obarrier::oracle::{enumerate_observed, evenly_spaced, generate_observations};
use obarrier::par::Execution;
use obarrier::poly::{load_model, Mode, Polynomial, SemialgebraicSet, SystemModel};
use obarrier::runtime::{combine_bound, PredictionSession, PredictorConfig, Tail};
use obarrier::sos::{
    monomials_up_to, sos_to_sdp, synthesize, Certificate, ClarabelSolver, LinPoly, SolveStatus, SolverInterface,
    SosConstraint, SosProgram, SynthesisConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BENCHMARKS: [&str; 9] = [
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

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {tag} {detail}");
}

fn note(line: &str) {
    let _ = writeln!(std::io::stderr(), "    {line}");
}

fn model(name: &str) -> SystemModel {
    load_model(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("models/{name}.json"))).unwrap()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_obarrier"));
    c.env_remove("OBARRIER_SOLVER");
    c
}

/// Degree-4 certificate, synthesized once per model and shared between criteria.
fn certificate(m: &SystemModel) -> Certificate {
    static CACHE: Mutex<BTreeMap<String, Certificate>> = Mutex::new(BTreeMap::new());
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    cache
        .entry(m.name.clone())
        .or_insert_with(|| synthesize(m, &SynthesisConfig::default(), &ClarabelSolver::default()).unwrap())
        .clone()
}

#[test]
fn criterion_1_lattice_walk_matches_enumeration() {
    let _g = serial();
    let start = Instant::now();
    let m = model("walk");
    // any tail works for the mechanics; this one is not monotone on purpose
    let v = Polynomial::from_terms(1, 0, [(vec![0], vec![], 0.3), (vec![1], vec![], 0.1), (vec![2], vec![], 0.05)]).unwrap();
    let tail = Tail::Certificate(Certificate {
        v: v.clone(),
        gamma: 0.3,
        degree: 2,
        status: SolveStatus::Optimal,
        residuals: Default::default(),
        certified: true,
    });
    let cfg = PredictorConfig {
        grid_res: Some(13),
        ..PredictorConfig::default()
    };
    let mut s = PredictionSession::with_tail(m.clone(), tail, &cfg).unwrap();
    let grid = s.discretization().grid();
    let outside = (0..grid.num_nodes()).map(|i| v.eval_state(&grid.node(i))).fold(1.0, f64::max);
    let regions = [
        SemialgebraicSet::boxed(&[-1.2], &[0.2]),
        SemialgebraicSet::boxed(&[-0.3], &[0.8]),
        SemialgebraicSet::boxed(&[-2.8], &[-0.7]),
    ];
    let mut sequences: Vec<Vec<ObservationEvent>> = Vec::new();
    for mask in 1u32..(1 << 6) {
        let times: Vec<u32> = (1..=6).filter(|t| mask & (1 << (t - 1)) != 0).collect();
        if times.len() > 3 {
            continue;
        }
        let combos = regions.len().pow(times.len() as u32);
        for mut code in 0..combos {
            let mut seq = Vec::new();
            for &t in &times {
                seq.push(ObservationEvent::new(t, regions[code % regions.len()].clone()));
                code /= regions.len();
            }
            sequences.push(seq);
        }
    }
    let tailf = |x: &[f64]| v.eval_state(x);
    let (mut worst, mut vanished, mut checked) = (0.0f64, 0usize, 0usize);
    for seq in &sequences {
        let exact = enumerate_observed(&m, &[0.0], seq, &tailf, outside).unwrap();
        s.reset();
        let mut result = None;
        for e in seq {
            let r = s.on_observation(e.clone());
            let failed = r.is_err();
            result = Some(r);
            if failed {
                break;
            }
        }
        match result.unwrap() {
            Ok(r) => {
                worst = worst.max((r.q - exact.q).abs()).max((r.p - exact.p).abs());
                let want = combine_bound(exact.p, exact.q).unwrap();
                worst = worst.max((r.bound.unwrap() - want).abs());
            }
            Err(_) => {
                // every prefix that survived matched; the failing one must vanish exactly
                let mut prefix = Vec::new();
                let mut zero = false;
                for e in seq {
                    prefix.push(e.clone());
                    if enumerate_observed(&m, &[0.0], &prefix, &tailf, outside).unwrap().q == 0.0 {
                        zero = true;
                        break;
                    }
                }
                assert!(zero, "rejected a reachable sequence");
                vanished += 1;
            }
        }
        checked += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && secs < 10.0;
    verdict(
        1,
        pass,
        &format!("{checked} sequences ({vanished} with q = 0), max deviation {worst:.2e}, {secs:.2} s"),
    );
    assert!(pass);
}

struct Validation {
    by_model: BTreeMap<String, Value>,
    elapsed: Duration,
}

fn validations() -> &'static Validation {
    static CELL: OnceLock<Validation> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let mut by_model = BTreeMap::new();
        for name in BENCHMARKS {
            let out = dir.path().join(format!("{name}.json"));
            let o = bin()
                .args(["validate", "--model", name, "--runs", "20", "--samples", "50000", "--out"])
                .arg(&out)
                .output()
                .unwrap();
            let code = o.status.code().unwrap();
            assert!(code == 0 || code == 5, "{name}: {}", String::from_utf8_lossy(&o.stderr));
            let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
            by_model.insert(name.to_string(), v);
        }
        Validation {
            by_model,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_2_bounds_never_exceed_monte_carlo() {
    let _g = serial();
    let val = validations();
    let (mut violated, mut checked, mut skipped) = (0u64, 0u64, 0u64);
    for (name, v) in &val.by_model {
        let s = &v["summary"];
        let (ok, bad, inc) = (
            s["valid"].as_u64().unwrap(),
            s["violated"].as_u64().unwrap(),
            s["inconclusive"].as_u64().unwrap(),
        );
        note(&format!("{name}: {ok} valid, {bad} violated, {inc} skipped"));
        violated += bad;
        checked += ok + bad;
        skipped += inc;
    }
    let mins = val.elapsed.as_secs_f64() / 60.0;
    let pass = violated == 0 && mins < 20.0;
    verdict(
        2,
        pass,
        &format!("{checked} checks, {violated} violations, {skipped} skipped, {mins:.1} min"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_offline_bound_magnitude() {
    let _g = serial();
    let val = validations();
    let reference: BTreeMap<&str, f64> = [
        ("arch", 0.813),
        ("vanderpol1", 0.343),
        ("vanderpol2", 0.158),
        ("osc", 0.436),
        ("descent", 0.704),
        ("equil", 0.357),
    ]
    .into_iter()
    .collect();
    let mut pass = true;
    for (name, v) in &val.by_model {
        let off = &v["offline"];
        let bound = off["bound"].as_f64().unwrap_or(0.0);
        let valid = off["verdict"] != "violated";
        let (ok, want) = match reference.get(name.as_str()) {
            Some(&r) => (valid && bound >= r - 0.15, format!(">= {:.3}", r - 0.15)),
            None => (valid && bound > 0.0, "> 0".to_string()),
        };
        note(&format!(
            "{name}: bound {bound:.3} (want {want}), MC {:.3}, {}",
            off["mc_point"].as_f64().unwrap_or(f64::NAN),
            if ok { "ok" } else { "miss" }
        ));
        pass &= ok;
    }
    verdict(3, pass, "degree-4 offline bounds against reference values");
    assert!(pass);
}

fn sequence_for(m: &SystemModel, len: usize, seed: u64) -> Vec<ObservationEvent> {
    generate_observations(m, &evenly_spaced(len, 2), 0.1, seed).expect("no admissible observation sequence")
}

#[test]
fn criterion_4_certificate_checker() {
    let _g = serial();
    let mut worst = 0.0f64;
    for name in BENCHMARKS {
        let m = model(name);
        let cert = certificate(&m);
        let cfg = PredictorConfig::default();
        let disc = Discretization::for_model(
            Arc::new(m.clone()),
            cfg.resolution(m.state_dim()),
            cfg.quad_order,
            Execution::default(),
        )
        .unwrap();
        let obs = sequence_for(&m, 3, 11);
        let q = get_obf(&disc, &obs).unwrap();
        let rq = check_certificate(&disc, &obs, &q.layers, q.value, BarrierKind::Obf, None, 1e-6).unwrap();
        let tail = |x: &[f64]| cert.v.eval_state(x);
        let p = get_osbf(&disc, &obs, &tail).unwrap();
        let kind = if m.mode == Mode::ReachAvoid {
            BarrierKind::Orbf
        } else {
            BarrierKind::Osbf
        };
        let rp = check_certificate(&disc, &obs, &p.layers, p.value, kind, Some(TailRef::Poly(&cert.v)), 1e-6).unwrap();
        let w = rq
            .conditions
            .iter()
            .chain(&rp.conditions)
            .map(|c| c.max_violation)
            .fold(0.0, f64::max);
        note(&format!("{name}: max violation {w:.2e}"));
        worst = worst.max(w);
    }
    // perturbed fixture: raise one interior node above its one-step bound
    let m = model("vanderpol1");
    let disc = Discretization::for_model(Arc::new(m.clone()), 101, 8, Execution::default()).unwrap();
    let obs = sequence_for(&m, 2, 5);
    let mut q = get_obf(&disc, &obs).unwrap();
    let node = disc.init_nodes()[0];
    q.layers[1].values_mut()[node] += 0.05;
    let rep = check_certificate(&disc, &obs, &q.layers, q.value, BarrierKind::Obf, None, 1e-6).unwrap();
    let perturbed = rep.conditions.iter().map(|c| c.max_violation).fold(0.0, f64::max);
    let pass = worst <= 1e-6 && perturbed > 1e-3;
    verdict(
        4,
        pass,
        &format!("constructed max violation {worst:.2e}, perturbed fixture {perturbed:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_5_sos_dominates_value_iteration() {
    let _g = serial();
    let mut pass = true;
    for name in BENCHMARKS {
        let m = model(name);
        if m.mode != Mode::Safety {
            continue;
        }
        let cert = certificate(&m);
        let cfg = PredictorConfig::default();
        let disc = Discretization::for_model(
            Arc::new(m.clone()),
            cfg.resolution(m.state_dim()),
            cfg.quad_order,
            Execution::default(),
        )
        .unwrap();
        let vi = match value_iteration_v(&disc, cfg.vi_eps, cfg.vi_max_iters) {
            Ok(r) => r.v,
            // iterates increase towards the fixed point, so a truncated one is still a lower bound
            Err(GridError::NotConverged { iterate, .. }) => *iterate,
            Err(e) => panic!("{name}: {e}"),
        };
        let mut gap = f64::NEG_INFINITY;
        for (i, &inside) in disc.in_x().iter().enumerate() {
            if inside {
                gap = gap.max(vi.values()[i] - cert.v.eval_state(&disc.grid().node(i)));
            }
        }
        note(&format!("{name}: max(v_VI - v_SOS) over X nodes {gap:.2e}"));
        pass &= gap <= 1e-2;
    }
    verdict(5, pass, "v_SOS >= v_VI - 1e-2 on safety benchmarks");
    assert!(pass);
}

fn single(p: &Polynomial) -> SosProgram {
    let mut prog = SosProgram::empty(p.num_state());
    prog.constraints.push(SosConstraint {
        label: "p".into(),
        poly: LinPoly::from_poly(p),
    });
    prog
}

#[test]
fn criterion_6_sos_kernel_fixtures() {
    let _g = serial();
    let solver = ClarabelSolver::default();
    let x = Polynomial::state_var(1, 0, 0);
    let one = Polynomial::constant(1, 0, 1.0);
    let status = |p: &Polynomial| solver.solve(&sos_to_sdp(&single(p), 300).unwrap()).status();

    let a = status(&(&one + &(&x * &x))) == SolveStatus::Optimal;
    let b = status(&x) == SolveStatus::Infeasible;
    let shifted = &(&(&x - &one) * &(&x - &one)) + &one;
    let c = status(&shifted) == SolveStatus::Optimal;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let basis = monomials_up_to(2, 2);
    let mut p = Polynomial::zero(2, 0);
    for _ in 0..3 {
        let mut h = Polynomial::zero(2, 0);
        for mono in &basis {
            h = &h + &Polynomial::monomial(mono, &[], rng.random_range(-1.0..1.0));
        }
        p = &p + &(&h * &h);
    }
    let sdp = sos_to_sdp(&single(&p), 300).unwrap();
    let out = solver.solve(&sdp);
    let q = sdp.gram(&out.solution().unwrap().x, 0);
    let z = &sdp.bases[0];
    let mut back = Polynomial::zero(2, 0);
    for i in 0..z.len() {
        for j in 0..z.len() {
            let mono: Vec<u32> = z[i].iter().zip(&z[j]).map(|(s, t)| s + t).collect();
            back = &back + &Polynomial::monomial(&mono, &[], q[(i, j)]);
        }
    }
    let err = (&back - &p).terms().map(|(_, _, c)| c.abs()).fold(0.0, f64::max);
    let d = out.status() == SolveStatus::Optimal && err < 1e-8;

    let pass = a && b && c && d;
    verdict(
        6,
        pass,
        &format!("1+x^2 {a}, x infeasible {b}, (x-1)^2+1 {c}, round trip {d} ({err:.1e})"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_latency_on_planar_benchmarks() {
    let _g = serial();
    let mut pass = true;
    for name in BENCHMARKS {
        let m = model(name);
        if m.state_dim() != 2 {
            continue;
        }
        let cfg = PredictorConfig {
            grid_res: Some(201),
            ..PredictorConfig::default()
        };
        let start = Instant::now();
        let mut s = PredictionSession::init_offline(m.clone(), &cfg, &ClarabelSolver::default()).unwrap();
        let offline = start.elapsed().as_secs_f64();
        let mut slowest = 0.0f64;
        for len in 1..=5 {
            s.reset();
            for e in sequence_for(&m, len, len as u64) {
                let t = Instant::now();
                let r = s.on_observation(e);
                slowest = slowest.max(t.elapsed().as_secs_f64());
                if r.is_err() {
                    break;
                }
            }
        }
        note(&format!("{name}: offline {offline:.2} s, slowest observation {slowest:.3} s"));
        pass &= offline < 60.0 && slowest < 1.0;
    }
    verdict(7, pass, "offline < 60 s, each observation < 1 s at 201^2");
    assert!(pass);
}

#[test]
fn criterion_8_bench_is_deterministic() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    let start = Instant::now();
    for k in 0..2 {
        let out = dir.path().join(format!("bench{k}.json"));
        let o = bin().args(["bench", "--seed", "7", "--out"]).arg(&out).output().unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(std::fs::read(&out).unwrap());
    }
    let same = outputs[0] == outputs[1];
    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        same,
        &format!("two bench runs, {} bytes each, identical: {same}, {secs:.0} s", outputs[0].len()),
    );
    assert!(same);
}
