use std::path::Path;
use std::sync::Arc;

use normsol_core::constants::{classify, thresholds, Thresholds};
use normsol_core::dynamics::{
    blowup_probe, evolve, stability_probe, ComplexProfile, EvolveOptions, TrajectorySummary,
};
use normsol_core::functionals::{fiber_critical_points_with, FiberReport};
use normsol_core::io::ProfileDocument;
use normsol_core::minimize::{
    boundary_scan, minimize_default, minimize_local, subadditivity_check, SolveReport,
};
use normsol_core::mountainpass::{
    cpo_sequence_case1, cpo_sequence_case2, estimate_mp_level, omega2_positivity_probe, FamilySpec,
};
use normsol_core::profiles::{aubin_talenti, gaussian, random_trial, weinstein_ground_state, with_mass};
use normsol_core::{Error, GridSpec, Profile, ProblemParams, RadialGrid, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::*;

/// Largest number of trace points kept in a minimizer report.
const TRACE_POINTS: usize = 200;

pub enum Document {
    Json(Value),
    Csv(String),
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn object(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn profile_value(u: &Profile) -> Result<Value> {
    to_value(&ProfileDocument::of(u))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Reads a profile document, or `r,value` CSV rows resampled onto `fallback`.
pub fn read_profile(path: &Path, fallback: GridSpec) -> Result<Profile> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        return ProfileDocument::from_json(&text)?.into_profile();
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let (mut r, mut v) = (Vec::new(), Vec::new());
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::Format(format!("row {}: expected `r,value`", i + 1)));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => {
                r.push(a);
                v.push(b);
            }
            _ if i == 0 => continue,
            _ => return Err(Error::Format(format!("row {}: not numeric", i + 1))),
        }
    }
    Profile::from_samples(&fallback.build()?, &r, &v)
}

fn check_profile_dim(u: &Profile, dim: usize) -> Result<()> {
    if u.grid().dim() != dim {
        return Err(Error::InvalidParameter(format!("profile has dimension {}, --dim is {dim}", u.grid().dim())));
    }
    Ok(())
}

pub fn run(cmd: &Command) -> Result<Document> {
    match cmd {
        Command::Constants(c) => constants(c),
        Command::Profile(c) => profile(c),
        Command::Fiber(c) => fiber(c),
        Command::Minimize(c) => minimize(c),
        Command::Subadd(c) => subadd(c),
        Command::MountainPass(c) => mountain_pass(c),
        Command::Cpo(c) => cpo(c),
        Command::Evolve(c) => evolve_cmd(c),
        Command::Sweep(c) => sweep(c),
    }
}

fn json_only(out: &OutputArgs, command: &str) -> Result<()> {
    if out.format(Format::Json) == Format::Csv {
        return Err(Error::InvalidParameter(format!("`{command}` has no CSV output")));
    }
    Ok(())
}

fn constants(c: &ConstantsCmd) -> Result<Document> {
    json_only(&c.output, "constants")?;
    let given = c.problem.mass_spec().is_some();
    let params = c.problem.resolve(Some(1.0))?;
    let mut th: Thresholds = thresholds(&params)?;
    if !given {
        th.rho_crit = None;
        th.regime = None;
    }
    let head = object(vec![
        ("dim", json!(params.dim)),
        ("q", json!(params.q)),
        ("mu", json!(params.mu)),
        ("a", if given { json!(params.a) } else { Value::Null }),
    ]);
    Ok(Document::Json(merge(head, to_value(&th)?)))
}

fn profile(c: &ProfileCmd) -> Result<Document> {
    json_only(&c.output, "profile")?;
    let grid = c.grid.spec(c.problem.dim, 40.0, 4096).build()?;
    let u = match c.kind {
        ProfileKind::Weinstein => weinstein_ground_state(&c.problem.resolve(Some(1.0))?, &grid)?,
        ProfileKind::Bubble => aubin_talenti(c.problem.dim, c.b, &grid, 1.0)?,
        ProfileKind::Gaussian => gaussian(&c.problem.resolve(Some(1.0))?, c.sigma, &grid)?,
    };
    Ok(Document::Json(profile_value(&u)?))
}

fn fiber(c: &FiberCmd) -> Result<Document> {
    json_only(&c.output, "fiber")?;
    let u = read_profile(&c.profile, c.grid.spec(c.problem.dim, 40.0, 4096))?;
    check_profile_dim(&u, c.problem.dim)?;
    let params = c.problem.resolve(Some(u.mass()))?;
    let u = if c.normalize { with_mass(&u, params.a)? } else { u };
    let report: FiberReport = fiber_critical_points_with(&params, &u, c.samples)?;
    Ok(Document::Json(object(vec![("params", to_value(&params)?), ("report", to_value(&report)?)])))
}

fn solve_report_value(r: &SolveReport) -> Result<Value> {
    let stride = r.trace.len().div_ceil(TRACE_POINTS).max(1);
    let mut trace: Vec<_> = r.trace.iter().step_by(stride).copied().collect();
    if let Some(last) = r.trace.last() {
        if trace.last() != Some(last) {
            trace.push(*last);
        }
    }
    Ok(object(vec![
        ("energy", json!(r.energy)),
        ("pohozaev", json!(r.pohozaev)),
        ("lambda", json!(r.lambda)),
        ("grad_sq", json!(r.grad_sq)),
        ("grad_residual", json!(r.grad_residual)),
        ("iterations", json!(r.iterations)),
        ("converged", json!(r.converged)),
        ("boundary_hit", json!(r.boundary_hit)),
        ("rho0", json!(r.rho0)),
        ("trace", to_value(&trace)?),
        ("final_profile", profile_value(&r.final_profile)?),
    ]))
}

fn soliton_grid(grid: &GridArgs, dim: usize) -> Result<Arc<RadialGrid>> {
    grid.spec(dim, 60.0, 8192).build()
}

fn minimize(c: &MinimizeCmd) -> Result<Document> {
    json_only(&c.output, "minimize")?;
    let params = c.problem.resolve(None)?;
    let grid = soliton_grid(&c.grid, params.dim)?;
    let opts = c.solver.options();
    let report = match (&c.init, c.init_kind) {
        (Some(path), _) => {
            let u = read_profile(path, grid.spec())?;
            check_profile_dim(&u, params.dim)?;
            minimize_local(&params, &with_mass(&u, params.a)?, &opts)?
        }
        (None, InitKind::Random) => {
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
            minimize_local(&params, &random_trial(&grid, params.a, &mut rng)?, &opts)?
        }
        (None, InitKind::Gaussian) => minimize_default(&params, &grid, &opts)?,
    };
    let mut out = object(vec![("params", to_value(&params)?), ("report", solve_report_value(&report)?)]);
    if c.boundary_samples > 0 {
        let scan = boundary_scan(&params, &grid, c.boundary_samples, c.seed)?;
        out = merge(out, object(vec![("boundary_scan", to_value(&scan)?)]));
    }
    Ok(Document::Json(out))
}

fn subadd(c: &SubaddCmd) -> Result<Document> {
    json_only(&c.output, "subadd")?;
    let params = c.problem.resolve(None)?;
    let grid = soliton_grid(&c.grid, params.dim)?;
    let report = subadditivity_check(&params, &grid, c.a1, &c.solver.options())?;
    Ok(Document::Json(object(vec![("params", to_value(&params)?), ("report", to_value(&report)?)])))
}

fn mountain_pass(c: &MountainPassCmd) -> Result<Document> {
    let params = c.problem.resolve(None)?;
    let grid = soliton_grid(&c.grid, params.dim)?;
    let minimizer = minimize_default(&params, &grid, &c.solver.options())?;
    let spec = FamilySpec {
        bubble_width: c.bubble_width,
        s_max: c.s_max,
        members: c.members,
        refine: c.refine_iterations > 0,
        refine_iterations: c.refine_iterations,
        ..FamilySpec::default()
    };
    let lv = estimate_mp_level(&params, &minimizer, &spec)?;
    if let Some(path) = &c.witness_out {
        std::fs::write(path, ProfileDocument::of(&lv.witness).to_json()?)?;
    }
    if c.output.format(Format::Json) == Format::Csv {
        let rows = lv.family_trace.iter().map(|p| vec![num(p.s), opt(p.projected_energy)]);
        return Ok(Document::Csv(csv_string(&["s", "projected_energy"], rows)?));
    }
    let mut out = object(vec![
        ("params", to_value(&params)?),
        ("level", json!(lv.level)),
        ("family_level", json!(lv.family_level)),
        ("m_a", json!(lv.m_a)),
        ("upper_bound", json!(lv.upper_bound)),
        ("accepted", json!(lv.accepted)),
        ("witness_energy", json!(lv.witness_energy)),
        ("witness_pohozaev", json!(lv.witness_pohozaev)),
        ("witness_grad_sq", json!(lv.witness_grad_sq)),
        ("witness_lambda", json!(lv.witness_lambda)),
        ("refinement", to_value(&lv.refinement)?),
        ("family_trace", to_value(&lv.family_trace)?),
        ("minimizer_converged", json!(minimizer.converged)),
        ("witness", profile_value(&lv.witness)?),
    ]);
    if c.probe_trials > 0 {
        let probe = omega2_positivity_probe(&params, &grid, c.probe_trials, c.seed, c.probe_descent)?;
        out = merge(out, object(vec![("positivity_probe", to_value(&probe)?)]));
    }
    Ok(Document::Json(out))
}

fn cpo(c: &CpoCmd) -> Result<Document> {
    json_only(&c.output, "cpo")?;
    let mut problem = c.problem.clone();
    if problem.mass_spec().is_none() {
        problem.mass_multiple = Some(if c.case == 1 { 1.0 } else { 2.0 });
    }
    let params = problem.resolve(None)?;
    let grid = c.grid.spec(params.dim, 300.0, 16384).build()?;
    let report = if c.case == 1 {
        let ns: Vec<f64> = (0..c.steps).map(|k| 5.0 * 2f64.powi(k as i32)).collect();
        cpo_sequence_case1(&params, &grid, &ns, c.spread)?
    } else {
        let amps: Vec<f64> = (0..c.steps).map(|k| 10f64.powi(-(k as i32) - 1)).collect();
        cpo_sequence_case2(&params, &grid, &amps)?
    };
    Ok(Document::Json(to_value(&report)?))
}

fn trajectory_value(t: &TrajectorySummary) -> Value {
    object(vec![
        ("times", json!(t.times)),
        ("mass", json!(t.mass)),
        ("energy", json!(t.energy)),
        ("grad_norm", json!(t.grad_norm)),
        ("h1_distance", json!(t.h1_distance)),
        ("modulus_drift", json!(t.modulus_drift)),
        ("phase", json!(t.phase)),
        ("blowup_flag", json!(t.blowup.is_some())),
        ("blowup_time", json!(t.blowup.map(|b| b.time))),
        ("blowup_reason", json!(t.blowup.map(|b| b.reason))),
        ("steps", json!(t.steps)),
        ("smallest_dt", json!(t.smallest_dt)),
        ("mass_drift_rate", json!(t.mass_drift_rate())),
        ("energy_drift_rate", json!(t.energy_drift_rate())),
    ])
}

fn trajectory_csv(t: &TrajectorySummary) -> Result<String> {
    let rows = (0..t.times.len()).map(|k| {
        vec![
            num(t.times[k]),
            num(t.mass[k]),
            num(t.energy[k]),
            num(t.grad_norm[k]),
            opt(t.h1_distance.as_ref().map(|d| d[k])),
            num(t.modulus_drift[k]),
            num(t.phase[k]),
        ]
    });
    csv_string(&["t", "mass", "energy", "grad_norm", "h1_distance", "modulus_drift", "phase"], rows)
}

fn evolve_cmd(c: &EvolveCmd) -> Result<Document> {
    let u = read_profile(&c.init, c.grid.spec(c.problem.dim, 60.0, 4096))?;
    check_profile_dim(&u, c.problem.dim)?;
    let params = c.problem.resolve(Some(u.mass()))?;
    let opts = EvolveOptions { dt: c.dt, t_end: c.t_end, sample_interval: c.sample_interval, ..EvolveOptions::default() };
    let (traj, probe) = match c.probe {
        Probe::None => (evolve(&params, &ComplexProfile::from_real(&u), None, &opts)?, Value::Null),
        Probe::Stability => {
            let s = stability_probe(&params, &u, c.eps, &opts)?;
            let v = object(vec![
                ("kind", json!("stability")),
                ("eps", json!(s.eps)),
                ("initial_distance", json!(s.initial_distance)),
                ("max_distance", json!(s.max_distance)),
                ("growth_factor", json!(s.growth_factor)),
                ("bounded", json!(s.bounded)),
            ]);
            (s.trajectory, v)
        }
        Probe::Blowup => {
            let b = blowup_probe(&params, &u, c.amp, &opts)?;
            let v = object(vec![
                ("kind", json!("blowup")),
                ("amplification", json!(b.amplification)),
                ("initial_energy", json!(b.initial_energy)),
                ("initial_pohozaev", json!(b.initial_pohozaev)),
                ("initial_grad_norm", json!(b.initial_grad_norm)),
                ("max_grad_growth", json!(b.max_grad_growth)),
            ]);
            (b.trajectory, v)
        }
    };
    if c.output.format(Format::Json) == Format::Csv {
        return Ok(Document::Csv(trajectory_csv(&traj)?));
    }
    Ok(Document::Json(object(vec![
        ("params", to_value(&params)?),
        ("dt", json!(c.dt)),
        ("t_end", json!(c.t_end)),
        ("probe", probe),
        ("trajectory", trajectory_value(&traj)),
    ])))
}

struct SweepRow {
    mu: f64,
    a: Option<f64>,
    regime: String,
    m_a: Option<f64>,
    mp_level: Option<f64>,
    error: String,
}

fn sweep_point(c: &SweepCmd, q: f64, mu: f64, spec: MassSpec) -> SweepRow {
    let mut row = SweepRow { mu, a: None, regime: String::new(), m_a: None, mp_level: None, error: String::new() };
    let outcome = (|| -> Result<()> {
        let a = spec.resolve(c.dim, q, mu)?;
        row.a = Some(a);
        let params = ProblemParams::new(c.dim, q, mu, a)?;
        let regime = classify(&params)?;
        row.regime = format!("{regime:?}");
        if (c.minimize || c.mountain_pass) && regime.admits_minimizer() {
            let grid = c.grid.spec(c.dim, 60.0, 8192).build()?;
            let r = minimize_default(&params, &grid, &c.solver.options())?;
            row.m_a = Some(r.energy);
            if c.mountain_pass {
                row.mp_level = Some(estimate_mp_level(&params, &r, &FamilySpec::default())?.level);
            }
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = format!("{}: {e}", e.kind());
    }
    row
}

fn sweep(c: &SweepCmd) -> Result<Document> {
    let q = c.q.unwrap_or(2.0 + 4.0 / c.dim as f64);
    let points: Vec<(f64, MassSpec)> =
        c.mu_values.iter().flat_map(|&mu| c.a_values.iter().map(move |&a| (mu, a))).collect();
    let rows: Vec<SweepRow> = points.par_iter().map(|&(mu, a)| sweep_point(c, q, mu, a)).collect();
    let header = ["mu", "a", "a_spec", "regime", "m_a", "mp_level", "error"];
    if c.output.format(Format::Csv) == Format::Json {
        let items: Vec<Value> = rows
            .iter()
            .zip(&points)
            .map(|(r, (_, spec))| {
                object(vec![
                    ("mu", json!(r.mu)),
                    ("a", json!(r.a)),
                    ("a_spec", json!(spec.to_string())),
                    ("regime", json!(r.regime)),
                    ("m_a", json!(r.m_a)),
                    ("mp_level", json!(r.mp_level)),
                    ("error", json!(r.error)),
                ])
            })
            .collect();
        return Ok(Document::Json(object(vec![("dim", json!(c.dim)), ("q", json!(q)), ("rows", Value::Array(items))])));
    }
    let records = rows.iter().zip(&points).map(|(r, (_, spec))| {
        vec![num(r.mu), opt(r.a), spec.to_string(), r.regime.clone(), opt(r.m_a), opt(r.mp_level), r.error.clone()]
    });
    Ok(Document::Csv(csv_string(&header, records)?))
}
