//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the summary lines are always printed.
//! Exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use normsol_core::constants::{
    bubble_quotient, mass_at_abar_multiple, sobolev_constant, SharpConstants,
};
use normsol_core::dynamics::{blowup_probe, evolve, stability_probe, ComplexProfile, EvolveOptions};
use normsol_core::functionals::{fiber_critical_points, fiber_pohozaev, Norms};
use normsol_core::minimize::{boundary_scan, minimize_default, subadditivity_check, MinimizeOptions, SolveReport};
use normsol_core::mountainpass::{
    cpo_sequence_case1, cpo_sequence_case2, estimate_mp_level, omega2_positivity_probe, FamilySpec,
};
use normsol_core::profiles::{gaussian, random_trial, weinstein_ground_state, WeinsteinSolution};
use normsol_core::{exponents, thresholds, ProblemParams, RadialGrid, Regime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Collects failed sub-checks of one criterion.
#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn require(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.failures.push(what);
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn finish(self) -> Outcome {
        let mut detail = self.notes.join("; ");
        if !self.failures.is_empty() {
            detail = format!("FAILED: {} | {detail}", self.failures.join("; "));
        }
        check(self.failures.is_empty(), detail)
    }
}

fn base() -> ProblemParams {
    ProblemParams::new(3, 2.5, 1.0, 1.0).unwrap()
}

fn a0() -> f64 {
    thresholds(&base()).unwrap().a0.unwrap()
}

fn soliton_grid() -> Arc<RadialGrid> {
    RadialGrid::new(3, 60.0, 8192).unwrap()
}

fn criterion_1() -> Outcome {
    let mut c = Checks::default();
    for dim in [3usize, 4, 5] {
        let nd = dim as f64;
        let g = RadialGrid::new(dim, 12.0, 4096).unwrap();
        let gauss = g.integrate_fn(|r| (-r * r).exp());
        let moment = g.integrate_fn(|r| r * r * (-r * r).exp());
        let exact = PI.powf(nd / 2.0);
        let rel = (gauss / exact - 1.0).abs();
        let rel_m = (moment / (nd / 2.0 * exact) - 1.0).abs();
        c.require(rel < 1e-6 && rel_m < 1e-6, format!("N={dim} gaussian rel err {rel:.2e}/{rel_m:.2e}"));
        let ball = RadialGrid::new(dim, 1.0, 1024).unwrap().integrate_fn(|_| 1.0);
        let vol = PI.powf(nd / 2.0) / gamma(nd / 2.0 + 1.0);
        let rel_b = (ball / vol - 1.0).abs();
        c.require(rel_b < 1e-6, format!("N={dim} ball rel err {rel_b:.2e}"));
        c.note(format!("N={dim}: {:.1e}/{:.1e}/{:.1e}", rel, rel_m, rel_b));
    }
    c.finish()
}

fn criterion_2() -> Outcome {
    let mut c = Checks::default();
    let s = sobolev_constant(3).unwrap();
    let closed = PI * 3.0 * (gamma(1.5) / gamma(3.0)).powf(2.0 / 3.0);
    let rel = (s / closed - 1.0).abs();
    c.require(rel < 5e-3, format!("S rel err {rel:.2e}"));
    c.note(format!("S={s:.7} closed={closed:.7} rel={rel:.1e}"));
    let g = RadialGrid::new(3, 1e4, 16384).unwrap();
    let qs: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&b| bubble_quotient(&g, b).unwrap()).collect();
    let spread = qs.iter().map(|q| (q / qs[1] - 1.0).abs()).fold(0.0, f64::max);
    c.require(spread < 1e-3, format!("b-spread {spread:.2e}"));
    c.note(format!("b-spread={spread:.1e}"));
    c.finish()
}

fn criterion_3() -> Outcome {
    let mut c = Checks::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (dim, q) in [(3usize, 2.5), (3, 3.0), (4, 3.0)] {
        let p = ProblemParams::new(dim, q, 1.0, 1.0).unwrap();
        let e = exponents(&p).unwrap();
        let sol = WeinsteinSolution::cached(dim, q).unwrap();
        let cst = sol.gn_quotient();
        let g = RadialGrid::new(dim, 40.0, 8192).unwrap();
        let qprof = weinstein_ground_state(&p, &g).unwrap();
        let quotient = |u: &normsol_core::Profile| {
            let n = Norms::of(&p, u).unwrap();
            n.lq_power.powf(1.0 / q) / (n.grad_sq.powf(e.gamma_q / 2.0) * n.mass.powf((1.0 - e.gamma_q) / 2.0))
        };
        let eq = (quotient(&qprof) / cst - 1.0).abs();
        c.require(eq < 1e-3, format!("({dim},{q}) equality gap {eq:.2e}"));
        c.require(sol.ode_residual() < 1e-6, format!("({dim},{q}) ODE residual {:.1e}", sol.ode_residual()));
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..100 {
            let u = random_trial(&g, 1.0, &mut rng).unwrap();
            worst = worst.max(quotient(&u) / cst - 1.0);
        }
        c.require(worst < 1e-6, format!("({dim},{q}) random profile exceeds bound by {worst:.2e}"));
        c.note(format!("({dim},{q}): C={cst:.6} gap={eq:.1e} worst={worst:.2e}"));
    }
    c.finish()
}

fn criterion_4() -> Outcome {
    let mut c = Checks::default();
    let grids = [RadialGrid::new(3, 40.0, 4096).unwrap(), RadialGrid::new(3, 40.0, 8192).unwrap()];
    let mut max_drift: f64 = 0.0;
    for (label, a, regime) in [("Omega1", a0() / 2.0, Regime::Omega1), ("Omega2", a0(), Regime::Omega2)] {
        let p = base().with_mass(a);
        let got = thresholds(&p).unwrap().regime;
        c.require(got == Some(regime), format!("{label}: classified {got:?}"));
        let e = exponents(&p).unwrap();
        for k in 0..20u64 {
            let mut roots = Vec::new();
            for g in &grids {
                let mut rng = ChaCha8Rng::seed_from_u64(4);
                rng.set_stream(k);
                let u = random_trial(g, a, &mut rng).unwrap();
                let n = Norms::of(&p, &u).unwrap();
                match fiber_critical_points(&p, &u) {
                    Ok(rep) => {
                        let (tp, tm) = (rep.tau_plus.unwrap(), rep.tau_minus.unwrap());
                        c.require(tp < tm, format!("{label}#{k}: tau+ >= tau-"));
                        c.require(rep.energy_at_tau_plus.unwrap() < 0.0, format!("{label}#{k}: E(tau+) >= 0"));
                        c.require(rep.energy_at_tau_minus.unwrap() >= 0.0, format!("{label}#{k}: E(tau-) < 0"));
                        c.require(rep.psi_second_at_tau_minus.unwrap() < 0.0, format!("{label}#{k}: Psi''(tau-) >= 0"));
                        for t in [tp, tm] {
                            let pz = fiber_pohozaev(&p, &e, &n, t).abs();
                            c.require(pz < 1e-6 * n.grad_sq, format!("{label}#{k}: |P| = {pz:.1e}"));
                        }
                        roots.push((tp, tm));
                    }
                    Err(err) => c.require(false, format!("{label}#{k}: {err}")),
                }
            }
            if let [(p1, m1), (p2, m2)] = roots.as_slice() {
                max_drift = max_drift.max((p2 / p1 - 1.0).abs()).max((m2 / m1 - 1.0).abs());
            }
        }
    }
    c.require(max_drift < 1e-3, format!("root drift {max_drift:.2e}"));
    c.note(format!("40 trials, max root drift under doubling {max_drift:.1e}"));
    c.finish()
}

fn minimizers() -> Vec<(f64, ProblemParams, SolveReport)> {
    let g = soliton_grid();
    [0.5, 1.0]
        .iter()
        .map(|&f| {
            let p = base().with_mass(f * a0());
            let r = minimize_default(&p, &g, &MinimizeOptions::default()).unwrap();
            (f, p, r)
        })
        .collect()
}

fn criterion_5(mins: &[(f64, ProblemParams, SolveReport)]) -> Outcome {
    let mut c = Checks::default();
    let g = soliton_grid();
    for (f, p, r) in mins {
        let rho0 = r.rho0;
        c.require(r.converged, format!("a={f}a0: not converged"));
        c.require(r.energy < 0.0, format!("a={f}a0: E={}", r.energy));
        c.require(r.pohozaev.abs() < 1e-6, format!("a={f}a0: P={:.1e}", r.pohozaev));
        c.require(r.lambda < 0.0, format!("a={f}a0: lambda={}", r.lambda));
        c.require(r.grad_sq < rho0, format!("a={f}a0: |grad|^2={} >= rho0={rho0}", r.grad_sq));
        let scan = boundary_scan(p, &g, 64, 5).unwrap();
        c.require(scan.min_energy >= -1e-6, format!("a={f}a0: boundary min {}", scan.min_energy));
        let sub = subadditivity_check(p, &g, p.a / 2.0, &MinimizeOptions::default()).unwrap();
        c.require(sub.gap >= -1e-6, format!("a={f}a0: subadditivity gap {}", sub.gap));
        c.note(format!(
            "a={f}a0: m_a={:.6} P={:.1e} lambda={:.4} |grad|^2={:.4}<{rho0:.4} bdry_min={:.4} gap={:.2e}",
            r.energy, r.pohozaev, r.lambda, r.grad_sq, scan.min_energy, sub.gap
        ));
    }
    c.finish()
}

fn criterion_6(mins: &[(f64, ProblemParams, SolveReport)]) -> Outcome {
    let mut c = Checks::default();
    let s = sobolev_constant(3).unwrap();
    for (f, p, r) in mins {
        let lv = estimate_mp_level(p, r, &FamilySpec::default()).unwrap();
        let ub = r.energy + s.powf(1.5) / 3.0;
        c.require(lv.level > 0.0 && lv.level < ub, format!("a={f}a0: level {} outside (0, {ub})", lv.level));
        c.note(format!("a={f}a0: L={:.5} in (0, {ub:.5})", lv.level));
    }
    let p = base().with_mass(a0());
    let probe = omega2_positivity_probe(&p, &RadialGrid::new(3, 40.0, 4096).unwrap(), 128, 6, 200).unwrap();
    c.require(probe.all_positive && probe.trials == 128, format!("positivity probe min level {}", probe.min_level));
    c.note(format!("Omega2 probe: 128 trials, min level {:.4}", probe.min_level));
    c.finish()
}

fn criterion_7() -> Outcome {
    let mut c = Checks::default();
    let base = ProblemParams::new(4, 3.0, 1.0, 1.0).unwrap();
    let cst = SharpConstants::compute(&base).unwrap();
    let g = RadialGrid::new(4, 300.0, 16384).unwrap();
    let eps = 0.05 * cst.sobolev.powi(2) / 4.0;
    let p1 = base.with_mass(mass_at_abar_multiple(&base, &cst, 1.0).unwrap());
    let p2 = base.with_mass(mass_at_abar_multiple(&base, &cst, 2.0).unwrap());
    let r1 = cpo_sequence_case1(&p1, &g, &[5.0, 10.0, 20.0, 40.0], normsol_core::mountainpass::CASE1_SPREAD).unwrap();
    let r2 = cpo_sequence_case2(&p2, &g, &[0.1, 0.01, 0.001]).unwrap();
    for r in [&r1, &r2] {
        let energies: Vec<f64> = r.items.iter().map(|i| i.projected_energy).collect();
        let decreasing = energies.windows(2).all(|w| w[1] < w[0]);
        let positive = energies.iter().all(|&x| x > 0.0);
        let last = *energies.last().unwrap();
        c.require(decreasing && positive, format!("case {}: energies {energies:?}", r.case));
        c.require(last < eps, format!("case {}: final {last:.3e} >= {eps:.3e}", r.case));
        c.note(format!("case {}: {}", r.case, energies.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" > ")));
    }
    let worst = r2.items.iter().map(|i| i.identity_error.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    c.require(worst < 1e-4, format!("case 2 identity error {worst:.2e}"));
    c.note(format!("identity err {worst:.1e}, eps={eps:.4}"));
    c.finish()
}

fn criterion_8(mins: &[(f64, ProblemParams, SolveReport)]) -> Outcome {
    let mut c = Checks::default();
    let (_, p, r) = &mins[0];
    let u = &r.final_profile;
    let defaults = EvolveOptions::default();

    // moving datum for the conservation rates and the order check
    let g = RadialGrid::new(3, 60.0, 4096).unwrap();
    let psi0 = ComplexProfile::from_real(&gaussian(p, 1.0, &g).unwrap());
    let run = |dt: f64| {
        let o = EvolveOptions { dt, t_end: 1.0, sample_interval: 0.01, ..defaults };
        evolve(p, &psi0, None, &o).unwrap()
    };
    let coarse = run(defaults.dt);
    let fine = run(defaults.dt / 2.0);
    let (md, ed) = (coarse.mass_drift_rate(), coarse.energy_drift_rate());
    c.require(md < 1e-8, format!("mass drift {md:.2e}"));
    c.require(ed < 1e-6, format!("energy drift {ed:.2e}"));
    let ratio = ed / fine.energy_drift_rate();
    c.require((3.5..4.5).contains(&ratio), format!("dt-halving ratio {ratio:.3}"));
    c.note(format!("mass {md:.1e}, energy {ed:.1e}, halving x{ratio:.2}"));

    let standing = stability_probe(p, u, 0.0, &EvolveOptions { t_end: 10.0, sample_interval: 0.1, ..defaults }).unwrap();
    let drift = standing.trajectory.modulus_drift.iter().copied().fold(0.0, f64::max);
    let rate = standing.trajectory.phase_rate();
    c.require(drift < 1e-4, format!("standing-wave modulus drift {drift:.2e}"));
    c.require((rate + r.lambda).abs() < 1e-4 * r.lambda.abs().max(1.0), format!("phase rate {rate} vs -lambda {}", -r.lambda));
    c.note(format!("standing drift {drift:.1e}, phase rate {rate:.6} (-lambda {:.6})", -r.lambda));

    let stab = stability_probe(p, u, 1e-2, &EvolveOptions { t_end: 20.0, sample_interval: 0.25, ..defaults }).unwrap();
    c.require(stab.bounded, format!("eps=1e-2 distance grew x{:.2}", stab.growth_factor));
    c.note(format!("eps=1e-2 growth x{:.3}", stab.growth_factor));

    let lv = estimate_mp_level(p, r, &FamilySpec::default()).unwrap();
    let blow = blowup_probe(p, &lv.witness, 1.05, &EvolveOptions { t_end: 10.0, ..defaults }).unwrap();
    match blow.blowup {
        Some(ind) => c.note(format!("blow-up indicator at t={:.4} ({:?})", ind.time, ind.reason)),
        None => c.require(false, format!("no blow-up indicator, max growth x{:.2}", blow.max_grad_growth)),
    }
    c.finish()
}

fn criterion_9() -> Outcome {
    let mut c = Checks::default();
    let dir = std::env::temp_dir().join(format!("normsol-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let gauss = dir.join("gauss.json");
    let run = |args: &[&str], threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_normsol")).args(args).env("NLS_THREADS", threads).output().unwrap();
        (out.status.code(), out.stdout)
    };
    let (code, bytes) = run(&["profile", "--kind", "gaussian", "--dim", "3", "--q", "2.5", "--a", "0.5a0", "--r-max", "40", "--grid-n", "2048"], "1");
    c.require(code == Some(0), "profile command failed");
    std::fs::write(&gauss, &bytes).unwrap();
    let g = gauss.to_str().unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["constants", "--dim", "3", "--q", "2.5", "--mu", "1", "--a", "auto-a0", "--json"],
        vec!["profile", "--kind", "weinstein", "--dim", "3", "--q", "3", "--r-max", "30", "--grid-n", "1024"],
        vec!["profile", "--kind", "bubble", "--dim", "4", "--r-max", "30", "--grid-n", "1024"],
        vec!["fiber", "--profile", g, "--dim", "3", "--q", "2.5", "--mu", "1", "--a", "0.5a0"],
        vec!["minimize", "--dim", "3", "--q", "2.5", "--a", "0.5a0", "--r-max", "40", "--grid-n", "2048", "--seed", "7"],
        vec!["subadd", "--dim", "3", "--q", "2.5", "--a", "0.5a0", "--a1", "2", "--r-max", "40", "--grid-n", "2048"],
        vec!["mountain-pass", "--dim", "3", "--q", "2.5", "--a", "0.5a0", "--r-max", "40", "--grid-n", "2048", "--refine-iterations", "200"],
        vec!["mountain-pass", "--dim", "3", "--q", "2.5", "--a", "auto-a0", "--r-max", "40", "--grid-n", "2048", "--probe-trials", "8", "--seed", "11", "--refine-iterations", "0"],
        vec!["cpo", "--case", "2", "--dim", "4", "--mu", "1", "--mass-multiple", "2", "--steps", "3", "--r-max", "300", "--grid-n", "8192"],
        vec!["cpo", "--case", "1", "--dim", "4", "--mu", "1", "--mass-multiple", "1", "--steps", "2", "--r-max", "300", "--grid-n", "8192"],
        vec!["evolve", "--init", g, "--dim", "3", "--q", "2.5", "--a", "0.5a0", "--dt", "0.01", "--t-end", "0.2", "--json"],
        vec!["evolve", "--init", g, "--dim", "3", "--q", "2.5", "--a", "0.5a0", "--dt", "0.01", "--t-end", "0.2", "--csv"],
        vec!["sweep", "--dim", "3", "--q", "2.5", "--mu-values", "0.5,1", "--a-values", "4,8,16", "--minimize", "--r-max", "30", "--grid-n", "1024", "--seed", "3"],
    ];
    for args in &commands {
        let first = run(args, "1");
        let second = run(args, "4");
        let label = args[..2].join(" ");
        c.require(first.0 == Some(0), format!("`{label}` exit {:?}", first.0));
        c.require(first == second && !first.1.is_empty(), format!("`{label}` output differs between runs"));
    }
    c.note(format!("{} commands byte-identical across runs with 1 and 4 threads", commands.len()));
    let _ = std::fs::remove_dir_all(&dir);
    c.finish()
}

fn main() {
    // `cargo test -- <filter>` passes arguments; honor a criterion-number filter.
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| filter.is_empty() || filter.contains(&k);
    let names = [
        "quadrature oracle",
        "Sobolev constant",
        "GN sharpness",
        "fiber structure",
        "local minimizer",
        "mountain-pass bounds",
        "c^po sequences",
        "dynamics probes",
        "CLI determinism",
    ];
    let mins = if [5, 6, 8].iter().any(|&k| wanted(k)) { minimizers() } else { Vec::new() };
    let mut failed = 0;
    for (k, name) in names.iter().enumerate() {
        let k = k + 1;
        if !wanted(k) {
            continue;
        }
        let t = Instant::now();
        let out = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(&mins),
            6 => criterion_6(&mins),
            7 => criterion_7(),
            8 => criterion_8(&mins),
            _ => criterion_9(),
        };
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {k} ({name}): {} [{:.1}s] {}",
            if out.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            out.detail
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
