//! The second critical level: energy infimum over `P_{a,−}` (Pohozaev manifold,
//! positive energy), its strict bounds, and the sequences at critical `q` whose
//! projected energies tend to zero.
//!
//! For `u ∈ S_a` the projected energy `J(u) = Ψ_u(τ_u⁻)` is evaluated from the
//! four integrals of `u` in closed form; `inf_{S_a} J = inf_{P_{a,−}} E`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{
    abar, classify, exponents, sobolev_constant, thresholds, Exponents, ProblemParams, QClass, SharpConstants,
};
use crate::error::{Error, Result};
use crate::functionals::{
    fiber_report_of, gn_functional_of, move_to_fiber_point, FiberBranch, Norms, FIBER_SAMPLES, MASS_TOL,
};
use crate::grid::{Profile, RadialGrid};
use crate::linalg::brent;
use crate::minimize::SolveReport;
use crate::profiles::{aubin_talenti, cutoff_profile, normalize_mass_lq, random_trial, with_mass, WeinsteinSolution};

/// Relative Pohozaev tolerance for projected witnesses.
pub const WITNESS_POHOZAEV_TOL: f64 = 1e-10;

fn subcritical_admissible(params: &ProblemParams) -> Result<Exponents> {
    let e = exponents(params)?;
    if e.q_class != QClass::Subcritical {
        return Err(Error::Regime("the mountain-pass level is estimated for q < 2 + 4/N".into()));
    }
    let regime = classify(params)?;
    if !regime.admits_minimizer() {
        return Err(Error::Regime(format!("regime {regime:?}: needs Omega1 or Omega2")));
    }
    Ok(e)
}

/// `J(u) = max_τ Ψ_u(τ)`, or `None` when `Ψ_u` has no interior maximum.
pub fn projected_energy(params: &ProblemParams, e: &Exponents, n: &Norms) -> Result<Option<f64>> {
    Ok(fiber_report_of(params, e, n, FIBER_SAMPLES)?.energy_at_tau_minus)
}

/// `u_{τ⁻}`: the dilation of `u` onto `P_{a,−}` (or onto `τ_u` at critical `q`).
pub fn project_to_pohozaev_minus(params: &ProblemParams, u: &Profile) -> Result<Profile> {
    let e = exponents(params)?;
    let n = Norms::of(params, u)?;
    if !((n.mass / params.a - 1.0).abs() <= MASS_TOL) {
        return Err(Error::MassViolation { expected: params.a, got: n.mass });
    }
    let report = fiber_report_of(params, &e, &n, FIBER_SAMPLES)?;
    if report.strictly_decreasing {
        return Err(Error::Regime(
            "no admissible dilation: the fiber map is strictly decreasing (grad norm <= mu*gamma*Lq power)".into(),
        ));
    }
    let v = move_to_fiber_point(params, u, FiberBranch::Minus, WITNESS_POHOZAEV_TOL)?;
    let en = Norms::of(params, &v)?.energy(params, &e);
    if !(en > 0.0) {
        return Err(Error::StructuralAnomaly(format!("projected energy {en} is not positive")));
    }
    Ok(v)
}

/// Trial family `w_s = u_min + s·φ(r/R)·U_b(r)`, renormalized to mass `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    /// Width `b` of the bubble `U_b`.
    pub bubble_width: f64,
    /// Cutoff radius `R`; `None` uses `r_max/4`.
    pub cutoff_radius: Option<f64>,
    pub s_max: f64,
    pub members: usize,
    /// Follow the family sweep by descent on `J` from its best member.
    pub refine: bool,
    pub refine_iterations: usize,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self { bubble_width: 0.5, cutoff_radius: None, s_max: 2.0, members: 64, refine: true, refine_iterations: 3000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyPoint {
    pub s: f64,
    pub projected_energy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct LevelEstimate {
    /// Best upper bound found for `inf_{P_{a,−}} E`.
    pub level: f64,
    /// Minimum over the trial family alone.
    pub family_level: f64,
    pub witness: Profile,
    pub witness_energy: f64,
    pub witness_pohozaev: f64,
    pub witness_grad_sq: f64,
    pub witness_lambda: f64,
    pub m_a: f64,
    /// `m_a + S^{N/2}/N`.
    pub upper_bound: f64,
    pub family_trace: Vec<FamilyPoint>,
    pub refinement: Option<DescentSummary>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentSummary {
    pub initial_level: f64,
    pub final_level: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// `∂J/∂u = τ²(−Δ_h u) − τ^{2*}|u|^{2*−2}u − μτ^{qγ_q}|u|^{q−2}u` at `τ = τ_u⁻`.
fn projected_gradient(params: &ProblemParams, e: &Exponents, u: &Profile, tau: f64) -> Vec<f64> {
    let t2 = tau * tau;
    let tc = tau.powf(e.two_star);
    let tq = tau.powf(e.q_gamma_q);
    let mut g = u.grid().neg_laplacian(u.values());
    for (gi, &v) in g.iter_mut().zip(u.values()) {
        let m = v.abs();
        *gi = t2 * *gi - tc * m.powf(e.two_star - 2.0) * v - params.mu * tq * m.powf(params.q - 2.0) * v;
    }
    g
}

fn fiber_max(params: &ProblemParams, e: &Exponents, u: &[f64], grid: &Arc<RadialGrid>) -> Result<Option<(f64, f64)>> {
    let n = Norms {
        mass: grid.dot(u, u),
        grad_sq: grid.kinetic_form(u),
        critical_power: grid.integrate(&u.iter().map(|v| v.abs().powf(e.two_star)).collect::<Vec<_>>())?,
        lq_power: grid.integrate(&u.iter().map(|v| v.abs().powf(params.q)).collect::<Vec<_>>())?,
    };
    let r = fiber_report_of(params, e, &n, FIBER_SAMPLES)?;
    Ok(r.tau_minus.zip(r.energy_at_tau_minus))
}

const STALL_WINDOW: usize = 100;

/// Preconditioned descent of `J` on `S_a`. `J` is dilation invariant; the iterate is
/// re-dilated (resampled) whenever its own `τ⁻` drifts far from 1.
pub fn descend_projected_energy(
    params: &ProblemParams,
    init: &Profile,
    max_iterations: usize,
    tol: f64,
) -> Result<(Profile, DescentSummary)> {
    let e = exponents(params)?;
    let grid = Arc::clone(init.grid());
    let n = grid.len();
    let renorm = |v: &mut Vec<f64>| {
        let c = (params.a / grid.dot(v, v)).sqrt();
        v.iter_mut().for_each(|x| *x *= c);
    };
    let mut v = init.values().to_vec();
    v[n - 1] = 0.0;
    renorm(&mut v);
    let (mut tau, mut level) = fiber_max(params, &e, &v, &grid)?
        .ok_or_else(|| Error::Regime("initial profile has no fiber maximum".into()))?;
    let initial_level = level;
    let mut history = vec![level];
    let mut step = 1.0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        if tau.ln().abs() > 0.2 {
            let mut w = Profile::new(Arc::clone(&grid), v.clone())?.rescale(tau)?.into_values();
            w[n - 1] = 0.0;
            renorm(&mut w);
            v = w;
            let (t, l) = fiber_max(params, &e, &v, &grid)?
                .ok_or_else(|| Error::StructuralAnomaly("fiber maximum lost after re-dilation".into()))?;
            tau = t;
            level = l;
        }
        let u = Profile::new(Arc::clone(&grid), v.clone())?;
        let g = projected_gradient(params, &e, &u, tau);
        let lam = grid.dot(&v, &g) / grid.dot(&v, &v);
        let mut r: Vec<f64> = g.iter().zip(&v).map(|(gi, vi)| gi - lam * vi).collect();
        r[n - 1] = 0.0;
        let t2 = tau * tau;
        let shift = (lam.abs() / t2).max(1e-2);
        let ar: Vec<f64> = grid.solve_shifted(shift, &r).into_iter().map(|x| x / t2).collect();
        let au = grid.solve_shifted(shift, &v);
        residual = grid.dot(&r, &ar).max(0.0).sqrt();
        if residual < tol * level.abs().max(1.0) {
            converged = true;
            break;
        }
        let beta = grid.dot(&v, &ar) / grid.dot(&v, &au);
        let p: Vec<f64> = ar.iter().zip(&au).map(|(x, y)| x - beta * y).collect();
        let slope = grid.dot(&r, &p);
        if !(slope > 0.0) {
            break;
        }
        let mut accepted = None;
        let mut trial = step;
        for _ in 0..40 {
            let mut w: Vec<f64> = v.iter().zip(&p).map(|(x, d)| x - trial * d).collect();
            renorm(&mut w);
            if let Some((t, l)) = fiber_max(params, &e, &w, &grid)? {
                if l <= level - 1e-4 * trial * slope {
                    accepted = Some((w, t, l));
                    break;
                }
            }
            trial *= 0.5;
        }
        let Some((w, t, l)) = accepted else {
            // decrease below roundoff of J
            converged = residual < 1e3 * tol * level.abs().max(1.0);
            break;
        };
        step = (2.0 * trial).min(1.0);
        v = w;
        tau = t;
        level = l;
        iterations += 1;
        history.push(level);
        // the discrete J is only approximately dilation invariant, so the
        // residual can stall while the level has settled
        if iterations >= STALL_WINDOW && history[iterations - STALL_WINDOW] - level < 1e-8 * level.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let out = Profile::new(grid, v)?;
    Ok((out, DescentSummary { initial_level, final_level: level, iterations, residual, converged }))
}

/// Upper estimate of `inf_{P_{a,−}} E` from the soliton-plus-bubble family,
/// optionally refined by descent on `J`; checks `0 < level < m_a + S^{N/2}/N`.
pub fn estimate_mp_level(params: &ProblemParams, minimizer: &SolveReport, spec: &FamilySpec) -> Result<LevelEstimate> {
    let e = subcritical_admissible(params)?;
    if spec.members < 1 || !(spec.s_max > 0.0 && spec.bubble_width > 0.0) {
        return Err(Error::InvalidParameter("family needs members >= 1, s_max > 0, bubble_width > 0".into()));
    }
    let u_min = &minimizer.final_profile;
    let grid = Arc::clone(u_min.grid());
    let sobolev = sobolev_constant(params.dim)?;
    let nd = params.dim as f64;
    let upper_bound = minimizer.energy + sobolev.powf(nd / 2.0) / nd;

    let radius = spec.cutoff_radius.unwrap_or(grid.r_max() / 4.0);
    if 2.0 * radius > grid.r_max() {
        return Err(Error::InvalidParameter(format!("cutoff radius {radius} needs 2R <= r_max")));
    }
    let bubble = cutoff_profile(&aubin_talenti(params.dim, spec.bubble_width, &grid, 1.0)?, radius)?;
    let ss: Vec<f64> = if spec.members == 1 {
        vec![0.0]
    } else {
        (0..spec.members).map(|k| spec.s_max * k as f64 / (spec.members - 1) as f64).collect()
    };
    let evaluated: Vec<(FamilyPoint, Option<Profile>)> = ss
        .par_iter()
        .map(|&s| {
            let w = u_min.with_values(u_min.values().iter().zip(bubble.values()).map(|(a, b)| a + s * b).collect());
            let level = w.ok().and_then(|w| {
                let w = with_mass(&w, params.a).ok()?;
                let n = Norms::of(params, &w).ok()?;
                let l = projected_energy(params, &e, &n).ok()??;
                Some((l, w))
            });
            match level {
                Some((l, w)) => (FamilyPoint { s, projected_energy: Some(l) }, Some(w)),
                None => (FamilyPoint { s, projected_energy: None }, None),
            }
        })
        .collect();
    let mut best: Option<(f64, Profile)> = None;
    let mut family_trace = Vec::with_capacity(evaluated.len());
    for (pt, w) in evaluated {
        if let (Some(l), Some(w)) = (pt.projected_energy, w) {
            if best.as_ref().is_none_or(|(b, _)| l < *b) {
                best = Some((l, w));
            }
        }
        family_trace.push(pt);
    }
    let failures: Vec<f64> = family_trace.iter().filter(|p| p.projected_energy.is_none()).map(|p| p.s).collect();
    let (family_level, best_member) = best.ok_or_else(|| {
        Error::StructuralAnomaly(format!("no family member admits a projection (failed s = {failures:?})"))
    })?;

    let (candidate, refinement) = if spec.refine {
        let (u, summary) = descend_projected_energy(params, &best_member, spec.refine_iterations, 1e-7)?;
        if summary.final_level < family_level {
            (u, Some(summary))
        } else {
            (best_member, Some(summary))
        }
    } else {
        (best_member, None)
    };
    let witness = project_to_pohozaev_minus(params, &candidate)?;
    let wn = Norms::of(params, &witness)?;
    let witness_energy = wn.energy(params, &e);
    let level = family_level.min(refinement.map_or(f64::INFINITY, |r| r.final_level));
    Ok(LevelEstimate {
        level,
        family_level,
        witness_energy,
        witness_pohozaev: wn.pohozaev(params, &e),
        witness_grad_sq: wn.grad_sq,
        witness_lambda: wn.lagrange_multiplier(params),
        witness,
        m_a: minimizer.energy,
        upper_bound,
        family_trace,
        refinement,
        accepted: level > 0.0 && level < upper_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpoItem {
    /// The cutoff radius `n` (case 1) or the excess `A_n` (case 2).
    pub parameter: f64,
    /// `(‖∇u_n‖² − μγ_q‖u_n‖_q^q)/‖u_n‖²_{2*}`.
    pub ratio: f64,
    /// `E(u_{n,τ})` at the unique fiber critical point.
    pub projected_energy: f64,
    pub mass: f64,
    pub grad_sq: f64,
    pub lq_power: f64,
    pub critical_norm_sq: f64,
    /// `‖∇u_n‖² − μγ_q‖u_n‖_q^q`.
    pub excess: f64,
    /// GN functional `f(u_n)`.
    pub gn_value: f64,
    /// Case 2: `|excess − A_n|/A_n`.
    pub identity_error: Option<f64>,
    /// Case 2: `‖u_n‖_{2*} ≥ a^{−(1−θ)/(2θ)}`.
    pub interpolation_bound_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpoSequenceReport {
    pub case: u8,
    pub params: ProblemParams,
    /// Target for the final projected energy, `0.05·S^{N/2}/N`.
    pub epsilon: f64,
    pub items: Vec<CpoItem>,
    pub all_positive: bool,
    pub monotone_decay: bool,
    pub below_epsilon: bool,
    /// Interpolation exponent with `1/q = (1−θ)/2 + θ/2*`.
    pub theta: f64,
    /// Minimum of the GN functional, `C_{N,q}^{−q}`.
    pub gn_minimum: f64,
}

fn critical_setup(params: &ProblemParams) -> Result<(Exponents, SharpConstants, f64)> {
    let e = exponents(params)?;
    if e.q_class != QClass::Critical {
        return Err(Error::Regime("the c^po sequences are built at q = 2 + 4/N".into()));
    }
    let c = SharpConstants::compute(params)?;
    let lhs = params.mu.ln() + e.mass_exponent() * params.a.ln();
    Ok((e, c, lhs - abar(params, &c)?.ln()))
}

fn cpo_item(params: &ProblemParams, e: &Exponents, u: &Profile, parameter: f64) -> Result<CpoItem> {
    let n = Norms::of(params, u)?;
    let excess = n.grad_sq - params.mu * e.gamma_q * n.lq_power;
    let critical_norm_sq = n.critical_power.powf(2.0 / e.two_star);
    if !(excess > 0.0) {
        return Err(Error::StructuralAnomaly(format!(
            "sequence member at {parameter} has grad norm <= mu*gamma*Lq power (excess {excess})"
        )));
    }
    let report = fiber_report_of(params, e, &n, FIBER_SAMPLES)?;
    let projected_energy = report
        .energy_at_tau_minus
        .ok_or_else(|| Error::StructuralAnomaly("no fiber critical point despite positive excess".into()))?;
    Ok(CpoItem {
        parameter,
        ratio: excess / critical_norm_sq,
        projected_energy,
        mass: n.mass,
        grad_sq: n.grad_sq,
        lq_power: n.lq_power,
        critical_norm_sq,
        excess,
        gn_value: gn_functional_of(params, e, &n),
        identity_error: None,
        interpolation_bound_holds: None,
    })
}

fn assemble(params: &ProblemParams, e: &Exponents, c: &SharpConstants, case: u8, items: Vec<CpoItem>) -> CpoSequenceReport {
    let nd = params.dim as f64;
    let epsilon = 0.05 * c.sobolev.powf(nd / 2.0) / nd;
    let theta = (0.5 - 1.0 / params.q) / (0.5 - 1.0 / e.two_star);
    let all_positive = items.iter().all(|i| i.ratio > 0.0 && i.projected_energy > 0.0);
    let monotone_decay = items
        .windows(2)
        .all(|w| w[1].ratio < w[0].ratio && w[1].projected_energy < w[0].projected_energy);
    let below_epsilon = items.last().is_some_and(|i| i.projected_energy < epsilon);
    CpoSequenceReport {
        case,
        params: *params,
        epsilon,
        items,
        all_positive,
        monotone_decay,
        below_epsilon,
        theta,
        gn_minimum: c.gn.powf(-params.q),
    }
}

/// Default length scale of the ground state in the case-1 sequence; small enough
/// that the cutoffs at `n ≤ 40` still truncate a visible tail.
pub const CASE1_SPREAD: f64 = 0.15;

/// Case `μa^{q(1−γ_q)/2} = ā_N`: cutoffs `φ(x/n)u` of the GN optimizer `u`.
pub fn cpo_sequence_case1(params: &ProblemParams, grid: &Arc<RadialGrid>, n_values: &[f64], spread: f64) -> Result<CpoSequenceReport> {
    let (e, c, gap) = critical_setup(params)?;
    if gap.abs() > 1e-8 {
        return Err(Error::Regime(format!("case 1 needs mu*a^(q(1-gamma)/2) = abar_N (log gap {gap:e})")));
    }
    if let Some(&nmax) = n_values.iter().max_by(|a, b| a.total_cmp(b)) {
        if 2.0 * nmax > grid.r_max() {
            return Err(Error::InvalidParameter(format!("2·max(n) = {} exceeds r_max = {}", 2.0 * nmax, grid.r_max())));
        }
    }
    if !(spread > 0.0) {
        return Err(Error::InvalidParameter(format!("spread must be positive, got {spread}")));
    }
    let q = WeinsteinSolution::cached(params.dim, params.q)?;
    let u = with_mass(&q.profile(grid, 1.0, spread)?, params.a)?;
    let items: Vec<Result<CpoItem>> = n_values
        .par_iter()
        .map(|&n| {
            let v = with_mass(&cutoff_profile(&u, n)?, params.a)?;
            cpo_item(params, &e, &v, n)
        })
        .collect();
    Ok(assemble(params, &e, &c, 1, items.into_iter().collect::<Result<_>>()?))
}

/// Bump `16((r−1)(2−r))²` supported on `[1, 2]`.
pub fn shell_bump(r: f64) -> f64 {
    if r > 1.0 && r < 2.0 {
        let t = (r - 1.0) * (2.0 - r);
        16.0 * t * t
    } else {
        0.0
    }
}

/// Case `μa^{q(1−γ_q)/2} > ā_N`: members of `Q + s·g` with `f = M_n`, normalized to
/// `‖u‖₂² = a`, `‖u‖_q = 1`.
pub fn cpo_sequence_case2(params: &ProblemParams, grid: &Arc<RadialGrid>, a_values: &[f64]) -> Result<CpoSequenceReport> {
    let (e, c, gap) = critical_setup(params)?;
    if !(gap > 1e-8) {
        return Err(Error::Regime(format!("case 2 needs mu*a^(q(1-gamma)/2) > abar_N (log gap {gap:e})")));
    }
    if a_values.iter().any(|&x| !(x > 0.0)) || a_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter("A_n must be positive and strictly decreasing".into()));
    }
    let q = WeinsteinSolution::cached(params.dim, params.q)?;
    let base = q.profile(grid, 1.0, 1.0)?;
    let bump = Profile::from_fn(grid, shell_bump);
    let sqrt_a = params.a.sqrt();
    let member = |s: f64| -> Result<(Profile, f64)> {
        let w = base.with_values(base.values().iter().zip(bump.values()).map(|(x, y)| x + s * y).collect())?;
        let w = normalize_mass_lq(params, &w)?;
        let n = Norms::of(params, &w)?;
        Ok((w, gn_functional_of(params, &e, &n)))
    };
    let f0 = member(0.0)?.1;
    let theta = (0.5 - 1.0 / params.q) / (0.5 - 1.0 / e.two_star);
    let lower = params.a.powf(-(1.0 - theta) / (2.0 * theta));

    let items: Vec<Result<CpoItem>> = a_values
        .par_iter()
        .map(|&an| {
            let target = (params.mu * e.gamma_q + an) * sqrt_a;
            let mut hi = 0.1;
            let mut f_hi = member(hi)?.1;
            while f_hi <= target {
                hi *= 2.0;
                if hi > 1e6 {
                    return Err(Error::Bracket {
                        message: format!("f(u_s) reached only [{f0}, {f_hi}], target {target}"),
                        lo: 0.0,
                        hi,
                    });
                }
                f_hi = member(hi)?.1;
            }
            if f0 >= target {
                return Err(Error::Bracket { message: format!("f(u_0) = {f0} already exceeds {target}"), lo: 0.0, hi });
            }
            let s = brent(|s| member(s).map_or(f64::NAN, |m| m.1) - target, 0.0, hi, 1e-15, 200)?;
            let (u, _) = member(s)?;
            let mut item = cpo_item(params, &e, &u, an)?;
            item.identity_error = Some((item.excess - an).abs() / an);
            item.interpolation_bound_holds = Some(item.critical_norm_sq.sqrt() >= lower * (1.0 - 1e-9));
            Ok(item)
        })
        .collect();
    Ok(assemble(params, &e, &c, 2, items.into_iter().collect::<Result<_>>()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowEnergyWitness {
    pub level: f64,
    /// `‖∇u_{τ⁻}‖²`.
    pub grad_sq: f64,
    /// `|‖∇u_{τ⁻}‖² − ρ₀|`.
    pub rho0_distance: f64,
    /// `‖u‖_q / (C_{N,q}‖∇u‖^{γ_q}‖u‖^{1−γ_q})`, at most 1.
    pub gn_ratio: f64,
    /// `S‖u‖²_{2*}/‖∇u‖²`, at most 1.
    pub sobolev_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityProbeReport {
    pub trials: usize,
    pub rho0: f64,
    /// Projected energy of every trial, in seed order.
    pub levels: Vec<f64>,
    pub min_level: f64,
    /// The lowest levels found, ascending.
    pub low_energy: Vec<LowEnergyWitness>,
    /// Level after descent on `J` from the best trial.
    pub refined_level: Option<f64>,
    pub all_positive: bool,
}

/// Random search for low projected energies over `P_{a,−}`.
pub fn omega2_positivity_probe(
    params: &ProblemParams,
    grid: &Arc<RadialGrid>,
    trials: usize,
    seed: u64,
    descent_iterations: usize,
) -> Result<PositivityProbeReport> {
    let e = subcritical_admissible(params)?;
    let th = thresholds(params)?;
    let rho0 = th.rho0_required()?;
    let c = th.constants();
    let evaluated: Vec<Result<(f64, LowEnergyWitness, Profile)>> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let u = random_trial(grid, params.a, &mut rng)?;
            let n = Norms::of(params, &u)?;
            let report = fiber_report_of(params, &e, &n, FIBER_SAMPLES)?;
            let (tau, level) = report
                .tau_minus
                .zip(report.energy_at_tau_minus)
                .ok_or_else(|| Error::StructuralAnomaly("trial without fiber maximum".into()))?;
            let nt = n.dilated(&e, tau);
            let gamma = e.gamma_q;
            let gn_ratio = nt.lq_power.powf(1.0 / params.q)
                / (c.gn * nt.grad_sq.powf(gamma / 2.0) * nt.mass.powf((1.0 - gamma) / 2.0));
            let sobolev_ratio = c.sobolev * nt.critical_power.powf(2.0 / e.two_star) / nt.grad_sq;
            let w = LowEnergyWitness {
                level,
                grad_sq: nt.grad_sq,
                rho0_distance: (nt.grad_sq - rho0).abs(),
                gn_ratio,
                sobolev_ratio,
            };
            Ok((level, w, u))
        })
        .collect();
    let mut levels = Vec::with_capacity(trials);
    let mut witnesses = Vec::with_capacity(trials);
    let mut best: Option<(f64, Profile)> = None;
    for r in evaluated {
        let (l, w, u) = r?;
        levels.push(l);
        witnesses.push(w);
        if best.as_ref().is_none_or(|(b, _)| l < *b) {
            best = Some((l, u));
        }
    }
    witnesses.sort_by(|a, b| a.level.total_cmp(&b.level));
    witnesses.truncate(8);
    let refined_level = match (&best, descent_iterations) {
        (Some((_, u)), k) if k > 0 => Some(descend_projected_energy(params, u, k, 1e-7)?.1.final_level),
        _ => None,
    };
    let min_level = levels.iter().copied().chain(refined_level).fold(f64::INFINITY, f64::min);
    Ok(PositivityProbeReport {
        trials,
        rho0,
        all_positive: min_level > 0.0,
        min_level,
        levels,
        low_energy: witnesses,
        refined_level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{a0, mass_at_abar_multiple};
    use crate::functionals::{fiber_energy, pohozaev};
    use crate::minimize::{minimize_default, MinimizeOptions};
    use crate::profiles::gaussian;

    fn half_a0() -> (ProblemParams, Arc<RadialGrid>) {
        let base = ProblemParams::new(3, 2.5, 1.0, 1.0).unwrap();
        let c = SharpConstants::compute(&base).unwrap();
        (base.with_mass(0.5 * a0(&base, &c).unwrap()), RadialGrid::new(3, 40.0, 2048).unwrap())
    }

    #[test]
    fn projected_energy_is_the_fiber_maximum() {
        let (params, grid) = half_a0();
        let e = exponents(&params).unwrap();
        let u = gaussian(&params, 1.0, &grid).unwrap();
        let n = Norms::of(&params, &u).unwrap();
        let j = projected_energy(&params, &e, &n).unwrap().unwrap();
        let sampled = (1..4000)
            .map(|k| fiber_energy(&params, &e, &n, 0.5 + k as f64 * 1e-3))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(j >= sampled - 1e-12 && j - sampled < 1e-5 * j);
    }

    #[test]
    fn projection_lands_on_the_positive_energy_branch() {
        let (params, grid) = half_a0();
        let v = project_to_pohozaev_minus(&params, &gaussian(&params, 1.0, &grid).unwrap()).unwrap();
        let g = v.grad_l2_sq();
        assert!(pohozaev(&params, &v).unwrap().abs() < 1e-8 * g);
        assert!(crate::functionals::energy(&params, &v).unwrap() > 0.0);
    }

    #[test]
    fn level_lies_between_zero_and_the_bound() {
        let (params, grid) = half_a0();
        let min = minimize_default(&params, &grid, &MinimizeOptions::default()).unwrap();
        let spec = FamilySpec { members: 16, refine: false, ..Default::default() };
        let est = estimate_mp_level(&params, &min, &spec).unwrap();
        assert!(est.accepted);
        assert!(0.0 < est.level && est.level < est.upper_bound);
        assert_eq!(est.family_trace.len(), 16);
        assert!(est.witness_pohozaev.abs() < 1e-8 * est.witness_grad_sq);
    }

    #[test]
    fn critical_sequences_require_critical_q() {
        let (params, grid) = half_a0();
        assert!(matches!(cpo_sequence_case1(&params, &grid, &[5.0], CASE1_SPREAD), Err(Error::Regime(_))));
        assert!(matches!(cpo_sequence_case2(&params, &grid, &[1.0]), Err(Error::Regime(_))));
    }

    #[test]
    fn case_one_requires_the_threshold_mass() {
        let base = ProblemParams::new(3, 2.0 + 4.0 / 3.0, 1.0, 1.0).unwrap();
        let c = SharpConstants::compute(&base).unwrap();
        let grid = RadialGrid::new(3, 100.0, 1024).unwrap();
        let off = base.with_mass(mass_at_abar_multiple(&base, &c, 1.1).unwrap());
        assert!(matches!(cpo_sequence_case1(&off, &grid, &[5.0], CASE1_SPREAD), Err(Error::Regime(_))));
        let on = base.with_mass(mass_at_abar_multiple(&base, &c, 1.0).unwrap());
        let err = cpo_sequence_case1(&on, &grid, &[60.0], CASE1_SPREAD).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn shell_bump_is_supported_on_the_shell() {
        assert_eq!(shell_bump(1.5), 1.0);
        for r in [0.0, 1.0, 2.0, 3.0] {
            assert_eq!(shell_bump(r), 0.0);
        }
        assert!(shell_bump(1.2) > 0.0);
    }

    #[test]
    fn positivity_probe_is_reproducible() {
        let (params, grid) = half_a0();
        let a = omega2_positivity_probe(&params, &grid, 6, 11, 0).unwrap();
        let b = omega2_positivity_probe(&params, &grid, 6, 11, 0).unwrap();
        assert_eq!(a.levels, b.levels);
        assert!(a.all_positive && a.min_level > 0.0);
    }
}
