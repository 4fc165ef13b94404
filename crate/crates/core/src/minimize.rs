//! Local minimization of the energy on `V_a = S_a ∩ {‖∇u‖² < ρ₀}`.
//!
//! Preconditioned projected gradient descent: the search direction is the
//! Sobolev gradient `(σ − Δ_h)⁻¹E'(u)` projected onto the tangent space of the
//! mass sphere, every trial point is renormalized exactly to mass `a`, and
//! steps are accepted by an Armijo test on the energy. Steps leaving the ball
//! `‖∇u‖² < ρ₀` are rejected.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{classify, exponents, thresholds, Exponents, ProblemParams, QClass};
use crate::error::{Error, Result};
use crate::functionals::{energy_gradient, fiber_report_of, Norms, FIBER_SAMPLES};
use crate::grid::{Profile, RadialGrid};
use crate::profiles::{gaussian, random_trial};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop once the projected-gradient norm is below `tol·max(1, |E|)`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Shift of the preconditioner `σ − Δ_h`; `None` adapts it to `|λ|`.
    pub shift: Option<f64>,
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iterations: 5000, shift: None, initial_step: 1.0, armijo: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub energy: f64,
    pub pohozaev: f64,
    pub grad_sq: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub final_profile: Profile,
    pub energy: f64,
    pub pohozaev: f64,
    pub lambda: f64,
    pub grad_sq: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The ball constraint `‖∇u‖² < ρ₀` was active near the end of the run.
    pub boundary_hit: bool,
    pub rho0: f64,
    pub trace: Vec<TracePoint>,
}

/// Relative size of an energy change indistinguishable from roundoff.
const ROUNDOFF: f64 = 1e-14;

/// Discrete energy pieces at the nodes.
struct EnergyDensity<'a> {
    params: &'a ProblemParams,
    e: &'a Exponents,
}

impl EnergyDensity<'_> {
    fn potential(&self, v: f64) -> f64 {
        let m = v.abs();
        m.powf(self.e.two_star) / self.e.two_star + self.params.mu / self.params.q * m.powf(self.params.q)
    }

    /// `E(u) − E(v)` accumulated node by node, which keeps the roundoff at the
    /// size of the difference rather than the size of `E`.
    fn difference(&self, grid: &RadialGrid, u: &[f64], v: &[f64]) -> f64 {
        let kin: f64 = grid
            .kinetic_coefficients()
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let du = u[j + 1] - u[j];
                let dv = v[j + 1] - v[j];
                k * (du - dv) * (du + dv)
            })
            .sum();
        let pot: f64 = grid
            .weights()
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (&a, &b))| w * (self.potential(a) - self.potential(b)))
            .sum();
        grid.omega() * (0.5 * kin - pot)
    }
}

fn renormalize(grid: &RadialGrid, u: &mut [f64], a: f64) {
    let m = grid.dot(u, u);
    let c = (a / m).sqrt();
    u.iter_mut().for_each(|v| *v *= c);
}

/// Requires Ω₁ ∪ Ω₂ and returns `ρ₀`.
fn admissible_rho0(params: &ProblemParams) -> Result<f64> {
    let e = exponents(params)?;
    if e.q_class != QClass::Subcritical {
        return Err(Error::Regime("the local minimizer on V_a needs q < 2 + 4/N".into()));
    }
    let regime = classify(params)?;
    if !regime.admits_minimizer() {
        return Err(Error::Regime(format!("regime {regime:?}: no local minimizer on V_a (needs Omega1 or Omega2)")));
    }
    thresholds(params)?.rho0_required()
}

pub fn minimize_local(params: &ProblemParams, init: &Profile, opts: &MinimizeOptions) -> Result<SolveReport> {
    let rho0 = admissible_rho0(params)?;
    let e = exponents(params)?;
    let grid = Arc::clone(init.grid());
    if grid.dim() != params.dim {
        return Err(Error::InvalidParameter(format!("grid dimension {} != {}", grid.dim(), params.dim)));
    }
    if !(opts.tol > 0.0 && opts.initial_step > 0.0) {
        return Err(Error::InvalidParameter("tolerance and initial step must be positive".into()));
    }
    let n = grid.len();

    let mut values = init.values().to_vec();
    values[n - 1] = 0.0;
    if grid.dot(&values, &values) == 0.0 {
        return Err(Error::InvalidParameter("initial profile is zero".into()));
    }
    renormalize(&grid, &mut values, params.a);
    let mut u = Profile::new(Arc::clone(&grid), values)?;

    // start at the local minimum of the fiber through the initial guess
    let norms = Norms::of(params, &u)?;
    let fiber = fiber_report_of(params, &e, &norms, FIBER_SAMPLES)?;
    let tau = fiber.tau_plus.ok_or_else(|| Error::StructuralAnomaly("no local fiber minimum".into()))?;
    if (tau - 1.0).abs() > 1e-3 || norms.grad_sq >= rho0 {
        let mut v = u.rescale(tau)?.into_values();
        v[n - 1] = 0.0;
        renormalize(&grid, &mut v, params.a);
        u = Profile::new(Arc::clone(&grid), v)?;
    }
    if u.grad_l2_sq() >= rho0 {
        return Err(Error::StructuralAnomaly("fiber minimum of the initial guess lies outside V_a".into()));
    }

    let dens = EnergyDensity { params, e: &e };
    let mut trace = Vec::new();
    let mut step = opts.initial_step;
    let mut converged = false;
    let mut last_ball_rejection = None;
    let mut iterations = 0;
    let mut residual;

    let mut norms = Norms::of(params, &u)?;
    let mut energy = norms.energy(params, &e);
    loop {
        trace.push(TracePoint {
            iteration: iterations,
            energy,
            pohozaev: norms.pohozaev(params, &e),
            grad_sq: norms.grad_sq,
        });
        let g = energy_gradient(params, &u)?;
        let uv = u.values();
        let lambda_h = grid.dot(uv, &g) / grid.dot(uv, uv);
        let shift = opts.shift.unwrap_or_else(|| lambda_h.abs().max(1e-2));

        let mut r: Vec<f64> = g.iter().zip(uv).map(|(gi, ui)| gi - lambda_h * ui).collect();
        r[n - 1] = 0.0;
        let ar = grid.solve_shifted(shift, &r);
        let au = grid.solve_shifted(shift, uv);
        residual = grid.dot(&r, &ar).max(0.0).sqrt();
        if residual < opts.tol * energy.abs().max(1.0) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }

        // tangent direction in the preconditioned metric, ⟨u, p⟩ = 0; built
        // from r rather than E'(u) to avoid cancelling the λu component
        let beta = grid.dot(uv, &ar) / grid.dot(uv, &au);
        let p: Vec<f64> = ar.iter().zip(&au).map(|(x, y)| x - beta * y).collect();
        let slope = grid.dot(&r, &p);
        if !(slope > 0.0) {
            break;
        }

        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..60 {
            let mut v: Vec<f64> = uv.iter().zip(&p).map(|(x, d)| x - trial_step * d).collect();
            renormalize(&grid, &mut v, params.a);
            if grid.kinetic_form(&v) >= rho0 {
                last_ball_rejection = Some(iterations);
                trial_step *= 0.5;
                continue;
            }
            let de = dens.difference(&grid, &v, uv);
            if de <= -opts.armijo * trial_step * slope {
                accepted = Some((v, de));
                break;
            }
            // Near convergence the decrease drops below the roundoff of E; then
            // use the derivative form of the Armijo test (Hager–Zhang), allowing
            // only a roundoff-sized rise in E.
            if de <= ROUNDOFF * energy.abs() {
                let trial = Profile::new(Arc::clone(&grid), v.clone())?;
                let gv = energy_gradient(params, &trial)?;
                let lv = grid.dot(&v, &gv) / grid.dot(&v, &v);
                let rv: Vec<f64> = gv.iter().zip(&v).map(|(gi, vi)| gi - lv * vi).collect();
                if grid.dot(&rv, &p) >= -(1.0 - 2.0 * opts.armijo) * slope {
                    accepted = Some((v, de));
                    break;
                }
            }
            trial_step *= 0.5;
        }
        let Some((v, de)) = accepted else {
            break;
        };
        step = (2.0 * trial_step).min(opts.initial_step);
        u = Profile::new(Arc::clone(&grid), v)?;
        norms = Norms::of(params, &u)?;
        energy += de;
        iterations += 1;
    }

    if u.values().iter().sum::<f64>() < 0.0 {
        u = u.scaled(-1.0);
    }
    let norms = Norms::of(params, &u)?;
    let boundary_hit = norms.grad_sq >= (1.0 - 1e-3) * rho0
        || last_ball_rejection.is_some_and(|it| it + iterations / 10 + 1 >= iterations);
    Ok(SolveReport {
        energy: norms.energy(params, &e),
        pohozaev: norms.pohozaev(params, &e),
        lambda: norms.lagrange_multiplier(params),
        grad_sq: norms.grad_sq,
        grad_residual: residual,
        iterations,
        converged,
        boundary_hit,
        rho0,
        trace,
        final_profile: u,
    })
}

/// Minimizer from the default Gaussian initial guess.
pub fn minimize_default(params: &ProblemParams, grid: &Arc<RadialGrid>, opts: &MinimizeOptions) -> Result<SolveReport> {
    let init = gaussian(params, 2.0, grid)?;
    minimize_local(params, &init, opts)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryScanReport {
    pub rho0: f64,
    pub min_energy: f64,
    pub energies: Vec<f64>,
    /// Largest relative deviation of `‖∇u‖²` from `ρ₀` over the samples.
    pub max_boundary_deviation: f64,
}

/// Dilates `u ∈ S_a` onto `∂V_a`, correcting for resampling until
/// `|‖∇u‖²/ρ₀ − 1| < 1e-9`.
pub fn dilate_to_boundary(u: &Profile, rho0: f64) -> Result<Profile> {
    let mut v = u.clone();
    for _ in 0..20 {
        let g = v.grad_l2_sq();
        if (g / rho0 - 1.0).abs() < 1e-9 {
            return Ok(v);
        }
        v = v.rescale((rho0 / g).sqrt())?;
    }
    let g = v.grad_l2_sq();
    if (g / rho0 - 1.0).abs() < 1e-6 {
        Ok(v)
    } else {
        Err(Error::NonConvergence { iterations: 20, message: format!("dilation onto the sphere ‖∇u‖² = {rho0}") })
    }
}

/// Energy of `u` after dilation onto `∂V_a`.
pub fn boundary_energy(params: &ProblemParams, u: &Profile, rho0: f64) -> Result<f64> {
    let v = dilate_to_boundary(u, rho0)?;
    crate::functionals::energy(params, &v)
}

/// Minimum energy over seeded random profiles dilated onto `∂V_a`.
pub fn boundary_scan(params: &ProblemParams, grid: &Arc<RadialGrid>, samples: usize, seed: u64) -> Result<BoundaryScanReport> {
    let rho0 = admissible_rho0(params)?;
    let results: Vec<Result<(f64, f64)>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let u = random_trial(grid, params.a, &mut rng)?;
            let v = dilate_to_boundary(&u, rho0)?;
            Ok((crate::functionals::energy(params, &v)?, (v.grad_l2_sq() / rho0 - 1.0).abs()))
        })
        .collect();
    let mut energies = Vec::with_capacity(samples);
    let mut dev: f64 = 0.0;
    for r in results {
        let (en, d) = r?;
        energies.push(en);
        dev = dev.max(d);
    }
    Ok(BoundaryScanReport {
        rho0,
        min_energy: energies.iter().copied().fold(f64::INFINITY, f64::min),
        energies,
        max_boundary_deviation: dev,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubadditivityReport {
    pub a: f64,
    pub a1: f64,
    pub m_a: f64,
    pub m_a1: f64,
    pub m_a_minus_a1: f64,
    /// `m_{a₁} + m_{a−a₁} − m_a`.
    pub gap: f64,
    pub strict: bool,
    pub all_converged: bool,
}

pub fn subadditivity_check(
    params: &ProblemParams,
    grid: &Arc<RadialGrid>,
    a1: f64,
    opts: &MinimizeOptions,
) -> Result<SubadditivityReport> {
    if !(a1 > 0.0 && a1 < params.a) {
        return Err(Error::InvalidParameter(format!("a1 must lie in (0, {}), got {a1}", params.a)));
    }
    let masses = [params.a, a1, params.a - a1];
    let runs: Vec<Result<SolveReport>> =
        masses.par_iter().map(|&m| minimize_default(&params.with_mass(m), grid, opts)).collect();
    let mut reports = Vec::with_capacity(3);
    for r in runs {
        reports.push(r?);
    }
    let gap = reports[1].energy + reports[2].energy - reports[0].energy;
    Ok(SubadditivityReport {
        a: params.a,
        a1,
        m_a: reports[0].energy,
        m_a1: reports[1].energy,
        m_a_minus_a1: reports[2].energy,
        gap,
        strict: gap > 0.0,
        all_converged: reports.iter().all(|r| r.converged),
    })
}
