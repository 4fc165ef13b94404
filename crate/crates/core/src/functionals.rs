//! Energy, Pohozaev functional and the fiber maps along mass-preserving dilations.
//!
//! Everything here is expressed through four integrals of `u`:
//! the mass, `∫|∇u|²`, `∫|u|^{2*}` and `∫|u|^q`. Along `u_τ(x) = τ^{N/2}u(τx)`
//! they scale like `1`, `τ²`, `τ^{2*}` and `τ^{qγ_q}`, so the fiber maps are
//! closed-form in `τ` once the integrals are known.

use serde::{Deserialize, Serialize};

use crate::constants::{classify, exponents, Exponents, ProblemParams, QClass};
use crate::error::{Error, Result};
use crate::grid::Profile;
use crate::linalg::brent;

/// Relative tolerance for membership of the mass sphere `S_a`.
pub const MASS_TOL: f64 = 1e-6;

/// Default number of log-spaced samples in the fiber scan.
pub const FIBER_SAMPLES: usize = 512;

/// The integrals the functionals are built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub mass: f64,
    pub grad_sq: f64,
    /// `∫|u|^{2*}`.
    pub critical_power: f64,
    /// `∫|u|^q`.
    pub lq_power: f64,
}

impl Norms {
    pub fn of(params: &ProblemParams, u: &Profile) -> Result<Self> {
        let e = exponents(params)?;
        check_dim(params, u)?;
        Ok(Self {
            mass: u.mass(),
            grad_sq: u.grad_l2_sq(),
            critical_power: u.lq_power(e.two_star),
            lq_power: u.lq_power(params.q),
        })
    }

    pub fn energy(&self, params: &ProblemParams, e: &Exponents) -> f64 {
        0.5 * self.grad_sq - self.critical_power / e.two_star - params.mu / params.q * self.lq_power
    }

    pub fn pohozaev(&self, params: &ProblemParams, e: &Exponents) -> f64 {
        self.grad_sq - self.critical_power - params.mu * e.gamma_q * self.lq_power
    }

    /// `(‖∇u‖² − ‖u‖^{2*}_{2*} − μ‖u‖_q^q) / ‖u‖₂²`.
    pub fn lagrange_multiplier(&self, params: &ProblemParams) -> f64 {
        (self.grad_sq - self.critical_power - params.mu * self.lq_power) / self.mass
    }

    /// The integrals of `u_τ`.
    pub fn dilated(&self, e: &Exponents, tau: f64) -> Self {
        Self {
            mass: self.mass,
            grad_sq: tau * tau * self.grad_sq,
            critical_power: tau.powf(e.two_star) * self.critical_power,
            lq_power: tau.powf(e.q_gamma_q) * self.lq_power,
        }
    }
}

fn check_dim(params: &ProblemParams, u: &Profile) -> Result<()> {
    if u.grid().dim() != params.dim {
        return Err(Error::InvalidParameter(format!(
            "profile lives in dimension {}, parameters in {}",
            u.grid().dim(),
            params.dim
        )));
    }
    Ok(())
}

pub fn energy(params: &ProblemParams, u: &Profile) -> Result<f64> {
    let e = exponents(params)?;
    Ok(Norms::of(params, u)?.energy(params, &e))
}

pub fn pohozaev(params: &ProblemParams, u: &Profile) -> Result<f64> {
    let e = exponents(params)?;
    Ok(Norms::of(params, u)?.pohozaev(params, &e))
}

pub fn lagrange_multiplier(params: &ProblemParams, u: &Profile) -> Result<f64> {
    Ok(Norms::of(params, u)?.lagrange_multiplier(params))
}

/// `E'(u) = −Δ_h u − |u|^{2*−2}u − μ|u|^{q−2}u`, the weighted-`L²` gradient of the
/// discrete energy.
pub fn energy_gradient(params: &ProblemParams, u: &Profile) -> Result<Vec<f64>> {
    let e = exponents(params)?;
    check_dim(params, u)?;
    let mut g = u.grid().neg_laplacian(u.values());
    for (gi, &v) in g.iter_mut().zip(u.values()) {
        let m = v.abs();
        *gi -= m.powf(e.two_star - 2.0) * v + params.mu * m.powf(params.q - 2.0) * v;
    }
    Ok(g)
}

/// `f(u) = ‖∇u‖^{qγ_q} ‖u‖₂^{q(1−γ_q)} / ‖u‖_q^q`; its infimum is `C_{N,q}^{−q}`.
pub fn gn_functional(params: &ProblemParams, u: &Profile) -> Result<f64> {
    let e = exponents(params)?;
    let n = Norms::of(params, u)?;
    Ok(gn_functional_of(params, &e, &n))
}

pub fn gn_functional_of(params: &ProblemParams, e: &Exponents, n: &Norms) -> f64 {
    n.grad_sq.powf(e.q_gamma_q / 2.0) * n.mass.powf((params.q - e.q_gamma_q) / 2.0) / n.lq_power
}

/// `Ψ_u(τ) = E(u_τ)`.
pub fn fiber_energy(params: &ProblemParams, e: &Exponents, n: &Norms, tau: f64) -> f64 {
    n.dilated(e, tau).energy(params, e)
}

/// `Φ_u(τ) = P(u_τ) = τΨ'_u(τ)`.
pub fn fiber_pohozaev(params: &ProblemParams, e: &Exponents, n: &Norms, tau: f64) -> f64 {
    n.dilated(e, tau).pohozaev(params, e)
}

/// `Ψ''_u(τ)`.
pub fn fiber_second_derivative(params: &ProblemParams, e: &Exponents, n: &Norms, tau: f64) -> f64 {
    let ts = e.two_star;
    let qg = e.q_gamma_q;
    n.grad_sq
        - (ts - 1.0) * tau.powf(ts - 2.0) * n.critical_power
        - params.mu * e.gamma_q * (qg - 1.0) * tau.powf(qg - 2.0) * n.lq_power
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberSample {
    pub tau: f64,
    pub psi: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberReport {
    /// Local minimum of `Ψ_u` (subcritical `q` only).
    pub tau_plus: Option<f64>,
    /// Global maximum of `Ψ_u`; at critical `q` the unique critical point `τ_u`.
    pub tau_minus: Option<f64>,
    pub energy_at_tau_plus: Option<f64>,
    pub energy_at_tau_minus: Option<f64>,
    pub psi_second_at_tau_minus: Option<f64>,
    /// Critical `q` with `‖∇u‖² ≤ μγ_q‖u‖_q^q`: `Ψ_u` has no critical point.
    pub strictly_decreasing: bool,
    pub samples: Vec<FiberSample>,
}

/// Which critical point of the fiber map to move to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiberBranch {
    Plus,
    Minus,
}

fn check_mass(params: &ProblemParams, mass: f64) -> Result<()> {
    if !((mass / params.a - 1.0).abs() <= MASS_TOL) {
        return Err(Error::MassViolation { expected: params.a, got: mass });
    }
    Ok(())
}

/// `Φ_u(e^t)/e^{2t}`: same sign as `Φ_u`, bounded growth in `t`.
fn reduced_phi(params: &ProblemParams, e: &Exponents, n: &Norms, t: f64) -> f64 {
    n.grad_sq
        - (t * (e.two_star - 2.0)).exp() * n.critical_power
        - params.mu * e.gamma_q * (t * (e.q_gamma_q - 2.0)).exp() * n.lq_power
}

/// Roots of `Φ_u` in `log τ`, located by a scan over `[−6, 6]` (extended
/// while the end samples are positive) and refined by Brent.
fn fiber_roots(params: &ProblemParams, e: &Exponents, n: &Norms, samples: usize) -> Result<(Vec<f64>, Vec<FiberSample>)> {
    let (mut lo, mut hi) = (-6.0f64, 6.0f64);
    let h = |t: f64| reduced_phi(params, e, n, t);
    for _ in 0..20 {
        if h(lo) > 0.0 && e.q_class == QClass::Subcritical {
            lo -= 6.0;
        } else {
            break;
        }
    }
    for _ in 0..20 {
        if h(hi) > 0.0 {
            hi += 6.0;
        } else {
            break;
        }
    }
    let ts: Vec<f64> = (0..samples).map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64).collect();
    let vals: Vec<f64> = ts.iter().map(|&t| h(t)).collect();
    let mut roots = Vec::new();
    for k in 0..samples - 1 {
        if vals[k] == 0.0 {
            roots.push(ts[k]);
        } else if vals[k] * vals[k + 1] < 0.0 {
            roots.push(brent(h, ts[k], ts[k + 1], 1e-14, 200)?);
        }
    }
    let samples = ts
        .iter()
        .map(|&t| {
            let tau = t.exp();
            FiberSample { tau, psi: fiber_energy(params, e, n, tau), phi: fiber_pohozaev(params, e, n, tau) }
        })
        .collect();
    Ok((roots.into_iter().map(f64::exp).collect(), samples))
}

pub fn fiber_critical_points(params: &ProblemParams, u: &Profile) -> Result<FiberReport> {
    fiber_critical_points_with(params, u, FIBER_SAMPLES)
}

pub fn fiber_critical_points_with(params: &ProblemParams, u: &Profile, samples: usize) -> Result<FiberReport> {
    let e = exponents(params)?;
    let n = Norms::of(params, u)?;
    check_mass(params, n.mass)?;
    if samples < 16 {
        return Err(Error::InvalidParameter(format!("fiber scan needs at least 16 samples, got {samples}")));
    }
    fiber_report_of(params, &e, &n, samples)
}

/// Fiber analysis from precomputed integrals (no mass check).
pub fn fiber_report_of(params: &ProblemParams, e: &Exponents, n: &Norms, samples: usize) -> Result<FiberReport> {
    match e.q_class {
        QClass::Supercritical => {
            Err(Error::Regime("fiber structure is analysed only for q <= 2 + 4/N".into()))
        }
        QClass::Subcritical => {
            let regime = classify(params)?;
            if !regime.admits_minimizer() {
                return Err(Error::Regime(format!(
                    "regime {regime:?}: the two-critical-point fiber structure is only guaranteed in Omega1/Omega2"
                )));
            }
            let (roots, samples) = fiber_roots(params, e, n, samples)?;
            if roots.len() != 2 {
                return Err(Error::StructuralAnomaly(format!(
                    "expected two fiber critical points in {regime:?}, found {}",
                    roots.len()
                )));
            }
            let (tp, tm) = (roots[0], roots[1]);
            Ok(FiberReport {
                tau_plus: Some(tp),
                tau_minus: Some(tm),
                energy_at_tau_plus: Some(fiber_energy(params, e, n, tp)),
                energy_at_tau_minus: Some(fiber_energy(params, e, n, tm)),
                psi_second_at_tau_minus: Some(fiber_second_derivative(params, e, n, tm)),
                strictly_decreasing: false,
                samples,
            })
        }
        QClass::Critical => {
            let (roots, samples) = fiber_roots(params, e, n, samples)?;
            let excess = n.grad_sq - params.mu * e.gamma_q * n.lq_power;
            if excess <= 0.0 {
                if !roots.is_empty() {
                    return Err(Error::StructuralAnomaly("fiber root found although Psi should be decreasing".into()));
                }
                return Ok(FiberReport {
                    tau_plus: None,
                    tau_minus: None,
                    energy_at_tau_plus: None,
                    energy_at_tau_minus: None,
                    psi_second_at_tau_minus: None,
                    strictly_decreasing: true,
                    samples,
                });
            }
            let tau = (excess / n.critical_power).powf(1.0 / (e.two_star - 2.0));
            match roots.as_slice() {
                [r] if (r / tau - 1.0).abs() < 1e-8 => {}
                _ => {
                    return Err(Error::StructuralAnomaly(format!(
                        "closed-form tau_u = {tau} not matched by the scan roots {roots:?}"
                    )))
                }
            }
            Ok(FiberReport {
                tau_plus: None,
                tau_minus: Some(tau),
                energy_at_tau_plus: None,
                energy_at_tau_minus: Some(fiber_energy(params, e, n, tau)),
                psi_second_at_tau_minus: Some(fiber_second_derivative(params, e, n, tau)),
                strictly_decreasing: false,
                samples,
            })
        }
    }
}

/// Moves `u` to a critical point of its fiber map, iterating on the resampled
/// profile until the discrete `|P| < rel_tol·‖∇u‖²`.
///
/// One dilation is exact only up to interpolation error; the correction steps
/// re-solve the fiber problem for the resampled profile.
pub fn move_to_fiber_point(params: &ProblemParams, u: &Profile, branch: FiberBranch, rel_tol: f64) -> Result<Profile> {
    let e = exponents(params)?;
    let mut v = u.clone();
    for _ in 0..30 {
        let n = Norms::of(params, &v)?;
        if n.pohozaev(params, &e).abs() < rel_tol * n.grad_sq {
            let report = fiber_report_of(params, &e, &n, FIBER_SAMPLES)?;
            let on_branch = match branch {
                FiberBranch::Plus => report.tau_plus,
                FiberBranch::Minus => report.tau_minus,
            };
            if on_branch.is_some_and(|t| (t - 1.0).abs() < 1e-3) {
                return Ok(v);
            }
        }
        let report = fiber_report_of(params, &e, &n, FIBER_SAMPLES)?;
        let tau = match branch {
            FiberBranch::Plus => report.tau_plus,
            FiberBranch::Minus => report.tau_minus,
        }
        .ok_or_else(|| Error::Regime(format!("no {branch:?} fiber critical point: Psi is strictly decreasing")))?;
        v = v.rescale(tau)?;
    }
    Err(Error::NonConvergence { iterations: 30, message: format!("fiber projection onto {branch:?} branch") })
}
