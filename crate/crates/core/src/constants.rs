//! Exponents, sharp constants and regime thresholds.
//!
//! Every threshold is evaluated in log-space. `S` comes from the Rayleigh
//! quotient of the Aubin–Talenti bubble on a graded grid (Richardson
//! extrapolated), `C_{N,q}` from the Weinstein ground state computed by
//! shooting; neither is hard-coded.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::profiles::{aubin_talenti, WeinsteinSolution};

/// Relative tolerance for deciding `q = 2 + 4/N`.
const CRITICAL_Q_TOL: f64 = 1e-12;
/// Relative tolerance for the Ω₂ (and `ā_N`) equality test, on log quantities.
pub const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub dim: usize,
    pub q: f64,
    pub mu: f64,
    pub a: f64,
}

impl ProblemParams {
    pub fn new(dim: usize, q: f64, mu: f64, a: f64) -> Result<Self> {
        let p = Self { dim, q, mu, a };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {}", self.dim)));
        }
        let two_star = two_star(self.dim);
        if !(self.q > 2.0 && self.q < two_star) {
            return Err(Error::InvalidParameter(format!("q must lie in (2, {two_star}), got {}", self.q)));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidParameter(format!("mass a must be positive, got {}", self.a)));
        }
        Ok(())
    }

    pub fn with_mass(&self, a: f64) -> Self {
        Self { a, ..*self }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self { mu, ..*self }
    }

    /// `μ a^{q(1−γ_q)/2}`, the combination every threshold is stated in.
    pub fn scaled_coupling(&self) -> f64 {
        let e = exponents(self).expect("validated params");
        (self.mu.ln() + e.mass_exponent() * self.a.ln()).exp()
    }
}

/// `2* = 2N/(N − 2)`.
pub fn two_star(dim: usize) -> f64 {
    2.0 * dim as f64 / (dim as f64 - 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QClass {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub q: f64,
    pub two_star: f64,
    pub gamma_q: f64,
    pub q_gamma_q: f64,
    pub q_class: QClass,
}

impl Exponents {
    /// `q(1 − γ_q)/2`, the power of `a` in every threshold.
    pub fn mass_exponent(&self) -> f64 {
        (self.q - self.q_gamma_q) / 2.0
    }
}

pub fn exponents(params: &ProblemParams) -> Result<Exponents> {
    let n = params.dim as f64;
    if params.dim < 3 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {}", params.dim)));
    }
    let ts = two_star(params.dim);
    let q = params.q;
    if !(q > 2.0 && q < ts) {
        return Err(Error::InvalidParameter(format!("q must lie in (2, {ts}), got {q}")));
    }
    let q_crit = 2.0 + 4.0 / n;
    let q_class = if ((q - q_crit) / q_crit).abs() <= CRITICAL_Q_TOL {
        QClass::Critical
    } else if q < q_crit {
        QClass::Subcritical
    } else {
        QClass::Supercritical
    };
    let (gamma_q, q_gamma_q) = match q_class {
        // snap so that qγ_q = 2 holds exactly
        QClass::Critical => (2.0 / q, 2.0),
        _ => {
            let g = n / 2.0 - n / q;
            (g, q * g)
        }
    };
    Ok(Exponents { q, two_star: ts, gamma_q, q_gamma_q, q_class })
}

fn sobolev_cache() -> &'static Mutex<HashMap<usize, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Truncation radius and node count of the coarsest bubble quadrature.
pub const BUBBLE_R_MAX: f64 = 1.0e4;
pub const BUBBLE_NODES: usize = 8192;

/// Rayleigh quotient `‖∇u‖₂²/‖u‖²_{2*}` of the bubble `(b/(b² + r²))^{(N−2)/2}` on `grid`.
pub fn bubble_quotient(grid: &std::sync::Arc<RadialGrid>, b: f64) -> Result<f64> {
    let u = aubin_talenti(grid.dim(), b, grid, 1.0)?;
    let ts = two_star(grid.dim());
    Ok(u.grad_l2_sq() / u.lq_power(ts).powf(2.0 / ts))
}

/// Sharp Sobolev constant `S`.
///
/// The bubble quotient is Richardson-extrapolated twice: in the node count
/// (quadrature error `O(n⁻²)`) and in the truncation radius (the missing
/// gradient tail scales like `R^{2−N}`).
pub fn sobolev_constant(dim: usize) -> Result<f64> {
    if dim < 3 {
        return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {dim}")));
    }
    if let Some(&s) = sobolev_cache().lock().unwrap().get(&dim) {
        return Ok(s);
    }
    let at_radius = |r_max: f64| -> Result<f64> {
        let coarse = bubble_quotient(&RadialGrid::new(dim, r_max, BUBBLE_NODES)?, 1.0)?;
        let fine = bubble_quotient(&RadialGrid::new(dim, r_max, 2 * BUBBLE_NODES)?, 1.0)?;
        Ok((4.0 * fine - coarse) / 3.0)
    };
    let near = at_radius(BUBBLE_R_MAX)?;
    let far = at_radius(2.0 * BUBBLE_R_MAX)?;
    let k = 2f64.powi(dim as i32 - 2);
    let s = (k * far - near) / (k - 1.0);
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::NonFinite(format!("Sobolev quotient for N = {dim}")));
    }
    sobolev_cache().lock().unwrap().insert(dim, s);
    Ok(s)
}

/// Sharp Gagliardo–Nirenberg constant `C_{N,q}`, read off the Weinstein ground state.
pub fn gn_constant(params: &ProblemParams) -> Result<f64> {
    exponents(params)?;
    Ok(WeinsteinSolution::cached(params.dim, params.q)?.gn_quotient())
}

/// The two sharp constants of one `(N, q)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpConstants {
    pub sobolev: f64,
    pub gn: f64,
}

impl SharpConstants {
    pub fn compute(params: &ProblemParams) -> Result<Self> {
        Ok(Self { sobolev: sobolev_constant(params.dim)?, gn: gn_constant(params)? })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Omega1,
    Omega2,
    Omega3,
    /// `q = 2 + 4/N` and `μ a^{q(1−γ_q)/2} < ā_N`.
    BelowAbar,
    /// `q = 2 + 4/N` and `μ a^{q(1−γ_q)/2} ≥ ā_N`.
    AtOrAboveAbar,
}

impl Regime {
    /// Ω₁ ∪ Ω₂, where the local minimizer and the mountain-pass solution exist.
    pub fn admits_minimizer(&self) -> bool {
        matches!(self, Regime::Omega1 | Regime::Omega2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub exponents: Exponents,
    #[serde(rename = "S")]
    pub sobolev: f64,
    #[serde(rename = "C_Nq")]
    pub gn: f64,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub a0: Option<f64>,
    pub rho_crit: Option<f64>,
    pub rho0: Option<f64>,
    #[serde(rename = "abar_N")]
    pub abar: Option<f64>,
    pub regime: Option<Regime>,
}

/// `ln K`; subcritical `q` only.
fn ln_k(e: &Exponents, c: &SharpConstants, q: f64) -> f64 {
    let ts = e.two_star;
    let qg = e.q_gamma_q;
    let ln_s_pow = ts / 2.0 * c.sobolev.ln();
    let inner = ts.ln() + ln_s_pow + (2.0 - qg).ln() + q * c.gn.ln() - q.ln() - (ts - 2.0).ln();
    (ts - qg).ln() - ts.ln() - (2.0 - qg).ln() - ln_s_pow + (ts - 2.0) / (ts - qg) * inner
}

/// `ln((2K)^{(qγ_q − 2*)/(2* − 2)})`, the log of the Ω₂ curve value.
fn ln_omega_threshold(e: &Exponents, c: &SharpConstants, q: f64) -> f64 {
    (e.q_gamma_q - e.two_star) / (e.two_star - 2.0) * (2f64.ln() + ln_k(e, c, q))
}

fn require_subcritical(e: &Exponents, what: &str) -> Result<()> {
    if e.q_class != QClass::Subcritical {
        return Err(Error::Regime(format!("{what} is only defined for q < 2 + 4/N (needs 2 − qγ_q > 0)")));
    }
    Ok(())
}

/// `K`.
pub fn k_constant(params: &ProblemParams, c: &SharpConstants) -> Result<f64> {
    let e = exponents(params)?;
    require_subcritical(&e, "K")?;
    Ok(ln_k(&e, c, params.q).exp())
}

/// `a₀` with `μ a₀^{q(1−γ_q)/2} = (2K)^{(qγ_q−2*)/(2*−2)}` for the given `μ`.
pub fn a0(params: &ProblemParams, c: &SharpConstants) -> Result<f64> {
    let e = exponents(params)?;
    require_subcritical(&e, "a0")?;
    Ok(((ln_omega_threshold(&e, c, params.q) - params.mu.ln()) / e.mass_exponent()).exp())
}

/// `ρ_{μ,a}`, the maximizer of `f_{μ,a}`.
pub fn rho_crit(params: &ProblemParams, c: &SharpConstants) -> Result<f64> {
    let e = exponents(params)?;
    require_subcritical(&e, "rho_{mu,a}")?;
    let (ts, qg, q) = (e.two_star, e.q_gamma_q, params.q);
    let ln_inner = (2.0 - qg).ln() + ts.ln() + ts / 2.0 * c.sobolev.ln() + q * c.gn.ln() + params.mu.ln()
        + e.mass_exponent() * params.a.ln()
        - q.ln()
        - (ts - 2.0).ln();
    Ok((2.0 / (ts - qg) * ln_inner).exp())
}

/// `ρ₀ = ρ_{μ,a₀}`; independent of `μ` and `a`.
pub fn rho0(params: &ProblemParams, c: &SharpConstants) -> Result<f64> {
    let e = exponents(params)?;
    require_subcritical(&e, "rho0")?;
    let (ts, qg) = (e.two_star, e.q_gamma_q);
    let ln_inner = ts.ln() + (2.0 - qg).ln() + ts / 2.0 * c.sobolev.ln() - 2f64.ln() - (ts - qg).ln();
    Ok((2.0 / (ts - 2.0) * ln_inner).exp())
}

/// `ā_N = q/(2C_{N,q}^q)`; critical `q` only.
pub fn abar(params: &ProblemParams, c: &SharpConstants) -> Result<f64> {
    let e = exponents(params)?;
    if e.q_class != QClass::Critical {
        return Err(Error::Regime("abar_N is only defined at q = 2 + 4/N".into()));
    }
    Ok((params.q.ln() - 2f64.ln() - params.q * c.gn.ln()).exp())
}

/// The mass `a` with `μ a^{q(1−γ_q)/2} = k·ā_N` (critical `q`).
pub fn mass_at_abar_multiple(params: &ProblemParams, c: &SharpConstants, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("multiple of abar_N must be positive, got {k}")));
    }
    let e = exponents(params)?;
    Ok(((k.ln() + abar(params, c)?.ln() - params.mu.ln()) / e.mass_exponent()).exp())
}

/// `f_{μ,a}(ρ)`, with `E(u) ≥ ‖∇u‖₂² f_{μ,a}(‖∇u‖₂²)` on `S_a`.
pub fn f_mu_a(params: &ProblemParams, sobolev: f64, gn: f64, rho: f64) -> Result<f64> {
    let e = exponents(params)?;
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
    }
    let ts = e.two_star;
    let crit = (ts / 2.0 - 1.0) * rho.ln() - ts / 2.0 * sobolev.ln();
    let lower = params.q * gn.ln() + e.mass_exponent() * params.a.ln() + (e.q_gamma_q / 2.0 - 1.0) * rho.ln();
    Ok(0.5 - crit.exp() / ts - params.mu / params.q * lower.exp())
}

fn classify_with(params: &ProblemParams, c: &SharpConstants) -> Result<Regime> {
    let e = exponents(params)?;
    let lhs = params.mu.ln() + e.mass_exponent() * params.a.ln();
    let close = |rhs: f64| (lhs - rhs).abs() <= BOUNDARY_TOL * rhs.abs().max(1.0);
    match e.q_class {
        QClass::Subcritical => {
            let rhs = ln_omega_threshold(&e, c, params.q);
            Ok(if close(rhs) {
                Regime::Omega2
            } else if lhs < rhs {
                Regime::Omega1
            } else {
                Regime::Omega3
            })
        }
        QClass::Critical => {
            let rhs = abar(params, c)?.ln();
            Ok(if close(rhs) || lhs > rhs { Regime::AtOrAboveAbar } else { Regime::BelowAbar })
        }
        QClass::Supercritical => Err(Error::Regime("no regime partition for q > 2 + 4/N".into())),
    }
}

/// Ω₁/Ω₂/Ω₃ for subcritical `q`; the `ā_N` comparison at critical `q`.
pub fn classify(params: &ProblemParams) -> Result<Regime> {
    params.validate()?;
    classify_with(params, &SharpConstants::compute(params)?)
}

impl Thresholds {
    pub fn from_constants(params: &ProblemParams, c: &SharpConstants) -> Result<Self> {
        params.validate()?;
        let e = exponents(params)?;
        let sub = e.q_class == QClass::Subcritical;
        let crit = e.q_class == QClass::Critical;
        Ok(Self {
            exponents: e,
            sobolev: c.sobolev,
            gn: c.gn,
            k: if sub { Some(k_constant(params, c)?) } else { None },
            a0: if sub { Some(a0(params, c)?) } else { None },
            rho_crit: if sub { Some(rho_crit(params, c)?) } else { None },
            rho0: if sub { Some(rho0(params, c)?) } else { None },
            abar: if crit { Some(abar(params, c)?) } else { None },
            regime: classify_with(params, c).ok(),
        })
    }

    pub fn constants(&self) -> SharpConstants {
        SharpConstants { sobolev: self.sobolev, gn: self.gn }
    }

    /// `ρ₀`, or a regime error at non-subcritical `q`.
    pub fn rho0_required(&self) -> Result<f64> {
        self.rho0.ok_or_else(|| Error::Regime("rho0 requires q < 2 + 4/N".into()))
    }
}

pub fn thresholds(params: &ProblemParams) -> Result<Thresholds> {
    Thresholds::from_constants(params, &SharpConstants::compute(params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(dim: usize, q: f64) -> ProblemParams {
        ProblemParams::new(dim, q, 1.0, 1.0).unwrap()
    }

    #[test]
    fn exponent_examples() {
        let e = exponents(&p(3, 3.0)).unwrap();
        assert_eq!(e.two_star, 6.0);
        assert_relative_eq!(e.gamma_q, 0.5);
        assert_relative_eq!(e.q_gamma_q, 1.5);
        assert_eq!(e.q_class, QClass::Subcritical);

        let e = exponents(&p(3, 10.0 / 3.0)).unwrap();
        assert_relative_eq!(e.gamma_q, 0.6, max_relative = 1e-14);
        assert_eq!(e.q_gamma_q, 2.0);
        assert_eq!(e.q_class, QClass::Critical);

        let e = exponents(&p(4, 3.0)).unwrap();
        assert_eq!(e.two_star, 4.0);
        assert_relative_eq!(e.gamma_q, 2.0 / 3.0, max_relative = 1e-14);
        assert_eq!(e.q_gamma_q, 2.0);
        assert_eq!(e.q_class, QClass::Critical);

        assert_eq!(exponents(&ProblemParams { dim: 3, q: 5.0, mu: 1.0, a: 1.0 }).unwrap().q_class, QClass::Supercritical);
    }

    #[test]
    fn rejects_q_outside_range() {
        assert!(ProblemParams::new(3, 2.0, 1.0, 1.0).is_err());
        assert!(ProblemParams::new(3, 6.0, 1.0, 1.0).is_err());
        assert!(exponents(&ProblemParams { dim: 3, q: 7.0, mu: 1.0, a: 1.0 }).is_err());
        assert!(ProblemParams::new(3, 3.0, 0.0, 1.0).is_err());
        assert!(ProblemParams::new(3, 3.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn gamma_in_unit_interval() {
        for dim in 3..=6 {
            let ts = two_star(dim);
            for k in 1..20 {
                let q = 2.0 + (ts - 2.0) * k as f64 / 20.0;
                let e = exponents(&p(dim, q)).unwrap();
                assert!(e.gamma_q > 0.0 && e.gamma_q < 1.0);
            }
        }
    }

    #[test]
    fn mass_exponent_matches_definition() {
        let e = exponents(&p(3, 2.5)).unwrap();
        assert_relative_eq!(e.mass_exponent(), 2.5 * (1.0 - 0.3) / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn f_mu_a_limits() {
        let params = p(3, 2.5);
        let (s, c) = (5.478, 0.9);
        assert!(f_mu_a(&params, s, c, 1e-12).unwrap() < -1e2);
        assert!(f_mu_a(&params, s, c, 1e6).unwrap() < 0.0);
        assert!(f_mu_a(&params, s, c, 0.0).is_err());
    }

    #[test]
    fn threshold_requests_outside_their_range_are_rejected() {
        let c = SharpConstants { sobolev: 5.0, gn: 1.0 };
        let crit = p(4, 3.0);
        assert!(k_constant(&crit, &c).is_err());
        assert!(a0(&crit, &c).is_err());
        assert!(rho0(&crit, &c).is_err());
        assert!(abar(&crit, &c).is_ok());
        assert!(abar(&p(3, 2.5), &c).is_err());
    }

    #[test]
    fn rho0_is_rho_crit_at_a0_and_f_vanishes() {
        let c = SharpConstants { sobolev: 5.4, gn: 0.8 };
        for q in [2.3, 2.5, 3.0] {
            let params = ProblemParams::new(3, q, 1.7, 1.0).unwrap();
            let a0 = a0(&params, &c).unwrap();
            let at = params.with_mass(a0);
            let r0 = rho0(&params, &c).unwrap();
            assert_relative_eq!(rho_crit(&at, &c).unwrap(), r0, max_relative = 1e-12);
            let f = f_mu_a(&at, c.sobolev, c.gn, r0).unwrap();
            assert!(f.abs() < 1e-12, "f(rho0) = {f}");
            assert_eq!(classify_with(&at, &c).unwrap(), Regime::Omega2);
            assert_eq!(classify_with(&params.with_mass(a0 / 2.0), &c).unwrap(), Regime::Omega1);
            assert_eq!(classify_with(&params.with_mass(2.0 * a0), &c).unwrap(), Regime::Omega3);
        }
    }

    #[test]
    fn rho0_closed_form_at_n3_q3() {
        let c = SharpConstants { sobolev: 5.478, gn: 0.8 };
        let r0 = rho0(&p(3, 3.0), &c).unwrap();
        assert_relative_eq!(r0, (c.sobolev.powi(3) / 3.0).sqrt(), max_relative = 1e-12);
    }
}
