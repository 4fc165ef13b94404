//! Special radial functions: the Weinstein ground state (by shooting), the
//! Aubin–Talenti bubble, smooth cutoffs, Gaussians and the two-parameter
//! normalization `ũ(x) = αu(βx)`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{exponents, ProblemParams, QClass};
use crate::error::{Error, Result};
use crate::grid::{Profile, RadialGrid};
use crate::interp::Pchip;

/// Controls for the Weinstein shooting solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    /// Initial bracket for `u(0)`; defaults to `[u_*, 2u_*]` (expanded upward)
    /// with `u_*` the positive constant equilibrium.
    pub bracket: Option<(f64, f64)>,
    /// RK4 step in units of the decay length `1/κ`.
    pub step: f64,
    /// Relative gap between the bracketing trajectories at which the computed
    /// solution is cut and continued by its exponential tail.
    pub decay_threshold: f64,
    pub max_iterations: usize,
    /// Bisection stops once the bracket on `u(0)` is narrower than this.
    pub bracket_width: f64,
    /// Integration horizon in units of `1/κ`.
    pub horizon: f64,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self { bracket: None, step: 5e-4, decay_threshold: 1e-3, max_iterations: 200, bracket_width: 1e-12, horizon: 80.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShotOutcome {
    /// `u` crossed zero: `u(0)` too large.
    Crossing,
    /// `u' > 0` while positive: `u(0)` too small.
    TurnsUp,
    Undecided,
}

/// Radial Weinstein equation `A Δu − B u + |u|^{q−2}u = 0`,
/// `A = (q−2)N/4`, `B = 1 + (q−2)(2−N)/4`.
#[derive(Debug, Clone, Copy)]
struct WeinsteinOde {
    dim: f64,
    q: f64,
    a: f64,
    b: f64,
}

impl WeinsteinOde {
    fn new(dim: usize, q: f64) -> Self {
        let n = dim as f64;
        Self { dim: n, q, a: (q - 2.0) * n / 4.0, b: 1.0 + (q - 2.0) * (2.0 - n) / 4.0 }
    }

    fn kappa(&self) -> f64 {
        (self.b / self.a).sqrt()
    }

    fn equilibrium(&self) -> f64 {
        self.b.powf(1.0 / (self.q - 2.0))
    }

    fn accel(&self, r: f64, u: f64, v: f64) -> f64 {
        -(self.dim - 1.0) / r * v + (self.b * u - u.abs().powf(self.q - 2.0) * u) / self.a
    }

    fn rk4(&self, r: f64, h: f64, u: f64, v: f64) -> (f64, f64) {
        let k1u = v;
        let k1v = self.accel(r, u, v);
        let k2u = v + 0.5 * h * k1v;
        let k2v = self.accel(r + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
        let k3u = v + 0.5 * h * k2v;
        let k3v = self.accel(r + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
        let k4u = v + h * k3v;
        let k4v = self.accel(r + h, u + h * k3u, v + h * k3v);
        (u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u), v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))
    }

    /// Integrates from the regular series start; returns the outcome and, if
    /// requested, the states `(u, u')` at `r = 0, h, 2h, …`.
    fn shoot(&self, u0: f64, h: f64, r_end: f64, store: bool) -> (ShotOutcome, Vec<(f64, f64)>) {
        let c = (self.b * u0 - u0.powf(self.q - 1.0)) / (2.0 * self.dim * self.a);
        let mut states = Vec::new();
        if store {
            states.push((u0, 0.0));
        }
        let (mut u, mut v) = (u0 + c * h * h, 2.0 * c * h);
        let steps = (r_end / h).ceil() as usize;
        for k in 1..steps {
            if store {
                states.push((u, v));
            }
            if u < 0.0 {
                return (ShotOutcome::Crossing, states);
            }
            if v > 0.0 {
                return (ShotOutcome::TurnsUp, states);
            }
            (u, v) = self.rk4(k as f64 * h, h, u, v);
        }
        (ShotOutcome::Undecided, states)
    }
}

/// The positive radial ground state `Q` of the Weinstein equation.
#[derive(Debug, Clone)]
pub struct WeinsteinSolution {
    pub dim: usize,
    pub q: f64,
    /// `Q(0)`.
    pub center: f64,
    /// Decay rate `κ = √(B/A)`.
    pub kappa: f64,
    /// Bisection history `(u(0), outcome)`.
    pub history: Vec<(f64, ShotOutcome)>,
    step: f64,
    /// Shooting states `(Q, Q')` on `r = k·step` up to the cut.
    states: Vec<(f64, f64)>,
    interp: Pchip,
    r_cut: f64,
    u_cut: f64,
    mass: f64,
    grad_sq: f64,
    lq_power: f64,
}

fn solution_cache() -> &'static Mutex<HashMap<(usize, u64), Arc<WeinsteinSolution>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Arc<WeinsteinSolution>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl WeinsteinSolution {
    /// Shooting with the default configuration, memoized per `(N, q)`.
    pub fn cached(dim: usize, q: f64) -> Result<Arc<Self>> {
        let key = (dim, q.to_bits());
        if let Some(s) = solution_cache().lock().unwrap().get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(Self::solve(dim, q, &ShootingConfig::default())?);
        solution_cache().lock().unwrap().insert(key, Arc::clone(&s));
        Ok(s)
    }

    pub fn solve(dim: usize, q: f64, cfg: &ShootingConfig) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {dim}")));
        }
        let ts = 2.0 * dim as f64 / (dim as f64 - 2.0);
        if !(q > 2.0 && q < ts) {
            return Err(Error::InvalidParameter(format!("q must lie in (2, {ts}), got {q}")));
        }
        let ode = WeinsteinOde::new(dim, q);
        let kappa = ode.kappa();
        let h = cfg.step / kappa;
        let r_end = cfg.horizon / kappa;
        let mut history = Vec::new();

        let (mut lo, mut hi) = match cfg.bracket {
            Some((lo, hi)) => {
                for u0 in [lo, hi] {
                    history.push((u0, ode.shoot(u0, h, r_end, false).0));
                }
                if history[0].1 != ShotOutcome::TurnsUp || history[1].1 != ShotOutcome::Crossing {
                    return Err(Error::Bracket {
                        message: format!("bracket endpoints gave {:?} / {:?}", history[0].1, history[1].1),
                        lo,
                        hi,
                    });
                }
                (lo, hi)
            }
            None => {
                // below the equilibrium the trajectory turns up immediately
                let lo = ode.equilibrium();
                history.push((lo, ShotOutcome::TurnsUp));
                let mut hi = 2.0 * lo;
                loop {
                    let out = ode.shoot(hi, h, r_end, false).0;
                    history.push((hi, out));
                    if out == ShotOutcome::Crossing {
                        break;
                    }
                    if history.len() > 64 {
                        return Err(Error::Bracket { message: "no crossing trajectory found".into(), lo, hi });
                    }
                    hi *= 2.0;
                }
                (lo, hi)
            }
        };

        let mut iterations = 0;
        while hi - lo > cfg.bracket_width {
            if iterations >= cfg.max_iterations {
                return Err(Error::NonConvergence { iterations, message: format!("shooting bracket [{lo}, {hi}]") });
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let out = ode.shoot(mid, h, r_end, false).0;
            history.push((mid, out));
            match out {
                ShotOutcome::Crossing => hi = mid,
                ShotOutcome::TurnsUp => lo = mid,
                ShotOutcome::Undecided => {
                    return Err(Error::Bracket { message: "trajectory neither crossed nor turned up".into(), lo, hi })
                }
            }
            iterations += 1;
        }

        let (_, low) = ode.shoot(lo, h, r_end, true);
        let (_, high) = ode.shoot(hi, h, r_end, true);
        let len = low.len().min(high.len());
        let mut cut = len - 1;
        for i in 1..len {
            let (ul, vl) = low[i];
            let (uh, _) = high[i];
            if (ul - uh).abs() > cfg.decay_threshold * ul.abs() || ul <= 0.0 || uh <= 0.0 || vl >= 0.0 {
                cut = i - 1;
                break;
            }
        }
        if cut < 16 {
            return Err(Error::NonConvergence { iterations, message: "trajectories separate immediately".into() });
        }
        let mut states: Vec<(f64, f64)> =
            (0..=cut).map(|i| (0.5 * (low[i].0 + high[i].0), 0.5 * (low[i].1 + high[i].1))).collect();
        states[0].1 = 0.0;
        let r_cut = cut as f64 * h;
        let u_cut = states[cut].0;

        let xs: Vec<f64> = (0..=cut).map(|i| i as f64 * h).collect();
        let interp = Pchip::with_slopes(xs, states.iter().map(|s| s.0).collect(), states.iter().map(|s| s.1).collect());

        let mut sol = Self {
            dim,
            q,
            center: 0.5 * (lo + hi),
            kappa,
            history,
            step: h,
            states,
            interp,
            r_cut,
            u_cut,
            mass: 0.0,
            grad_sq: 0.0,
            lq_power: 0.0,
        };
        sol.compute_norms();
        Ok(sol)
    }

    fn tail(&self, r: f64) -> (f64, f64) {
        let p = (self.dim as f64 - 1.0) / 2.0;
        let u = self.u_cut * (self.r_cut / r).powf(p) * (-self.kappa * (r - self.r_cut)).exp();
        (u, -u * (self.kappa + p / r))
    }

    /// `(Q(r), Q'(r))`.
    pub fn eval_with_derivative(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r <= self.r_cut {
            (self.interp.eval(r), self.interp.eval_derivative(r))
        } else {
            self.tail(r)
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.eval_with_derivative(r).0
    }

    /// Radius beyond which the exponential tail continues the shooting solution.
    pub fn cut_radius(&self) -> f64 {
        self.r_cut
    }

    fn compute_norms(&mut self) {
        // Simpson on the shooting lattice, extended through the tail
        let h = self.step;
        let n_total = ((self.r_cut + 50.0 / self.kappa) / h).ceil() as usize;
        let n_total = n_total + (n_total % 2);
        let nd = self.dim as i32;
        let (mut m, mut g, mut l) = (0.0, 0.0, 0.0);
        for i in 0..=n_total {
            let r = i as f64 * h;
            let (u, v) = if i < self.states.len() { self.states[i] } else { self.tail(r) };
            let w = if i == 0 || i == n_total {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            } * r.powi(nd - 1);
            m += w * u * u;
            g += w * v * v;
            l += w * u.abs().powf(self.q);
        }
        let omega = crate::grid::sphere_area(self.dim);
        let scale = omega * h / 3.0;
        self.mass = m * scale;
        self.grad_sq = g * scale;
        self.lq_power = l * scale;
    }

    /// `(‖Q‖₂², ‖∇Q‖₂², ‖Q‖_q^q)` from the fine shooting representation.
    pub fn norms(&self) -> (f64, f64, f64) {
        (self.mass, self.grad_sq, self.lq_power)
    }

    /// `‖Q‖_q / (‖∇Q‖₂^{γ_q} ‖Q‖₂^{1−γ_q})`, the sharp GN constant.
    pub fn gn_quotient(&self) -> f64 {
        let n = self.dim as f64;
        let gamma = n / 2.0 - n / self.q;
        self.lq_power.powf(1.0 / self.q) / (self.grad_sq.powf(gamma / 2.0) * self.mass.powf((1.0 - gamma) / 2.0))
    }

    /// Max-norm residual of the radial ODE on the shooting lattice (fourth-order
    /// differences of the stored `Q'`), excluding the tail continuation.
    pub fn ode_residual(&self) -> f64 {
        let ode = WeinsteinOde::new(self.dim, self.q);
        let h = self.step;
        let s = &self.states;
        (2..s.len() - 2)
            .map(|i| {
                let r = i as f64 * h;
                let dv = (-s[i + 2].1 + 8.0 * s[i + 1].1 - 8.0 * s[i - 1].1 + s[i - 2].1) / (12.0 * h);
                let (u, v) = s[i];
                (ode.a * (dv + (ode.dim - 1.0) / r * v) - ode.b * u + u.abs().powf(ode.q - 2.0) * u).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `α Q(β r)` sampled on `grid`.
    pub fn profile(&self, grid: &Arc<RadialGrid>, alpha: f64, beta: f64) -> Result<Profile> {
        if grid.dim() != self.dim {
            return Err(Error::InvalidParameter(format!("grid dimension {} != {}", grid.dim(), self.dim)));
        }
        Ok(Profile::from_fn(grid, |r| alpha * self.eval(beta * r)))
    }
}

/// Weinstein ground state `Q` on `grid` (unit amplitude and length scale).
pub fn weinstein_ground_state(params: &ProblemParams, grid: &Arc<RadialGrid>) -> Result<Profile> {
    exponents(params)?;
    WeinsteinSolution::cached(params.dim, params.q)?.profile(grid, 1.0, 1.0)
}

/// Aubin–Talenti bubble `C (b/(b² + r²))^{(N−2)/2}`.
pub fn aubin_talenti(dim: usize, b: f64, grid: &Arc<RadialGrid>, c: f64) -> Result<Profile> {
    if !(b > 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter(format!("bubble needs b > 0 and C > 0, got b = {b}, C = {c}")));
    }
    if grid.dim() != dim {
        return Err(Error::InvalidParameter(format!("grid dimension {} != {dim}", grid.dim())));
    }
    let p = (dim as f64 - 2.0) / 2.0;
    Ok(Profile::from_fn(grid, |r| c * (b / (b * b + r * r)).powf(p)))
}

/// Radial cutoff `φ(t)`: 1 on `[0, 1]`, 0 on `[2, ∞)`, quintic smoothstep between (C²).
pub fn cutoff(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let x = t - 1.0;
        1.0 - x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
    }
}

/// `v_n(x) = φ(x/n) u(x)`.
pub fn cutoff_profile(u: &Profile, n: f64) -> Result<Profile> {
    if !(n > 0.0) || 2.0 * n > u.grid().r_max() {
        return Err(Error::InvalidParameter(format!(
            "cutoff radius needs 0 < 2n <= r_max = {}, got n = {n}",
            u.grid().r_max()
        )));
    }
    Ok(u.map(|r, v| cutoff(r / n) * v))
}

/// `c e^{−r²/(2σ²)}` with `c` chosen analytically so that `‖·‖₂² = a`.
pub fn gaussian(params: &ProblemParams, sigma: f64, grid: &Arc<RadialGrid>) -> Result<Profile> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let n = params.dim as f64;
    let c = (params.a / (std::f64::consts::PI * sigma * sigma).powf(n / 2.0)).sqrt();
    Ok(Profile::from_fn(grid, |r| c * (-r * r / (2.0 * sigma * sigma)).exp()))
}

/// `α, β` with `‖α u(β·)‖₂² = a` and `‖α u(β·)‖_q = 1`.
pub fn mass_lq_factors(params: &ProblemParams, l2: f64, lq: f64) -> (f64, f64) {
    let n = params.dim as f64;
    let gamma = n / 2.0 - n / params.q;
    let x = params.a.sqrt() / l2;
    let y = 1.0 / lq;
    let beta = (y / x).powf(1.0 / gamma);
    (y * beta.powf(n / params.q), beta)
}

/// `ũ(x) = αu(βx)` with `‖ũ‖₂² = a`, `‖ũ‖_q = 1`; critical `q = 2 + 4/N` only.
///
/// The dilation is resampled and then corrected by near-identity dilations
/// until both discrete norms match to 1e-12.
pub fn normalize_mass_lq(params: &ProblemParams, u: &Profile) -> Result<Profile> {
    let e = exponents(params)?;
    if e.q_class != QClass::Critical {
        return Err(Error::Regime("the (mass, L^q) normalization is defined for q = 2 + 4/N".into()));
    }
    let mut v = u.clone();
    for _ in 0..12 {
        let l2 = v.mass().sqrt();
        if l2 == 0.0 {
            return Err(Error::InvalidParameter("cannot normalize the zero profile".into()));
        }
        let lq = v.lq_norm(params.q)?;
        if ((l2 * l2 / params.a) - 1.0).abs() < 1e-12 && (lq - 1.0).abs() < 1e-12 {
            return Ok(v);
        }
        let (alpha, beta) = mass_lq_factors(params, l2, lq);
        v = v.dilate(alpha, beta);
    }
    let (l2, lq) = (v.mass().sqrt(), v.lq_norm(params.q)?);
    if ((l2 * l2 / params.a) - 1.0).abs() < 1e-6 && (lq - 1.0).abs() < 1e-6 {
        Ok(v)
    } else {
        Err(Error::NonConvergence {
            iterations: 12,
            message: format!(
                "normalization reached mass {} (target {}) and L^q norm {lq}; the dilated profile may not fit in r_max = {}",
                l2 * l2,
                params.a,
                u.grid().r_max()
            ),
        })
    }
}

/// Rescales amplitude so that `‖u‖₂² = a`.
pub fn with_mass(u: &Profile, a: f64) -> Result<Profile> {
    let m = u.mass();
    if !(m > 0.0) {
        return Err(Error::InvalidParameter("cannot renormalize the zero profile".into()));
    }
    Ok(u.scaled((a / m).sqrt()))
}

/// Seeded trial function: Gaussian of random width with a random positive
/// quadratic modulation, renormalized to mass `a`.
pub fn random_trial<R: Rng + ?Sized>(grid: &Arc<RadialGrid>, a: f64, rng: &mut R) -> Result<Profile> {
    let sigma = (rng.gen_range(0.4f64.ln()..3.0f64.ln())).exp();
    let c1 = rng.gen_range(0.0..1.0);
    let c2 = rng.gen_range(0.0..1.0);
    let u = Profile::from_fn(grid, |r| {
        let t = r / sigma;
        (-0.5 * t * t).exp() * (1.0 + c1 * t + c2 * t * t)
    });
    with_mass(&u, a)
}
