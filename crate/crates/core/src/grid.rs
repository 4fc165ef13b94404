//! Radial discretization of ℝ^N.
//!
//! Nodes come from the algebraic map `r(s) = r_max·s²/(1 + (1 − s²)·c)` applied
//! to the uniform points `s_j = j/n`, `j = 1..=n`, so the last node sits at
//! `r_max` and nodes cluster quadratically toward the origin (`c ≥ 0` clusters
//! further). Integrals are taken in the `s` variable with the fourth-order
//! end-corrected trapezoidal rule; the `s = 0` node is dropped because the
//! radial measure `r^{N−1}` vanishes there.
//!
//! The kinetic form is the staggered second-order difference
//! `ω Σ_j κ_j (u_{j+1} − u_j)²` with `κ_j = (r_{j+1}^N − r_j^N) / (N (r_{j+1} − r_j)²)`;
//! its gradient in the weighted inner product is the three-point operator
//! returned by [`RadialGrid::neg_laplacian`].

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::linalg::solve_tridiagonal;

/// Smallest accepted node count.
pub const MIN_NODES: usize = 16;

/// Surface area `ω_{N−1} = 2π^{N/2}/Γ(N/2)` of the unit sphere in ℝ^N.
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma(dim as f64 / 2.0)
}

/// Layout of a grid, sufficient to rebuild it bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub r_max: f64,
    pub n: usize,
    #[serde(default)]
    pub stretch: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<RadialGrid>> {
        RadialGrid::with_stretch(self.dim, self.r_max, self.n, self.stretch)
    }
}

#[derive(Debug, Clone)]
pub struct RadialGrid {
    spec: GridSpec,
    omega: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kappa: Vec<f64>,
}

impl RadialGrid {
    /// Grid with the default layout (`c = 0`).
    pub fn new(dim: usize, r_max: f64, n: usize) -> Result<Arc<Self>> {
        Self::with_stretch(dim, r_max, n, 0.0)
    }

    pub fn with_stretch(dim: usize, r_max: f64, n: usize, stretch: f64) -> Result<Arc<Self>> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {dim}")));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("r_max must be positive, got {r_max}")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidParameter(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        if !(stretch >= 0.0 && stretch.is_finite()) {
            return Err(Error::InvalidParameter(format!("stretch must be non-negative, got {stretch}")));
        }
        let h = 1.0 / n as f64;
        let c = stretch;
        let map = |s: f64| {
            let den = 1.0 + (1.0 - s * s) * c;
            (r_max * s * s / den, 2.0 * r_max * s * (1.0 + c) / (den * den))
        };
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for j in 1..=n {
            let s = j as f64 * h;
            let (r, dr) = map(s);
            let r = if j == n { r_max } else { r };
            let from_end = n - j;
            let corr = match j.min(from_end) {
                0 => 3.0 / 8.0,
                1 => 7.0 / 6.0,
                2 => 23.0 / 24.0,
                _ => 1.0,
            };
            nodes.push(r);
            weights.push(corr * h * dr * r.powi(dim as i32 - 1));
        }
        let nd = dim as i32;
        let kappa = nodes
            .windows(2)
            .map(|w| {
                let dr = w[1] - w[0];
                (w[1].powi(nd) - w[0].powi(nd)) / (dim as f64 * dr * dr)
            })
            .collect();
        Ok(Arc::new(Self {
            spec: GridSpec { dim, r_max, n, stretch },
            omega: sphere_area(dim),
            nodes,
            weights,
            kappa,
        }))
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn r_max(&self) -> f64 {
        self.spec.r_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `ω_{N−1}` for this dimension.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Radial quadrature weights; already include `r^{N−1}` but not `ω_{N−1}`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Staggered kinetic coefficients `κ_j` between nodes `j` and `j + 1`.
    pub fn kinetic_coefficients(&self) -> &[f64] {
        &self.kappa
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.len() {
            return Err(Error::ShapeMismatch { expected: self.len(), got: len });
        }
        Ok(())
    }

    /// `∫_{ℝ^N} f dx = ω_{N−1} Σ w_i f(r_i)`.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check(f.len())?;
        Ok(self.omega * f.iter().zip(&self.weights).map(|(v, w)| v * w).sum::<f64>())
    }

    pub fn integrate_fn<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.omega * self.nodes.iter().zip(&self.weights).map(|(&r, w)| f(r) * w).sum::<f64>()
    }

    /// Weighted inner product `⟨u, v⟩ = ∫ u v dx`.
    pub fn dot(&self, u: &[f64], v: &[f64]) -> f64 {
        self.omega * u.iter().zip(v).zip(&self.weights).map(|((a, b), w)| a * b * w).sum::<f64>()
    }

    /// Discrete `∫|∇u|² dx`.
    pub fn kinetic_form(&self, u: &[f64]) -> f64 {
        self.omega * u.windows(2).zip(&self.kappa).map(|(p, k)| k * (p[1] - p[0]).powi(2)).sum::<f64>()
    }

    /// `∫ ∇u·∇v dx` for the same discretization as [`kinetic_form`](Self::kinetic_form).
    pub fn kinetic_bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        self.omega
            * u.windows(2)
                .zip(v.windows(2))
                .zip(&self.kappa)
                .map(|((a, b), k)| k * (a[1] - a[0]) * (b[1] - b[0]))
                .sum::<f64>()
    }

    /// `−Δ_h u`: the gradient of `½∫|∇u|²` in the weighted inner product.
    pub fn neg_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let k = &self.kappa;
        (0..n)
            .map(|i| {
                let mut acc = 0.0;
                if i > 0 {
                    acc += k[i - 1] * (u[i] - u[i - 1]);
                }
                if i + 1 < n {
                    acc += k[i] * (u[i] - u[i + 1]);
                }
                acc / self.weights[i]
            })
            .collect()
    }

    /// Solves `(shift − Δ_h) x = rhs` with `x = 0` at `r_max` (Dirichlet).
    pub fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let m = self.len() - 1;
        let k = &self.kappa;
        let w = &self.weights;
        let diag: Vec<f64> = (0..m)
            .map(|i| shift * w[i] + k[i] + if i > 0 { k[i - 1] } else { 0.0 })
            .collect();
        let off: Vec<f64> = (0..m - 1).map(|i| -k[i]).collect();
        let b: Vec<f64> = (0..m).map(|i| w[i] * rhs[i]).collect();
        let mut x = solve_tridiagonal(&off, &diag, &off, &b);
        x.push(0.0);
        x
    }

    /// Nodal first derivative: centered three-point differences, even reflection at
    /// the origin, one-sided at `r_max`.
    pub fn derivative(&self, u: &[f64]) -> Vec<f64> {
        let r = &self.nodes;
        let n = r.len();
        let three = |x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64| {
            let h1 = x1 - x0;
            let h2 = x2 - x1;
            -h2 / (h1 * (h1 + h2)) * y0 + (h2 - h1) / (h1 * h2) * y1 + h1 / (h2 * (h1 + h2)) * y2
        };
        let mut d = Vec::with_capacity(n);
        d.push(three(-r[0], r[0], r[1], u[0], u[0], u[1]));
        for i in 1..n - 1 {
            d.push(three(r[i - 1], r[i], r[i + 1], u[i - 1], u[i], u[i + 1]));
        }
        let (x0, x1, x2) = (r[n - 3], r[n - 2], r[n - 1]);
        let (h1, h2) = (x1 - x0, x2 - x1);
        d.push(h2 / (h1 * (h1 + h2)) * u[n - 3] - (h1 + h2) / (h1 * h2) * u[n - 2] + (2.0 * h2 + h1) / (h2 * (h1 + h2)) * u[n - 1]);
        d
    }
}

/// A real radial function sampled on the nodes of a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct Profile {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        grid.check(values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("profile value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Arc<RadialGrid>, f: F) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid: Arc::clone(grid), values }
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        Self { grid: Arc::clone(grid), values: vec![0.0; grid.len()] }
    }

    /// Resamples arbitrary `(r, value)` samples onto `grid` by monotone cubic
    /// interpolation; zero beyond the last sample.
    pub fn from_samples(grid: &Arc<RadialGrid>, r: &[f64], v: &[f64]) -> Result<Self> {
        if r.len() != v.len() || r.len() < 3 {
            return Err(Error::Format("need at least three (r, value) samples of equal length".into()));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) || r[0] < 0.0 {
            return Err(Error::Format("sample radii must be non-negative and strictly increasing".into()));
        }
        let p = Pchip::new(r.to_vec(), v.to_vec());
        let r_last = *r.last().unwrap();
        Self::new(
            Arc::clone(grid),
            grid.nodes().iter().map(|&x| if x > r_last { 0.0 } else { p.eval(x) }).collect(),
        )
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.grid), values)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: Arc::clone(&self.grid), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn map<F: Fn(f64, f64) -> f64>(&self, f: F) -> Self {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&r, &v)| f(r, v)).collect();
        Self { grid: Arc::clone(&self.grid), values }
    }

    /// `∫|u|^t dx`.
    pub fn lq_power(&self, t: f64) -> f64 {
        self.grid.integrate_fn_values(&self.values, |v| v.abs().powf(t))
    }

    /// `‖u‖_t = (∫|u|^t dx)^{1/t}`, `t ≥ 1`.
    pub fn lq_norm(&self, t: f64) -> Result<f64> {
        if !(t >= 1.0) {
            return Err(Error::InvalidParameter(format!("L^t norm needs t >= 1, got {t}")));
        }
        Ok(self.lq_power(t).powf(1.0 / t))
    }

    /// `‖u‖₂²`.
    pub fn mass(&self) -> f64 {
        self.grid.dot(&self.values, &self.values)
    }

    /// `‖∇u‖₂²`.
    pub fn grad_l2_sq(&self) -> f64 {
        self.grid.kinetic_form(&self.values)
    }

    /// `‖u‖²_{H¹} = ‖∇u‖₂² + ‖u‖₂²`.
    pub fn h1_sq(&self) -> f64 {
        self.grad_l2_sq() + self.mass()
    }

    pub fn derivative(&self) -> Vec<f64> {
        self.grid.derivative(&self.values)
    }

    /// Monotone cubic interpolant of `u` with the even extension through the origin.
    pub fn interpolant(&self) -> Pchip {
        let r = self.grid.nodes();
        let mut x = vec![-r[1], -r[0]];
        x.extend_from_slice(r);
        let mut y = vec![self.values[1], self.values[0]];
        y.extend_from_slice(&self.values);
        Pchip::new(x, y)
    }

    /// Mass-preserving dilation `u_τ(x) = τ^{N/2} u(τx)`, resampled on the same grid.
    pub fn rescale(&self, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("dilation factor must be positive, got {tau}")));
        }
        if tau == 1.0 {
            return Ok(self.clone());
        }
        Ok(self.dilate(tau.powf(self.grid.dim() as f64 / 2.0), tau))
    }

    /// `α u(βx)` resampled on the same grid; zero where `βr > r_max`.
    pub fn dilate(&self, alpha: f64, beta: f64) -> Self {
        let p = self.interpolant();
        let r_max = self.grid.r_max();
        let values = self
            .grid
            .nodes()
            .iter()
            .map(|&r| {
                let x = beta * r;
                if x > r_max {
                    0.0
                } else {
                    alpha * p.eval(x)
                }
            })
            .collect();
        Self { grid: Arc::clone(&self.grid), values }
    }
}

impl RadialGrid {
    fn integrate_fn_values<F: Fn(f64) -> f64>(&self, v: &[f64], f: F) -> f64 {
        self.omega * v.iter().zip(&self.weights).map(|(&x, w)| f(x) * w).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_bad_layouts() {
        assert!(RadialGrid::new(2, 1.0, 64).is_err());
        assert!(RadialGrid::new(3, 0.0, 64).is_err());
        assert!(RadialGrid::new(3, -1.0, 64).is_err());
        assert!(RadialGrid::new(3, 1.0, 8).is_err());
        assert!(RadialGrid::with_stretch(3, 1.0, 64, -1.0).is_err());
    }

    #[test]
    fn nodes_increasing_weights_positive() {
        for c in [0.0, 3.0] {
            let g = RadialGrid::with_stretch(4, 30.0, 257, c).unwrap();
            assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
            assert!(g.nodes()[0] > 0.0);
            assert_eq!(*g.nodes().last().unwrap(), 30.0);
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn ball_volume_and_gaussians() {
        let g = RadialGrid::new(3, 1.0, 4096).unwrap();
        assert_relative_eq!(g.integrate(&vec![1.0; 4096]).unwrap(), 4.0 * PI / 3.0, max_relative = 1e-10);
        let g = RadialGrid::new(3, 20.0, 4096).unwrap();
        assert_relative_eq!(g.integrate_fn(|r| (-r * r).exp()), PI.powf(1.5), max_relative = 1e-10);
        let g = RadialGrid::new(4, 20.0, 4096).unwrap();
        assert_relative_eq!(g.integrate_fn(|r| (-r * r).exp()), PI * PI, max_relative = 1e-10);
        assert_eq!(g.integrate(&vec![0.0; 4096]).unwrap(), 0.0);
        assert!(g.integrate(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn low_degree_polynomials_integrate_exactly() {
        for dim in 3..=5 {
            // the stretched map has large high derivatives near s = 1
            for (c, tol) in [(0.0, 1e-10), (2.0, 1e-7)] {
                let g = RadialGrid::with_stretch(dim, 2.0, 2048, c).unwrap();
                for deg in 0..=3 {
                    let exact = g.omega() * 2f64.powi((deg + dim) as i32) / (deg + dim) as f64;
                    assert_relative_eq!(g.integrate_fn(|r| r.powi(deg as i32)), exact, max_relative = tol);
                }
            }
        }
    }

    #[test]
    fn gaussian_norms() {
        let g = RadialGrid::new(3, 20.0, 4096).unwrap();
        let u = Profile::from_fn(&g, |r| (-r * r / 2.0).exp());
        assert_relative_eq!(u.lq_norm(2.0).unwrap(), PI.powf(0.75), max_relative = 1e-9);
        assert_relative_eq!(u.lq_norm(6.0).unwrap(), (PI / 3.0).powf(1.5).powf(1.0 / 6.0), max_relative = 1e-9);
        assert_relative_eq!(u.grad_l2_sq(), 1.5 * PI.powf(1.5), max_relative = 1e-5);
        assert_eq!(Profile::zeros(&g).lq_norm(3.0).unwrap(), 0.0);
        assert!(u.lq_norm(0.5).is_err());
    }

    #[test]
    fn plateau_has_no_interior_gradient() {
        let g = RadialGrid::new(3, 10.0, 1024).unwrap();
        let u = Profile::from_fn(&g, |_| 2.5);
        assert_eq!(u.grad_l2_sq(), 0.0);
    }

    #[test]
    fn dilation_identities() {
        let g = RadialGrid::new(3, 20.0, 4096).unwrap();
        let u = Profile::from_fn(&g, |r| (-r * r / 2.0).exp() * (1.0 + 0.3 * r));
        assert_eq!(u.rescale(1.0).unwrap().values(), u.values());
        let m = u.mass();
        let gs = u.grad_l2_sq();
        let l4 = u.lq_power(4.0);
        for tau in [0.25, 0.5, 2.0, 4.0] {
            let v = u.rescale(tau).unwrap();
            assert_relative_eq!(v.mass(), m, max_relative = 1e-6);
            assert_relative_eq!(v.grad_l2_sq(), tau * tau * gs, max_relative = 1e-4);
            assert_relative_eq!(v.lq_power(4.0), tau.powi(3) * l4, max_relative = 1e-5);
        }
        assert!(u.rescale(0.0).is_err());
        let gauss = Profile::from_fn(&g, |r| (-r * r / 2.0).exp());
        assert_relative_eq!(gauss.rescale(2.0).unwrap().grad_l2_sq(), 4.0 * 1.5 * PI.powf(1.5), max_relative = 1e-4);
    }

    #[test]
    fn shifted_solve_inverts_operator() {
        let g = RadialGrid::new(3, 10.0, 200).unwrap();
        let mut x: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
        *x.last_mut().unwrap() = 0.0;
        let lap = g.neg_laplacian(&x);
        let rhs: Vec<f64> = x.iter().zip(&lap).map(|(a, b)| 0.7 * a + b).collect();
        let y = g.solve_shifted(0.7, &rhs);
        for (a, b) in x.iter().zip(&y).take(199) {
            assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn neg_laplacian_is_weighted_gradient_of_kinetic_form() {
        let g = RadialGrid::new(4, 8.0, 64).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r / 4.0).exp()).collect();
        let v: Vec<f64> = g.nodes().iter().map(|r| (1.0 + r).recip()).collect();
        let lhs = g.dot(&g.neg_laplacian(&u), &v);
        assert_relative_eq!(lhs, g.kinetic_bilinear(&u, &v), max_relative = 1e-12);
    }

    #[test]
    fn nodal_derivative_second_order() {
        let g = RadialGrid::new(3, 10.0, 2048).unwrap();
        let u: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        let d = g.derivative(&u);
        for (r, di) in g.nodes().iter().zip(&d) {
            assert!((di + 2.0 * r * (-r * r).exp()).abs() < 1e-4);
        }
    }
}
