//! Radial initial data: Gaussian base profiles and the dense blow-up family
//! obtained by replacing the base inside `B_{r_j}` with power-type spikes.
//!
//! The spike width `η_j` is astronomically small for moderate `j`, so it is
//! carried by its logarithm and every integral over the spike is taken in the
//! variable `t = ln r`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::energy::energy;
use crate::error::{config, Error, Result};
use crate::grid::{unit_sphere_area, RadialGrid};
use crate::model::{summarize_initial, FieldState, ModelParams};
use crate::quadrature::{integrate, QuadOptions};

/// `A · exp(−(r/σ)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianProfile {
    pub amplitude: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl GaussianProfile {
    pub fn new(amplitude: f64, scale: f64) -> Result<Self> {
        if !(amplitude > 0.0 && scale > 0.0) || !amplitude.is_finite() || !scale.is_finite() {
            return Err(config(format!(
                "profile amplitude and scale must be positive, got {amplitude} and {scale}"
            )));
        }
        Ok(Self { amplitude, scale })
    }

    pub fn value(&self, r: f64) -> f64 {
        let s = r / self.scale;
        self.amplitude * (-s * s).exp()
    }

    pub fn slope(&self, r: f64) -> f64 {
        -2.0 * r / (self.scale * self.scale) * self.value(r)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            amplitude: self.amplitude * factor,
            scale: self.scale,
        }
    }

    /// Radius beyond which the profile is below `e^{-150}` of its peak.
    fn support(&self) -> f64 {
        self.scale * 150.0_f64.sqrt()
    }
}

/// The three base profiles `(u₀, v₀, w₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseProfiles {
    pub u0: GaussianProfile,
    pub v0: GaussianProfile,
    pub w0: GaussianProfile,
}

impl BaseProfiles {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            u0: self.u0.scaled(factor),
            v0: self.v0.scaled(factor),
            w0: self.w0.scaled(factor),
        }
    }

    pub fn sample(&self, grid: &RadialGrid) -> FieldState {
        FieldState::from_fns(grid, |r| self.u0.value(r), |r| self.v0.value(r), |r| self.w0.value(r))
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        hi
    } else {
        hi + (lo - hi).exp().ln_1p()
    }
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 35.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Below this value of `ln ε` the auxiliary function is evaluated from its
/// logarithmic asymptote, whose error is `O(ε)`.
const ASYMPTOTIC_LN_EPS: f64 = -40.0;

/// `C_N` in `φ(ε) = −½ ln ε + C_N + O(ε)`.
fn phi_asymptotic_constant(dim: usize) -> Result<f64> {
    let n = dim as f64;
    let opts = QuadOptions {
        abs_tol: 1e-15,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let near = integrate(|s| s.powf(n - 1.0) * (1.0 + s * s).powf(-0.5 * n), 0.0, 1.0, opts)?;
    let far = integrate(
        |x| {
            if x == 0.0 {
                0.0
            } else {
                // (1+x²)^{-N/2} − 1 divided by x, written to avoid cancellation
                (-0.5 * n * (x * x).ln_1p()).exp_m1() / x
            }
        },
        0.0,
        1.0,
        opts,
    )?;
    Ok(near.value + far.value)
}

/// `φ(ε) = ∫₀¹ ρᴺ⁻¹ (ρ² + ε)^{−N/2} dρ`.
pub fn phi(eps: f64, dim: usize) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(config(format!("phi needs eps > 0, got {eps}")));
    }
    phi_ln(eps.ln(), dim)
}

/// `φ` as a function of `ln ε`, valid far below the smallest positive f64.
pub fn phi_ln(ln_eps: f64, dim: usize) -> Result<f64> {
    if dim < 1 || !ln_eps.is_finite() {
        return Err(config(format!("phi needs finite ln eps and N >= 1, got {ln_eps}")));
    }
    if ln_eps < ASYMPTOTIC_LN_EPS {
        return Ok(-0.5 * ln_eps + phi_asymptotic_constant(dim)?);
    }
    let n = dim as f64;
    // ρ = e^t, integrand e^{Nt} (e^{2t} + ε)^{−N/2}
    let g = |t: f64| (n * t - 0.5 * n * logaddexp(2.0 * t, ln_eps)).exp();
    let knee = (0.5 * ln_eps).min(0.0);
    let lower = knee - 60.0 / n;
    let opts = QuadOptions::relative(1e-12);
    let mut total = integrate(g, lower, knee, opts)?.value;
    if knee < 0.0 {
        total += integrate(g, knee, 0.0, opts)?.value;
    }
    Ok(total)
}

/// The spike width `η`, stored by its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eta {
    pub ln: f64,
}

impl Eta {
    /// The value itself; underflows to 0 for very negative `ln`.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }
}

/// Smallest `ln η` the bisection is allowed to reach.
const LN_ETA_FLOOR: f64 = -1e300;

/// Largest `η ∈ (0, 1)` with `r_jᴺ φ(η / r_j²) ≥ j`, to relative accuracy
/// `10⁻⁶` in the left side.
pub fn select_eta(r_j: f64, j: u32, dim: usize) -> Result<Eta> {
    if !(r_j > 0.0 && r_j < 1.0) {
        return Err(config(format!("r_j must lie in (0, 1), got {r_j}")));
    }
    if j < 1 {
        return Err(config("family index j must be at least 1"));
    }
    let target = j as f64;
    let lr = r_j.ln();
    let rn = r_j.powi(dim as i32);
    let level = |ln_eta: f64| -> Result<f64> { Ok(rn * phi_ln(ln_eta - 2.0 * lr, dim)?) };

    let mut hi = 0.0_f64;
    if level(hi)? >= target {
        return Ok(Eta { ln: -f64::EPSILON });
    }
    let mut lo = -1.0_f64;
    loop {
        if level(lo)? >= target {
            break;
        }
        hi = lo;
        lo *= 2.0;
        if lo < LN_ETA_FLOOR || !lo.is_finite() {
            let sup = level(LN_ETA_FLOOR)?;
            return Err(Error::Infeasible(format!(
                "r_j = {r_j} cannot reach j = {j}: the largest attainable r_j^N phi is {sup:e}"
            )));
        }
    }
    for _ in 0..400 {
        let at_lo = level(lo)?;
        if at_lo <= target * (1.0 + 1e-6) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if level(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Eta { ln: lo })
}

/// One member of the dense blow-up family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseFamilySpec {
    pub base: BaseProfiles,
    pub dim: usize,
    pub j: u32,
    pub r_j: f64,
    pub eta_j: Eta,
    pub kappa: f64,
    pub p: f64,
    pub a_j: f64,
    pub b_j: f64,
    pub c_j: f64,
}

/// Admissible interval `(N − N/p, (N−2)/2)` for κ.
pub fn kappa_interval(dim: usize, p: f64) -> (f64, f64) {
    let n = dim as f64;
    (n - n / p, 0.5 * (n - 2.0))
}

/// Checks `p ∈ [1, 2N/(N+2))` and κ in its open interval.
pub fn validate_exponents(dim: usize, kappa: f64, p: f64) -> Result<()> {
    let n = dim as f64;
    let p_hi = 2.0 * n / (n + 2.0);
    if !(p >= 1.0 && p < p_hi) {
        return Err(config(format!("p must lie in [1, {p_hi}), got {p}")));
    }
    let (lo, hi) = kappa_interval(dim, p);
    if !(kappa > lo) {
        return Err(config(format!("kappa = {kappa} violates the lower bound kappa > N - N/p = {lo}")));
    }
    if !(kappa < hi) {
        return Err(config(format!("kappa = {kappa} violates the upper bound kappa < (N-2)/2 = {hi}")));
    }
    Ok(())
}

/// Midpoint of the admissible κ interval.
pub fn default_kappa(dim: usize, p: f64) -> f64 {
    let (lo, hi) = kappa_interval(dim, p);
    0.5 * (lo + hi)
}

impl DenseFamilySpec {
    /// Member `j` with `r_j = 2^{−j}`.
    pub fn new(base: BaseProfiles, dim: usize, j: u32, kappa: f64, p: f64) -> Result<Self> {
        Self::with_radius(base, dim, j, 0.5_f64.powi(j as i32), kappa, p)
    }

    pub fn with_radius(base: BaseProfiles, dim: usize, j: u32, r_j: f64, kappa: f64, p: f64) -> Result<Self> {
        if dim < 3 {
            return Err(config(format!("dimension must be at least 3, got {dim}")));
        }
        validate_exponents(dim, kappa, p)?;
        let eta_j = select_eta(r_j, j, dim)?;
        let n = dim as f64;
        let ln_s = logaddexp(2.0 * r_j.ln(), eta_j.ln);
        let a_j = (0.5 * (n - kappa) * ln_s).exp() * base.u0.value(r_j);
        let b_j = (0.5 * (n - kappa) * ln_s).exp() * base.v0.value(r_j);
        let c_j = (0.5 * kappa * ln_s).exp() * base.w0.value(r_j);
        Ok(Self {
            base,
            dim,
            j,
            r_j,
            eta_j,
            kappa,
            p,
            a_j,
            b_j,
            c_j,
        })
    }

    fn n(&self) -> f64 {
        self.dim as f64
    }

    /// `ln(r² + η)` at `r = eᵗ`.
    fn ln_s(&self, t: f64) -> f64 {
        logaddexp(2.0 * t, self.eta_j.ln)
    }

    fn ln_u_inner(&self, t: f64) -> f64 {
        self.a_j.ln() - 0.5 * (self.n() - self.kappa) * self.ln_s(t)
    }

    fn ln_v_inner(&self, t: f64) -> f64 {
        self.b_j.ln() - 0.5 * (self.n() - self.kappa) * self.ln_s(t)
    }

    fn ln_w_inner(&self, t: f64) -> f64 {
        self.c_j.ln() - 0.5 * self.kappa * self.ln_s(t)
    }

    /// `ln |w'|` on the spike.
    fn ln_wr_inner(&self, t: f64) -> f64 {
        self.kappa.ln() + self.c_j.ln() + t - 0.5 * (self.kappa + 2.0) * self.ln_s(t)
    }

    pub fn u(&self, r: f64) -> f64 {
        if r <= self.r_j {
            self.ln_u_inner(r.ln()).exp()
        } else {
            self.base.u0.value(r)
        }
    }

    pub fn v(&self, r: f64) -> f64 {
        if r <= self.r_j {
            self.ln_v_inner(r.ln()).exp()
        } else {
            self.base.v0.value(r)
        }
    }

    pub fn w(&self, r: f64) -> f64 {
        if r <= self.r_j {
            self.ln_w_inner(r.ln()).exp()
        } else {
            self.base.w0.value(r)
        }
    }

    /// Decay rate in `t → −∞` of the slowest spike integrand we evaluate.
    fn slowest_rate(&self) -> f64 {
        let n = self.n();
        self.kappa
            .min(n - self.p * (n - self.kappa))
            .min(n - 2.0 - 2.0 * self.kappa)
            .max(1e-3)
    }

    /// `∫ g(t) dt` over `t ∈ (−∞, ln b]`, where `g` already includes the
    /// Jacobian and decays exponentially as `t → −∞`; `lower` optionally
    /// truncates at `ln a`.
    fn spike_integral<G: Fn(f64) -> f64>(&self, g: G, lower: Option<f64>, upper: f64) -> Result<f64> {
        let width = (80.0 / self.slowest_rate()).max(60.0);
        let lo = lower.unwrap_or(f64::NEG_INFINITY).max(upper - width);
        if lo >= upper {
            return Ok(0.0);
        }
        let knee = 0.5 * self.eta_j.ln;
        let opts = QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-11,
            max_intervals: 4000,
        };
        if knee > lo && knee < upper {
            Ok(integrate(&g, lo, knee, opts)?.value + integrate(&g, knee, upper, opts)?.value)
        } else {
            Ok(integrate(&g, lo, upper, opts)?.value)
        }
    }

    /// `∫_a^b ρᴺ⁻¹ f(ρ) dρ` for a smooth base-profile integrand.
    fn outer_integral<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if b <= a {
            return Ok(0.0);
        }
        let n = self.dim as i32 - 1;
        let opts = QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-12,
            max_intervals: 4000,
        };
        Ok(integrate(|r| r.powi(n) * f(r), a, b, opts)?.value)
    }

    fn far(&self) -> f64 {
        self.base
            .u0
            .support()
            .max(self.base.v0.support())
            .max(self.base.w0.support())
    }

    /// Integral of `ρᴺ⁻¹ u` over `[a, b]`, splitting at `r_j`. Used for cell
    /// averages, where `a` may be 0.
    fn shell_integral(&self, which: Species3, a: f64, b: f64) -> Result<f64> {
        let n = self.n();
        let mut total = 0.0;
        if a < self.r_j {
            let top = b.min(self.r_j);
            let lower = if a > 0.0 { Some(a.ln()) } else { None };
            total += self.spike_integral(|t| (n * t + self.ln_inner(which, t)).exp(), lower, top.ln())?;
        }
        if b > self.r_j {
            let base = self.base_of(which);
            total += self.outer_integral(|r| base.value(r), a.max(self.r_j), b)?;
        }
        Ok(total)
    }

    fn ln_inner(&self, which: Species3, t: f64) -> f64 {
        match which {
            Species3::U => self.ln_u_inner(t),
            Species3::V => self.ln_v_inner(t),
            Species3::W => self.ln_w_inner(t),
        }
    }

    fn base_of(&self, which: Species3) -> GaussianProfile {
        match which {
            Species3::U => self.base.u0,
            Species3::V => self.base.v0,
            Species3::W => self.base.w0,
        }
    }

    /// `‖·‖₁` of one component over ℝᴺ.
    fn mass(&self, which: Species3) -> Result<f64> {
        Ok(unit_sphere_area(self.dim)? * self.shell_integral(which, 0.0, self.far())?)
    }

    /// `‖∇w₀ⱼ‖₁`.
    fn grad_w_mass(&self) -> Result<f64> {
        let n = self.n();
        let inner = self.spike_integral(|t| (n * t + self.ln_wr_inner(t)).exp(), None, self.r_j.ln())?;
        let w0 = self.base.w0;
        let outer = self.outer_integral(|r| w0.slope(r).abs(), self.r_j, self.far())?;
        Ok(unit_sphere_area(self.dim)? * (inner + outer))
    }
}

#[derive(Debug, Clone, Copy)]
enum Species3 {
    U,
    V,
    W,
}

/// Samples a family member on a grid. Nodes whose dual cell meets the spike
/// ball carry the cell average (so the discrete mass is exact there); the
/// remaining nodes carry point values.
pub fn dense_family(spec: &DenseFamilySpec, grid: &RadialGrid) -> Result<FieldState> {
    validate_exponents(spec.dim, spec.kappa, spec.p)?;
    if grid.dim() != spec.dim {
        return Err(Error::Usage(format!(
            "family dimension {} differs from grid dimension {}",
            spec.dim,
            grid.dim()
        )));
    }
    let area = unit_sphere_area(spec.dim)?;
    let r = grid.nodes();
    let m = grid.cells();
    let mut state = FieldState::zeros(grid);
    for i in 0..=m {
        let lo = if i == 0 { 0.0 } else { 0.5 * (r[i - 1] + r[i]) };
        let hi = if i == m { r[m] } else { 0.5 * (r[i] + r[i + 1]) };
        if lo < spec.r_j {
            let weight = grid.quad_weights()[i];
            state.u[i] = area * spec.shell_integral(Species3::U, lo, hi)? / weight;
            state.v[i] = area * spec.shell_integral(Species3::V, lo, hi)? / weight;
            state.w[i] = area * spec.shell_integral(Species3::W, lo, hi)? / weight;
        } else {
            state.u[i] = spec.u(r[i]);
            state.v[i] = spec.v(r[i]);
            state.w[i] = spec.w(r[i]);
        }
    }
    Ok(state)
}

/// Energy components of a family member evaluated from the exact profiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyEnergy {
    pub dirichlet: f64,
    pub l2w: f64,
    pub coupling: f64,
    /// The spike-ball part of the coupling, in closed form through φ.
    pub inner_coupling: f64,
    pub entropy_u: f64,
    pub entropy_v: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

impl FamilyEnergy {
    pub fn noncoupling(&self) -> f64 {
        self.dirichlet + self.l2w + self.entropy_u + self.entropy_v
    }
}

impl DenseFamilySpec {
    /// `K_j` without the `+1` shift.
    pub fn k(&self) -> Result<f64> {
        Ok(self.mass(Species3::U)? + self.mass(Species3::V)? + self.mass(Species3::W)? + self.grad_w_mass()?)
    }

    pub fn energy(&self, params: &ModelParams) -> Result<FamilyEnergy> {
        let n = self.n();
        let area = unit_sphere_area(self.dim)?;
        let top = self.r_j.ln();
        let far = self.far();
        let (u0, v0, w0) = (self.base.u0, self.base.v0, self.base.w0);

        let dir_in = self.spike_integral(|t| (n * t + 2.0 * self.ln_wr_inner(t)).exp(), None, top)?;
        let dir_out = self.outer_integral(|r| w0.slope(r).powi(2), self.r_j, far)?;
        let dirichlet = 0.5 * area * (dir_in + dir_out);

        let l2_in = self.spike_integral(|t| (n * t + 2.0 * self.ln_w_inner(t)).exp(), None, top)?;
        let l2_out = self.outer_integral(|r| w0.value(r).powi(2), self.r_j, far)?;
        let l2w = 0.5 * params.lambda * area * (l2_in + l2_out);

        let ln_eps = self.eta_j.ln - 2.0 * self.r_j.ln();
        let inner_coupling =
            area * (params.alpha * self.a_j + params.beta * self.b_j) * self.c_j * phi_ln(ln_eps, self.dim)?;
        let cpl_out = self.outer_integral(
            |r| (params.alpha * u0.value(r) + params.beta * v0.value(r)) * w0.value(r),
            self.r_j,
            far,
        )?;
        let coupling = inner_coupling + area * cpl_out;

        let entropy = |ln_in: &dyn Fn(f64) -> f64, base: GaussianProfile| -> Result<f64> {
            let inner = self.spike_integral(
                |t| {
                    let l = ln_in(t);
                    ((n * t + l).exp() + (n * t).exp()) * softplus(l)
                },
                None,
                top,
            )?;
            let outer = self.outer_integral(
                |r| {
                    let x = base.value(r);
                    (x + 1.0) * x.ln_1p()
                },
                self.r_j,
                far,
            )?;
            Ok(area * (inner + outer))
        };
        let entropy_u = if params.alpha == 0.0 {
            0.0
        } else {
            params.alpha / params.chi * entropy(&|t| self.ln_u_inner(t), u0)?
        };
        let entropy_v = if params.beta == 0.0 {
            0.0
        } else {
            params.beta / params.xi * entropy(&|t| self.ln_v_inner(t), v0)?
        };
        let f = dirichlet + l2w - coupling + entropy_u + entropy_v;
        Ok(FamilyEnergy {
            dirichlet,
            l2w,
            coupling,
            inner_coupling,
            entropy_u,
            entropy_v,
            f,
        })
    }

    /// `‖u₀ⱼ − u₀‖_p`; the difference is supported in `B_{r_j}`.
    pub fn lp_distance_u(&self) -> Result<f64> {
        let n = self.n();
        let p = self.p;
        let u0 = self.base.u0;
        let s = self.spike_integral(
            |t| {
                let l = self.ln_u_inner(t);
                let rel = (1.0 - u0.value(t.exp()) * (-l).exp()).abs();
                (n * t + p * l).exp() * rel.powf(p)
            },
            None,
            self.r_j.ln(),
        )?;
        Ok((unit_sphere_area(self.dim)? * s).powf(1.0 / p))
    }

    /// `(‖w₀ⱼ − w₀‖₂², ‖∇(w₀ⱼ − w₀)‖₂², ‖w₀ⱼ − w₀‖₁, ‖∇(w₀ⱼ − w₀)‖₁)`.
    fn w_differences(&self) -> Result<[f64; 4]> {
        let n = self.n();
        let w0 = self.base.w0;
        let top = self.r_j.ln();
        let diff = |t: f64| {
            let l = self.ln_w_inner(t);
            (l, (1.0 - w0.value(t.exp()) * (-l).exp()).abs())
        };
        let grad = |t: f64| {
            let l = self.ln_wr_inner(t);
            // w₀ⱼ' is negative, as is w₀'
            (l, (1.0 - w0.slope(t.exp()).abs() * (-l).exp()).abs())
        };
        let area = unit_sphere_area(self.dim)?;
        let l2 = self.spike_integral(|t| { let (l, q) = diff(t); (n * t + 2.0 * l).exp() * q * q }, None, top)?;
        let h1 = self.spike_integral(|t| { let (l, q) = grad(t); (n * t + 2.0 * l).exp() * q * q }, None, top)?;
        let l1 = self.spike_integral(|t| { let (l, q) = diff(t); (n * t + l).exp() * q }, None, top)?;
        let w11 = self.spike_integral(|t| { let (l, q) = grad(t); (n * t + l).exp() * q }, None, top)?;
        Ok([area * l2, area * h1, area * l1, area * w11])
    }

    /// `‖w₀ⱼ − w₀‖_{H¹}`.
    pub fn h1_distance_w(&self) -> Result<f64> {
        let [l2, h1, _, _] = self.w_differences()?;
        Ok((l2 + h1).sqrt())
    }

    /// `‖∇(w₀ⱼ − w₀)‖₂`.
    pub fn grad_l2_distance_w(&self) -> Result<f64> {
        Ok(self.w_differences()?[1].sqrt())
    }

    /// `‖w₀ⱼ − w₀‖_{W^{1,1}}`.
    pub fn w11_distance_w(&self) -> Result<f64> {
        let [_, _, l1, g1] = self.w_differences()?;
        Ok(l1 + g1)
    }

    /// The coupling lower bound `j |∂B₁| (αu₀(r_j) + βv₀(r_j)) w₀ⱼ(r_j)`.
    pub fn coupling_lower_bound(&self, params: &ModelParams) -> Result<f64> {
        Ok(self.j as f64
            * unit_sphere_area(self.dim)?
            * (params.alpha * self.base.u0.value(self.r_j) + params.beta * self.base.v0.value(self.r_j))
            * self.base.w0.value(self.r_j))
    }
}

/// One row of the family table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub j: u32,
    pub r_j: f64,
    pub ln_eta: f64,
    #[serde(rename = "K_j")]
    pub k_j: f64,
    #[serde(rename = "F_j")]
    pub f_j: f64,
    pub coupling_j: f64,
    pub coupling_bound: f64,
    pub noncoupling: f64,
    pub lp_distance_u: f64,
    pub h1_distance_w: f64,
    pub w11_distance_w: f64,
    /// `F` and `K + 1` of the sampled grid fields.
    #[serde(rename = "grid_F")]
    pub grid_f: f64,
    #[serde(rename = "grid_K_plus_one")]
    pub grid_k_plus_one: f64,
}

/// The family table with its two structural checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTrend {
    pub rows: Vec<FamilyRow>,
    pub coupling_bound_holds: bool,
    pub noncoupling_bounded: bool,
}

fn family_row(spec: &DenseFamilySpec, params: &ModelParams, grid: &RadialGrid) -> Result<FamilyRow> {
    let e = spec.energy(params)?;
    let sampled = dense_family(spec, grid)?;
    let grid_energy = energy(&sampled, params, grid)?;
    let grid_k = summarize_initial(&sampled, grid)?;
    Ok(FamilyRow {
        j: spec.j,
        r_j: spec.r_j,
        ln_eta: spec.eta_j.ln,
        k_j: spec.k()? + 1.0,
        f_j: e.f,
        coupling_j: e.coupling,
        coupling_bound: spec.coupling_lower_bound(params)?,
        noncoupling: e.noncoupling(),
        lp_distance_u: spec.lp_distance_u()?,
        h1_distance_w: spec.h1_distance_w()?,
        w11_distance_w: spec.w11_distance_w()?,
        grid_f: grid_energy.f,
        grid_k_plus_one: grid_k.k_plus_one,
    })
}

/// Tabulates `(j, K_j, F_j, coupling_j)` for every member, in parallel.
pub fn family_energy_trend(
    specs: &[DenseFamilySpec],
    params: &ModelParams,
    grid: &RadialGrid,
) -> Result<FamilyTrend> {
    let rows = specs
        .par_iter()
        .map(|s| family_row(s, params, grid))
        .collect::<Result<Vec<_>>>()?;
    let coupling_bound_holds = rows.iter().all(|r| r.coupling_j >= r.coupling_bound);
    let noncoupling_bounded = match specs.first() {
        None => true,
        Some(s) => {
            let base_sum = base_noncoupling(&s.base, params, s.dim)?;
            rows.iter()
                .all(|r| r.noncoupling.is_finite() && r.noncoupling <= 2.0 * base_sum + 1.0)
        }
    };
    Ok(FamilyTrend {
        rows,
        coupling_bound_holds,
        noncoupling_bounded,
    })
}

/// Non-coupling energy of the unmodified base profiles.
pub fn base_noncoupling(base: &BaseProfiles, params: &ModelParams, dim: usize) -> Result<f64> {
    let area = unit_sphere_area(dim)?;
    let n = dim as i32 - 1;
    let far = base.u0.support().max(base.v0.support()).max(base.w0.support());
    let opts = QuadOptions::relative(1e-12);
    let q = |f: &dyn Fn(f64) -> f64| -> Result<f64> {
        Ok(area * integrate(|r| r.powi(n) * f(r), 0.0, far, opts)?.value)
    };
    let ent = |g: GaussianProfile| move |r: f64| {
        let x = g.value(r);
        (x + 1.0) * x.ln_1p()
    };
    let mut total = 0.5 * q(&|r| base.w0.slope(r).powi(2))? + 0.5 * params.lambda * q(&|r| base.w0.value(r).powi(2))?;
    if params.alpha > 0.0 {
        total += params.alpha / params.chi * q(&ent(base.u0))?;
    }
    if params.beta > 0.0 {
        total += params.beta / params.xi * q(&ent(base.v0))?;
    }
    Ok(total)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Numerical("slope fit needs at least two paired points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical("slope fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// `−C_fit · K^{2/(1−θ)}`.
pub fn theorem_threshold(k: f64, theta: f64, c_fit: f64) -> Result<f64> {
    if !(theta > 0.5 && theta < 1.0) {
        return Err(config(format!("theta must lie in (1/2, 1), got {theta}")));
    }
    if !(k > 0.0) || !(c_fit > 0.0) {
        return Err(config(format!("K and C_fit must be positive, got {k} and {c_fit}")));
    }
    Ok(-c_fit * k.powf(2.0 / (1.0 - theta)))
}

/// `F / K^{2/(1−θ)}`, the scale-free coordinate of the threshold.
pub fn threshold_coordinate(f: f64, k: f64, theta: f64) -> f64 {
    f / k.powf(2.0 / (1.0 - theta))
}
