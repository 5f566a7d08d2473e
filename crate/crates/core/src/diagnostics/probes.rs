//! Lemma-chain probes: the pointwise bound for `w` anchored at a
//! mean-value radius, and the quantities entering the coupling and gradient
//! estimates with their empirically fitted ratios.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diagnostics::energy::{energy, signal_rate};
use crate::error::{config, Error, Result};
use crate::grid::{unit_sphere_area, RadialGrid};
use crate::model::{sup, FieldState, InitialDataSummary, ModelParams};
use crate::operators::radial_gradient;

/// Knobs of the coupling-estimate probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Interpolation exponent θ ∈ (½, 1).
    pub theta: f64,
    /// Exponent in `r₀ = min(1, ‖f‖₂^{−alpha_exp})`, in `(0, 2/(N−1))`.
    pub alpha_exp: f64,
    /// Weight of the coupling term in the annulus-gradient bound.
    pub epsilon: f64,
    /// Use `K + 1` rather than `K`.
    pub k_plus_one: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            theta: 0.75,
            alpha_exp: 0.5,
            epsilon: 1.0 / 12.0,
            k_plus_one: true,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.theta > 0.5 && self.theta < 1.0) {
            return Err(config(format!("theta must lie in (1/2, 1), got {}", self.theta)));
        }
        let hi = 2.0 / (dim as f64 - 1.0);
        if !(self.alpha_exp > 0.0 && self.alpha_exp < hi) {
            return Err(config(format!(
                "alpha_exp must lie in (0, {hi}), got {}",
                self.alpha_exp
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Result of the pointwise chain for `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseProbe {
    pub r0: f64,
    pub w_at_r0: f64,
    /// `∫₁² rᴺ⁻¹ w dr`.
    pub mean_integral: f64,
    /// Whether `|∂B₁| ∫₁² rᴺ⁻¹ w dr ≤ K`.
    pub mean_within_k: bool,
    /// Largest `w(r) − bound(r)` over the nodes; the chain is exact on the
    /// piecewise-linear interpolant, so this is ≤ 0 up to rounding.
    pub pointwise_margin: f64,
    /// Rounding allowance for `pointwise_margin`.
    pub tolerance: f64,
}

impl PointwiseProbe {
    pub fn holds(&self) -> bool {
        self.pointwise_margin <= self.tolerance
    }
}

/// Everything the probes report at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub t: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub r0: f64,
    pub w_at_r0: f64,
    pub pointwise_margin: f64,
    pub coupling_lhs: f64,
    pub ball_grad: f64,
    /// `∫_{B₂∖B_{r₀'}}|∇w|²` at the adaptive radius `r₀' = min(1, ‖f‖^{−alpha_exp})`.
    pub annulus_grad: f64,
    pub inner_grad: f64,
    pub adaptive_r0: f64,
    /// Largest violation of the Grönwall-in-r bound for `r^{2N−2} w_r²` on
    /// `(0, 2]`, relative to its scale. Reported only.
    pub gronwall_r_margin: f64,
    pub fitted_ratios: BTreeMap<String, f64>,
}

const GAUSS_8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362),
    (0.525_532_409_916_329, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// `∫_a^b ρᴺ⁻¹ ℓ(ρ) dρ` for a linear `ℓ`, exact for `N ≤ 15`.
fn segment_moment(a: f64, b: f64, fa: f64, fb: f64, dim: usize) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let n = dim as i32 - 1;
    let mut s = 0.0;
    for &(x, wt) in &GAUSS_8 {
        for sx in [-x, x] {
            let r = c + h * sx;
            let l = fa + (fb - fa) * (r - a) / (b - a);
            s += wt * r.powi(n) * l;
        }
    }
    s * h
}

/// `∫_a^b ρᴺ⁻¹ |w_r| dρ` on the interpolant, where `a ≤ b`.
fn abs_slope_moment(grid: &RadialGrid, w: &[f64], a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let r = grid.nodes();
    let n = grid.dim() as i32;
    let mut s = 0.0;
    let start = grid.locate(a).max(1);
    for j in start..=grid.cells() {
        let (lo, hi) = (r[j - 1].max(a), r[j].min(b));
        if hi > lo {
            let slope = ((w[j] - w[j - 1]) / (r[j] - r[j - 1])).abs();
            s += slope * (hi.powi(n) - lo.powi(n)) / n as f64;
        }
        if r[j] >= b {
            break;
        }
    }
    s
}

/// Selects `r₀ ∈ [1, 2]` with `r₀ᴺ⁻¹ w(r₀) = ∫₁² rᴺ⁻¹ w dr` and evaluates the
/// pointwise chain `w(r) ≤ w(r₀) + min(r, r₀)^{1−N} ∫ ρᴺ⁻¹ |w_r| dρ`.
pub fn pointwise_bound_probe(
    state: &FieldState,
    summary: &InitialDataSummary,
    grid: &RadialGrid,
) -> Result<PointwiseProbe> {
    state.check_shape(grid)?;
    if grid.r_max() < 2.0 {
        return Err(Error::Probe(format!(
            "the mean-value anchor needs r_max >= 2, grid has {}",
            grid.r_max()
        )));
    }
    let w = &state.w;
    let dim = grid.dim();
    let nm1 = dim as i32 - 1;
    let scale = sup(w);
    let tolerance = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let r = grid.nodes();

    let mut mean = 0.0;
    let (i1, i2) = (grid.locate(1.0).max(1), grid.locate(2.0));
    for j in i1..=i2 {
        let (lo, hi) = (r[j - 1].max(1.0), r[j].min(2.0));
        if hi > lo {
            mean += segment_moment(lo, hi, grid.interpolate(w, lo), grid.interpolate(w, hi), dim);
        }
    }
    let area = unit_sphere_area(dim)?;
    let mean_within_k = area * mean <= summary.k * (1.0 + 1e-9) + tolerance;

    if scale == 0.0 {
        return Ok(PointwiseProbe {
            r0: 1.5,
            w_at_r0: 0.0,
            mean_integral: 0.0,
            mean_within_k,
            pointwise_margin: 0.0,
            tolerance,
        });
    }

    let g = |x: f64| x.powi(nm1) * grid.interpolate(w, x) - mean;
    let mut samples: Vec<f64> = std::iter::once(1.0)
        .chain(r.iter().copied().filter(|&x| x > 1.0 && x < 2.0))
        .chain(std::iter::once(2.0))
        .collect();
    let mut bracket = find_bracket(&samples, &g);
    if bracket.is_none() {
        samples = (0..=4096).map(|k| 1.0 + k as f64 / 4096.0).collect();
        bracket = find_bracket(&samples, &g);
    }
    let (mut lo, mut hi) = bracket.ok_or_else(|| {
        Error::Probe("the mean-value equation has no root in [1, 2]".to_string())
    })?;
    let r0 = if g(lo) == 0.0 {
        lo
    } else if g(hi) == 0.0 {
        hi
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(lo).signum() == g(mid).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let w0 = grid.interpolate(w, r0);

    let mut margin = f64::NEG_INFINITY;
    for (i, &x) in r.iter().enumerate() {
        let (a, b) = if x < r0 { (x, r0) } else { (r0, x) };
        let moment = abs_slope_moment(grid, w, a, b);
        let bound = if moment == 0.0 {
            w0
        } else if a == 0.0 {
            continue;
        } else {
            w0 + a.powi(-nm1) * moment
        };
        margin = margin.max(w[i] - bound);
    }
    Ok(PointwiseProbe {
        r0,
        w_at_r0: w0,
        mean_integral: mean,
        mean_within_k,
        pointwise_margin: margin,
        tolerance,
    })
}

fn find_bracket<G: Fn(f64) -> f64>(samples: &[f64], g: &G) -> Option<(f64, f64)> {
    let mut prev = samples[0];
    let mut gp = g(prev);
    if gp == 0.0 {
        return Some((prev, prev));
    }
    for &x in &samples[1..] {
        let gx = g(x);
        if gx == 0.0 || gx.signum() != gp.signum() {
            return Some((prev, x));
        }
        prev = x;
        gp = gx;
    }
    None
}

/// `∫_{B_b∖B_a}|∇w|²` from the face differences, counting the part of each
/// face cell that lies inside `[a, b]`.
fn shell_grad_sq(w: &[f64], grid: &RadialGrid, a: f64, b: f64) -> f64 {
    let r = grid.nodes();
    let g = grid.face_coef();
    let mut s = 0.0;
    for i in 0..grid.cells() {
        let (lo, hi) = (r[i].max(a), r[i + 1].min(b));
        if hi > lo {
            let frac = (hi - lo) / (r[i + 1] - r[i]);
            let d = w[i + 1] - w[i];
            s += frac * g[i] * d * d;
        }
    }
    s
}

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else {
        lhs / rhs
    }
}

/// Evaluates the coupling and gradient estimate quantities and their
/// left/right ratios.
pub fn coupling_estimate_probe(
    state: &FieldState,
    params: &ModelParams,
    summary: &InitialDataSummary,
    grid: &RadialGrid,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    cfg.validate(params.dim)?;
    let e = energy(state, params, grid)?;
    let n = params.dim as f64;
    let k = summary.k_variant(cfg.k_plus_one);
    let coupling = e.coupling;
    let norm_f = e.norm_f;
    let ball_grad = shell_grad_sq(&state.w, grid, 0.0, 2.0);
    let r0a = if norm_f > 0.0 {
        1.0_f64.min(norm_f.powf(-cfg.alpha_exp))
    } else {
        1.0
    };
    let annulus = shell_grad_sq(&state.w, grid, r0a, 2.0);
    let inner = shell_grad_sq(&state.w, grid, 0.0, r0a);
    let ball_w_sq: f64 = grid
        .quad_weights()
        .iter()
        .zip(grid.nodes())
        .zip(&state.w)
        .filter(|((_, &r), _)| r <= 2.0)
        .map(|((v, _), x)| v * x * x)
        .sum();

    let mut fitted = BTreeMap::new();
    fitted.insert(
        "coupling".to_string(),
        ratio(
            coupling,
            ball_grad + k * k + k.powf(4.0 / (n + 4.0)) * norm_f.powf((2.0 * n + 4.0) / (n + 4.0)),
        ),
    );
    fitted.insert(
        "annulus_gradient".to_string(),
        ratio(
            annulus,
            cfg.epsilon * coupling + k * k * r0a.powf(1.0 - n) + k * r0a.powf(0.5 * (1.0 - n)) * norm_f,
        ),
    );
    fitted.insert(
        "inner_gradient".to_string(),
        ratio(
            inner,
            k + r0a * norm_f * norm_f + k.sqrt() * (e.norm_g1 + e.norm_g2) + ball_w_sq,
        ),
    );
    fitted.insert(
        "combined".to_string(),
        ratio(
            0.5 * coupling,
            k * k * (norm_f.powf(2.0 * cfg.theta) + e.norm_g1 + e.norm_g2 + 1.0),
        ),
    );

    let pw = pointwise_bound_probe(state, summary, grid)?;
    Ok(ProbeReport {
        t: state.t,
        k,
        r0: pw.r0,
        w_at_r0: pw.w_at_r0,
        pointwise_margin: pw.pointwise_margin,
        coupling_lhs: coupling,
        ball_grad,
        annulus_grad: annulus,
        inner_grad: inner,
        adaptive_r0: r0a,
        gronwall_r_margin: gronwall_in_r_margin(state, params, grid),
        fitted_ratios: fitted,
    })
}

/// Largest value of `r^{2N−2} w_r² − ∫₀^r e^{(N−1)(r−ρ)} ρ^{2N−2} h dρ` over
/// nodes in `(0, 2]`, with `h = −2αu w_r − 2βv w_r + 2λ w w_r + f²/(N−1)`,
/// divided by the largest left-hand value.
pub fn gronwall_in_r_margin(state: &FieldState, params: &ModelParams, grid: &RadialGrid) -> f64 {
    let r = grid.nodes();
    let nm1 = params.dim as f64 - 1.0;
    let wr = radial_gradient(&state.w, grid);
    let f = signal_rate(state, params, grid);
    let h: Vec<f64> = (0..grid.len())
        .map(|i| {
            let weight = r[i].powf(2.0 * nm1);
            weight
                * (-2.0 * params.alpha * state.u[i] * wr[i] - 2.0 * params.beta * state.v[i] * wr[i]
                    + 2.0 * params.lambda * state.w[i] * wr[i]
                    + f[i] * f[i] / nm1)
        })
        .collect();
    let mut acc = 0.0;
    let mut worst = f64::NEG_INFINITY;
    let mut scale = 0.0_f64;
    for i in 1..grid.len() {
        if r[i] > 2.0 {
            break;
        }
        let hstep = r[i] - r[i - 1];
        let decay = (nm1 * hstep).exp();
        acc = acc * decay + 0.5 * hstep * (h[i - 1] * decay + h[i]);
        let lhs = r[i].powf(2.0 * nm1) * wr[i] * wr[i];
        scale = scale.max(lhs.abs());
        worst = worst.max(lhs - acc);
    }
    if scale > 0.0 {
        worst / scale
    } else {
        0.0
    }
}

/// Running maxima of the fitted ratios over a trajectory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RatioFit {
    pub max: BTreeMap<String, f64>,
}

impl RatioFit {
    pub fn update(&mut self, report: &ProbeReport) {
        for (key, &value) in &report.fitted_ratios {
            let slot = self.max.entry(key.clone()).or_insert(0.0);
            *slot = slot.max(value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.max.values().all(|v| v.is_finite())
    }
}
