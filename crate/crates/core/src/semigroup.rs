//! Mild-solution machinery: the discrete heat semigroup, Picard iteration of
//! the Duhamel formulas, and the L¹ bounds they imply.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::RadialGrid;
use crate::integrator::TimeSeries;
use crate::model::{sup, InitialDataSummary, ModelParams};
use crate::operators::{chemotaxis_divergence, FluxAverage};
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
use crate::tridiag::Tridiagonal;

/// Accuracy knobs of the semigroup action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupOptions {
    /// Largest backward-Euler substep of the coarse pass; the fine pass
    /// halves it and the two are Richardson-combined.
    pub max_substep: f64,
}

impl Default for SemigroupOptions {
    fn default() -> Self {
        Self { max_substep: 2.5e-5 }
    }
}

fn implicit_diffusion(f: &[f64], t: f64, n: usize, grid: &RadialGrid) -> Result<Vec<f64>> {
    let h = t / n as f64;
    let solver = Tridiagonal::diffusion(grid, h, 0.0)?;
    let vol = grid.quad_weights();
    let mut y = f.to_vec();
    for _ in 0..n {
        for (x, v) in y.iter_mut().zip(vol) {
            *x *= v;
        }
        solver.solve(&mut y);
    }
    Ok(y)
}

/// `e^{t(Δ − damping)} f`: backward Euler at two substep sizes combined by
/// Richardson extrapolation, times the exact factor `e^{−damping·t}`.
pub fn heat_semigroup(
    f: &[f64],
    t: f64,
    grid: &RadialGrid,
    damping: f64,
    opts: &SemigroupOptions,
) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Usage(format!("semigroup time must be nonnegative, got {t}")));
    }
    if !(damping >= 0.0) {
        return Err(config(format!("damping must be nonnegative, got {damping}")));
    }
    if f.len() != grid.len() {
        return Err(Error::Usage("field length does not match the grid".into()));
    }
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    let n = ((t / opts.max_substep).ceil() as usize).max(2);
    let coarse = implicit_diffusion(f, t, n, grid)?;
    let fine = implicit_diffusion(f, t, 2 * n, grid)?;
    let decay = (-damping * t).exp();
    Ok(fine
        .iter()
        .zip(&coarse)
        .map(|(a, b)| decay * (2.0 * a - b))
        .collect())
}

/// Options of the Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardOptions {
    /// Largest admissible end time.
    pub t_cap: f64,
    /// Initial number of midpoint panels in the Duhamel integrals.
    pub panels: usize,
    /// Panel doubling stops once the final iterate moves less than this.
    pub panel_tol: f64,
    pub max_panels: usize,
    pub flux: FluxAverage,
    pub semigroup: SemigroupOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            t_cap: 0.01,
            panels: 32,
            panel_tol: 1e-6,
            max_panels: 1024,
            flux: FluxAverage::Arithmetic,
            semigroup: SemigroupOptions::default(),
        }
    }
}

/// Final Picard iterate and its convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// Sup-norm change between successive iterates, over all time nodes and
    /// all three components.
    pub residuals: Vec<f64>,
    pub panels: usize,
}

type Path = Vec<[Vec<f64>; 3]>;

/// One sweep of the three Duhamel maps on `panels` time nodes. With
/// `previous = None` this is the free (semigroup-only) evolution.
fn duhamel_sweep(
    init: [&[f64]; 3],
    previous: Option<&Path>,
    t_end: f64,
    panels: usize,
    params: &ModelParams,
    grid: &RadialGrid,
    opts: &PicardOptions,
) -> Result<Path> {
    let h = t_end / panels as f64;
    let so = &opts.semigroup;
    let mut path: Path = Vec::with_capacity(panels + 1);
    path.push([init[0].to_vec(), init[1].to_vec(), init[2].to_vec()]);
    for n in 0..panels {
        let cur = &path[n];
        let mut u = heat_semigroup(&cur[0], h, grid, 0.0, so)?;
        let mut v = heat_semigroup(&cur[1], h, grid, 0.0, so)?;
        let mut w = heat_semigroup(&cur[2], h, grid, params.lambda, so)?;
        if let Some(prev) = previous {
            let mid = |k: usize| -> Vec<f64> {
                prev[n][k]
                    .iter()
                    .zip(&prev[n + 1][k])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect()
            };
            let (um, vm, wm) = (mid(0), mid(1), mid(2));
            let du = chemotaxis_divergence(&um, &wm, grid, opts.flux);
            let dv = chemotaxis_divergence(&vm, &wm, grid, opts.flux);
            let src: Vec<f64> = um
                .iter()
                .zip(&vm)
                .map(|(a, b)| params.alpha * a + params.beta * b)
                .collect();
            let su = heat_semigroup(&du, 0.5 * h, grid, 0.0, so)?;
            let sv = heat_semigroup(&dv, 0.5 * h, grid, 0.0, so)?;
            let sw = heat_semigroup(&src, 0.5 * h, grid, params.lambda, so)?;
            for i in 0..grid.len() {
                u[i] -= h * params.chi * su[i];
                v[i] -= h * params.xi * sv[i];
                w[i] += h * sw[i];
            }
        }
        path.push([u, v, w]);
    }
    Ok(path)
}

fn path_distance(a: &Path, b: &Path) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| (0..3).map(move |k| (x, y, k)))
        .map(|(x, y, k)| {
            x[k].iter()
                .zip(&y[k])
                .fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()))
        })
        .fold(0.0, f64::max)
}

fn iterate_fixed_panels(
    init: [&[f64]; 3],
    t_end: f64,
    n_iters: usize,
    panels: usize,
    params: &ModelParams,
    grid: &RadialGrid,
    opts: &PicardOptions,
) -> Result<(Path, Vec<f64>)> {
    let mut path = duhamel_sweep(init, None, t_end, panels, params, grid, opts)?;
    let mut residuals = Vec::with_capacity(n_iters);
    let mut rising = 0;
    for _ in 0..n_iters {
        let next = duhamel_sweep(init, Some(&path), t_end, panels, params, grid, opts)?;
        let r = path_distance(&next, &path);
        if let Some(&last) = residuals.last() {
            if r > last {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        residuals.push(r);
        if rising >= 3 || !r.is_finite() {
            return Err(Error::Divergence(format!(
                "Picard residuals grew over three consecutive iterations ({residuals:?}); \
                 T = {t_end} is too large for contraction"
            )));
        }
        path = next;
    }
    Ok((path, residuals))
}

/// Iterates the Duhamel maps `n_iters` times starting from the free
/// evolution, doubling the midpoint panels until the final iterate settles.
pub fn picard_iterate(
    u0: &[f64],
    v0: &[f64],
    w0: &[f64],
    t_end: f64,
    n_iters: usize,
    params: &ModelParams,
    grid: &RadialGrid,
    opts: &PicardOptions,
) -> Result<PicardResult> {
    if !(t_end > 0.0) || t_end > opts.t_cap {
        return Err(config(format!(
            "Picard end time must lie in (0, {}], got {t_end}",
            opts.t_cap
        )));
    }
    for f in [u0, v0, w0] {
        if f.len() != grid.len() {
            return Err(Error::Usage("initial field length does not match the grid".into()));
        }
    }
    let init = [u0, v0, w0];
    let mut panels = opts.panels.max(1);
    let (mut path, mut residuals) = iterate_fixed_panels(init, t_end, n_iters, panels, params, grid, opts)?;
    while panels * 2 <= opts.max_panels {
        let (finer, res) = iterate_fixed_panels(init, t_end, n_iters, panels * 2, params, grid, opts)?;
        let last_a = path.last().expect("path has the initial node");
        let last_b = finer.last().expect("path has the initial node");
        let change = (0..3)
            .map(|k| {
                last_a[k]
                    .iter()
                    .zip(&last_b[k])
                    .fold(0.0_f64, |m, (p, q)| m.max((p - q).abs()))
            })
            .fold(0.0, f64::max);
        panels *= 2;
        path = finer;
        residuals = res;
        if change < opts.panel_tol {
            break;
        }
    }
    let [u, v, w] = path.pop().expect("path has the initial node");
    Ok(PicardResult {
        u,
        v,
        w,
        residuals,
        panels,
    })
}

/// Closed form and quadrature of `∫₀^∞ s^{−1/2} e^{−λs} ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaIntegral {
    pub closed_form: f64,
    pub quadrature: f64,
}

impl GammaIntegral {
    pub fn agreement(&self) -> f64 {
        (self.closed_form - self.quadrature).abs()
    }
}

pub fn gamma_integral(lam: f64) -> Result<GammaIntegral> {
    if !(lam > 0.0) || !lam.is_finite() {
        return Err(config(format!("gamma integral needs lambda > 0, got {lam}")));
    }
    let closed_form = (std::f64::consts::PI / lam).sqrt();
    let f = |s: f64| s.powf(-0.5) * (-lam * s).exp();
    let split = 1.0 / lam;
    let opts = QuadOptions {
        abs_tol: 0.0,
        rel_tol: 1e-13,
        max_intervals: 4000,
    };
    let head = integrate(f, 0.0, split, opts)?.value;
    let tail = integrate_to_infinity(f, split, opts)?.value;
    let quadrature = head + tail;
    if (quadrature - closed_form).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "gamma integral quadrature {quadrature} disagrees with sqrt(pi/lambda) = {closed_form}"
        )));
    }
    Ok(GammaIntegral {
        closed_form,
        quadrature,
    })
}

/// Boundedness report for `‖w‖₁` and `‖∇w‖₁` along a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1BoundReport {
    pub max_mass_w: f64,
    pub max_grad_w_mass: f64,
    /// `‖w₀‖₁ + (α‖u₀‖₁ + β‖v₀‖₁)(1 − e^{−λT})/λ`.
    pub mass_w_bound: f64,
    pub mass_w_within_bound: bool,
    /// Fitted `C` in `‖∇w‖₁ ≤ ‖∇w₀‖₁ + C (α‖u₀‖₁ + β‖v₀‖₁) √(π/λ)`.
    pub grad_fit_constant: f64,
    /// The `(α‖u₀‖₁ + β‖v₀‖₁) √(π/λ)` factor.
    pub structural_factor: f64,
    pub finite: bool,
}

/// Checks the L¹ bounds on `w` and `∇w` over the snapshots of a run.
pub fn check_l1_bounds(series: &TimeSeries, summary: &InitialDataSummary, params: &ModelParams) -> L1BoundReport {
    let snaps = &series.snapshots;
    let max_mass_w = snaps.iter().map(|s| s.mass_w).fold(0.0, f64::max);
    let max_grad = snaps.iter().map(|s| s.grad_w_mass).fold(0.0, f64::max);
    let t0 = snaps.first().map_or(0.0, |s| s.t);
    let horizon = snaps.last().map_or(0.0, |s| s.t) - t0;
    let source = params.alpha * summary.mass_u + params.beta * summary.mass_v;
    let window = if params.lambda > 0.0 {
        -(-params.lambda * horizon).exp_m1() / params.lambda
    } else {
        horizon
    };
    let mass_w_bound = summary.mass_w + source * window;
    let structural_factor = if params.lambda > 0.0 {
        source * (std::f64::consts::PI / params.lambda).sqrt()
    } else {
        source * 2.0 * horizon.sqrt()
    };
    let excess = (max_grad - summary.grad_w_mass).max(0.0);
    let grad_fit_constant = if excess == 0.0 {
        0.0
    } else {
        excess / structural_factor
    };
    L1BoundReport {
        max_mass_w,
        max_grad_w_mass: max_grad,
        mass_w_bound,
        mass_w_within_bound: max_mass_w <= mass_w_bound * (1.0 + 1e-9) + 1e-14,
        grad_fit_constant,
        structural_factor,
        finite: max_mass_w.is_finite() && max_grad.is_finite() && grad_fit_constant.is_finite(),
    }
}

/// `‖a − b‖∞`.
pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    sup(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>())
}
