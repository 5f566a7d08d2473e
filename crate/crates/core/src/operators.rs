//! Discrete radial operators on a [`RadialGrid`] and the cut-off profile.
//!
//! The Laplacian and the chemotactic divergence are written in flux form
//! over the grid's cells, with zero flux through the origin and through
//! `r_max`. Summed against the quadrature weights, both telescope to zero.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::grid::RadialGrid;

/// Face value of the species density inside the chemotactic flux.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FluxAverage {
    #[default]
    Arithmetic,
    Upwind,
}

/// Discrete `f_r`: three-point differences on the interior, one-sided
/// second order at `r_max`, and zero at the origin.
pub fn radial_gradient(f: &[f64], grid: &RadialGrid) -> Vec<f64> {
    let r = grid.nodes();
    let m = grid.cells();
    let mut out = vec![0.0; m + 1];
    for i in 1..m {
        let hl = r[i] - r[i - 1];
        let hr = r[i + 1] - r[i];
        out[i] = -hr / (hl * (hl + hr)) * f[i - 1]
            + (hr - hl) / (hl * hr) * f[i]
            + hl / (hr * (hl + hr)) * f[i + 1];
    }
    let h1 = r[m] - r[m - 1];
    let h2 = r[m - 1] - r[m - 2];
    out[m] = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[m] - (h1 + h2) / (h1 * h2) * f[m - 1]
        + h1 / (h2 * (h1 + h2)) * f[m - 2];
    out
}

/// Discrete `f_rr + (N−1)/r f_r` in conservative form; `N f_rr(0)` at the
/// origin and a zero-flux closure at `r_max`.
pub fn radial_laplacian(f: &[f64], grid: &RadialGrid) -> Vec<f64> {
    let g = grid.face_coef();
    let vol = grid.quad_weights();
    let m = grid.cells();
    let mut out = vec![0.0; m + 1];
    let mut flux_in = 0.0;
    for i in 0..=m {
        let flux_out = if i < m { g[i] * (f[i + 1] - f[i]) } else { 0.0 };
        out[i] = (flux_out - flux_in) / vol[i];
        flux_in = flux_out;
    }
    out
}

/// Discrete radial divergence `r^{1−N}(r^{N−1} u w_r)_r` in flux form.
pub fn chemotaxis_divergence(u: &[f64], w: &[f64], grid: &RadialGrid, average: FluxAverage) -> Vec<f64> {
    let mut out = chemotaxis_balance(u, w, grid, average);
    for (x, v) in out.iter_mut().zip(grid.quad_weights()) {
        *x /= v;
    }
    out
}

/// Net outward chemotactic flux of every cell, i.e. the divergence
/// multiplied by the cell volume.
pub fn chemotaxis_balance(u: &[f64], w: &[f64], grid: &RadialGrid, average: FluxAverage) -> Vec<f64> {
    let g = grid.face_coef();
    let m = grid.cells();
    let mut out = vec![0.0; m + 1];
    let mut flux_in = 0.0;
    for i in 0..=m {
        let flux_out = if i < m {
            let dw = w[i + 1] - w[i];
            let face = match average {
                FluxAverage::Arithmetic => 0.5 * (u[i] + u[i + 1]),
                FluxAverage::Upwind => {
                    if dw >= 0.0 {
                        u[i]
                    } else {
                        u[i + 1]
                    }
                }
            };
            g[i] * face * dw
        } else {
            0.0
        };
        out[i] = flux_out - flux_in;
        flux_in = flux_out;
    }
    out
}

/// Smoothstep `η(s) = 1 − s³(10 − 15s + 6s²)`, equal to 1 for `s ≤ 0` and
/// 0 for `s ≥ 1`.
pub fn smoothstep(s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Derivative of [`smoothstep`].
pub fn smoothstep_slope(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let t = s * (1.0 - s);
        -30.0 * t * t
    }
}

/// The radial cut-off `ζ_R(r) = η(r − R)` sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffProfile {
    pub radius: f64,
    pub values: Vec<f64>,
    /// Exact `ζ_R'(r)` at the nodes.
    pub slope: Vec<f64>,
}

pub fn build_cutoff(radius: f64, grid: &RadialGrid) -> Result<CutoffProfile> {
    if !(radius > 0.0) {
        return Err(config(format!("cut-off radius must be positive, got {radius}")));
    }
    if radius + 1.0 > grid.r_max() {
        return Err(config(format!(
            "cut-off radius {radius} needs R + 1 <= r_max = {}",
            grid.r_max()
        )));
    }
    Ok(CutoffProfile {
        radius,
        values: grid.sample(|r| smoothstep(r - radius)),
        slope: grid.sample(|r| smoothstep_slope(r - radius)),
    })
}
