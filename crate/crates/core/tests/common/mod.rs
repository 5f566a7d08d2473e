//! Oracles shared by the integration tests. They deliberately avoid the
//! crate's own quadrature and operators.

#![allow(dead_code)]

use std::f64::consts::PI;

use ks_blowup::{Layout, RadialGrid};

/// Composite Simpson rule with `panels` (rounded up to even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    s * h / 3.0
}

/// `|∂B₁| ∫₀^R f(r) r² dr` in three dimensions with a million panels.
pub fn radial_3d<F: Fn(f64) -> f64>(f: F, r_max: f64) -> f64 {
    4.0 * PI * simpson(|r| f(r) * r * r, 0.0, r_max, 1_000_000)
}

pub fn uniform(r_max: f64, m: usize) -> RadialGrid {
    RadialGrid::build(r_max, m, Layout::Uniform, 3).unwrap()
}

pub fn gauss(r: f64) -> f64 {
    (-r * r).exp()
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
