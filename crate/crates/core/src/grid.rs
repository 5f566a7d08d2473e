//! Radial meshes on `[0, r_max]` and integration against the N-dimensional
//! radial measure `|∂B₁| rᴺ⁻¹ dr`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{config, Error, Result};

/// Node placement on `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layout {
    Uniform,
    /// Spacing shrinks by `ratio` per cell going inward, so nodes cluster at
    /// the origin.
    Geometric { ratio: f64 },
}

/// Truncated radial mesh with its quadrature weights.
///
/// The weights are trapezoidal in `r` against `|∂B₁| rᴺ⁻¹`, except at the
/// origin where the trapezoid weight vanishes and the exact volume of the
/// ball `B_{r₁/2}` is used instead. The same weights serve as the cell
/// volumes of the finite-volume operators, which makes the discrete mass
/// `Σ wᵢ uᵢ` an exact invariant of the conservative scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r_max: f64,
    nodes: Vec<f64>,
    dim: usize,
    layout: Layout,
    quad_weights: Vec<f64>,
    face_area: Vec<f64>,
    face_coef: Vec<f64>,
}

/// Surface area of the unit sphere in ℝᴺ, `2π^{N/2}/Γ(N/2)`.
pub fn unit_sphere_area(dim: usize) -> Result<f64> {
    if dim < 1 {
        return Err(config("dimension N must be at least 1"));
    }
    let half = dim as f64 / 2.0;
    Ok(2.0 * std::f64::consts::PI.powf(half) / gamma(half))
}

/// Volume of the ball of radius `r` in ℝᴺ.
pub fn ball_volume(dim: usize, r: f64) -> Result<f64> {
    Ok(unit_sphere_area(dim)? * r.powi(dim as i32) / dim as f64)
}

impl RadialGrid {
    /// Builds a grid with `m` cells (`m + 1` nodes) on `[0, r_max]`.
    pub fn build(r_max: f64, m: usize, layout: Layout, dim: usize) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(config(format!("r_max must be positive, got {r_max}")));
        }
        if m < 16 {
            return Err(config(format!("node count M must be at least 16, got {m}")));
        }
        if dim < 3 {
            return Err(config(format!("dimension N must be at least 3, got {dim}")));
        }
        let nodes = match layout {
            Layout::Uniform => (0..=m).map(|i| r_max * i as f64 / m as f64).collect::<Vec<_>>(),
            Layout::Geometric { ratio } => {
                if !(ratio > 0.0 && ratio < 1.0) {
                    return Err(config(format!(
                        "geometric ratio must lie in (0, 1), got {ratio}"
                    )));
                }
                let ln_rho = -ratio.ln();
                let denom = (m as f64 * ln_rho).exp_m1();
                let mut nodes: Vec<f64> = (0..=m)
                    .map(|i| r_max * (i as f64 * ln_rho).exp_m1() / denom)
                    .collect();
                nodes[m] = r_max;
                let inner = nodes.iter().filter(|&&r| r <= r_max / 10.0).count();
                if inner < m / 4 {
                    return Err(config(format!(
                        "geometric ratio {ratio} places only {inner} of {m} nodes inside r_max/10; \
                         at least {} are required",
                        m / 4
                    )));
                }
                if nodes.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(config(format!(
                        "geometric ratio {ratio} collapses node spacing below machine precision"
                    )));
                }
                nodes
            }
        };
        Self::from_nodes(nodes, dim, layout)
    }

    fn from_nodes(nodes: Vec<f64>, dim: usize, layout: Layout) -> Result<Self> {
        let area = unit_sphere_area(dim)?;
        let m = nodes.len() - 1;
        let r_max = nodes[m];
        let n = dim as i32;

        let mut quad_weights = vec![0.0; m + 1];
        quad_weights[0] = area * (0.5 * nodes[1]).powi(n) / dim as f64;
        for i in 1..=m {
            let left = nodes[i] - nodes[i - 1];
            let right = if i < m { nodes[i + 1] - nodes[i] } else { 0.0 };
            quad_weights[i] = area * nodes[i].powi(n - 1) * 0.5 * (left + right);
        }

        // Face areas chosen so that the conservative Laplacian maps r² to 2N
        // at every node carrying a two-sided stencil.
        let mut face_area = vec![0.0; m];
        let mut prev = 0.0;
        for i in 0..m {
            let back = if i == 0 { 0.0 } else { prev * (nodes[i] + nodes[i - 1]) };
            let a = (2.0 * dim as f64 * quad_weights[i] + back) / (nodes[i + 1] + nodes[i]);
            face_area[i] = a;
            prev = a;
        }
        let face_coef = face_area
            .iter()
            .enumerate()
            .map(|(i, a)| a / (nodes[i + 1] - nodes[i]))
            .collect();

        Ok(Self {
            r_max,
            nodes,
            dim,
            layout,
            quad_weights,
            face_area,
            face_coef,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn layout(&self) -> Layout {
        self.layout
    }
    /// Number of cells `M`; there are `M + 1` nodes.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }
    /// Effective area of the face between nodes `i` and `i + 1`.
    pub fn face_area(&self) -> &[f64] {
        &self.face_area
    }
    /// Face area divided by the node spacing across that face.
    pub fn face_coef(&self) -> &[f64] {
        &self.face_coef
    }
    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }
    pub fn min_spacing(&self) -> f64 {
        (0..self.cells())
            .map(|i| self.spacing(i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples `f` at every node.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.len() {
            return Err(Error::Usage(format!(
                "field has {} values but the grid has {} nodes",
                f.len(),
                self.len()
            )));
        }
        Ok(())
    }

    fn check_finite(&self, f: &[f64]) -> Result<()> {
        self.check_len(f)?;
        match f.iter().position(|x| !x.is_finite()) {
            Some(node) => Err(Error::Evaluation {
                node,
                r: self.nodes[node],
                what: format!("non-finite field value {}", f[node]),
            }),
            None => Ok(()),
        }
    }

    /// `|∂B₁| ∫₀^{r_max} f rᴺ⁻¹ dr` by the grid's quadrature rule.
    pub fn integrate(&self, f: &[f64]) -> Result<f64> {
        self.check_finite(f)?;
        Ok(self.weighted_sum(f))
    }

    pub(crate) fn weighted_sum(&self, f: &[f64]) -> f64 {
        self.quad_weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    /// `(∫|f|ᵖ dx)^{1/p}`, or the nodal maximum of `|f|` for `p = ∞`.
    pub fn lp_norm(&self, f: &[f64], p: f64) -> Result<f64> {
        if p.is_nan() || p < 1.0 {
            return Err(config(format!("L^p exponent must be at least 1, got {p}")));
        }
        self.check_finite(f)?;
        Ok(if p == f64::INFINITY {
            f.iter().fold(0.0, |m, x| m.max(x.abs()))
        } else if p == 1.0 {
            self.weighted_sum(&f.iter().map(|x| x.abs()).collect::<Vec<_>>())
        } else {
            let s: f64 = self
                .quad_weights
                .iter()
                .zip(f)
                .map(|(w, x)| w * x.abs().powf(p))
                .sum();
            s.powf(1.0 / p)
        })
    }

    /// Warns when the outermost value is not negligible against the sup-norm,
    /// i.e. when truncating ℝᴺ to the ball of radius `r_max` is visible.
    /// Returns whether the check passed.
    pub fn tail_check(&self, f: &[f64], name: &str) -> bool {
        let sup = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let tail = f.last().map_or(0.0, |x| x.abs());
        let ok = tail <= 1e-8 * sup;
        if !ok {
            log::warn!(
                "tail of {name} at r_max = {} is {tail:e}, above 1e-8 of its sup-norm {sup:e}",
                self.r_max
            );
        }
        ok
    }

    /// Index of the first node with `r ≥ x`, clamped to the last node.
    pub fn locate(&self, x: f64) -> usize {
        self.nodes.partition_point(|&r| r < x).min(self.cells())
    }

    /// Piecewise-linear interpolation of a nodal field.
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            return f[0];
        }
        if x >= self.r_max {
            return f[self.cells()];
        }
        let j = self.locate(x).max(1);
        let (a, b) = (self.nodes[j - 1], self.nodes[j]);
        let s = (x - a) / (b - a);
        f[j - 1] * (1.0 - s) + f[j] * s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert_relative_eq!(unit_sphere_area(2).unwrap(), 2.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(3).unwrap(), 4.0 * PI, max_relative = 1e-14);
        assert_relative_eq!(unit_sphere_area(4).unwrap(), 2.0 * PI * PI, max_relative = 1e-14);
        assert!(unit_sphere_area(0).is_err());
    }

    #[test]
    fn uniform_endpoints() {
        let g = RadialGrid::build(1.0, 16, Layout::Uniform, 3).unwrap();
        assert_eq!(g.len(), 17);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.nodes()[16], 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RadialGrid::build(0.0, 64, Layout::Uniform, 3).is_err());
        assert!(RadialGrid::build(1.0, 15, Layout::Uniform, 3).is_err());
        assert!(RadialGrid::build(1.0, 64, Layout::Uniform, 2).is_err());
        assert!(RadialGrid::build(1.0, 64, Layout::Geometric { ratio: 1.2 }, 3).is_err());
        // too mild a ratio cannot cluster a quarter of the nodes near the origin
        assert!(RadialGrid::build(1.0, 64, Layout::Geometric { ratio: 0.999 }, 3).is_err());
    }

    #[test]
    fn non_finite_is_located() {
        let g = RadialGrid::build(1.0, 16, Layout::Uniform, 3).unwrap();
        let mut f = vec![1.0; 17];
        f[5] = f64::NAN;
        match g.integrate(&f) {
            Err(Error::Evaluation { node, .. }) => assert_eq!(node, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = RadialGrid::build(2.0, 32, Layout::Uniform, 3).unwrap();
        let f = g.sample(|r| r * r);
        assert_eq!(g.interpolate(&f, g.nodes()[7]), f[7]);
        let mid = 0.5 * (g.nodes()[3] + g.nodes()[4]);
        assert_relative_eq!(g.interpolate(&f, mid), 0.5 * (f[3] + f[4]));
    }
}
