//! Factored symmetric tridiagonal systems for the implicit diffusion solves.

use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// LU factors of a symmetric tridiagonal matrix (Thomas algorithm).
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    off: Vec<f64>,
    pivot: Vec<f64>,
}

impl Tridiagonal {
    /// Factors the matrix with diagonal `diag` and sub/super-diagonal `off`.
    pub fn factor(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        if off.len() + 1 != n {
            return Err(Error::Numerical(format!(
                "tridiagonal shape mismatch: {} diagonal and {} off-diagonal entries",
                n,
                off.len()
            )));
        }
        let mut pivot = Vec::with_capacity(n);
        for i in 0..n {
            let p = if i == 0 {
                diag[0]
            } else {
                diag[i] - off[i - 1] * off[i - 1] / pivot[i - 1]
            };
            if !p.is_finite() || p.abs() <= f64::MIN_POSITIVE {
                return Err(Error::Numerical(format!(
                    "singular tridiagonal system: pivot {p:e} at row {i}"
                )));
            }
            pivot.push(p);
        }
        Ok(Self {
            off: off.to_vec(),
            pivot,
        })
    }

    /// The backward-Euler diffusion matrix `V (1 + dt·damping) + dt·S`, with
    /// `S` the stiffness matrix of the conservative Laplacian.
    pub fn diffusion(grid: &RadialGrid, dt: f64, damping: f64) -> Result<Self> {
        let g = grid.face_coef();
        let vol = grid.quad_weights();
        let m = grid.cells();
        let diag: Vec<f64> = (0..=m)
            .map(|i| {
                let left = if i > 0 { g[i - 1] } else { 0.0 };
                let right = if i < m { g[i] } else { 0.0 };
                vol[i] * (1.0 + dt * damping) + dt * (left + right)
            })
            .collect();
        let off: Vec<f64> = g.iter().map(|x| -dt * x).collect();
        Self::factor(&diag, &off)
    }

    /// Solves in place.
    pub fn solve(&self, rhs: &mut [f64]) {
        let n = self.pivot.len();
        for i in 1..n {
            rhs[i] -= self.off[i - 1] / self.pivot[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.off[i] * rhs[i + 1]) / self.pivot[i];
        }
    }
}
