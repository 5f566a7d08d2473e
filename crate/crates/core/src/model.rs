//! System constants, field state and the initial-data size `K`.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::grid::RadialGrid;
use crate::operators::radial_gradient;

/// The constants χ, ξ, λ, α, β of the system and the dimension N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub chi: f64,
    pub xi: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
}

impl ModelParams {
    /// Parameters of the blow-up problem: all five constants strictly
    /// positive and `N ≥ 3`.
    pub fn new(chi: f64, xi: f64, lambda: f64, alpha: f64, beta: f64, dim: usize) -> Result<Self> {
        let p = Self {
            chi,
            xi,
            lambda,
            alpha,
            beta,
            dim,
        };
        p.validate(true)?;
        Ok(p)
    }

    /// Like [`ModelParams::new`] but admitting zero constants, for the
    /// diffusion-only and decoupled validation problems.
    pub fn degenerate(chi: f64, xi: f64, lambda: f64, alpha: f64, beta: f64, dim: usize) -> Result<Self> {
        let p = Self {
            chi,
            xi,
            lambda,
            alpha,
            beta,
            dim,
        };
        p.validate(false)?;
        Ok(p)
    }

    /// Pure heat flow in every component.
    pub fn heat_only(dim: usize) -> Self {
        Self {
            chi: 0.0,
            xi: 0.0,
            lambda: 0.0,
            alpha: 0.0,
            beta: 0.0,
            dim,
        }
    }

    pub fn validate(&self, strict: bool) -> Result<()> {
        for (name, value) in self.named() {
            let bad = if strict { !(value > 0.0) } else { !(value >= 0.0) };
            if bad || !value.is_finite() {
                let need = if strict { "positive" } else { "nonnegative" };
                return Err(config(format!("{name} must be {need} and finite, got {value}")));
            }
        }
        if self.dim < 3 {
            return Err(config(format!("dim must be at least 3, got {}", self.dim)));
        }
        Ok(())
    }

    pub fn is_strict(&self) -> bool {
        self.named().iter().all(|(_, v)| *v > 0.0)
    }

    fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("chi", self.chi),
            ("xi", self.xi),
            ("lambda", self.lambda),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ]
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            chi: 1.0,
            xi: 1.0,
            lambda: 1.0,
            alpha: 1.0,
            beta: 1.0,
            dim: 3,
        }
    }
}

/// The triple `(u, v, w)` on a shared grid at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl FieldState {
    pub fn zeros(grid: &RadialGrid) -> Self {
        let n = grid.len();
        Self {
            t: 0.0,
            u: vec![0.0; n],
            v: vec![0.0; n],
            w: vec![0.0; n],
        }
    }

    pub fn from_fns<U, V, W>(grid: &RadialGrid, u: U, v: V, w: W) -> Self
    where
        U: Fn(f64) -> f64,
        V: Fn(f64) -> f64,
        W: Fn(f64) -> f64,
    {
        Self {
            t: 0.0,
            u: grid.sample(u),
            v: grid.sample(v),
            w: grid.sample(w),
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn sup_u(&self) -> f64 {
        sup(&self.u)
    }

    pub fn sup_v(&self) -> f64 {
        sup(&self.v)
    }

    pub fn check_shape(&self, grid: &RadialGrid) -> Result<()> {
        let n = grid.len();
        if self.u.len() != n || self.v.len() != n || self.w.len() != n {
            return Err(Error::Usage(format!(
                "state sizes ({}, {}, {}) do not match the grid's {n} nodes",
                self.u.len(),
                self.v.len(),
                self.w.len()
            )));
        }
        Ok(())
    }
}

pub(crate) fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Default positivity tolerance `10⁻¹⁰ (1 + ‖u‖∞)`.
pub fn default_tol_pos(state: &FieldState) -> f64 {
    1e-10 * (1.0 + state.sup_u().max(state.sup_v()))
}

/// Which field an invariant violation concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    U,
    V,
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Violation {
    Positivity { species: Species, node: usize, value: f64 },
    NonFinite { species: Species, node: usize },
}

/// Read-only report on a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    pub t: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_w: f64,
    pub violations: Vec<Violation>,
}

impl StateDiagnostics {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports extrema, masses and invariant violations of `state`.
pub fn validate_state(
    state: &FieldState,
    params: &ModelParams,
    grid: &RadialGrid,
    tol_pos: f64,
) -> Result<StateDiagnostics> {
    if params.dim != grid.dim() {
        return Err(Error::Usage(format!(
            "model dimension {} differs from grid dimension {}",
            params.dim,
            grid.dim()
        )));
    }
    state.check_shape(grid)?;
    let mut violations = Vec::new();
    for (species, f) in [(Species::U, &state.u), (Species::V, &state.v), (Species::W, &state.w)] {
        for (node, &x) in f.iter().enumerate() {
            if !x.is_finite() {
                violations.push(Violation::NonFinite { species, node });
            } else if species != Species::W && x < -tol_pos {
                violations.push(Violation::Positivity {
                    species,
                    node,
                    value: x,
                });
            }
        }
    }
    let finite_sum = |f: &[f64]| {
        grid.quad_weights()
            .iter()
            .zip(f)
            .filter(|(_, x)| x.is_finite())
            .map(|(w, x)| w * x)
            .sum::<f64>()
    };
    let min = |f: &[f64]| f.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(StateDiagnostics {
        t: state.t,
        min_u: min(&state.u),
        min_v: min(&state.v),
        mass_u: finite_sum(&state.u),
        mass_v: finite_sum(&state.v),
        sup_u: state.sup_u(),
        sup_v: state.sup_v(),
        sup_w: sup(&state.w),
        violations,
    })
}

/// The L¹ sizes of the initial data entering the blow-up threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSummary {
    pub mass_u: f64,
    pub mass_v: f64,
    pub mass_w: f64,
    pub grad_w_mass: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "K_plus_one")]
    pub k_plus_one: f64,
}

impl InitialDataSummary {
    pub fn from_parts(mass_u: f64, mass_v: f64, mass_w: f64, grad_w_mass: f64) -> Self {
        let k = mass_u + mass_v + mass_w + grad_w_mass;
        Self {
            mass_u,
            mass_v,
            mass_w,
            grad_w_mass,
            k,
            k_plus_one: k + 1.0,
        }
    }

    /// `K` with or without the `+1` shift.
    pub fn k_variant(&self, plus_one: bool) -> f64 {
        if plus_one {
            self.k_plus_one
        } else {
            self.k
        }
    }
}

/// Computes `K = ‖u₀‖₁ + ‖v₀‖₁ + ‖w₀‖₁ + ‖∇w₀‖₁` on the grid.
pub fn summarize_initial(state: &FieldState, grid: &RadialGrid) -> Result<InitialDataSummary> {
    if state.t != 0.0 {
        return Err(Error::Usage(format!(
            "initial-data summary requested at t = {}, expected t = 0",
            state.t
        )));
    }
    state.check_shape(grid)?;
    let wr = radial_gradient(&state.w, grid);
    Ok(InitialDataSummary::from_parts(
        grid.lp_norm(&state.u, 1.0)?,
        grid.lp_norm(&state.v, 1.0)?,
        grid.lp_norm(&state.w, 1.0)?,
        grid.lp_norm(&wr, 1.0)?,
    ))
}
