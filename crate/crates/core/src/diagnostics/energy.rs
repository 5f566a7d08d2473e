//! The energy functional, its dissipation, and the discrete energy
//! inequalities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::model::{FieldState, ModelParams};
use crate::operators::{radial_gradient, radial_laplacian};

/// Energy components and dissipation norms at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    /// `½ ∫|∇w|²`
    pub dirichlet: f64,
    /// `λ/2 ∫w²`
    pub l2w: f64,
    /// `∫(αu + βv) w`
    pub coupling: f64,
    /// `(α/χ) ∫(u+1) log(u+1)`
    pub entropy_u: f64,
    /// `(β/ξ) ∫(v+1) log(v+1)`
    pub entropy_v: f64,
    #[serde(rename = "F")]
    pub f: f64,
    /// `‖Δw − λw + αu + βv‖₂`, the L² norm of `w_t`.
    pub norm_f: f64,
    pub norm_g1: f64,
    pub norm_g2: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

impl EnergyReport {
    /// `∫|∇w|²`.
    pub fn grad_w_sq(&self) -> f64 {
        2.0 * self.dirichlet
    }

    /// Right side of the differential energy inequality at this instant.
    pub fn inequality_rhs(&self, params: &ModelParams) -> f64 {
        -0.5 * params.alpha * self.norm_g1 * self.norm_g1 - 0.5 * params.beta * self.norm_g2 * self.norm_g2
            + 0.5 * (params.alpha * params.chi + params.beta * params.xi) * self.grad_w_sq()
            - 0.5 * self.norm_f * self.norm_f
    }
}

fn entropy_weight(coef: f64, sens: f64, name: &str) -> Result<f64> {
    if sens > 0.0 {
        Ok(coef / sens)
    } else if coef == 0.0 {
        Ok(0.0)
    } else {
        Err(Error::Usage(format!(
            "entropy weight is undefined: {name} sensitivity is zero while its coupling is {coef}"
        )))
    }
}

fn g_norm(
    f: &[f64],
    fr: &[f64],
    wr: &[f64],
    sens: f64,
    grid: &RadialGrid,
) -> f64 {
    if sens == 0.0 {
        return 0.0;
    }
    let s: f64 = (0..grid.len())
        .map(|i| {
            let root = (sens * (f[i] + 1.0)).sqrt();
            let g = fr[i] / root - root * wr[i];
            grid.quad_weights()[i] * g * g
        })
        .sum();
    s.sqrt()
}

/// `w_t = Δw − λw + αu + βv` at every node.
pub fn signal_rate(state: &FieldState, params: &ModelParams, grid: &RadialGrid) -> Vec<f64> {
    let lap = radial_laplacian(&state.w, grid);
    (0..grid.len())
        .map(|i| lap[i] - params.lambda * state.w[i] + params.alpha * state.u[i] + params.beta * state.v[i])
        .collect()
}

/// `½ Σ G (Δw)²` over the faces: the discrete `½∫|∇w|²` that pairs with the
/// conservative Laplacian.
pub fn dirichlet_energy(w: &[f64], grid: &RadialGrid) -> f64 {
    0.5 * grid
        .face_coef()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let d = w[i + 1] - w[i];
            g * d * d
        })
        .sum::<f64>()
}

/// Evaluates the energy functional and its dissipation.
pub fn energy(state: &FieldState, params: &ModelParams, grid: &RadialGrid) -> Result<EnergyReport> {
    state.check_shape(grid)?;
    for (name, f) in [("u", &state.u), ("v", &state.v)] {
        if let Some(node) = f.iter().position(|&x| !(x > -1.0)) {
            return Err(Error::Evaluation {
                node,
                r: grid.nodes()[node],
                what: format!("log argument {name} + 1 = {} is not positive", f[node] + 1.0),
            });
        }
    }
    let ent = |f: &[f64]| {
        grid.weighted_sum(&f.iter().map(|&x| (x + 1.0) * x.ln_1p()).collect::<Vec<_>>())
    };
    let wu = entropy_weight(params.alpha, params.chi, "chi")?;
    let wv = entropy_weight(params.beta, params.xi, "xi")?;

    let dirichlet = dirichlet_energy(&state.w, grid);
    let l2w = 0.5 * params.lambda * grid.weighted_sum(&state.w.iter().map(|x| x * x).collect::<Vec<_>>());
    let coupling = grid.weighted_sum(
        &(0..grid.len())
            .map(|i| (params.alpha * state.u[i] + params.beta * state.v[i]) * state.w[i])
            .collect::<Vec<_>>(),
    );
    let entropy_u = if wu == 0.0 { 0.0 } else { wu * ent(&state.u) };
    let entropy_v = if wv == 0.0 { 0.0 } else { wv * ent(&state.v) };
    let f = dirichlet + l2w - coupling + entropy_u + entropy_v;

    let wt = signal_rate(state, params, grid);
    let norm_f = grid.weighted_sum(&wt.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let wr = radial_gradient(&state.w, grid);
    let norm_g1 = g_norm(&state.u, &radial_gradient(&state.u, grid), &wr, params.chi, grid);
    let norm_g2 = g_norm(&state.v, &radial_gradient(&state.v, grid), &wr, params.xi, grid);
    let d = 0.5 * norm_f * norm_f + 0.5 * params.alpha * norm_g1 * norm_g1 + 0.5 * params.beta * norm_g2 * norm_g2;

    Ok(EnergyReport {
        t: state.t,
        dirichlet,
        l2w,
        coupling,
        entropy_u,
        entropy_v,
        f,
        norm_f,
        norm_g1,
        norm_g2,
        d,
    })
}

/// Result of the discrete differential energy inequality over one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub holds: bool,
    /// `RHS(midpoint) − (F_after − F_before)/dt`; nonnegative when the
    /// inequality holds without slack.
    pub margin: f64,
    pub tolerance: f64,
}

/// Checks `(F_after − F_before)/dt ≤ RHS` with the right side averaged over
/// the two reports, allowing `c_tol · dt` of slack.
pub fn check_energy_inequality(
    before: &EnergyReport,
    after: &EnergyReport,
    dt: f64,
    params: &ModelParams,
    c_tol: f64,
) -> Result<InequalityCheck> {
    if !(dt > 0.0) {
        return Err(Error::Usage(format!("step must be positive, got {dt}")));
    }
    let gap = (after.t - before.t - dt).abs();
    if gap > 1e-9 * dt.max(after.t.abs()) {
        return Err(Error::Usage(format!(
            "reports are {} apart but dt = {dt}",
            after.t - before.t
        )));
    }
    let lhs = (after.f - before.f) / dt;
    let rhs = 0.5 * (before.inequality_rhs(params) + after.inequality_rhs(params));
    let margin = rhs - lhs;
    let tolerance = c_tol * dt;
    Ok(InequalityCheck {
        holds: margin + tolerance >= 0.0,
        margin,
        tolerance,
    })
}

/// Accumulates the integral form
/// `F(t) + ∫D ≤ F(0) + (αχ+βξ)(∫coupling + ∫F)` by the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct IntegralEnergyCheck {
    params: ModelParams,
    initial_f: f64,
    last: EnergyReport,
    int_d: f64,
    int_coupling: f64,
    int_f: f64,
    worst_margin: f64,
}

impl IntegralEnergyCheck {
    pub fn new(initial: EnergyReport, params: ModelParams) -> Self {
        Self {
            params,
            initial_f: initial.f,
            last: initial,
            int_d: 0.0,
            int_coupling: 0.0,
            int_f: 0.0,
            worst_margin: f64::INFINITY,
        }
    }

    /// Adds the next report and returns the current margin
    /// `RHS − LHS` of the integral inequality.
    pub fn push(&mut self, next: EnergyReport) -> f64 {
        let h = next.t - self.last.t;
        self.int_d += 0.5 * h * (self.last.d + next.d);
        self.int_coupling += 0.5 * h * (self.last.coupling + next.coupling);
        self.int_f += 0.5 * h * (self.last.f + next.f);
        self.last = next;
        let k = self.params.alpha * self.params.chi + self.params.beta * self.params.xi;
        let margin = self.initial_f + k * (self.int_coupling + self.int_f) - (next.f + self.int_d);
        self.worst_margin = self.worst_margin.min(margin);
        margin
    }

    pub fn worst_margin(&self) -> f64 {
        self.worst_margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Layout;

    #[test]
    fn zero_state_has_zero_energy() {
        let g = RadialGrid::build(5.0, 64, Layout::Uniform, 3).unwrap();
        let e = energy(&FieldState::zeros(&g), &ModelParams::default(), &g).unwrap();
        assert_eq!(e.f, 0.0);
        assert_eq!(e.d, 0.0);
        let c = check_energy_inequality(&e, &EnergyReport { t: 0.1, ..e }, 0.1, &ModelParams::default(), 0.0).unwrap();
        assert!(c.holds);
        assert_eq!(c.margin, 0.0);
    }

    #[test]
    fn log_argument_is_checked() {
        let g = RadialGrid::build(5.0, 64, Layout::Uniform, 3).unwrap();
        let mut s = FieldState::zeros(&g);
        s.v[3] = -1.0;
        assert!(matches!(
            energy(&s, &ModelParams::default(), &g),
            Err(Error::Evaluation { node: 3, .. })
        ));
    }

    #[test]
    fn zero_sensitivity_needs_zero_coupling() {
        let g = RadialGrid::build(5.0, 64, Layout::Uniform, 3).unwrap();
        let s = FieldState::zeros(&g);
        let bad = ModelParams::degenerate(0.0, 1.0, 1.0, 1.0, 1.0, 3).unwrap();
        assert!(energy(&s, &bad, &g).is_err());
        assert!(energy(&s, &ModelParams::heat_only(3), &g).is_ok());
    }
}
