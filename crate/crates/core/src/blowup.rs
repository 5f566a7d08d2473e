//! The Grönwall blow-up time and the classification of finished runs.

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::integrator::{RunOutcome, TerminationReason};

/// Data of `y(t) ≥ a + b ∫₀ᵗ y^κ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GronwallProblem {
    pub gron_a: f64,
    pub gron_b: f64,
    pub gron_kappa: f64,
}

impl GronwallProblem {
    pub fn new(a: f64, b: f64, kappa: f64) -> Result<Self> {
        let p = Self {
            gron_a: a,
            gron_b: b,
            gron_kappa: kappa,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gron_a > 0.0 && self.gron_a.is_finite()) {
            return Err(config(format!("gron_a must be positive, got {}", self.gron_a)));
        }
        if !(self.gron_b > 0.0 && self.gron_b.is_finite()) {
            return Err(config(format!("gron_b must be positive, got {}", self.gron_b)));
        }
        if !(self.gron_kappa > 1.0 && self.gron_kappa.is_finite()) {
            return Err(config(format!("gron_kappa must exceed 1, got {}", self.gron_kappa)));
        }
        Ok(())
    }
}

/// `1/((κ−1) a^{κ−1} b)`.
pub fn gronwall_bound(p: &GronwallProblem) -> Result<f64> {
    p.validate()?;
    let k1 = p.gron_kappa - 1.0;
    Ok(1.0 / (k1 * p.gron_a.powf(k1) * p.gron_b))
}

/// Escape time of `y′ = b y^κ, y(0) = a` and its comparison with the bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallCheck {
    pub measured: f64,
    pub bound: f64,
    pub relative_gap: f64,
    pub within_tolerance: bool,
    pub steps: usize,
}

const ESCAPE_LEVEL: f64 = 1e12;
const GRONWALL_TOL: f64 = 2e-2;

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `y′ = b y^κ` from `y(0) = a` with embedded Dormand–Prince
/// steps until `y > 10¹²`.
pub fn gronwall_ode_check(p: &GronwallProblem) -> Result<GronwallCheck> {
    let bound = gronwall_bound(p)?;
    let rhs = |y: f64| p.gron_b * y.max(0.0).powf(p.gron_kappa);
    let rtol = 1e-10;
    let mut t = 0.0;
    let mut y = p.gron_a;
    let mut h = 1e-3 * bound;
    let mut steps = 0;
    while y <= ESCAPE_LEVEL {
        let mut k = [0.0; 7];
        for s in 0..7 {
            let ys = y + h * (0..s).map(|m| A[s][m] * k[m]).sum::<f64>();
            k[s] = rhs(ys);
        }
        let y5 = y + h * (0..7).map(|s| B5[s] * k[s]).sum::<f64>();
        let y4 = y + h * (0..7).map(|s| B4[s] * k[s]).sum::<f64>();
        let err = (y5 - y4).abs() / (rtol * y5.abs().max(y.abs()));
        if err.is_finite() && err <= 1.0 && y5.is_finite() {
            t += h;
            y = y5;
            steps += 1;
        }
        let factor = if err.is_finite() {
            (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0)
        } else {
            0.2
        };
        h *= factor;
    }
    let relative_gap = (t - bound) / bound;
    Ok(GronwallCheck {
        measured: t,
        bound,
        relative_gap,
        within_tolerance: relative_gap.abs() <= GRONWALL_TOL,
        steps,
    })
}

/// What ended a blow-up run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowupTrigger {
    SupNormCap,
    DtCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BlowupStatus {
    BlewUp { t_star: f64, trigger: BlowupTrigger },
    GlobalUpTo { t: f64 },
    Inconclusive { reason: String },
}

impl BlowupStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::BlewUp { .. } => "BlewUp",
            Self::GlobalUpTo { .. } => "GlobalUpTo",
            Self::Inconclusive { .. } => "Inconclusive",
        }
    }

    pub fn blew_up(&self) -> bool {
        matches!(self, Self::BlewUp { .. })
    }

    pub fn t_star(&self) -> Option<f64> {
        match self {
            Self::BlewUp { t_star, .. } => Some(*t_star),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupVerdict {
    pub status: BlowupStatus,
    pub peak_sup_u: f64,
    pub peak_sup_v: f64,
    /// `F` at the last snapshot carrying an energy report.
    pub final_f: Option<f64>,
    pub dt_min_reached: f64,
    /// Last time `‖u‖∞` stayed below ten times its initial value.
    pub last_calm_time: f64,
}

/// Classifies a finished run.
pub fn detect_blowup(run: &RunOutcome) -> BlowupVerdict {
    let status = match &run.reason {
        TerminationReason::ReachedT => BlowupStatus::GlobalUpTo { t: run.final_state.t },
        TerminationReason::SupNormCap { t } => BlowupStatus::BlewUp {
            t_star: *t,
            trigger: BlowupTrigger::SupNormCap,
        },
        TerminationReason::DtCollapse { t } => BlowupStatus::BlewUp {
            t_star: *t,
            trigger: BlowupTrigger::DtCollapse,
        },
        TerminationReason::SchemeFailure { reason, .. } => BlowupStatus::Inconclusive {
            reason: if reason.contains("positivity") {
                "positivity".to_string()
            } else {
                reason.clone()
            },
        },
    };
    let final_f = run
        .series
        .snapshots
        .iter()
        .rev()
        .find_map(|s| s.energy.map(|e| e.f));
    BlowupVerdict {
        status,
        peak_sup_u: run.peak_sup_u,
        peak_sup_v: run.peak_sup_v,
        final_f,
        dt_min_reached: run.smallest_dt,
        last_calm_time: run.last_calm_time,
    }
}
