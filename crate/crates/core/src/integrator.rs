//! First-order IMEX time stepping with adaptive step control.
//!
//! Diffusion (and the `−λw` damping) is implicit; chemotactic advection and
//! the sources `αu + βv` are explicit. The species are advanced against the
//! current `w`, then `w` is advanced with the new species.

use serde::{Deserialize, Serialize};

use crate::diagnostics::energy::{energy, EnergyReport};
use crate::error::{config, Error, Result};
use crate::grid::RadialGrid;
use crate::model::{default_tol_pos, sup, FieldState, ModelParams};
use crate::operators::{chemotaxis_balance, radial_gradient, FluxAverage};
use crate::tridiag::Tridiagonal;

/// Step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_fraction: f64,
    /// Bounds step growth: a new step is at most `dt_prev / safety`.
    pub safety: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt_init: 1e-4,
            dt_min: 1e-9,
            dt_max: 1e-3,
            cfl_fraction: 0.4,
            safety: 0.8,
        }
    }
}

impl StepControl {
    pub fn fixed(dt: f64) -> Self {
        Self {
            dt_init: dt,
            dt_min: dt,
            dt_max: dt,
            cfl_fraction: 1.0,
            safety: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt_init
            && self.dt_init <= self.dt_max
            && self.dt_max.is_finite();
        if !ok {
            return Err(config(format!(
                "step control needs 0 < dt_min <= dt_init <= dt_max, got {} / {} / {}",
                self.dt_min, self.dt_init, self.dt_max
            )));
        }
        if !(self.cfl_fraction > 0.0 && self.cfl_fraction <= 1.0) {
            return Err(config(format!(
                "cfl_fraction must lie in (0, 1], got {}",
                self.cfl_fraction
            )));
        }
        if !(self.safety > 0.0 && self.safety < 1.0) {
            return Err(config(format!("safety must lie in (0, 1), got {}", self.safety)));
        }
        Ok(())
    }
}

/// Spatial-scheme options shared by every step of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SchemeOptions {
    pub flux: FluxAverage,
    /// Absolute positivity tolerance; `None` uses `10⁻¹⁰ (1 + ‖u‖∞)`.
    pub tol_pos: Option<f64>,
}

/// Advances `state` by one IMEX step of length `dt`.
pub fn step(
    state: &FieldState,
    params: &ModelParams,
    grid: &RadialGrid,
    dt: f64,
    options: &SchemeOptions,
) -> Result<FieldState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Usage(format!("time step must be positive, got {dt}")));
    }
    state.check_shape(grid)?;
    let vol = grid.quad_weights();
    let species = Tridiagonal::diffusion(grid, dt, 0.0)?;
    let signal = Tridiagonal::diffusion(grid, dt, params.lambda)?;

    let advance = |f: &[f64], sens: f64| {
        let mut rhs: Vec<f64> = f.iter().zip(vol).map(|(x, v)| v * x).collect();
        if sens != 0.0 {
            let bal = chemotaxis_balance(f, &state.w, grid, options.flux);
            for (r, b) in rhs.iter_mut().zip(&bal) {
                *r -= dt * sens * b;
            }
        }
        species.solve(&mut rhs);
        rhs
    };
    let u = advance(&state.u, params.chi);
    let v = advance(&state.v, params.xi);

    let mut w: Vec<f64> = (0..grid.len())
        .map(|i| vol[i] * (state.w[i] + dt * (params.alpha * u[i] + params.beta * v[i])))
        .collect();
    signal.solve(&mut w);

    let next = FieldState {
        t: state.t + dt,
        u,
        v,
        w,
    };
    check_admissible(next, options)
}

fn check_admissible(next: FieldState, options: &SchemeOptions) -> Result<FieldState> {
    let tol = options.tol_pos.unwrap_or_else(|| default_tol_pos(&next));
    let mut reason = None;
    for (name, f) in [("u", &next.u), ("v", &next.v), ("w", &next.w)] {
        if let Some(i) = f.iter().position(|x| !x.is_finite()) {
            reason = Some(format!("non-finite {name} at node {i}"));
            break;
        }
    }
    if reason.is_none() {
        for (name, f) in [("u", &next.u), ("v", &next.v)] {
            if let Some((i, x)) = f.iter().enumerate().find(|(_, &x)| x < -tol) {
                reason = Some(format!("positivity: {name} = {x:e} at node {i} below -{tol:e}"));
                break;
            }
        }
    }
    match reason {
        None => Ok(next),
        Some(reason) => Err(Error::SchemeFailure {
            t: next.t,
            reason,
            state: Box::new(next),
        }),
    }
}

/// The advective step bound `cfl · Δr_min / (max(χ, ξ) ‖w_r‖∞)` before
/// clamping; infinite when there is no advection.
pub fn advective_dt(state: &FieldState, params: &ModelParams, grid: &RadialGrid, cfl: f64) -> f64 {
    let speed = params.chi.max(params.xi) * sup(&radial_gradient(&state.w, grid));
    if speed == 0.0 {
        f64::INFINITY
    } else {
        cfl * grid.min_spacing() / speed
    }
}

/// Largest step for which no cell can export more than `cfl` of its
/// content by advection: `cfl · min_i V_i / (max(χ,ξ) Σ_faces G|Δw|)`.
/// Near the origin this is tighter than [`advective_dt`] because the
/// innermost cell volumes shrink faster than their faces.
pub fn outflow_dt(state: &FieldState, params: &ModelParams, grid: &RadialGrid, cfl: f64) -> f64 {
    let sens = params.chi.max(params.xi);
    if sens == 0.0 {
        return f64::INFINITY;
    }
    let g = grid.face_coef();
    let vol = grid.quad_weights();
    let mut best = f64::INFINITY;
    for i in 0..grid.len() {
        let left = if i > 0 { g[i - 1] * (state.w[i] - state.w[i - 1]).abs() } else { 0.0 };
        let right = if i < g.len() { g[i] * (state.w[i + 1] - state.w[i]).abs() } else { 0.0 };
        let out = left + right;
        if out > 0.0 {
            best = best.min(vol[i] / out);
        }
    }
    cfl * best / sens
}

/// Suggested step, clamped into `[dt_min, dt_max]`.
pub fn suggest_dt(state: &FieldState, params: &ModelParams, grid: &RadialGrid, control: &StepControl) -> f64 {
    advective_dt(state, params, grid, control.cfl_fraction).clamp(control.dt_min, control.dt_max)
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TerminationReason {
    ReachedT,
    SupNormCap { t: f64 },
    DtCollapse { t: f64 },
    SchemeFailure { t: f64, reason: String },
}

/// One row of the time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub mass_w: f64,
    pub grad_w_mass: f64,
    pub sup_u: f64,
    pub sup_v: f64,
    pub sup_w: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub energy: Option<EnergyReport>,
}

impl Snapshot {
    pub fn capture(
        state: &FieldState,
        params: &ModelParams,
        grid: &RadialGrid,
        step: usize,
        dt: f64,
        with_energy: bool,
    ) -> Self {
        let wr = radial_gradient(&state.w, grid);
        let abs_sum = |f: &[f64]| {
            grid.quad_weights()
                .iter()
                .zip(f)
                .map(|(v, x)| v * x.abs())
                .sum::<f64>()
        };
        let min = |f: &[f64]| f.iter().copied().fold(f64::INFINITY, f64::min);
        Self {
            step,
            t: state.t,
            dt,
            mass_u: grid.weighted_sum(&state.u),
            mass_v: grid.weighted_sum(&state.v),
            mass_w: abs_sum(&state.w),
            grad_w_mass: abs_sum(&wr),
            sup_u: state.sup_u(),
            sup_v: state.sup_v(),
            sup_w: sup(&state.w),
            min_u: min(&state.u),
            min_v: min(&state.v),
            energy: if with_energy {
                energy(state, params, grid).ok()
            } else {
                None
            },
        }
    }
}

/// Snapshots plus full-state checkpoints, in increasing time.
#[derive(Debug, Clone, Default)]
pub struct TimeSeries {
    pub snapshots: Vec<Snapshot>,
    pub checkpoints: Vec<FieldState>,
}

/// What to record while running.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    /// Record a snapshot every this many steps (the first and last state are
    /// always recorded).
    pub snapshot_every: usize,
    /// Evaluate the energy report at each snapshot.
    pub energy: bool,
    /// Keep a full state every this many steps; 0 keeps none.
    pub checkpoint_every: usize,
    /// Stop once `‖u‖∞ + ‖v‖∞` exceeds this multiple of its initial value.
    pub sup_cap_factor: f64,
    pub scheme: SchemeOptions,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            snapshot_every: 1,
            energy: true,
            checkpoint_every: 0,
            sup_cap_factor: 1e3,
            scheme: SchemeOptions::default(),
        }
    }
}

/// Everything a finished run returns.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub series: TimeSeries,
    pub reason: TerminationReason,
    pub final_state: FieldState,
    pub steps: usize,
    pub smallest_dt: f64,
    pub peak_sup_u: f64,
    pub peak_sup_v: f64,
    /// Last time `‖u‖∞` was below ten times its initial value.
    pub last_calm_time: f64,
}

/// Callback invoked after every accepted step with the previous state, the
/// new state and the step length.
pub trait Observer {
    fn observe(&mut self, before: &FieldState, after: &FieldState, dt: f64) -> Result<()>;
}

impl<F: FnMut(&FieldState, &FieldState, f64) -> Result<()>> Observer for F {
    fn observe(&mut self, before: &FieldState, after: &FieldState, dt: f64) -> Result<()> {
        self(before, after, dt)
    }
}

/// Advances until `t_end`, a blow-up trigger, or a scheme failure.
pub fn run_until(
    initial: &FieldState,
    params: &ModelParams,
    grid: &RadialGrid,
    t_end: f64,
    control: &StepControl,
    options: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutcome> {
    control.validate()?;
    if !(t_end > initial.t) {
        return Err(Error::Usage(format!(
            "end time {t_end} must exceed the start time {}",
            initial.t
        )));
    }
    initial.check_shape(grid)?;
    let every = options.snapshot_every.max(1);
    let sup0 = initial.sup_u() + initial.sup_v();
    let sup_u0 = initial.sup_u();
    let cap = options.sup_cap_factor * sup0;

    let mut series = TimeSeries::default();
    series
        .snapshots
        .push(Snapshot::capture(initial, params, grid, 0, 0.0, options.energy));
    if options.checkpoint_every > 0 {
        series.checkpoints.push(initial.clone());
    }

    let mut state = initial.clone();
    let mut steps = 0usize;
    let mut dt_prev = control.dt_init;
    let mut smallest_dt = f64::INFINITY;
    let mut peak_u = initial.sup_u();
    let mut peak_v = initial.sup_v();
    let mut last_calm = initial.t;
    let mut last_dt = 0.0;
    // relative slack so that floating-point accumulation of t cannot leave a
    // sliver step at the end
    let t_eps = 1e-12 * t_end.abs().max(1.0);

    let reason = loop {
        if state.t >= t_end - t_eps {
            break TerminationReason::ReachedT;
        }
        let raw = advective_dt(&state, params, grid, control.cfl_fraction)
            .min(outflow_dt(&state, params, grid, control.cfl_fraction));
        if raw < control.dt_min {
            break TerminationReason::DtCollapse { t: state.t };
        }
        let grow = if steps == 0 { control.dt_init } else { dt_prev / control.safety };
        let mut dt = raw.min(control.dt_max).min(grow).max(control.dt_min);
        let remaining = t_end - state.t;
        if dt >= remaining - t_eps {
            dt = remaining;
        }
        let next = match step(&state, params, grid, dt, &options.scheme) {
            Ok(next) => next,
            Err(Error::SchemeFailure { t, reason, state: bad }) => {
                log::warn!("scheme failure at t = {t}: {reason}");
                series.snapshots.push(Snapshot::capture(
                    &bad,
                    params,
                    grid,
                    steps + 1,
                    dt,
                    false,
                ));
                break TerminationReason::SchemeFailure { t, reason };
            }
            Err(e) => return Err(e),
        };
        for obs in observers.iter_mut() {
            obs.observe(&state, &next, dt)?;
        }
        steps += 1;
        smallest_dt = smallest_dt.min(dt);
        dt_prev = dt;
        last_dt = dt;
        state = next;
        if t_end - state.t <= t_eps {
            state.t = t_end;
        }

        let (su, sv) = (state.sup_u(), state.sup_v());
        peak_u = peak_u.max(su);
        peak_v = peak_v.max(sv);
        if su < 10.0 * sup_u0 || sup_u0 == 0.0 {
            last_calm = state.t;
        }
        let capped = sup0 > 0.0 && su + sv > cap;
        let done = capped || state.t >= t_end;
        if steps % every == 0 || done {
            series
                .snapshots
                .push(Snapshot::capture(&state, params, grid, steps, dt, options.energy));
        }
        if options.checkpoint_every > 0 && steps % options.checkpoint_every == 0 {
            series.checkpoints.push(state.clone());
        }
        if capped {
            break TerminationReason::SupNormCap { t: state.t };
        }
    };
    if let Some(last) = series.snapshots.last() {
        if last.step != steps && !matches!(reason, TerminationReason::SchemeFailure { .. }) {
            series.snapshots.push(Snapshot::capture(
                &state,
                params,
                grid,
                steps,
                last_dt,
                options.energy,
            ));
        }
    }

    Ok(RunOutcome {
        series,
        reason,
        final_state: state,
        steps,
        smallest_dt: if smallest_dt.is_finite() { smallest_dt } else { 0.0 },
        peak_sup_u: peak_u,
        peak_sup_v: peak_v,
        last_calm_time: last_calm,
    })
}
