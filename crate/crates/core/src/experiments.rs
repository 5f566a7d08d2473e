//! The experiment driver: runs one configured experiment, writes CSV tables,
//! a `summary.toml` record, checkpoints and plot data into an output
//! directory.
//!
//! Outputs depend only on the configuration. Wall time appears in the summary
//! record but never in a CSV.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::blowup::{detect_blowup, gronwall_bound, gronwall_ode_check, BlowupVerdict, GronwallProblem};
use crate::checkpoint::Checkpoint;
use crate::config::{Config, ExperimentKind};
use crate::diagnostics::{
    check_energy_inequality, coupling_estimate_probe, energy, pointwise_bound_probe, IntegralEnergyCheck,
    ProbeConfig, RatioFit,
};
use crate::error::{Error, Result};
use crate::family::{dense_family, family_energy_trend, loglog_slope, DenseFamilySpec, FamilyTrend};
use crate::grid::RadialGrid;
use crate::integrator::{run_until, RunOutcome, Snapshot, StepControl};
use crate::model::{summarize_initial, FieldState, ModelParams};
use crate::scan::{compare_refinement, threshold_scan, RefinementFlag, ScanTable};
use crate::semigroup::{check_l1_bounds, gamma_integral, picard_iterate, sup_distance, PicardOptions};

/// What an experiment produced.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub result: toml::Table,
}

struct Output {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn checkpoint(&mut self, name: &str, ck: &Checkpoint) -> Result<()> {
        let path = self.dir.join(name);
        ck.save(&path)?;
        self.files.push(path);
        Ok(())
    }
}

fn to_table<T: Serialize>(value: &T) -> toml::Table {
    toml::Table::try_from(value).unwrap_or_default()
}

fn insert<T: Into<toml::Value>>(t: &mut toml::Table, key: &str, value: T) {
    t.insert(key.to_string(), value.into());
}

/// TOML has no NaN-free guarantee in every reader; non-finite values are
/// stored as strings.
fn num(x: f64) -> toml::Value {
    if x.is_finite() {
        toml::Value::Float(x)
    } else {
        toml::Value::String(format!("{x}"))
    }
}

#[derive(Serialize)]
struct SnapshotRow {
    step: usize,
    t: f64,
    dt: f64,
    mass_u: f64,
    mass_v: f64,
    mass_w: f64,
    grad_w_mass: f64,
    sup_u: f64,
    sup_v: f64,
    sup_w: f64,
    min_u: f64,
    min_v: f64,
    #[serde(rename = "F")]
    f: f64,
    dirichlet: f64,
    l2w: f64,
    coupling: f64,
    entropy_u: f64,
    entropy_v: f64,
    #[serde(rename = "D")]
    d: f64,
}

impl From<&Snapshot> for SnapshotRow {
    fn from(s: &Snapshot) -> Self {
        let e = s.energy;
        let pick = |g: fn(&crate::diagnostics::EnergyReport) -> f64| e.as_ref().map_or(f64::NAN, g);
        Self {
            step: s.step,
            t: s.t,
            dt: s.dt,
            mass_u: s.mass_u,
            mass_v: s.mass_v,
            mass_w: s.mass_w,
            grad_w_mass: s.grad_w_mass,
            sup_u: s.sup_u,
            sup_v: s.sup_v,
            sup_w: s.sup_w,
            min_u: s.min_u,
            min_v: s.min_v,
            f: pick(|e| e.f),
            dirichlet: pick(|e| e.dirichlet),
            l2w: pick(|e| e.l2w),
            coupling: pick(|e| e.coupling),
            entropy_u: pick(|e| e.entropy_u),
            entropy_v: pick(|e| e.entropy_v),
            d: pick(|e| e.d),
        }
    }
}

#[derive(Serialize)]
struct ProfileRow {
    r: f64,
    u0: f64,
    v0: f64,
    w0: f64,
    u: f64,
    v: f64,
    w: f64,
}

fn profile_rows(grid: &RadialGrid, a: &FieldState, b: &FieldState) -> Vec<ProfileRow> {
    (0..grid.len())
        .map(|i| ProfileRow {
            r: grid.nodes()[i],
            u0: a.u[i],
            v0: a.v[i],
            w0: a.w[i],
            u: b.u[i],
            v: b.v[i],
            w: b.w[i],
        })
        .collect()
}

fn verdict_table(v: &BlowupVerdict) -> toml::Table {
    let mut t = toml::Table::new();
    insert(&mut t, "status", v.status.label());
    match &v.status {
        crate::blowup::BlowupStatus::BlewUp { t_star, trigger } => {
            t.insert("t_star".into(), num(*t_star));
            insert(&mut t, "trigger", format!("{trigger:?}"));
        }
        crate::blowup::BlowupStatus::GlobalUpTo { t: end } => {
            t.insert("t".into(), num(*end));
        }
        crate::blowup::BlowupStatus::Inconclusive { reason } => insert(&mut t, "reason", reason.clone()),
    }
    t.insert("peak_sup_u".into(), num(v.peak_sup_u));
    t.insert("peak_sup_v".into(), num(v.peak_sup_v));
    if let Some(f) = v.final_f {
        t.insert("final_F".into(), num(f));
    }
    t.insert("dt_min_reached".into(), num(v.dt_min_reached));
    t.insert("last_calm_time".into(), num(v.last_calm_time));
    t
}

/// Initial data of single runs and probes: the base, or member `family.j`.
pub fn initial_state(cfg: &Config, grid: &RadialGrid) -> Result<FieldState> {
    let f = &cfg.family;
    if f.j == 0 {
        Ok(cfg.base().sample(grid))
    } else {
        let kappa = f.kappa.unwrap_or_else(|| crate::family::default_kappa(cfg.model.dim, f.p));
        let spec = DenseFamilySpec::new(cfg.base(), cfg.model.dim, f.j, kappa, f.p)?;
        dense_family(&spec, grid)
    }
}

fn relative_drift(series: &[Snapshot], mass: fn(&Snapshot) -> f64) -> f64 {
    let first = series.first().map_or(0.0, mass);
    series
        .iter()
        .map(|s| {
            if first == 0.0 {
                mass(s).abs()
            } else {
                ((mass(s) - first) / first).abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Largest relative drift of `∫u` and `∫v` over a run.
pub fn mass_drift(run: &RunOutcome) -> (f64, f64) {
    (
        relative_drift(&run.series.snapshots, |s| s.mass_u),
        relative_drift(&run.series.snapshots, |s| s.mass_v),
    )
}

fn single_run(cfg: &Config, out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    let params = cfg.params()?;
    params.validate(true)?;
    let grid = cfg.build_grid()?;
    let initial = initial_state(cfg, &grid)?;
    let summary = summarize_initial(&initial, &grid)?;
    let run = run_until(
        &initial,
        &params,
        &grid,
        cfg.experiment.horizon,
        &cfg.control(),
        &cfg.run_options(),
        &mut [],
    )?;
    let rows: Vec<SnapshotRow> = run.series.snapshots.iter().map(SnapshotRow::from).collect();
    out.csv("timeseries.csv", &rows)?;
    out.csv("profiles.csv", &profile_rows(&grid, &initial, &run.final_state))?;
    out.checkpoint("final.ckpt", &Checkpoint::new(&params, &grid, &run.final_state)?)?;
    for (k, state) in run.series.checkpoints.iter().enumerate() {
        out.checkpoint(&format!("checkpoint_{k:04}.ckpt"), &Checkpoint::new(&params, &grid, state)?)?;
    }
    let verdict = detect_blowup(&run);
    let l1 = check_l1_bounds(&run.series, &summary, &params);
    let (du, dv) = mass_drift(&run);
    result.insert("verdict".into(), verdict_table(&verdict).into());
    result.insert("initial".into(), to_table(&summary).into());
    result.insert("l1_bounds".into(), to_table(&l1).into());
    insert(result, "steps", run.steps as i64);
    result.insert("mass_drift_u".into(), num(du));
    result.insert("mass_drift_v".into(), num(dv));
    Ok(!matches!(verdict.status, crate::blowup::BlowupStatus::Inconclusive { .. }))
}

/// `(4πs)^{−N/2} e^{−r²/(4s)}`.
pub fn heat_kernel(r: f64, s: f64, dim: usize) -> f64 {
    (4.0 * std::f64::consts::PI * s).powf(-0.5 * dim as f64) * (-r * r / (4.0 * s)).exp()
}

/// Sup-norm error of the diffusion-only evolution of a heat kernel after
/// `tau` with constant step `dt`.
pub fn heat_kernel_error(
    grid: &RadialGrid,
    t0: f64,
    tau: f64,
    dt: f64,
) -> Result<(f64, FieldState)> {
    let dim = grid.dim();
    let params = ModelParams::heat_only(dim);
    let init = FieldState::from_fns(grid, |r| heat_kernel(r, t0, dim), |r| heat_kernel(r, t0, dim), |_| 0.0);
    let opts = crate::integrator::RunOptions {
        energy: false,
        snapshot_every: usize::MAX,
        ..Default::default()
    };
    let run = run_until(&init, &params, grid, tau, &StepControl::fixed(dt), &opts, &mut [])?;
    let exact = grid.sample(|r| heat_kernel(r, t0 + tau, dim));
    let err = sup_distance(&run.final_state.u, &exact).max(sup_distance(&run.final_state.v, &exact));
    Ok((err, run.final_state))
}

#[derive(Serialize)]
struct HeatRow {
    r: f64,
    exact: f64,
    numeric_dt: f64,
    numeric_half_dt: f64,
}

#[derive(Serialize)]
struct ConvergenceRow {
    dt: f64,
    sup_error: f64,
}

fn heat_validation(cfg: &Config, out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let e = &cfg.experiment;
    let (err1, s1) = heat_kernel_error(&grid, e.heat_t0, e.heat_tau, e.heat_dt)?;
    let (err2, s2) = heat_kernel_error(&grid, e.heat_t0, e.heat_tau, 0.5 * e.heat_dt)?;
    let dim = grid.dim();
    let rows: Vec<HeatRow> = (0..grid.len())
        .map(|i| {
            let r = grid.nodes()[i];
            HeatRow {
                r,
                exact: heat_kernel(r, e.heat_t0 + e.heat_tau, dim),
                numeric_dt: s1.u[i],
                numeric_half_dt: s2.u[i],
            }
        })
        .collect();
    out.csv("heat_kernel.csv", &rows)?;
    out.csv(
        "convergence.csv",
        &[
            ConvergenceRow {
                dt: e.heat_dt,
                sup_error: err1,
            },
            ConvergenceRow {
                dt: 0.5 * e.heat_dt,
                sup_error: err2,
            },
        ],
    )?;
    let ratio = err1 / err2;
    result.insert("sup_error".into(), num(err1));
    result.insert("sup_error_half_dt".into(), num(err2));
    result.insert("error_ratio".into(), num(ratio));
    Ok(err1 < 1e-3 && ratio >= 1.8)
}

/// Integrator-versus-Picard comparison on small smooth data.
#[derive(Debug, Clone)]
pub struct PicardComparison {
    pub sup_difference: f64,
    pub residuals: Vec<f64>,
    pub monotone: bool,
    pub panels: usize,
    pub picard: FieldState,
    pub integrator: FieldState,
}

pub fn picard_comparison(cfg: &Config) -> Result<PicardComparison> {
    let params = cfg.params()?;
    let grid = cfg.build_grid()?;
    let e = &cfg.experiment;
    let a = e.picard_amplitude;
    let init = FieldState::from_fns(
        &grid,
        |r| a * (-r * r).exp(),
        |r| a * (-r * r).exp(),
        |r| a * (-r * r).exp(),
    );
    let opts = PicardOptions {
        flux: cfg.stepping.flux,
        ..Default::default()
    };
    let p = picard_iterate(&init.u, &init.v, &init.w, e.picard_time, e.picard_iters, &params, &grid, &opts)?;
    let mut run_opts = cfg.run_options();
    run_opts.energy = false;
    run_opts.snapshot_every = usize::MAX;
    let run = run_until(
        &init,
        &params,
        &grid,
        e.picard_time,
        &StepControl::fixed(e.picard_dt),
        &run_opts,
        &mut [],
    )?;
    let f = &run.final_state;
    let sup_difference = sup_distance(&p.u, &f.u)
        .max(sup_distance(&p.v, &f.v))
        .max(sup_distance(&p.w, &f.w));
    let monotone = p.residuals.windows(2).all(|w| w[1] < w[0]);
    Ok(PicardComparison {
        sup_difference,
        monotone,
        panels: p.panels,
        picard: FieldState {
            t: e.picard_time,
            u: p.u,
            v: p.v,
            w: p.w,
        },
        residuals: p.residuals,
        integrator: run.final_state,
    })
}

#[derive(Serialize)]
struct ResidualRow {
    iteration: usize,
    residual: f64,
}

#[derive(Serialize)]
struct GammaRow {
    lambda: f64,
    closed_form: f64,
    quadrature: f64,
    difference: f64,
}

fn picard_crosscheck(cfg: &Config, out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    let grid = cfg.build_grid()?;
    let c = picard_comparison(cfg)?;
    let rows: Vec<ResidualRow> = c
        .residuals
        .iter()
        .enumerate()
        .map(|(k, &r)| ResidualRow {
            iteration: k + 1,
            residual: r,
        })
        .collect();
    out.csv("picard_residuals.csv", &rows)?;
    out.csv("picard_profiles.csv", &profile_rows(&grid, &c.picard, &c.integrator))?;
    let gammas = [0.5, 1.0, 2.0]
        .into_iter()
        .map(|lam| {
            gamma_integral(lam).map(|g| GammaRow {
                lambda: lam,
                closed_form: g.closed_form,
                quadrature: g.quadrature,
                difference: g.agreement(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("gamma_integral.csv", &gammas)?;
    result.insert("sup_difference".into(), num(c.sup_difference));
    insert(result, "residuals_monotone", c.monotone);
    insert(result, "panels", c.panels as i64);
    let gamma_ok = gammas.iter().all(|g| g.difference < 1e-8);
    insert(result, "gamma_agrees", gamma_ok);
    Ok(c.sup_difference < 1e-4 && c.monotone && gamma_ok)
}

#[derive(Serialize)]
struct GronwallRow {
    gron_a: f64,
    gron_b: f64,
    gron_kappa: f64,
    bound: f64,
    measured: f64,
    relative_gap: f64,
    pass: bool,
}

/// The 27-point lattice `a, b ∈ {½, 1, 2}`, `κ ∈ {3/2, 2, 3}`.
pub fn gronwall_lattice() -> Vec<GronwallProblem> {
    let mut v = Vec::with_capacity(27);
    for a in [0.5, 1.0, 2.0] {
        for b in [0.5, 1.0, 2.0] {
            for k in [1.5, 2.0, 3.0] {
                v.push(GronwallProblem {
                    gron_a: a,
                    gron_b: b,
                    gron_kappa: k,
                });
            }
        }
    }
    v
}

fn gronwall_suite(out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    let rows = gronwall_lattice()
        .iter()
        .map(|p| {
            let c = gronwall_ode_check(p)?;
            Ok(GronwallRow {
                gron_a: p.gron_a,
                gron_b: p.gron_b,
                gron_kappa: p.gron_kappa,
                bound: c.bound,
                measured: c.measured,
                relative_gap: c.relative_gap,
                pass: c.within_tolerance,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("gronwall.csv", &rows)?;
    let examples = [((1.0, 1.0, 2.0), 1.0), ((2.0, 1.0, 2.0), 0.5), ((1.0, 2.0, 3.0), 0.25)];
    let mut examples_ok = true;
    for ((a, b, k), expected) in examples {
        let bound = gronwall_bound(&GronwallProblem::new(a, b, k)?)?;
        examples_ok &= bound == expected;
    }
    let lattice_ok = rows.iter().all(|r| r.pass);
    let worst = rows.iter().map(|r| r.relative_gap.abs()).fold(0.0, f64::max);
    insert(result, "examples_exact", examples_ok);
    insert(result, "lattice_within_tolerance", lattice_ok);
    result.insert("worst_relative_gap".into(), num(worst));
    Ok(examples_ok && lattice_ok)
}

#[derive(Serialize)]
struct FamilyCsvRow {
    j: u32,
    r_j: f64,
    ln_eta: f64,
    #[serde(rename = "K_j")]
    k_j: f64,
    #[serde(rename = "F_j")]
    f_j: f64,
    coupling_j: f64,
    coupling_bound: f64,
    noncoupling: f64,
    lp_distance_u: f64,
    h1_distance_w: f64,
    w11_distance_w: f64,
    #[serde(rename = "grid_F")]
    grid_f: f64,
    #[serde(rename = "grid_K_plus_one")]
    grid_k_plus_one: f64,
}

/// Measured convergence rates and energy trend of the family table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyRates {
    pub lp_slope: f64,
    pub lp_predicted: f64,
    pub h1_slope: f64,
    pub h1_predicted: f64,
    pub coupling_bound_holds: bool,
    pub decreasing_from_4: bool,
    pub f8_below_ten_f2: bool,
}

impl FamilyRates {
    pub fn holds(&self) -> bool {
        self.lp_slope >= self.lp_predicted - 0.1
            && self.h1_slope >= self.h1_predicted - 0.1
            && self.coupling_bound_holds
            && self.decreasing_from_4
            && self.f8_below_ten_f2
    }
}

pub fn family_rates(trend: &FamilyTrend, dim: usize, kappa: f64, p: f64) -> Result<FamilyRates> {
    let n = dim as f64;
    let rows = &trend.rows;
    let r: Vec<f64> = rows.iter().map(|x| x.r_j).collect();
    let lp: Vec<f64> = rows.iter().map(|x| x.lp_distance_u).collect();
    let h1: Vec<f64> = rows.iter().map(|x| x.h1_distance_w).collect();
    let f_of = |j: u32| rows.iter().find(|x| x.j == j).map(|x| x.f_j);
    let decreasing_from_4 = rows
        .windows(2)
        .filter(|w| w[0].j >= 4)
        .all(|w| w[1].f_j < w[0].f_j);
    let f8_below_ten_f2 = match (f_of(2), f_of(8)) {
        (Some(f2), Some(f8)) => f8 < -10.0 * f2.abs(),
        _ => false,
    };
    Ok(FamilyRates {
        lp_slope: loglog_slope(&r, &lp)?,
        lp_predicted: (n - p * (n - kappa)) / p,
        h1_slope: loglog_slope(&r, &h1)?,
        h1_predicted: 0.5 * (n - 2.0 - 2.0 * kappa),
        coupling_bound_holds: trend.coupling_bound_holds,
        decreasing_from_4,
        f8_below_ten_f2,
    })
}

/// The family table for `j_min..=j_max` on the configured grid.
pub fn family_table(cfg: &Config) -> Result<(FamilyTrend, FamilyRates)> {
    let params = cfg.params()?;
    let grid = cfg.build_grid()?;
    let f = &cfg.family;
    let kappa = f.kappa.unwrap_or_else(|| crate::family::default_kappa(cfg.model.dim, f.p));
    let specs = (f.j_min..=f.j_max)
        .map(|j| DenseFamilySpec::new(cfg.base(), cfg.model.dim, j, kappa, f.p))
        .collect::<Result<Vec<_>>>()?;
    let trend = family_energy_trend(&specs, &params, &grid)?;
    let rates = family_rates(&trend, cfg.model.dim, kappa, f.p)?;
    Ok((trend, rates))
}

#[derive(Serialize)]
struct ScanCsvRow {
    resolution: usize,
    j: u32,
    r_j: f64,
    #[serde(rename = "K_plus_one")]
    k_plus_one: f64,
    #[serde(rename = "F")]
    f: f64,
    #[serde(rename = "grid_F")]
    grid_f: f64,
    coord_a: f64,
    coord_b: f64,
    coord_c: f64,
    verdict: String,
    t_star: f64,
    trigger: String,
    peak_sup_u: f64,
    peak_sup_v: f64,
    dt_min_reached: f64,
    last_calm_time: f64,
    steps: usize,
    error: String,
}

fn scan_rows(table: &ScanTable, resolution: usize) -> Vec<ScanCsvRow> {
    table
        .rows
        .iter()
        .map(|r| {
            let coord = |k: usize| r.coordinates.get(k).copied().unwrap_or(f64::NAN);
            let (t_star, trigger) = match r.status() {
                Some(crate::blowup::BlowupStatus::BlewUp { t_star, trigger }) => (*t_star, format!("{trigger:?}")),
                _ => (f64::NAN, String::new()),
            };
            let v = r.verdict.as_ref();
            ScanCsvRow {
                resolution,
                j: r.j,
                r_j: r.r_j.unwrap_or(f64::NAN),
                k_plus_one: r.k_plus_one,
                f: r.f,
                grid_f: r.grid_f,
                coord_a: coord(0),
                coord_b: coord(1),
                coord_c: coord(2),
                verdict: r.status().map_or("error", |s| s.label()).to_string(),
                t_star,
                trigger,
                peak_sup_u: v.map_or(f64::NAN, |v| v.peak_sup_u),
                peak_sup_v: v.map_or(f64::NAN, |v| v.peak_sup_v),
                dt_min_reached: v.map_or(f64::NAN, |v| v.dt_min_reached),
                last_calm_time: v.map_or(f64::NAN, |v| v.last_calm_time),
                steps: r.steps,
                error: r.error.clone().unwrap_or_default(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct BoundaryRow {
    resolution: usize,
    theta: f64,
    max_blowup: f64,
    min_global: f64,
    separated: bool,
}

/// The scan at the configured resolution and, when requested, at twice it.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub coarse: ScanTable,
    pub fine: Option<ScanTable>,
    pub flags: Vec<RefinementFlag>,
}

impl ScanOutcome {
    pub fn baseline_global(&self) -> bool {
        let ok = |t: &ScanTable| {
            t.rows.iter().filter(|r| r.is_baseline()).all(|r| {
                matches!(r.status(), Some(crate::blowup::BlowupStatus::GlobalUpTo { .. }))
            })
        };
        ok(&self.coarse) && self.fine.as_ref().map_or(true, ok)
    }

    pub fn separation_holds(&self) -> bool {
        let ok = |t: &ScanTable| t.monotone && t.j0.is_some_and(|j| j <= 8) && t.blowups_before_one;
        self.baseline_global() && ok(&self.coarse) && self.fine.as_ref().map_or(true, ok) && self.flags.is_empty()
    }
}

pub fn run_scan(cfg: &Config) -> Result<ScanOutcome> {
    let sc = cfg.scan_config()?;
    let coarse = threshold_scan(&sc)?;
    let fine = if cfg.experiment.refine {
        Some(threshold_scan(&sc.refined())?)
    } else {
        None
    };
    let flags = fine.as_ref().map_or_else(Vec::new, |f| compare_refinement(&coarse, f));
    Ok(ScanOutcome { coarse, fine, flags })
}

fn family_scan(cfg: &Config, out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    let (trend, rates) = family_table(cfg)?;
    let rows: Vec<FamilyCsvRow> = trend
        .rows
        .iter()
        .map(|r| FamilyCsvRow {
            j: r.j,
            r_j: r.r_j,
            ln_eta: r.ln_eta,
            k_j: r.k_j,
            f_j: r.f_j,
            coupling_j: r.coupling_j,
            coupling_bound: r.coupling_bound,
            noncoupling: r.noncoupling,
            lp_distance_u: r.lp_distance_u,
            h1_distance_w: r.h1_distance_w,
            w11_distance_w: r.w11_distance_w,
            grid_f: r.grid_f,
            grid_k_plus_one: r.grid_k_plus_one,
        })
        .collect();
    out.csv("family.csv", &rows)?;
    let scan = run_scan(cfg)?;
    let mut table = scan_rows(&scan.coarse, cfg.grid.cells);
    let mut bounds: Vec<BoundaryRow> = Vec::new();
    let mut push_bounds = |t: &ScanTable, m: usize| {
        for b in &t.boundaries {
            bounds.push(BoundaryRow {
                resolution: m,
                theta: b.theta,
                max_blowup: b.max_blowup.unwrap_or(f64::NAN),
                min_global: b.min_global.unwrap_or(f64::NAN),
                separated: b.separated,
            });
        }
    };
    push_bounds(&scan.coarse, cfg.grid.cells);
    if let Some(fine) = &scan.fine {
        table.extend(scan_rows(fine, 2 * cfg.grid.cells));
        push_bounds(fine, 2 * cfg.grid.cells);
    }
    out.csv("scan.csv", &table)?;
    out.csv("threshold.csv", &bounds)?;
    result.insert("family_rates".into(), to_table(&rates).into());
    insert(result, "family_rates_hold", rates.holds());
    insert(result, "thetas", toml::Value::try_from(&scan.coarse.thetas).unwrap_or(toml::Value::Array(vec![])));
    insert(result, "monotone", scan.coarse.monotone);
    if let Some(j0) = scan.coarse.j0 {
        insert(result, "j0", j0 as i64);
    }
    insert(result, "blowups_before_one", scan.coarse.blowups_before_one);
    insert(result, "baseline_global", scan.baseline_global());
    insert(result, "refinement_flags", scan.flags.len() as i64);
    insert(result, "separation_holds", scan.separation_holds());
    Ok(scan.separation_holds())
}

/// Per-step and per-probe records of the lemma-chain run.
#[derive(Debug, Clone, Default)]
pub struct ProbeRun {
    pub steps: usize,
    /// Steps whose energy inequality margin is nonnegative.
    pub clean_steps: usize,
    /// Steps that fail even with the `tol_model · dt` allowance.
    pub failed_steps: usize,
    pub worst_margin: f64,
    pub worst_integral_margin: f64,
    pub min_dissipation: f64,
    pub probes: usize,
    pub pointwise_failures: usize,
    pub ratios: RatioFit,
    pub step_rows: Vec<EnergyStepRow>,
    pub probe_rows: Vec<ProbeCsvRow>,
    pub outcome: Option<RunOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyStepRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub margin: f64,
    pub integral_margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeCsvRow {
    pub t: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub r0: f64,
    pub w_at_r0: f64,
    pub pointwise_margin: f64,
    pub pointwise_tolerance: f64,
    pub coupling_lhs: f64,
    pub ball_grad: f64,
    pub annulus_grad: f64,
    pub inner_grad: f64,
    pub adaptive_r0: f64,
    pub gronwall_r_margin: f64,
    pub ratio_coupling: f64,
    pub ratio_annulus_gradient: f64,
    pub ratio_inner_gradient: f64,
    pub ratio_combined: f64,
}

/// Runs the configured initial data with per-step energy checks and periodic
/// lemma-chain probes.
pub fn probe_run(cfg: &Config) -> Result<ProbeRun> {
    let params = cfg.params()?;
    params.validate(true)?;
    let grid = cfg.build_grid()?;
    let initial = initial_state(cfg, &grid)?;
    let summary = summarize_initial(&initial, &grid)?;
    let probe_cfg = ProbeConfig {
        theta: cfg.experiment.theta,
        ..Default::default()
    };
    probe_cfg.validate(params.dim)?;
    let tol_model = cfg.experiment.tol_model;
    let every = cfg.experiment.probe_every.max(1);

    let first = energy(&initial, &params, &grid)?;
    let mut acc = ProbeRun {
        worst_margin: f64::INFINITY,
        worst_integral_margin: f64::INFINITY,
        min_dissipation: first.d,
        ..Default::default()
    };
    let mut integral = IntegralEnergyCheck::new(first, params);
    let mut last = first;
    let probe = |state: &FieldState, acc: &mut ProbeRun| -> Result<()> {
        let pw = pointwise_bound_probe(state, &summary, &grid)?;
        let rep = coupling_estimate_probe(state, &params, &summary, &grid, &probe_cfg)?;
        acc.probes += 1;
        if !pw.holds() {
            acc.pointwise_failures += 1;
        }
        acc.ratios.update(&rep);
        let ratio = |k: &str| rep.fitted_ratios.get(k).copied().unwrap_or(f64::NAN);
        acc.probe_rows.push(ProbeCsvRow {
            t: state.t,
            k: rep.k,
            r0: pw.r0,
            w_at_r0: pw.w_at_r0,
            pointwise_margin: pw.pointwise_margin,
            pointwise_tolerance: pw.tolerance,
            coupling_lhs: rep.coupling_lhs,
            ball_grad: rep.ball_grad,
            annulus_grad: rep.annulus_grad,
            inner_grad: rep.inner_grad,
            adaptive_r0: rep.adaptive_r0,
            gronwall_r_margin: rep.gronwall_r_margin,
            ratio_coupling: ratio("coupling"),
            ratio_annulus_gradient: ratio("annulus_gradient"),
            ratio_inner_gradient: ratio("inner_gradient"),
            ratio_combined: ratio("combined"),
        });
        Ok(())
    };
    probe(&initial, &mut acc)?;
    let mut observer = |_before: &FieldState, after: &FieldState, dt: f64| -> Result<()> {
        let next = energy(after, &params, &grid)?;
        let check = check_energy_inequality(&last, &next, dt, &params, tol_model)?;
        let im = integral.push(next);
        acc.steps += 1;
        if check.margin >= 0.0 {
            acc.clean_steps += 1;
        }
        if !check.holds {
            acc.failed_steps += 1;
        }
        acc.worst_margin = acc.worst_margin.min(check.margin);
        acc.worst_integral_margin = acc.worst_integral_margin.min(im);
        acc.min_dissipation = acc.min_dissipation.min(next.d);
        acc.step_rows.push(EnergyStepRow {
            step: acc.steps,
            t: after.t,
            dt,
            f: next.f,
            d: next.d,
            margin: check.margin,
            integral_margin: im,
            holds: check.holds,
        });
        last = next;
        if acc.steps % every == 0 {
            probe(after, &mut acc)?;
        }
        Ok(())
    };
    let outcome = run_until(
        &initial,
        &params,
        &grid,
        cfg.experiment.horizon,
        &cfg.control(),
        &cfg.run_options(),
        &mut [&mut observer],
    )?;
    acc.outcome = Some(outcome);
    Ok(acc)
}

impl ProbeRun {
    /// Fraction of steps with a nonnegative inequality margin.
    pub fn clean_fraction(&self) -> f64 {
        if self.steps == 0 {
            1.0
        } else {
            self.clean_steps as f64 / self.steps as f64
        }
    }
}

fn lemma_probes(cfg: &Config, out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    let run = probe_run(cfg)?;
    out.csv("energy_steps.csv", &run.step_rows)?;
    out.csv("probes.csv", &run.probe_rows)?;
    if let Some(o) = &run.outcome {
        let rows: Vec<SnapshotRow> = o.series.snapshots.iter().map(SnapshotRow::from).collect();
        out.csv("timeseries.csv", &rows)?;
        result.insert("verdict".into(), verdict_table(&detect_blowup(o)).into());
    }
    insert(result, "steps", run.steps as i64);
    result.insert("clean_fraction".into(), num(run.clean_fraction()));
    insert(result, "failed_steps", run.failed_steps as i64);
    result.insert("worst_margin".into(), num(run.worst_margin));
    result.insert("worst_integral_margin".into(), num(run.worst_integral_margin));
    result.insert("min_dissipation".into(), num(run.min_dissipation));
    insert(result, "probes", run.probes as i64);
    insert(result, "pointwise_failures", run.pointwise_failures as i64);
    let mut ratios = toml::Table::new();
    for (k, v) in &run.ratios.max {
        ratios.insert(k.clone(), num(*v));
    }
    result.insert("max_fitted_ratios".into(), ratios.into());
    Ok(run.clean_fraction() >= 0.99
        && run.failed_steps == 0
        && run.min_dissipation >= 0.0
        && run.pointwise_failures == 0
        && run.ratios.all_finite())
}

fn dispatch(cfg: &Config, out: &mut Output, result: &mut toml::Table) -> Result<bool> {
    match cfg.kind() {
        ExperimentKind::SingleRun => single_run(cfg, out, result),
        ExperimentKind::HeatKernelValidation => heat_validation(cfg, out, result),
        ExperimentKind::PicardCrosscheck => picard_crosscheck(cfg, out, result),
        ExperimentKind::GronwallSuite => gronwall_suite(out, result),
        ExperimentKind::FamilyScan => family_scan(cfg, out, result),
        ExperimentKind::LemmaProbes => lemma_probes(cfg, out, result),
    }
}

fn write_summary(
    dir: &Path,
    cfg: &Config,
    passed: Option<bool>,
    error: Option<&str>,
    result: &toml::Table,
    wall: f64,
) -> Result<PathBuf> {
    let mut head = toml::Table::new();
    insert(&mut head, "kind", cfg.kind().name());
    let status = match (passed, error) {
        (_, Some(_)) => "error",
        (Some(true), None) => "passed",
        _ => "failed",
    };
    insert(&mut head, "status", status);
    if let Some(e) = error {
        insert(&mut head, "error", e);
    }
    head.insert("wall_time_s".into(), num(wall));
    let mut doc = toml::Table::new();
    doc.insert("run".into(), head.into());
    doc.insert("result".into(), result.clone().into());
    doc.insert("config".into(), to_table(cfg).into());
    let path = dir.join("summary.toml");
    let text = toml::to_string(&doc).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(&path, text)?;
    Ok(path)
}

/// Runs the configured experiment into `out_dir`. The summary record is
/// written even when the experiment fails at run time.
pub fn run_experiment(cfg: &Config, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut out = Output::new(out_dir)?;
    let start = Instant::now();
    let mut result = toml::Table::new();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.experiment.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(e.to_string()))?;
    let outcome = pool.install(|| dispatch(cfg, &mut out, &mut result));
    let wall = start.elapsed().as_secs_f64();
    match outcome {
        Ok(passed) => {
            let summary = write_summary(out_dir, cfg, Some(passed), None, &result, wall)?;
            out.files.push(summary);
            Ok(ExperimentReport {
                kind: cfg.kind(),
                passed,
                files: out.files,
                result,
            })
        }
        Err(e) => {
            write_summary(out_dir, cfg, None, Some(&e.to_string()), &result, wall)?;
            Err(e)
        }
    }
}
