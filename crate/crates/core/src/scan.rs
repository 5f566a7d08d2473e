//! Threshold scans over the dense family: one simulation per member plus a
//! small-amplitude baseline, classified and placed in the scale-free
//! coordinate `F / K^{2/(1−θ)}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blowup::{detect_blowup, BlowupStatus, BlowupVerdict};
use crate::diagnostics::energy::energy;
use crate::error::{config, Result};
use crate::family::{default_kappa, dense_family, threshold_coordinate, BaseProfiles, DenseFamilySpec};
use crate::grid::{Layout, RadialGrid};
use crate::integrator::{run_until, RunOptions, StepControl};
use crate::model::{summarize_initial, ModelParams};

/// Everything a scan needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub params: ModelParams,
    pub base: BaseProfiles,
    pub kappa: Option<f64>,
    pub p: f64,
    pub r_max: f64,
    pub cells: usize,
    pub layout: Layout,
    pub control: StepControl,
    pub run: RunOptions,
    pub horizon: f64,
    pub j_min: u32,
    pub j_max: u32,
    pub baseline_scale: f64,
    pub thetas: Vec<f64>,
}

impl ScanConfig {
    pub fn kappa(&self) -> f64 {
        self.kappa.unwrap_or_else(|| default_kappa(self.params.dim, self.p))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 1.0) {
            return Err(config(format!("scan horizon must be at least 1, got {}", self.horizon)));
        }
        if self.j_min == 0 || self.j_min > self.j_max {
            return Err(config(format!(
                "j range must satisfy 1 <= j_min <= j_max, got {}..={}",
                self.j_min, self.j_max
            )));
        }
        if !(self.baseline_scale > 0.0) {
            return Err(config(format!("baseline_scale must be positive, got {}", self.baseline_scale)));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(**t > 0.5 && **t < 1.0)) {
            return Err(config(format!("theta must lie in (1/2, 1), got {t}")));
        }
        self.control.validate()?;
        self.params.validate(true)
    }

    /// The same scan with twice as many cells.
    pub fn refined(&self) -> Self {
        Self {
            cells: self.cells * 2,
            ..self.clone()
        }
    }
}

/// One simulated row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    /// `0` marks the baseline.
    pub j: u32,
    pub r_j: Option<f64>,
    /// `K + 1` of the initial data.
    pub k_plus_one: f64,
    /// Initial energy: semi-analytic for members, on the grid for the baseline.
    pub f: f64,
    pub grid_f: f64,
    pub coordinates: Vec<f64>,
    pub verdict: Option<BlowupVerdict>,
    pub steps: usize,
    pub error: Option<String>,
}

impl ScanRow {
    pub fn status(&self) -> Option<&BlowupStatus> {
        self.verdict.as_ref().map(|v| &v.status)
    }

    pub fn blew_up(&self) -> bool {
        self.status().is_some_and(BlowupStatus::blew_up)
    }

    pub fn is_baseline(&self) -> bool {
        self.j == 0
    }
}

/// Where the verdict changes along one threshold coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBoundary {
    pub theta: f64,
    /// Largest coordinate among blow-up rows.
    pub max_blowup: Option<f64>,
    /// Smallest coordinate among global rows.
    pub min_global: Option<f64>,
    /// Every blow-up row lies strictly below every global row.
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTable {
    pub thetas: Vec<f64>,
    pub rows: Vec<ScanRow>,
    pub boundaries: Vec<ThresholdBoundary>,
    /// Once a member blows up, every larger `j` does too.
    pub monotone: bool,
    /// Smallest `j` from which all members blow up.
    pub j0: Option<u32>,
    pub blowups_before_one: bool,
}

fn simulate_row(cfg: &ScanConfig, grid: &RadialGrid, j: u32) -> Result<ScanRow> {
    let (state, f, r_j) = if j == 0 {
        let s = cfg.base.scaled(cfg.baseline_scale).sample(grid);
        let f = energy(&s, &cfg.params, grid)?.f;
        (s, f, None)
    } else {
        let spec = DenseFamilySpec::new(cfg.base, cfg.params.dim, j, cfg.kappa(), cfg.p)?;
        let f = spec.energy(&cfg.params)?.f;
        (dense_family(&spec, grid)?, f, Some(spec.r_j))
    };
    let k_plus_one = summarize_initial(&state, grid)?.k_plus_one;
    let grid_f = energy(&state, &cfg.params, grid)?.f;
    let coordinates = cfg
        .thetas
        .iter()
        .map(|&th| threshold_coordinate(f, k_plus_one, th))
        .collect();
    let mut row = ScanRow {
        j,
        r_j,
        k_plus_one,
        f,
        grid_f,
        coordinates,
        verdict: None,
        steps: 0,
        error: None,
    };
    match run_until(&state, &cfg.params, grid, cfg.horizon, &cfg.control, &cfg.run, &mut []) {
        Ok(out) => {
            row.steps = out.steps;
            row.verdict = Some(detect_blowup(&out));
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

/// Runs the baseline and members `j_min..=j_max` in parallel. Per-row
/// failures land in the row's `error` column.
pub fn threshold_scan(cfg: &ScanConfig) -> Result<ScanTable> {
    cfg.validate()?;
    let grid = RadialGrid::build(cfg.r_max, cfg.cells, cfg.layout, cfg.params.dim)?;
    let js: Vec<u32> = std::iter::once(0).chain(cfg.j_min..=cfg.j_max).collect();
    let rows: Vec<ScanRow> = js
        .par_iter()
        .map(|&j| {
            simulate_row(cfg, &grid, j).unwrap_or_else(|e| ScanRow {
                j,
                r_j: None,
                k_plus_one: f64::NAN,
                f: f64::NAN,
                grid_f: f64::NAN,
                coordinates: vec![f64::NAN; cfg.thetas.len()],
                verdict: None,
                steps: 0,
                error: Some(e.to_string()),
            })
        })
        .collect();
    Ok(tabulate(cfg.thetas.clone(), rows, cfg.horizon))
}

fn tabulate(thetas: Vec<f64>, rows: Vec<ScanRow>, horizon: f64) -> ScanTable {
    let boundaries = thetas
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let pick = |blew: bool| {
                rows.iter()
                    .filter(move |r| r.verdict.is_some() && r.blew_up() == blew)
                    .filter(|r| matches!(r.status(), Some(BlowupStatus::BlewUp { .. } | BlowupStatus::GlobalUpTo { .. })))
                    .map(move |r| r.coordinates[k])
                    .filter(|c| c.is_finite())
            };
            let max_blowup = pick(true).reduce(f64::max);
            let min_global = pick(false).reduce(f64::min);
            let separated = match (max_blowup, min_global) {
                (Some(b), Some(g)) => b < g,
                _ => true,
            };
            ThresholdBoundary {
                theta,
                max_blowup,
                min_global,
                separated,
            }
        })
        .collect();
    let members: Vec<&ScanRow> = rows.iter().filter(|r| !r.is_baseline()).collect();
    let first_blowup = members.iter().position(|r| r.blew_up());
    let monotone = first_blowup.map_or(true, |i| members[i..].iter().all(|r| r.blew_up()));
    let j0 = members
        .iter()
        .rposition(|r| !r.blew_up())
        .map_or(members.first().map(|r| r.j), |i| members.get(i + 1).map(|r| r.j));
    let blowups_before_one = rows
        .iter()
        .filter_map(|r| r.status().and_then(BlowupStatus::t_star))
        .all(|t| t < 1.0_f64.min(horizon));
    ScanTable {
        thetas,
        rows,
        boundaries,
        monotone,
        j0,
        blowups_before_one,
    }
}

/// A blow-up at the coarse resolution that the finer one does not reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementFlag {
    pub j: u32,
    pub coarse: String,
    pub fine: String,
}

/// Compares two scans that differ only in resolution.
pub fn compare_refinement(coarse: &ScanTable, fine: &ScanTable) -> Vec<RefinementFlag> {
    coarse
        .rows
        .iter()
        .filter(|r| r.blew_up())
        .filter_map(|r| {
            let other = fine.rows.iter().find(|f| f.j == r.j)?;
            if other.blew_up() {
                None
            } else {
                Some(RefinementFlag {
                    j: r.j,
                    coarse: r.status().map_or("error", BlowupStatus::label).to_string(),
                    fine: other.status().map_or("error", BlowupStatus::label).to_string(),
                })
            }
        })
        .collect()
}
