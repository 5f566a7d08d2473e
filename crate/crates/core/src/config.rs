//! TOML experiment configuration with sections `[model]`, `[grid]`,
//! `[stepping]`, `[family]` and `[experiment]`.
//!
//! A user file is layered over the defaults of its experiment kind. Unknown
//! keys are rejected, and validation errors point at the offending line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{default_kappa, validate_exponents, BaseProfiles, GaussianProfile};
use crate::grid::{Layout, RadialGrid};
use crate::integrator::{RunOptions, SchemeOptions, StepControl};
use crate::model::ModelParams;
use crate::operators::FluxAverage;
use crate::scan::ScanConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SingleRun,
    HeatKernelValidation,
    PicardCrosscheck,
    GronwallSuite,
    FamilyScan,
    LemmaProbes,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::SingleRun,
        Self::HeatKernelValidation,
        Self::PicardCrosscheck,
        Self::GronwallSuite,
        Self::FamilyScan,
        Self::LemmaProbes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SingleRun => "single-run",
            Self::HeatKernelValidation => "heat-kernel-validation",
            Self::PicardCrosscheck => "picard-crosscheck",
            Self::GronwallSuite => "gronwall-suite",
            Self::FamilyScan => "family-scan",
            Self::LemmaProbes => "lemma-probes",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub chi: f64,
    pub xi: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub dim: usize,
}

impl Default for ModelSection {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub r_max: f64,
    pub cells: usize,
    /// `"uniform"` or `"geometric"`.
    pub layout: String,
    /// Ratio between the outermost and innermost spacing of a geometric grid.
    pub ratio: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            r_max: 10.0,
            cells: 1024,
            layout: "uniform".into(),
            ratio: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteppingSection {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_fraction: f64,
    pub safety: f64,
    pub flux: FluxAverage,
    /// Negative-value tolerance; the relative default applies when absent.
    pub tol_pos: Option<f64>,
    pub snapshot_every: usize,
    pub energy: bool,
    pub checkpoint_every: usize,
    pub sup_cap_factor: f64,
}

impl Default for SteppingSection {
    fn default() -> Self {
        let c = StepControl::default();
        let r = RunOptions::default();
        Self {
            dt_init: c.dt_init,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            cfl_fraction: c.cfl_fraction,
            safety: c.safety,
            flux: FluxAverage::Arithmetic,
            tol_pos: None,
            snapshot_every: 10,
            energy: true,
            checkpoint_every: 0,
            sup_cap_factor: r.sup_cap_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FamilySection {
    pub u0: GaussianProfile,
    pub v0: GaussianProfile,
    pub w0: GaussianProfile,
    /// Defaults to the midpoint of the admissible interval.
    pub kappa: Option<f64>,
    pub p: f64,
    /// Member used by single runs and probes; `0` is the unmodified base.
    pub j: u32,
    pub j_min: u32,
    pub j_max: u32,
    pub baseline_scale: f64,
    pub thetas: Vec<f64>,
}

impl Default for FamilySection {
    fn default() -> Self {
        Self {
            u0: GaussianProfile {
                amplitude: 20.0,
                scale: 1.0,
            },
            v0: GaussianProfile {
                amplitude: 20.0,
                scale: 1.0,
            },
            w0: GaussianProfile {
                amplitude: 1.0,
                scale: 1.0,
            },
            kappa: None,
            p: 1.0,
            j: 0,
            j_min: 2,
            j_max: 8,
            baseline_scale: 1e-2,
            thetas: vec![0.6, 0.75, 0.9],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub kind: Option<ExperimentKind>,
    pub horizon: f64,
    /// Worker threads; all cores when absent.
    pub jobs: Option<usize>,
    /// Rerun the scan at twice the resolution and flag verdict flips.
    pub refine: bool,
    pub heat_t0: f64,
    pub heat_tau: f64,
    pub heat_dt: f64,
    pub picard_time: f64,
    pub picard_iters: usize,
    pub picard_amplitude: f64,
    pub picard_dt: f64,
    pub probe_every: usize,
    pub theta: f64,
    /// Slack constant in the per-step energy inequality.
    pub tol_model: f64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            kind: None,
            horizon: 1.5,
            jobs: None,
            refine: true,
            heat_t0: 0.1,
            heat_tau: 0.5,
            heat_dt: 4e-4,
            picard_time: 0.005,
            picard_iters: 6,
            picard_amplitude: 0.1,
            picard_dt: 1e-6,
            probe_every: 10,
            theta: 0.75,
            tol_model: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: ModelSection,
    pub grid: GridSection,
    pub stepping: SteppingSection,
    pub family: FamilySection,
    pub experiment: ExperimentSection,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// 1-based line of `key` inside `[section]` (or an inline table value).
fn key_line(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, line) in src.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.split(']').next()) {
            current = name.trim().to_string();
            continue;
        }
        let lhs = t.split('=').next().unwrap_or("").trim();
        if current == section && lhs == key {
            return Some(n + 1);
        }
        if lhs == format!("{section}.{key}") && current.is_empty() {
            return Some(n + 1);
        }
    }
    None
}

impl Config {
    /// Built-in defaults of one experiment.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut c = Config::default();
        c.experiment.kind = Some(kind);
        match kind {
            ExperimentKind::FamilyScan | ExperimentKind::SingleRun => {
                c.stepping.flux = FluxAverage::Upwind;
                c.stepping.dt_min = 1e-7;
            }
            ExperimentKind::HeatKernelValidation => {
                c.model = ModelSection {
                    chi: 0.0,
                    xi: 0.0,
                    lambda: 0.0,
                    alpha: 0.0,
                    beta: 0.0,
                    dim: 3,
                };
                c.grid.r_max = 20.0;
                c.grid.cells = 2048;
                c.stepping.energy = false;
            }
            ExperimentKind::PicardCrosscheck => {
                c.grid.cells = 512;
                c.stepping.energy = false;
            }
            ExperimentKind::LemmaProbes => {
                c.family.u0.amplitude = 1.0;
                c.family.v0.amplitude = 1.0;
                c.stepping.dt_max = 1e-4;
                c.experiment.horizon = 0.5;
            }
            ExperimentKind::GronwallSuite => {}
        }
        c
    }

    /// Parses `src` over the defaults of its kind. `kind` overrides the
    /// file's `[experiment] kind`; one of the two must be present.
    pub fn parse(src: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let user: Config = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        let kind = match (kind, user.experiment.kind) {
            (Some(k), _) | (None, Some(k)) => k,
            (None, None) => {
                return Err(Error::Config(
                    "no experiment kind: set [experiment] kind or use a subcommand".into(),
                ))
            }
        };
        let table: toml::Table = src.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(Config::default_for(kind))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, table);
        let mut cfg: Config = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.experiment.kind = Some(kind);
        cfg.validate_with_source(Some(src))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&src, kind).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn kind(&self) -> ExperimentKind {
        self.experiment.kind.unwrap_or(ExperimentKind::SingleRun)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source(None)
    }

    fn validate_with_source(&self, src: Option<&str>) -> Result<()> {
        let fail = |section: &str, key: &str, msg: String| -> Error {
            let at = src
                .and_then(|s| key_line(s, section, key))
                .map_or_else(|| "default value".to_string(), |n| format!("line {n}"));
            Error::Config(format!("{at}: {section}.{key} {msg}"))
        };
        let m = &self.model;
        let strict = !matches!(self.kind(), ExperimentKind::HeatKernelValidation | ExperimentKind::GronwallSuite);
        for (key, value) in [("chi", m.chi), ("xi", m.xi), ("lambda", m.lambda), ("alpha", m.alpha), ("beta", m.beta)] {
            let ok = if strict { value > 0.0 } else { value >= 0.0 };
            if !ok || !value.is_finite() {
                let need = if strict { "positive" } else { "nonnegative" };
                return Err(fail("model", key, format!("must be {need}, got {value}")));
            }
        }
        if m.dim < 3 {
            return Err(fail("model", "dim", format!("must be at least 3, got {}", m.dim)));
        }

        let g = &self.grid;
        if !(g.r_max > 0.0 && g.r_max.is_finite()) {
            return Err(fail("grid", "r_max", format!("must be positive, got {}", g.r_max)));
        }
        if g.cells < 16 {
            return Err(fail("grid", "cells", format!("must be at least 16, got {}", g.cells)));
        }
        match g.layout.as_str() {
            "uniform" => {}
            "geometric" => {
                if !(g.ratio > 1.0 && g.ratio.is_finite()) {
                    return Err(fail("grid", "ratio", format!("must exceed 1, got {}", g.ratio)));
                }
            }
            other => {
                return Err(fail(
                    "grid",
                    "layout",
                    format!("must be \"uniform\" or \"geometric\", got \"{other}\""),
                ))
            }
        }

        let s = &self.stepping;
        for (key, value) in [("dt_init", s.dt_init), ("dt_min", s.dt_min), ("dt_max", s.dt_max)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(fail("stepping", key, format!("must be positive, got {value}")));
            }
        }
        if s.dt_min > s.dt_init {
            return Err(fail("stepping", "dt_min", format!("must not exceed dt_init = {}", s.dt_init)));
        }
        if s.dt_init > s.dt_max {
            return Err(fail("stepping", "dt_init", format!("must not exceed dt_max = {}", s.dt_max)));
        }
        if !(s.cfl_fraction > 0.0 && s.cfl_fraction <= 1.0) {
            return Err(fail("stepping", "cfl_fraction", format!("must lie in (0, 1], got {}", s.cfl_fraction)));
        }
        if !(s.safety > 0.0 && s.safety < 1.0) {
            return Err(fail("stepping", "safety", format!("must lie in (0, 1), got {}", s.safety)));
        }
        if let Some(t) = s.tol_pos {
            if !(t >= 0.0) {
                return Err(fail("stepping", "tol_pos", format!("must be nonnegative, got {t}")));
            }
        }
        if !(s.sup_cap_factor > 1.0) {
            return Err(fail("stepping", "sup_cap_factor", format!("must exceed 1, got {}", s.sup_cap_factor)));
        }

        let f = &self.family;
        for (key, prof) in [("u0", f.u0), ("v0", f.v0), ("w0", f.w0)] {
            if !(prof.amplitude > 0.0 && prof.scale > 0.0) {
                return Err(fail("family", key, "needs positive amplitude and scale".to_string()));
            }
        }
        let kappa = f.kappa.unwrap_or_else(|| default_kappa(m.dim, f.p));
        if let Err(Error::Config(msg)) = validate_exponents(m.dim, kappa, f.p) {
            let key = if msg.starts_with("p ") { "p" } else { "kappa" };
            return Err(fail("family", key, format!("is invalid: {msg}")));
        }
        if f.j_min == 0 || f.j_min > f.j_max {
            return Err(fail("family", "j_min", format!("must satisfy 1 <= j_min <= j_max, got {}", f.j_min)));
        }
        if !(f.baseline_scale > 0.0) {
            return Err(fail("family", "baseline_scale", format!("must be positive, got {}", f.baseline_scale)));
        }
        if let Some(t) = f.thetas.iter().find(|t| !(**t > 0.5 && **t < 1.0)) {
            return Err(fail("family", "thetas", format!("entries must lie in (1/2, 1), got {t}")));
        }

        let e = &self.experiment;
        if !(e.horizon > 0.0) {
            return Err(fail("experiment", "horizon", format!("must be positive, got {}", e.horizon)));
        }
        if self.kind() == ExperimentKind::FamilyScan && e.horizon < 1.0 {
            return Err(fail("experiment", "horizon", format!("must be at least 1 for a scan, got {}", e.horizon)));
        }
        if e.jobs == Some(0) {
            return Err(fail("experiment", "jobs", "must be at least 1".to_string()));
        }
        if !(e.theta > 0.5 && e.theta < 1.0) {
            return Err(fail("experiment", "theta", format!("must lie in (1/2, 1), got {}", e.theta)));
        }
        for (key, value) in [
            ("heat_t0", e.heat_t0),
            ("heat_tau", e.heat_tau),
            ("heat_dt", e.heat_dt),
            ("picard_time", e.picard_time),
            ("picard_amplitude", e.picard_amplitude),
            ("picard_dt", e.picard_dt),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(fail("experiment", key, format!("must be positive, got {value}")));
            }
        }
        if !(e.tol_model >= 0.0) {
            return Err(fail("experiment", "tol_model", format!("must be nonnegative, got {}", e.tol_model)));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        ModelParams::degenerate(m.chi, m.xi, m.lambda, m.alpha, m.beta, m.dim)
    }

    pub fn layout(&self) -> Layout {
        match self.grid.layout.as_str() {
            "geometric" => Layout::Geometric { ratio: self.grid.ratio },
            _ => Layout::Uniform,
        }
    }

    pub fn build_grid(&self) -> Result<RadialGrid> {
        RadialGrid::build(self.grid.r_max, self.grid.cells, self.layout(), self.model.dim)
    }

    pub fn control(&self) -> StepControl {
        let s = &self.stepping;
        StepControl {
            dt_init: s.dt_init,
            dt_min: s.dt_min,
            dt_max: s.dt_max,
            cfl_fraction: s.cfl_fraction,
            safety: s.safety,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        let s = &self.stepping;
        RunOptions {
            snapshot_every: s.snapshot_every,
            energy: s.energy,
            checkpoint_every: s.checkpoint_every,
            sup_cap_factor: s.sup_cap_factor,
            scheme: SchemeOptions {
                flux: s.flux,
                tol_pos: s.tol_pos,
            },
        }
    }

    pub fn base(&self) -> BaseProfiles {
        BaseProfiles {
            u0: self.family.u0,
            v0: self.family.v0,
            w0: self.family.w0,
        }
    }

    pub fn scan_config(&self) -> Result<ScanConfig> {
        Ok(ScanConfig {
            params: self.params()?,
            base: self.base(),
            kappa: self.family.kappa,
            p: self.family.p,
            r_max: self.grid.r_max,
            cells: self.grid.cells,
            layout: self.layout(),
            control: self.control(),
            run: self.run_options(),
            horizon: self.experiment.horizon,
            j_min: self.family.j_min,
            j_max: self.family.j_max,
            baseline_scale: self.family.baseline_scale,
            thetas: self.family.thetas.clone(),
        })
    }

    /// Renders the full configuration, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_chi_names_field_and_line() {
        let src = "[experiment]\nkind = \"single-run\"\n\n[model]\nchi = -1.0\n";
        let err = Config::parse(src, None).unwrap_err().to_string();
        assert!(err.contains("line 5"), "{err}");
        assert!(err.contains("model.chi"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = Config::parse("[model]\nchii = 1.0\n", Some(ExperimentKind::SingleRun))
            .unwrap_err()
            .to_string();
        assert!(err.contains("chii"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn subcommand_defaults_underlie_the_file() {
        let c = Config::parse("[grid]\ncells = 256\n", Some(ExperimentKind::FamilyScan)).unwrap();
        assert_eq!(c.grid.cells, 256);
        assert_eq!(c.stepping.flux, FluxAverage::Upwind);
        assert_eq!(c.stepping.dt_min, 1e-7);
    }

    #[test]
    fn defaults_validate() {
        for k in ExperimentKind::ALL {
            Config::default_for(k).validate().unwrap();
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
    }
}
