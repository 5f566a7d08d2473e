//! Radial two-species parabolic–parabolic chemotaxis on ℝᴺ: a conservative
//! finite-volume solver, energy and probe diagnostics, the dense blow-up
//! family, a semigroup oracle, and blow-up experiments.

pub mod blowup;
pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod family;
pub mod grid;
pub mod integrator;
pub mod model;
pub mod operators;
pub mod quadrature;
pub mod scan;
pub mod semigroup;
pub mod tridiag;

pub use blowup::{
    detect_blowup, gronwall_bound, gronwall_ode_check, BlowupStatus, BlowupTrigger, BlowupVerdict,
    GronwallCheck, GronwallProblem,
};
pub use checkpoint::Checkpoint;
pub use diagnostics::{
    check_energy_inequality, coupling_estimate_probe, energy, pointwise_bound_probe, EnergyReport,
    InequalityCheck, ProbeConfig, ProbeReport,
};
pub use error::{Error, Result};
pub use family::{
    dense_family, family_energy_trend, phi, select_eta, theorem_threshold, BaseProfiles, DenseFamilySpec,
    GaussianProfile,
};
pub use grid::{unit_sphere_area, Layout, RadialGrid};
pub use integrator::{
    run_until, step, suggest_dt, Observer, RunOptions, RunOutcome, SchemeOptions, StepControl,
    TerminationReason, TimeSeries,
};
pub use model::{summarize_initial, validate_state, FieldState, InitialDataSummary, ModelParams};
pub use operators::{build_cutoff, chemotaxis_divergence, radial_gradient, radial_laplacian, FluxAverage};
pub use semigroup::{check_l1_bounds, gamma_integral, heat_semigroup, picard_iterate};
