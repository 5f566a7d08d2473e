//! Energy functional, dissipation and lemma-chain probes.

pub mod energy;
pub mod probes;

pub use energy::{
    check_energy_inequality, dirichlet_energy, energy, signal_rate, EnergyReport, InequalityCheck,
    IntegralEnergyCheck,
};
pub use probes::{
    coupling_estimate_probe, gronwall_in_r_margin, pointwise_bound_probe, PointwiseProbe, ProbeConfig,
    ProbeReport, RatioFit,
};
