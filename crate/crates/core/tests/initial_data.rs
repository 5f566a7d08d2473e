mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::{simpson, uniform};
use ks_blowup::family::{loglog_slope, FamilyTrend};
use ks_blowup::{
    dense_family, family_energy_trend, phi, select_eta, theorem_threshold, BaseProfiles, DenseFamilySpec, Error,
    GaussianProfile, ModelParams,
};
use proptest::prelude::*;

fn base() -> BaseProfiles {
    BaseProfiles {
        u0: GaussianProfile::new(20.0, 1.0).unwrap(),
        v0: GaussianProfile::new(20.0, 1.0).unwrap(),
        w0: GaussianProfile::new(1.0, 1.0).unwrap(),
    }
}

/// `asinh(ε^{−½}) − (1+ε)^{−½}`, the three-dimensional closed form.
fn phi3(eps: f64) -> f64 {
    (1.0 / eps.sqrt()).asinh() - 1.0 / (1.0 + eps).sqrt()
}

/// `∫₀^R g(ρ) dρ` through `ρ = eᵗ`, for integrands concentrated near `√η`.
fn log_simpson<F: Fn(f64) -> f64>(g: F, ln_lo: f64, r: f64) -> f64 {
    simpson(|t| g(t.exp()) * t.exp(), ln_lo, r.ln(), 2_000_000)
}

#[test]
fn phi_at_one() {
    let expected = (1.0 + 2f64.sqrt()).ln() - 1.0 / 2f64.sqrt();
    assert!((expected - 0.17426).abs() < 1e-5);
    assert!((phi(1.0, 3).unwrap() - expected).abs() < 1e-12);
    let quad = simpson(|r| r * r * (r * r + 1.0).powf(-1.5), 0.0, 1.0, 10_000);
    assert!((quad - expected).abs() < 1e-12);
}

#[test]
fn phi_decreases_and_diverges() {
    let eps = [1e-12, 1e-8, 1e-4, 1e-2, 0.5, 1.0, 4.0];
    for dim in [3, 4, 6] {
        let vals: Vec<f64> = eps.iter().map(|e| phi(*e, dim).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "N = {dim}: {vals:?}");
    }
    let (a, b, c) = (phi(1e-8, 3).unwrap(), phi(1e-4, 3).unwrap(), phi(1.0, 3).unwrap());
    assert!(a > b && b > 10.0 * c);
    for e in [1e-8, 1e-4, 0.3] {
        assert_relative_eq!(phi(e, 3).unwrap(), phi3(e), max_relative = 1e-9);
    }
    assert!(matches!(phi(0.0, 3), Err(Error::Config(_))));
    assert!(matches!(phi(-1.0, 3), Err(Error::Config(_))));
}

#[test]
fn eta_meets_the_level_set() {
    for (r, j) in [(0.5, 1), (0.5, 3), (0.25, 2), (0.125, 5), (2f64.powi(-8), 8)] {
        let eta = select_eta(r, j, 3).unwrap();
        let eps_ln = eta.ln - 2.0 * f64::ln(r);
        let level = r.powi(3) * phi3(eps_ln.exp().max(f64::MIN_POSITIVE));
        let level = if eps_ln < -600.0 {
            // asinh(ε^{−½}) ≈ ln 2 − ½ ln ε once ε underflows
            r.powi(3) * (2f64.ln() - 0.5 * eps_ln - 1.0)
        } else {
            level
        };
        assert!(level >= j as f64 * (1.0 - 1e-9), "r = {r}, j = {j}: {level}");
        assert!(level <= j as f64 * (1.0 + 1e-6) + 1e-9, "r = {r}, j = {j}: {level}");
    }
}

#[test]
fn eta_shrinks_with_j() {
    let lns: Vec<f64> = (1..=10).map(|j| select_eta(0.5, j, 3).unwrap().ln).collect();
    assert!(lns.windows(2).all(|w| w[1] <= w[0]));
    assert!(matches!(select_eta(1.5, 1, 3), Err(Error::Config(_))));
    assert!(matches!(select_eta(0.5, 0, 3), Err(Error::Config(_))));
}

#[test]
fn exponents_are_checked() {
    let lo = DenseFamilySpec::new(base(), 3, 2, 0.0, 1.0).unwrap_err();
    assert!(lo.to_string().contains("lower bound"), "{lo}");
    let hi = DenseFamilySpec::new(base(), 3, 2, 0.5, 1.0).unwrap_err();
    assert!(hi.to_string().contains("upper bound"), "{hi}");
    assert!(matches!(DenseFamilySpec::new(base(), 3, 2, 0.45, 1.2), Err(Error::Config(_))));
    assert!(DenseFamilySpec::new(base(), 3, 2, 0.45, 1.1).is_ok());
}

#[test]
fn members_are_continuous_and_positive() {
    let g = uniform(10.0, 1024);
    for j in 1..=8 {
        let spec = DenseFamilySpec::new(base(), 3, j, 0.25, 1.0).unwrap();
        let r = spec.r_j;
        assert_relative_eq!(spec.u(r), base().u0.value(r), max_relative = 1e-12);
        assert_relative_eq!(spec.v(r), base().v0.value(r), max_relative = 1e-12);
        assert_relative_eq!(spec.w(r), base().w0.value(r), max_relative = 1e-12);
        let s = dense_family(&spec, &g).unwrap();
        assert!(s.u.iter().chain(&s.v).chain(&s.w).all(|x| *x > 0.0 && x.is_finite()));
    }
}

#[test]
fn spike_integrals_match_a_log_variable_oracle() {
    let p = ModelParams::default();
    let spec = DenseFamilySpec::new(base(), 3, 2, 0.25, 1.0).unwrap();
    let eta = spec.eta_j.value();
    let lo = 0.5 * spec.eta_j.ln - 30.0;

    let cpl = log_simpson(|r| r * r * (r * r + eta).powf(-1.5), lo, spec.r_j);
    let expected = 4.0 * PI * (spec.a_j + spec.b_j) * spec.c_j * cpl;
    let e = spec.energy(&p).unwrap();
    assert_relative_eq!(e.inner_coupling, expected, max_relative = 1e-6);

    let u0 = base().u0;
    let dist = log_simpson(
        |r| r * r * (spec.a_j * (r * r + eta).powf(-(3.0 - 0.25) / 2.0) - u0.value(r)).abs(),
        lo,
        spec.r_j,
    );
    assert_relative_eq!(spec.lp_distance_u().unwrap(), 4.0 * PI * dist, max_relative = 1e-6);
}

#[test]
fn threshold_examples() {
    assert_eq!(theorem_threshold(1.0, 0.6, 1.0).unwrap(), -1.0);
    assert_eq!(theorem_threshold(2.0, 0.75, 1.0).unwrap(), -256.0);
    let near = theorem_threshold(2.0, 0.5 + 1e-9, 1.0).unwrap();
    assert_relative_eq!(near, -16.0, max_relative = 1e-6);
    for bad in [0.5, 1.0, 0.2] {
        assert!(matches!(theorem_threshold(2.0, bad, 1.0), Err(Error::Config(_))));
    }
}

fn trend() -> FamilyTrend {
    let g = uniform(10.0, 1024);
    let specs: Vec<_> = (2..=8)
        .map(|j| DenseFamilySpec::new(base(), 3, j, 0.25, 1.0).unwrap())
        .collect();
    family_energy_trend(&specs, &ModelParams::default(), &g).unwrap()
}

#[test]
fn family_energy_runs_to_minus_infinity() {
    let t = trend();
    assert!(t.coupling_bound_holds);
    assert!(t.noncoupling_bounded);
    let f: Vec<f64> = t.rows.iter().map(|r| r.f_j).collect();
    assert!(f[2..].windows(2).all(|w| w[1] < w[0]), "{f:?}");
    assert!(f[6] < -10.0 * f[0].abs(), "{f:?}");
    let k: Vec<f64> = t.rows.iter().map(|r| r.k_j).collect();
    let steps: Vec<f64> = k.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(steps.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{k:?}");
    assert!(steps[5] < 1e-2 * k[6]);
    for r in &t.rows {
        assert!(r.coupling_j >= r.coupling_bound);
    }
}

#[test]
fn convergence_rates() {
    let t = trend();
    let r: Vec<f64> = t.rows.iter().map(|r| r.r_j).collect();
    let lp: Vec<f64> = t.rows.iter().map(|r| r.lp_distance_u).collect();
    let h1: Vec<f64> = t.rows.iter().map(|r| r.h1_distance_w).collect();
    let w11: Vec<f64> = t.rows.iter().map(|r| r.w11_distance_w).collect();
    assert!(loglog_slope(&r, &lp).unwrap() >= 0.25 - 0.1);
    assert!(loglog_slope(&r, &h1).unwrap() >= 0.25 - 0.1);
    assert!(h1.windows(2).all(|w| w[1] < w[0]));
    assert!(w11.windows(2).all(|w| w[1] < w[0]));
    // ‖u₀ⱼ − u₀‖₁ ≤ C r_j^{N−p(N−κ)} + ‖u₀‖∞ |B_{r_j}|
    let bound: Vec<f64> = r.iter().map(|x| x.powf(0.25) + 20.0 * 4.0 * PI / 3.0 * x.powi(3)).collect();
    let ratios: Vec<f64> = lp.iter().zip(&bound).map(|(a, b)| a / b).collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    assert!(max <= 2.0 * ratios[0], "{ratios:?}");
}

#[test]
fn entropy_of_members_is_finite_under_refinement() {
    let p = ModelParams::default();
    let spec = DenseFamilySpec::new(base(), 3, 4, 0.25, 1.0).unwrap();
    let e = spec.energy(&p).unwrap();
    assert!(e.entropy_u.is_finite() && e.entropy_v.is_finite());
    let sampled = |m| {
        let g = uniform(10.0, m);
        ks_blowup::energy(&dense_family(&spec, &g).unwrap(), &p, &g).unwrap().entropy_u
    };
    let (a, b) = (sampled(1024), sampled(4096));
    assert!(a.is_finite() && b.is_finite());
    assert_relative_eq!(b, e.entropy_u, max_relative = 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn members_stay_positive(
        amp in 0.1f64..50.0,
        j in 1u32..9,
        kappa in 0.01f64..0.49,
    ) {
        let g = uniform(6.0, 256);
        let b = BaseProfiles {
            u0: GaussianProfile::new(amp, 1.0).unwrap(),
            v0: GaussianProfile::new(0.5 * amp, 2.0).unwrap(),
            w0: GaussianProfile::new(1.0, 1.0).unwrap(),
        };
        let spec = DenseFamilySpec::new(b, 3, j, kappa, 1.0).unwrap();
        let s = dense_family(&spec, &g).unwrap();
        prop_assert!(s.u.iter().chain(&s.v).chain(&s.w).all(|x| *x > 0.0));
    }
}
