mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::{gauss, simpson, uniform};
use ks_blowup::diagnostics::energy::IntegralEnergyCheck;
use ks_blowup::{
    check_energy_inequality, coupling_estimate_probe, energy, pointwise_bound_probe, run_until, step,
    summarize_initial, Error, FieldState, ModelParams, ProbeConfig, RunOptions, SchemeOptions, StepControl,
};
use proptest::prelude::*;

#[test]
fn zero_state_has_zero_energy() {
    let g = uniform(6.0, 128);
    let e = energy(&FieldState::zeros(&g), &ModelParams::default(), &g).unwrap();
    for x in [e.dirichlet, e.l2w, e.coupling, e.entropy_u, e.entropy_v, e.f, e.norm_f, e.norm_g1, e.norm_g2, e.d] {
        assert_eq!(x, 0.0);
    }
}

#[test]
fn gaussian_signal_energy() {
    let g = uniform(10.0, 4000);
    let s = FieldState::from_fns(&g, |_| 0.0, |_| 0.0, gauss);
    let e = energy(&s, &ModelParams::default(), &g).unwrap();
    let w_sq = 4.0 * PI * simpson(|r| r * r * (-2.0 * r * r).exp(), 0.0, 10.0, 1_000_000);
    let grad_sq = 4.0 * PI * simpson(|r| 4.0 * r.powi(4) * (-2.0 * r * r).exp(), 0.0, 10.0, 1_000_000);
    assert!((w_sq - (PI / 2.0).powf(1.5)).abs() < 1e-10);
    assert_relative_eq!(e.l2w, 0.5 * w_sq, max_relative = 1e-5);
    assert_relative_eq!(e.dirichlet, 0.5 * grad_sq, max_relative = 1e-5);
    assert_relative_eq!(e.f, 0.5 * grad_sq + 0.5 * w_sq, max_relative = 1e-5);
    assert_eq!((e.coupling, e.entropy_u, e.entropy_v), (0.0, 0.0, 0.0));
}

#[test]
fn doubling_the_signal_quadruples_quadratic_terms() {
    let g = uniform(8.0, 256);
    let p = ModelParams::default();
    let one = energy(&FieldState::from_fns(&g, |_| 0.0, |_| 0.0, |r| gauss(r) / (1.0 + r)), &p, &g).unwrap();
    let two = energy(&FieldState::from_fns(&g, |_| 0.0, |_| 0.0, |r| 2.0 * gauss(r) / (1.0 + r)), &p, &g).unwrap();
    assert_eq!(two.dirichlet, 4.0 * one.dirichlet);
    assert_eq!(two.l2w, 4.0 * one.l2w);
}

#[test]
fn log_argument_must_stay_positive() {
    let g = uniform(4.0, 64);
    let mut s = FieldState::zeros(&g);
    s.u[3] = -1.0;
    assert!(matches!(energy(&s, &ModelParams::default(), &g), Err(Error::Evaluation { node: 3, .. })));
}

#[test]
fn stationary_zero_state_satisfies_inequality_with_zero_margin() {
    let g = uniform(4.0, 64);
    let p = ModelParams::default();
    let e0 = energy(&FieldState::zeros(&g), &p, &g).unwrap();
    let mut e1 = e0;
    e1.t = 0.01;
    let c = check_energy_inequality(&e0, &e1, 0.01, &p, 1.0).unwrap();
    assert!(c.holds);
    assert_eq!(c.margin, 0.0);
    assert!(matches!(check_energy_inequality(&e0, &e1, 0.02, &p, 1.0), Err(Error::Usage(_))));
}

#[test]
fn diffusing_signal_dissipates() {
    let g = uniform(10.0, 512);
    let p = ModelParams::degenerate(0.0, 0.0, 1.0, 0.0, 0.0, 3).unwrap();
    let mut s = FieldState::from_fns(&g, |_| 0.0, |_| 0.0, gauss);
    let mut before = energy(&s, &p, &g).unwrap();
    let dt = 1e-4;
    for _ in 0..200 {
        s = step(&s, &p, &g, dt, &SchemeOptions::default()).unwrap();
        let after = energy(&s, &p, &g).unwrap();
        let c = check_energy_inequality(&before, &after, dt, &p, 0.0).unwrap();
        assert!(c.margin >= 0.0, "margin {} at t = {}", c.margin, s.t);
        before = after;
    }
}

#[test]
fn integral_inequality_along_a_smooth_run() {
    let g = uniform(10.0, 512);
    let p = ModelParams::default();
    let s = FieldState::from_fns(&g, gauss, gauss, |r| 0.5 * gauss(r));
    let control = StepControl {
        dt_init: 1e-4,
        dt_max: 1e-4,
        ..Default::default()
    };
    let out = run_until(&s, &p, &g, 0.2, &control, &RunOptions::default(), &mut []).unwrap();
    let reports: Vec<_> = out.series.snapshots.iter().map(|s| s.energy.unwrap()).collect();
    let mut check = IntegralEnergyCheck::new(reports[0], p);
    for r in &reports[1..] {
        check.push(*r);
    }
    assert!(check.worst_margin() >= -1e-3, "{}", check.worst_margin());
    for r in &reports {
        assert!(r.d >= 0.0);
    }
}

#[test]
fn norm_f_is_the_rate_of_the_signal() {
    let g = uniform(8.0, 256);
    let p = ModelParams::default();
    let s = FieldState::from_fns(&g, gauss, |r| 0.5 * gauss(r), |r| 0.3 * gauss(r));
    let e = energy(&s, &p, &g).unwrap();
    let gap = |dt: f64| {
        let next = step(&s, &p, &g, dt, &SchemeOptions::default()).unwrap();
        let rate: Vec<f64> = next.w.iter().zip(&s.w).map(|(a, b)| (a - b) / dt).collect();
        (g.lp_norm(&rate, 2.0).unwrap() - e.norm_f).abs()
    };
    let (coarse, fine) = (gap(1e-3), gap(1e-4));
    assert!(fine < coarse && fine < 0.05 * e.norm_f, "{coarse} {fine} of {}", e.norm_f);
}

#[test]
fn pointwise_probe_on_zero_signal() {
    let g = uniform(4.0, 64);
    let z = FieldState::zeros(&g);
    let p = pointwise_bound_probe(&z, &summarize_initial(&z, &g).unwrap(), &g).unwrap();
    assert_eq!((p.r0, p.pointwise_margin), (1.5, 0.0));
}

#[test]
fn pointwise_probe_on_gaussian_signal() {
    let g = uniform(6.0, 600);
    let s = FieldState::from_fns(&g, |_| 0.0, |_| 0.0, gauss);
    let p = pointwise_bound_probe(&s, &summarize_initial(&s, &g).unwrap(), &g).unwrap();
    assert!((1.0..=2.0).contains(&p.r0));
    assert!(p.pointwise_margin <= p.tolerance, "{}", p.pointwise_margin);
    assert!(p.mean_within_k);
    let mean = simpson(|r| r * r * gauss(r), 1.0, 2.0, 100_000);
    assert_relative_eq!(p.mean_integral, mean, max_relative = 1e-4);
    assert_relative_eq!(p.r0 * p.r0 * gauss(p.r0), mean, max_relative = 1e-3);
}

#[test]
fn monotone_signal_is_below_its_anchor_outside() {
    let g = uniform(6.0, 300);
    let s = FieldState::from_fns(&g, |_| 0.0, |_| 0.0, |r| 1.0 / (1.0 + r * r));
    let p = pointwise_bound_probe(&s, &summarize_initial(&s, &g).unwrap(), &g).unwrap();
    assert!(p.pointwise_margin <= p.tolerance);
    for (r, w) in g.nodes().iter().zip(&s.w) {
        if *r >= p.r0 {
            assert!(*w <= p.w_at_r0 + 1e-12);
        }
    }
}

#[test]
fn pointwise_probe_needs_the_unit_annulus() {
    let g = uniform(1.5, 64);
    let s = FieldState::from_fns(&g, |_| 0.0, |_| 0.0, gauss);
    let sum = summarize_initial(&s, &g).unwrap();
    assert!(matches!(pointwise_bound_probe(&s, &sum, &g), Err(Error::Probe(_))));
}

#[test]
fn coupling_probe_on_zero_state() {
    let g = uniform(4.0, 64);
    let z = FieldState::zeros(&g);
    let sum = summarize_initial(&z, &g).unwrap();
    let r = coupling_estimate_probe(&z, &ModelParams::default(), &sum, &g, &ProbeConfig::default()).unwrap();
    assert_eq!((r.coupling_lhs, r.ball_grad), (0.0, 0.0));
    assert!(r.fitted_ratios.values().all(|x| *x == 0.0));
}

#[test]
fn combined_estimate_uses_twice_theta_on_norm_f() {
    let g = uniform(8.0, 400);
    let p = ModelParams::default();
    let s = FieldState::from_fns(&g, |r| 3.0 * gauss(r), gauss, |r| 0.5 * gauss(r));
    let sum = summarize_initial(&s, &g).unwrap();
    let cfg = ProbeConfig {
        theta: 0.75,
        ..Default::default()
    };
    let r = coupling_estimate_probe(&s, &p, &sum, &g, &cfg).unwrap();
    let e = energy(&s, &p, &g).unwrap();
    let k = sum.k_plus_one;
    let expected = 0.5 * e.coupling / (k * k * (e.norm_f.powf(1.5) + e.norm_g1 + e.norm_g2 + 1.0));
    assert_relative_eq!(r.fitted_ratios["combined"], expected, max_relative = 1e-12);
    for bad in [0.5, 1.0, 0.3] {
        let cfg = ProbeConfig {
            theta: bad,
            ..Default::default()
        };
        assert!(matches!(coupling_estimate_probe(&s, &p, &sum, &g, &cfg), Err(Error::Config(_))));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn report_identities(
        u in prop::collection::vec(0.0f64..50.0, 65),
        v in prop::collection::vec(0.0f64..50.0, 65),
        w in prop::collection::vec(-5.0f64..5.0, 65),
        chi in 0.1f64..5.0,
        alpha in 0.1f64..5.0,
    ) {
        let g = uniform(4.0, 64);
        let p = ModelParams::new(chi, 1.3, 0.7, alpha, 0.4, 3).unwrap();
        let s = FieldState { t: 0.0, u: u.clone(), v, w };
        let e = energy(&s, &p, &g).unwrap();
        let f = e.dirichlet + e.l2w - e.coupling + e.entropy_u + e.entropy_v;
        prop_assert!((e.f - f).abs() <= 1e-12 * (e.f.abs() + e.coupling.abs() + 1.0));
        let d = 0.5 * e.norm_f.powi(2) + 0.5 * p.alpha * e.norm_g1.powi(2) + 0.5 * p.beta * e.norm_g2.powi(2);
        prop_assert!((e.d - d).abs() <= 1e-12 * d.max(1.0));
        prop_assert!(e.d >= 0.0 && e.entropy_u >= 0.0 && e.entropy_v >= 0.0);
        let quad: Vec<f64> = u.iter().map(|x| x * x + x).collect();
        prop_assert!(e.entropy_u <= p.alpha / p.chi * g.integrate(&quad).unwrap() * (1.0 + 1e-12));
    }
}
