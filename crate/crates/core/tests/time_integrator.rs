mod common;

use std::f64::consts::PI;

use common::{gauss, uniform};
use ks_blowup::diagnostics::energy::signal_rate;
use ks_blowup::experiments::heat_kernel_error;
use ks_blowup::integrator::advective_dt;
use ks_blowup::{
    detect_blowup, run_until, step, suggest_dt, validate_state, BaseProfiles, BlowupStatus, Checkpoint,
    DenseFamilySpec, Error, FieldState, FluxAverage, GaussianProfile, Layout, ModelParams, RadialGrid,
    RunOptions, SchemeOptions, StepControl, TerminationReason,
};
use proptest::prelude::*;

fn kernel(r: f64, s: f64) -> f64 {
    (4.0 * PI * s).powf(-1.5) * (-r * r / (4.0 * s)).exp()
}

fn quiet() -> RunOptions {
    RunOptions {
        energy: false,
        ..Default::default()
    }
}

#[test]
fn zero_state_is_a_fixed_point() {
    let g = uniform(5.0, 64);
    let z = FieldState::zeros(&g);
    let next = step(&z, &ModelParams::default(), &g, 1e-2, &SchemeOptions::default()).unwrap();
    assert_eq!(next.u, z.u);
    assert_eq!(next.v, z.v);
    assert_eq!(next.w, z.w);
    assert_eq!(next.t, 1e-2);
}

#[test]
fn nonpositive_step_is_rejected() {
    let g = uniform(5.0, 64);
    let z = FieldState::zeros(&g);
    for dt in [0.0, -1e-3, f64::NAN] {
        assert!(matches!(
            step(&z, &ModelParams::default(), &g, dt, &SchemeOptions::default()),
            Err(Error::Usage(_))
        ));
    }
}

#[test]
fn heat_kernel_is_reproduced() {
    let g = RadialGrid::build(20.0, 2048, Layout::Uniform, 3).unwrap();
    let (coarse, state) = heat_kernel_error(&g, 0.1, 0.5, 4e-4).unwrap();
    let exact = g.sample(|r| kernel(r, 0.6));
    let own = state.u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert_eq!(own, coarse);
    assert!(coarse < 1e-3, "sup error {coarse}");
    let (fine, _) = heat_kernel_error(&g, 0.1, 0.5, 2e-4).unwrap();
    assert!(coarse / fine >= 1.8, "halving dt gained only {}", coarse / fine);
}

#[test]
fn suggest_dt_follows_the_advective_bound() {
    let g = uniform(4.0, 400);
    let control = StepControl {
        dt_init: 1e-4,
        dt_min: 1e-12,
        dt_max: 1.0,
        cfl_fraction: 0.5,
        safety: 0.8,
    };
    let p = ModelParams::default();
    let flat = FieldState::zeros(&g);
    assert_eq!(suggest_dt(&flat, &p, &g, &control), 1.0);

    let mut s = FieldState::from_fns(&g, gauss, gauss, gauss);
    let once = suggest_dt(&s, &p, &g, &control);
    s.w.iter_mut().for_each(|x| *x *= 2.0);
    let twice = suggest_dt(&s, &p, &g, &control);
    assert!((once / twice - 2.0).abs() < 1e-12);

    // ‖w_r‖∞ of e^{−r²} is √2 e^{−½} at r = 1/√2
    let slope = 2.0 * (0.5_f64).sqrt() * (-0.5_f64).exp();
    let p2 = ModelParams::new(2.0, 1.0, 1.0, 1.0, 1.0, 3).unwrap();
    let s = FieldState::from_fns(&g, gauss, gauss, gauss);
    let dt = advective_dt(&s, &p2, &g, 0.5);
    assert!((dt * 2.0 * slope / (0.5 * 0.01) - 1.0).abs() < 1e-3, "{dt}");
    assert_eq!(dt, advective_dt(&s, &ModelParams::new(1.0, 2.0, 1.0, 1.0, 1.0, 3).unwrap(), &g, 0.5));
}

#[test]
fn zero_run_reaches_the_end() {
    let g = uniform(5.0, 64);
    let out = run_until(
        &FieldState::zeros(&g),
        &ModelParams::default(),
        &g,
        1.0,
        &StepControl::default(),
        &RunOptions::default(),
        &mut [],
    )
    .unwrap();
    assert_eq!(out.reason, TerminationReason::ReachedT);
    assert!(out.final_state.t >= 1.0);
    assert!(out.series.snapshots.iter().all(|s| s.sup_u == 0.0 && s.sup_v == 0.0 && s.sup_w == 0.0));
    assert!(out.series.snapshots.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn small_data_decays() {
    let g = uniform(12.0, 384);
    let p = ModelParams::default();
    let s = FieldState::from_fns(&g, |r| 0.01 * gauss(r), |r| 0.01 * gauss(r), |r| 0.01 * gauss(r));
    let out = run_until(&s, &p, &g, 2.0, &StepControl::default(), &quiet(), &mut []).unwrap();
    assert_eq!(out.reason, TerminationReason::ReachedT);
    let sups: Vec<f64> = out.series.snapshots.iter().map(|s| s.sup_u + s.sup_v).collect();
    assert!(sups.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    let (m0, m1) = (&out.series.snapshots[0], out.series.snapshots.last().unwrap());
    assert!(((m1.mass_u - m0.mass_u) / m0.mass_u).abs() < 1e-9);
    assert!(((m1.mass_v - m0.mass_v) / m0.mass_v).abs() < 1e-9);
    let d = validate_state(&out.final_state, &p, &g, 1e-10).unwrap();
    assert!(d.is_valid());
}

#[test]
fn large_family_member_blows_up_before_one() {
    let g = uniform(10.0, 1024);
    let p = ModelParams::default();
    let base = BaseProfiles {
        u0: GaussianProfile::new(20.0, 1.0).unwrap(),
        v0: GaussianProfile::new(20.0, 1.0).unwrap(),
        w0: GaussianProfile::new(1.0, 1.0).unwrap(),
    };
    let spec = DenseFamilySpec::new(base, 3, 6, 0.25, 1.0).unwrap();
    let s = ks_blowup::dense_family(&spec, &g).unwrap();
    let control = StepControl {
        dt_min: 1e-7,
        ..Default::default()
    };
    let mut opts = quiet();
    opts.scheme.flux = FluxAverage::Upwind;
    let out = run_until(&s, &p, &g, 1.5, &control, &opts, &mut []).unwrap();
    let verdict = detect_blowup(&out);
    match verdict.status {
        BlowupStatus::BlewUp { t_star, .. } => assert!(t_star < 1.0, "t* = {t_star}"),
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn signal_update_is_consistent_with_its_equation() {
    let g = uniform(8.0, 256);
    let p = ModelParams::default();
    let s = FieldState::from_fns(&g, gauss, |r| 0.5 * gauss(r), |r| 0.3 * gauss(r));
    let rate = signal_rate(&s, &p, &g);
    let err = |dt: f64| {
        let next = step(&s, &p, &g, dt, &SchemeOptions::default()).unwrap();
        let diff: Vec<f64> = (0..g.len()).map(|i| (next.w[i] - s.w[i]) / dt - rate[i]).collect();
        g.lp_norm(&diff, 2.0).unwrap()
    };
    let (e1, e2, e3) = (err(1e-3), err(5e-4), err(2.5e-4));
    assert!(e2 < e1 && e3 < e2, "{e1} {e2} {e3}");
    assert!(e1 / e3 > 3.0);
}

#[test]
fn positivity_loss_is_a_scheme_failure() {
    let g = uniform(4.0, 200);
    let p = ModelParams::new(50.0, 50.0, 1.0, 1.0, 1.0, 3).unwrap();
    let s = FieldState::from_fns(&g, |r| gauss(4.0 * r), |r| gauss(4.0 * r), |r| 10.0 * gauss(3.0 * r));
    let opts = SchemeOptions {
        flux: FluxAverage::Arithmetic,
        tol_pos: Some(0.0),
    };
    match step(&s, &p, &g, 0.05, &opts) {
        Err(Error::SchemeFailure { reason, state, .. }) => {
            assert!(reason.contains("positivity"), "{reason}");
            assert_eq!(state.len(), g.len());
        }
        other => panic!("expected a scheme failure, got {other:?}"),
    }
}

#[test]
fn checkpoint_rejects_truncation_and_foreign_files() {
    let g = uniform(3.0, 32);
    let s = FieldState::from_fns(&g, gauss, gauss, gauss);
    let ck = Checkpoint::new(&ModelParams::default(), &g, &s).unwrap();
    let mut bytes = Vec::new();
    ck.write_to(&mut bytes).unwrap();
    assert!(matches!(Checkpoint::read_from(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::read_from(&bad[..]), Err(Error::Format(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.ckpt");
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
}

fn bits(f: &[f64]) -> Vec<u64> {
    f.iter().map(|x| x.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_conserves_species_mass(
        amp_u in 0.1f64..20.0,
        amp_v in 0.1f64..20.0,
        amp_w in 0.0f64..5.0,
        width in 0.5f64..2.0,
        dt in 1e-6f64..1e-4,
        upwind in any::<bool>(),
    ) {
        let g = RadialGrid::build(10.0, 256, Layout::Uniform, 3).unwrap();
        let s = FieldState::from_fns(
            &g,
            |r| amp_u * gauss(r / width),
            |r| amp_v * gauss(r / width),
            |r| amp_w * gauss(r),
        );
        let opts = SchemeOptions {
            flux: if upwind { FluxAverage::Upwind } else { FluxAverage::Arithmetic },
            tol_pos: None,
        };
        let next = step(&s, &ModelParams::default(), &g, dt, &opts).unwrap();
        for (a, b) in [(&s.u, &next.u), (&s.v, &next.v)] {
            let (m0, m1) = (g.integrate(a).unwrap(), g.integrate(b).unwrap());
            prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly(
        u in prop::collection::vec(-1e300f64..1e300, 33),
        v in prop::collection::vec(0.0f64..1.0, 33),
        w in prop::collection::vec(-1.0f64..1.0, 33),
        t in 0.0f64..10.0,
        geometric in any::<bool>(),
    ) {
        let layout = if geometric { Layout::Geometric { ratio: 0.93 } } else { Layout::Uniform };
        let g = RadialGrid::build(2.0, 32, layout, 5).unwrap();
        let p = ModelParams::new(1.5, 0.25, 3.0, 0.1, 7.0, 5).unwrap();
        let s = FieldState { t, u, v, w };
        let ck = Checkpoint::new(&p, &g, &s).unwrap();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        prop_assert_eq!(bits(&back.state.u), bits(&s.u));
        prop_assert_eq!(bits(&back.state.v), bits(&s.v));
        prop_assert_eq!(bits(&back.state.w), bits(&s.w));
        prop_assert_eq!(back.state.t.to_bits(), t.to_bits());
        prop_assert_eq!(back.params, p);
        prop_assert_eq!(back.grid().unwrap(), g);
    }
}
