mod common;

use common::{gauss, sup_diff, uniform};
use ks_blowup::operators::chemotaxis_balance;
use ks_blowup::{
    build_cutoff, chemotaxis_divergence, radial_gradient, radial_laplacian, Error, FluxAverage, Layout,
    RadialGrid,
};
use proptest::prelude::*;

fn interior_error(grid: &RadialGrid, got: &[f64], exact: impl Fn(f64) -> f64, r_cut: f64) -> f64 {
    grid.nodes()
        .iter()
        .zip(got)
        .filter(|(r, _)| **r <= r_cut)
        .map(|(r, x)| (x - exact(*r)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn constants_have_no_gradient_or_laplacian() {
    let g = uniform(5.0, 100);
    let c = vec![3.7; g.len()];
    assert!(radial_gradient(&c, &g).iter().all(|x| x.abs() < 1e-10));
    assert!(radial_laplacian(&c, &g).iter().all(|x| x.abs() < 1e-10));
}

#[test]
fn gradient_of_square_is_exact_inside() {
    for layout in [Layout::Uniform, Layout::Geometric { ratio: 0.99 }] {
        let g = RadialGrid::build(3.0, 200, layout, 3).unwrap();
        let d = radial_gradient(&g.sample(|r| r * r), &g);
        assert_eq!(d[0], 0.0);
        for (r, x) in g.nodes().iter().zip(&d).skip(1) {
            assert!((x - 2.0 * r).abs() < 1e-9 * (1.0 + r), "r = {r}: {x}");
        }
    }
}

#[test]
fn gaussian_gradient_is_second_order() {
    let exact = |r: f64| -2.0 * r * gauss(r);
    let err = |m| {
        let g = uniform(8.0, m);
        interior_error(&g, &radial_gradient(&g.sample(gauss), &g), exact, 8.0)
    };
    let (coarse, fine) = (err(400), err(1600));
    assert!(fine < 1e-4, "{fine}");
    assert!(coarse / fine > 12.0, "refinement ratio {}", coarse / fine);
}

#[test]
fn laplacian_of_square_is_two_n() {
    for dim in [3, 4, 7] {
        for layout in [Layout::Uniform, Layout::Geometric { ratio: 0.97 }] {
            let g = RadialGrid::build(3.0, 128, layout, dim).unwrap();
            let l = radial_laplacian(&g.sample(|r| r * r), &g);
            for x in &l[..g.cells()] {
                assert!((x - 2.0 * dim as f64).abs() < 1e-9, "N = {dim}: {x}");
            }
        }
    }
}

#[test]
fn gaussian_laplacian() {
    let exact = |r: f64| (4.0 * r * r - 6.0) * gauss(r);
    let err = |m| {
        let g = uniform(8.0, m);
        let l = radial_laplacian(&g.sample(gauss), &g);
        (interior_error(&g, &l, exact, 6.0), l[0])
    };
    let (coarse, _) = err(400);
    let (fine, origin) = err(1600);
    assert!((origin + 6.0).abs() < 1e-3, "origin value {origin}");
    assert!(fine < 1e-3, "{fine}");
    assert!(coarse / fine > 12.0, "refinement ratio {}", coarse / fine);
}

#[test]
fn divergence_with_unit_density_is_the_laplacian() {
    let g = uniform(6.0, 300);
    let w = g.sample(|r| (1.0 + r * r).recip());
    let one = vec![1.0; g.len()];
    let div = chemotaxis_divergence(&one, &w, &g, FluxAverage::Arithmetic);
    assert!(sup_diff(&div, &radial_laplacian(&w, &g)) < 1e-12);
}

#[test]
fn constant_signal_gives_no_flux() {
    let g = uniform(6.0, 300);
    let u = g.sample(gauss);
    let w = vec![2.0; g.len()];
    for avg in [FluxAverage::Arithmetic, FluxAverage::Upwind] {
        assert!(chemotaxis_divergence(&u, &w, &g, avg).iter().all(|x| *x == 0.0));
    }
}

#[test]
fn gaussian_divergence_matches_symbolic_expansion() {
    // u_r w_r + u Δw with u = w = e^{−r²}
    let exact = |r: f64| (8.0 * r * r - 6.0) * (-2.0 * r * r).exp();
    let err = |m| {
        let g = uniform(8.0, m);
        let f = g.sample(gauss);
        interior_error(&g, &chemotaxis_divergence(&f, &f, &g, FluxAverage::Arithmetic), exact, 6.0)
    };
    let (coarse, fine) = (err(400), err(1600));
    assert!(fine < 1e-3, "{fine}");
    assert!(coarse / fine > 12.0, "refinement ratio {}", coarse / fine);
}

#[test]
fn cutoff_profile() {
    let g = uniform(10.0, 1000);
    let c = build_cutoff(2.0, &g).unwrap();
    for (r, z) in g.nodes().iter().zip(&c.values) {
        if *r <= 2.0 {
            assert_eq!(*z, 1.0);
        }
        if *r >= 3.0 {
            assert_eq!(*z, 0.0);
        }
        assert!((0.0..=1.0).contains(z));
    }
    assert!(c.values.windows(2).all(|w| w[1] <= w[0]));
    assert!((c.values[250] - 0.5).abs() < 1e-12);
    assert!(c.slope.iter().zip(g.nodes()).all(|(s, r)| *s == 0.0 || (*r > 2.0 && *r < 3.0)));
}

#[test]
fn cutoff_must_fit_in_the_domain() {
    let g = uniform(4.0, 100);
    assert!(matches!(build_cutoff(3.5, &g), Err(Error::Config(_))));
    assert!(matches!(build_cutoff(0.0, &g), Err(Error::Config(_))));
    assert!(build_cutoff(3.0, &g).is_ok());
}

proptest! {
    #[test]
    fn divergence_telescopes_to_zero(
        u in prop::collection::vec(0.0f64..10.0, 65),
        w in prop::collection::vec(-10.0f64..10.0, 65),
        upwind in any::<bool>(),
    ) {
        let g = RadialGrid::build(3.0, 64, Layout::Geometric { ratio: 0.97 }, 3).unwrap();
        let avg = if upwind { FluxAverage::Upwind } else { FluxAverage::Arithmetic };
        let bal = chemotaxis_balance(&u, &w, &g, avg);
        let scale: f64 = bal.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
        prop_assert!(bal.iter().sum::<f64>().abs() <= 1e-13 * scale);
        let div = chemotaxis_divergence(&u, &w, &g, avg);
        prop_assert!(g.integrate(&div).unwrap().abs() <= 1e-12 * scale);
    }

    #[test]
    fn cutoff_is_monotone(radius in 0.1f64..8.9) {
        let g = uniform(10.0, 500);
        let c = build_cutoff(radius, &g).unwrap();
        prop_assert!(c.values.windows(2).all(|w| w[1] <= w[0]));
    }
}
