//! Property tests for the invariants that hold for all inputs.

use std::sync::Arc;

use proptest::prelude::*;

use hanzawa_core::evolution::{solve_parabolic, BoxGrid, ParabolicConfig};
use hanzawa_core::hanzawa::{ConstHeight, GateParams, Hanzawa, HeightFn, WaveHeight};
use hanzawa_core::interface_geometry::InterfaceGeometry;
use hanzawa_core::jet::Jet;
use hanzawa_core::norms::{self, NormSpec, SampledFunction};
use hanzawa_core::surface::rng;
use hanzawa_core::{ReferenceSurface, V3};

const SPECS: [&str; 8] = ["L:2", "L:3", "C:1", "C:2", "W:0.5:2", "W:1.5:2", "S1:2", "C1:2"];

fn grid_fn(coef: &[f64]) -> SampledFunction {
    SampledFunction::from_fn(&[10, 10], &[0.0; 2], &[1.0; 2], &[false; 2], |x| {
        coef.iter().enumerate().map(|(k, c)| c * ((k as f64 + 1.0) * x[0] + (k % 3) as f64 * x[1] + k as f64).sin()).sum()
    })
    .unwrap()
}

fn coefs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn norms_are_homogeneous(c in coefs(), lam in -5.0f64..5.0) {
        let f = grid_fn(&c);
        for s in SPECS {
            let spec: NormSpec = s.parse().unwrap();
            let a = norms::sobolev_norm(&f.scaled(lam), &spec).unwrap();
            let b = lam.abs() * norms::sobolev_norm(&f, &spec).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1e-300), "{s}: {a} vs {b}");
        }
    }

    #[test]
    fn norms_satisfy_triangle_inequality(c in coefs(), d in coefs()) {
        let (f, g) = (grid_fn(&c), grid_fn(&d));
        let fg = f.add(&g).unwrap();
        for s in SPECS {
            let spec: NormSpec = s.parse().unwrap();
            let lhs = norms::sobolev_norm(&fg, &spec).unwrap();
            let rhs = norms::sobolev_norm(&f, &spec).unwrap() + norms::sobolev_norm(&g, &spec).unwrap();
            prop_assert!(lhs <= rhs + 1e-10, "{s}: {lhs} > {rhs}");
        }
    }

    #[test]
    fn gagliardo_ignores_constants(c in coefs(), k in -10.0f64..10.0, s in 0.1f64..0.9) {
        let f = grid_fn(&c);
        let shifted = f.with_values(f.values.iter().map(|v| v + k).collect());
        let a = norms::gagliardo_seminorm(&f, s, 2.0).unwrap();
        let b = norms::gagliardo_seminorm(&shifted, s, 2.0).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn lq_bounded_by_sup_on_unit_square(c in coefs(), q in 1.0f64..8.0) {
        let f = grid_fn(&c);
        prop_assert!(norms::lq_norm(&f, q).unwrap() <= norms::sup_norm(&f) * (1.0 + 1e-12));
    }

    #[test]
    fn jet_product_rule(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
        let x = Jet::vars([a, b, c]);
        let f = x[0].sin() * x[1].exp();
        let g = x[2] * x[0] + 1.5;
        let p = f * g;
        for i in 0..3 {
            prop_assert!((p.g[i] - (f.g[i] * g.v + f.v * g.g[i])).abs() <= 1e-12 * (1.0 + p.g[i].abs()));
            for j in 0..3 {
                let expect = f.h[i][j] * g.v + f.g[i] * g.g[j] + f.g[j] * g.g[i] + f.v * g.h[i][j];
                prop_assert!((p.h[i][j] - expect).abs() <= 1e-11 * (1.0 + expect.abs()));
                prop_assert_eq!(p.h[i][j], p.h[j][i]);
            }
        }
    }

    #[test]
    fn projection_round_trip(u in 0.05f64..0.95, v in 0.0f64..1.0, lam in -0.9f64..0.9, which in 0usize..3) {
        let s = match which {
            0 => ReferenceSurface::sphere(1.0, 12, 24),
            1 => ReferenceSurface::torus(2.0, 0.5, 12, 24),
            _ => ReferenceSurface::ellipsoid(1.2, 1.0, 0.9, 12, 24),
        }
        .unwrap();
        let p = [u * std::f64::consts::PI, v * 2.0 * std::f64::consts::PI];
        let x = s.point(p) + s.normal(p) * (lam * s.rho0);
        let pr = s.project(x).unwrap();
        prop_assert!((pr.point + pr.normal * pr.dist - x).norm() <= 1e-9);
        prop_assert!((pr.dist - lam * s.rho0).abs() <= 1e-9);
    }

    #[test]
    fn concentric_sphere_curvature(r in 0.5f64..3.0, frac in -0.25f64..0.25) {
        let s = ReferenceSurface::sphere(r, 10, 20).unwrap();
        let c = frac * r;
        let ig = InterfaceGeometry::new(&s, &vec![c; s.grid.len()], 0.3).unwrap();
        for h in &ig.h_gamma {
            prop_assert!((h + 2.0 / (r + c)).abs() <= 1e-9 * 2.0 / (r + c));
        }
    }

    #[test]
    fn hanzawa_round_trip_and_symmetry(seed in 0u64..1000, frac in 0.0f64..0.9) {
        let s = Arc::new(ReferenceSurface::torus(2.0, 0.5, 16, 32).unwrap());
        let mut g = rng(seed);
        let h: Arc<dyn HeightFn> = Arc::new(WaveHeight::random(&mut g, [0.0; 3], 0.0, 0.03, 3, true));
        let hz = Hanzawa::new(s.clone(), h, 0.1, GateParams::default()).unwrap();
        let x = s.random_tube_point(&mut g, frac);
        let y = hz.hanzawa_map(x);
        prop_assert!((hz.hanzawa_inverse(y).unwrap() - x).norm() <= 1e-9);
        let m4 = hz.m4(x).unwrap();
        prop_assert!((m4 - m4.transpose()).abs().max() <= 1e-10);
    }

    #[test]
    fn zero_height_is_identity(seed in 0u64..1000) {
        let s = Arc::new(ReferenceSurface::sphere(1.0, 12, 24).unwrap());
        let hz = Hanzawa::new(s.clone(), Arc::new(ConstHeight { c: 0.0, rate: 0.0 }), 0.0, GateParams::default()).unwrap();
        let x = s.random_tube_point(&mut rng(seed), 0.95);
        prop_assert_eq!(hz.hanzawa_map(x), x);
        prop_assert!(hz.m1(x).unwrap().abs().max() <= 1e-12);
    }

    #[test]
    fn parabolic_max_norm_nonincreasing(seed in 0u64..1000, dt in 1e-3f64..1.0) {
        use rand::Rng;
        let grid = BoxGrid::unit(8).unwrap();
        let mut g = rng(seed);
        let b0: Vec<V3> = (0..grid.len_nodes())
            .map(|m| if grid.is_boundary(m) { V3::zeros() } else { V3::new(g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0), g.gen_range(-1.0..1.0)) })
            .collect();
        let tr = solve_parabolic(&grid, &b0, None, &ParabolicConfig::new(0.5, dt, 4)).unwrap();
        for w in tr.states.windows(2) {
            prop_assert!(grid.sup(&w[1]) <= grid.sup(&w[0]) * (1.0 + 1e-9));
        }
    }
}

#[test]
fn harmonic_poly_is_harmonic() {
    for l in 1..=3 {
        let x = Jet::vars([0.3, -0.7, 0.5]);
        let y = hanzawa_core::hanzawa::HarmonicHeight::poly(l, &x);
        let lap: f64 = (0..3).map(|i| y.h[i][i]).sum();
        assert!(lap.abs() < 1e-12, "l={l}: {lap}");
    }
}
