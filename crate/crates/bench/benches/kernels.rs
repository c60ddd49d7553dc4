use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use hanzawa_core::evolution::{self, solve_parabolic, BoxGrid, EvolutionConfig, ParabolicConfig};
use hanzawa_core::hanzawa::{GateParams, Hanzawa, HeightFn, WaveHeight};
use hanzawa_core::interface_geometry::InterfaceGeometry;
use hanzawa_core::norms::{self, SampledFunction};
use hanzawa_core::surface::rng;
use hanzawa_core::verify;
use hanzawa_core::{ReferenceSurface, V3};

fn geometry(c: &mut Criterion) {
    let ell = ReferenceSurface::ellipsoid(1.2, 1.0, 0.9, 16, 32).unwrap();
    let mut g = rng(1);
    let pts: Vec<V3> = (0..64).map(|_| ell.random_tube_point(&mut g, 0.9)).collect();
    c.bench_function("project_ellipsoid_64", |b| {
        b.iter(|| pts.iter().map(|x| ell.project(*x).unwrap().dist).sum::<f64>())
    });

    let sph = ReferenceSurface::sphere(1.0, 32, 64).unwrap();
    let h: Vec<f64> = sph.nodes().iter().map(|nd| 0.05 * (3.0 * nd.x[0]).sin()).collect();
    c.bench_function("interface_geometry_32x64", |b| b.iter(|| InterfaceGeometry::new(&sph, black_box(&h), 0.3).unwrap()));
}

fn hanzawa(c: &mut Criterion) {
    let s = Arc::new(ReferenceSurface::torus(2.0, 0.5, 16, 32).unwrap());
    let mut g = rng(2);
    let h: Arc<dyn HeightFn> = Arc::new(WaveHeight::random(&mut g, [0.0; 3], 0.0, 0.03, 3, true));
    let hz = Hanzawa::new(s.clone(), h, 0.1, GateParams::default()).unwrap();
    let pts: Vec<V3> = (0..64).map(|_| s.random_tube_point(&mut g, 0.8)).collect();
    c.bench_function("pullback_coeffs_64", |b| b.iter(|| pts.iter().map(|x| hz.coeffs(*x).unwrap().m4[(0, 0)]).sum::<f64>()));
    c.bench_function("hanzawa_inverse_64", |b| {
        b.iter(|| pts.iter().map(|x| hz.hanzawa_inverse(hz.hanzawa_map(*x)).unwrap()[0]).sum::<f64>())
    });
}

fn norm_kernels(c: &mut Criterion) {
    let f = SampledFunction::from_fn(&[257], &[0.0], &[1.0], &[false], |x| x[0]).unwrap();
    c.bench_function("gagliardo_1d_257", |b| b.iter(|| norms::gagliardo_seminorm(black_box(&f), 0.5, 2.0).unwrap()));
    let f2 = SampledFunction::from_fn(&[33, 33], &[0.0; 2], &[1.0; 2], &[false; 2], |x| (3.0 * x[0] + x[1]).sin()).unwrap();
    let spec = "W6:2".parse().unwrap();
    c.bench_function("composite_w6_33x33", |b| b.iter(|| norms::sobolev_norm(black_box(&f2), &spec).unwrap()));
}

fn evolution_kernels(c: &mut Criterion) {
    let grid = BoxGrid::unit(17).unwrap();
    let b0 = grid.sample(|x| V3::repeat((std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin() * (std::f64::consts::PI * x[2]).sin()));
    c.bench_function("parabolic_17_10steps", |b| {
        b.iter_batched(|| b0.clone(), |b0| solve_parabolic(&grid, &b0, None, &ParabolicConfig::new(0.1, 1e-3, 10)).unwrap(), BatchSize::SmallInput)
    });
    let cfg = EvolutionConfig::default();
    let (setup, b0, h0) = verify::probe_inputs(&cfg, 1e-2, 5e-3).unwrap();
    let mut group = c.benchmark_group("probe");
    group.sample_size(10);
    group.bench_function("fixed_point_probe_default", |b| b.iter(|| evolution::fixed_point_probe(&setup, &b0, &h0, &cfg).unwrap()));
    group.finish();
}

criterion_group!(benches, geometry, hanzawa, norm_kernels, evolution_kernels);
criterion_main!(benches);
