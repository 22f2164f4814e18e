use criterion::{black_box, criterion_group, criterion_main, Criterion};
use extremal_bench::{conformal_context, forcing_context, small_config, sphere_context};
use extremal_core::extremal::solve_extremal;
use extremal_core::geometry::{NormalGridSpec, NormalMetric};
use extremal_core::landscape::{scan, GridSpec};
use extremal_core::modes::verify_assumption_a;
use extremal_core::radial::solve_radial_profile;
use extremal_core::{ExtremalConfig, ManifoldChart, NonlinearitySpec};

fn radial(c: &mut Criterion) {
    let spec = NonlinearitySpec::affine(1.0, 0.5);
    c.bench_function("radial_profile_n48", |b| {
        b.iter(|| solve_radial_profile(&spec, [0.0, 0.0], 2, black_box(1.0), 48, None).unwrap())
    });
    let prof = solve_radial_profile(&spec, [0.0, 0.0], 2, 1.0, 48, None).unwrap();
    c.bench_function("mode_spectrum_j16", |b| b.iter(|| verify_assumption_a(black_box(&prof), 16).unwrap()));
}

fn geometry(c: &mut Criterion) {
    let chart = ManifoldChart::conformal_torus(0.3, [std::f64::consts::TAU; 2]);
    c.bench_function("normal_metric_jacobi_48x64", |b| {
        b.iter(|| NormalMetric::new(&chart, black_box([0.4, 1.1]), 0.1, NormalGridSpec::default()).unwrap())
    });
}

fn extremal(c: &mut Criterion) {
    let mut g = c.benchmark_group("extremal");
    g.sample_size(10);
    let full = ExtremalConfig::default();
    for (name, ctx) in [
        ("sphere_48x64", sphere_context(full)),
        ("forcing_48x64", forcing_context(full)),
        ("conformal_48x64", conformal_context(full)),
        ("conformal_24x32", conformal_context(small_config())),
    ] {
        g.bench_function(name, |b| b.iter(|| solve_extremal(&ctx, black_box([0.9, 0.4]), None).unwrap()));
    }
    let ctx = forcing_context(small_config());
    g.bench_function("scan_8x2_24x32", |b| {
        b.iter(|| scan(&ctx, &GridSpec { n1: 8, n2: 2, ..Default::default() }).unwrap())
    });
    g.finish();
}

criterion_group!(benches, radial, geometry, extremal);
criterion_main!(benches);
