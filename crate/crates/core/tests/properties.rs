use std::f64::consts::TAU;
use extremal_core::dirichlet::{solve_dirichlet_volume, DirichletOptions, DirichletProblem, VolumeMode};
use extremal_core::extremal::{solve_extremal, ExtremalConfig, ExtremalContext};
use extremal_core::fourier::TrigSeries;
use extremal_core::geometry::{pullback_shape_metric, volume, BoundaryShape, ManifoldChart, NormalGridSpec, NormalMetric};
use extremal_core::landscape::{gradient_prediction, isometry_check, scan, GridSpec};
use extremal_core::modes::verify_assumption_a;
use extremal_core::nonlinearity::NonlinearitySpec;
use extremal_core::radial::{continue_branch, solve_radial_profile};
use extremal_core::spectral::PolarGrid;
use proptest::prelude::*;

fn small_config() -> ExtremalConfig {
    ExtremalConfig { n_r: 24, n_theta: 32, j_max: 8, profile_n_r: 32, ..Default::default() }
}

fn charts() -> Vec<ManifoldChart> {
    vec![ManifoldChart::standard_torus(), ManifoldChart::round_sphere(1.0), ManifoldChart::conformal_torus(0.3, [TAU, TAU])]
}

#[test]
fn exp_at_zero_is_identity_and_metrics_are_positive() {
    for chart in charts() {
        for p in chart.sample_points(5) {
            assert_eq!(chart.exp_map(p, [0.0, 0.0]).unwrap(), p);
            chart.check_metric(&[p]).unwrap();
        }
    }
}

#[test]
fn volume_is_lipschitz_in_shape_coefficients() {
    let nm = NormalMetric::new(&ManifoldChart::conformal_torus(0.3, [TAU, TAU]), [0.4, 1.0], 0.2, NormalGridSpec::default()).unwrap();
    let grid = PolarGrid::new(24, 64, 1.0);
    let base = BoundaryShape::new(0.0, TrigSeries::mode(8, 3, 0.05, 0.0));
    let v = volume(&pullback_shape_metric(&nm, &grid, &base).unwrap());
    let mut c = Vec::new();
    for d in [1e-2, 1e-3, 1e-4] {
        let mut sh = base.clone();
        sh.vbar.cos[2] += d;
        let vd = volume(&pullback_shape_metric(&nm, &grid, &sh).unwrap());
        c.push((vd - v).abs() / d);
    }
    assert!(c.iter().all(|x| *x < 1.0), "{c:?}");
    assert!((c[1] - c[2]).abs() <= 0.1 * c[1].max(1e-3), "{c:?}");
}

fn constant_spectrum() -> extremal_core::modes::ModeSpectrum {
    let prof = solve_radial_profile(&NonlinearitySpec::affine(1.0, 0.5), [0.0, 0.0], 2, 1.0, 48, None).unwrap();
    verify_assumption_a(&prof, 16).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn h_is_self_adjoint(a in prop::collection::vec(-1.0f64..1.0, 32), b in prop::collection::vec(-1.0f64..1.0, 32)) {
        let spec = constant_spectrum();
        let mut w = TrigSeries::from_vec(&a);
        let mut v = TrigSeries::from_vec(&b);
        w.cos[0] = 0.0;
        w.sin[0] = 0.0;
        v.cos[0] = 0.0;
        v.sin[0] = 0.0;
        let (hw, _) = extremal_core::modes::apply_h(&spec, &w);
        let (hv, _) = extremal_core::modes::apply_h(&spec, &v);
        let (x, y) = (v.inner(&hw), w.inner(&hv));
        // equal up to summation order
        prop_assert!((x - y).abs() <= 1e-14 * (1.0 + x.abs()));
    }
}

#[test]
fn alpha_grows_linearly() {
    let spec = constant_spectrum();
    for j in 8..=16 {
        let q = spec.alpha(j) / j as f64;
        assert!(q > 0.1 && q < 2.0, "j = {j}: {q}");
    }
}

#[test]
fn branch_profiles_approach_eigenfunction() {
    let br = continue_branch(&NonlinearitySpec::linear_quadratic(1.0, -1.0, 0.0), [0.0, 0.0], 2, 0.05, 4, 0.005, 48).unwrap();
    let smp = &br.samples[0];
    let top = br.phi1.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let err = smp.phi.iter().zip(&br.phi1).map(|(p, e)| (p / smp.s - e).abs()).fold(0.0, f64::max);
    assert!(err <= 0.05 * top, "{err} vs {top}");
}

fn dirichlet_on(chart: &ManifoldChart, eps: f64, p: [f64; 2]) -> (NormalMetric, PolarGrid) {
    let nm = NormalMetric::new(chart, p, eps, NormalGridSpec { n_r: 32, n_theta: 32, ..Default::default() }).unwrap();
    (nm, PolarGrid::new(32, 32, 1.0))
}

#[test]
fn warm_starts_converge_to_the_same_solution() {
    let chart = ManifoldChart::conformal_torus(0.3, [TAU, TAU]);
    let (nm, grid) = dirichlet_on(&chart, 0.2, [0.7, 0.2]);
    let spec = NonlinearitySpec::affine(1.0, 0.5);
    let problem = DirichletProblem {
        nm: &nm,
        grid: &grid,
        spec: &spec,
        lambda_bar: 1.0,
        drift: None,
        profile: None,
        options: DirichletOptions::default(),
    };
    let vbar = TrigSeries::mode(8, 2, 0.05, 0.02);
    let cold = solve_dirichlet_volume(&problem, &vbar, VolumeMode::Constrained, None).unwrap();
    let other = solve_dirichlet_volume(&problem, &vbar.scaled(1.3), VolumeMode::Constrained, None).unwrap();
    let warm = solve_dirichlet_volume(&problem, &vbar, VolumeMode::Constrained, Some(&other)).unwrap();
    assert!((cold.shape.v0 - warm.shape.v0).abs() <= 1e-9);
    let d = cold.u.iter().zip(&warm.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-9, "{d}");
    assert!(cold.residual_norm <= 1e-9);
}

#[test]
fn field_deviates_from_profile_quadratically_in_epsilon() {
    let spec = NonlinearitySpec::constant_one();
    let prof = solve_radial_profile(&spec, [0.0, 0.0], 2, 1.0, 48, None).unwrap();
    let mut errs = Vec::new();
    for chart in [ManifoldChart::round_sphere(1.0), ManifoldChart::conformal_torus(0.3, [TAU, TAU])] {
        for eps in [0.1, 0.05] {
            let (nm, grid) = dirichlet_on(&chart, eps, [0.5, 0.9]);
            let problem = DirichletProblem {
                nm: &nm,
                grid: &grid,
                spec: &spec,
                lambda_bar: 1.0,
                drift: None,
                profile: Some(&prof),
                options: DirichletOptions::default(),
            };
            let sol = solve_dirichlet_volume(&problem, &TrigSeries::zeros(8), VolumeMode::Constrained, None).unwrap();
            let mut e = 0.0f64;
            for i in 0..grid.n_r {
                for l in 0..grid.n_theta {
                    e = e.max((sol.u[grid.idx(i, l)] - prof.phi_at(grid.r[i])).abs());
                }
            }
            errs.push(e / (eps * eps));
        }
    }
    for pair in errs.chunks(2) {
        assert!(pair[1] <= 1.2 * pair[0] && pair[0] < 1.0, "{errs:?}");
    }
}

#[test]
fn affine_trace_reconstruction_and_translation_equivariance() {
    let ctx = ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::constant_one(),
        epsilon: 0.1,
        drift: None,
        config: small_config(),
    };
    let a = solve_extremal(&ctx, [0.3, 0.1], None).unwrap();
    let b = solve_extremal(&ctx, [4.0, 2.5], None).unwrap();
    let d = a.dirichlet.u.iter().zip(&b.dirichlet.u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-9);
    assert!(a.affine_residual <= 1e-8 * a.c1.abs());

    let forced = ExtremalContext { spec: NonlinearitySpec::periodic_forcing(0.25), epsilon: 0.05, ..ctx };
    let s = solve_extremal(&forced, [0.9, 0.0], None).unwrap();
    assert!(s.affine_residual <= 1e-8 * s.c1.abs(), "{}", s.affine_residual);
}

#[test]
fn vbar_vanishes_with_epsilon() {
    let mut norms = Vec::new();
    for eps in [0.05, 0.025] {
        let ctx = ExtremalContext {
            chart: ManifoldChart::conformal_torus(0.3, [TAU, TAU]),
            spec: NonlinearitySpec::constant_one(),
            epsilon: eps,
            drift: None,
            config: small_config(),
        };
        norms.push(solve_extremal(&ctx, [0.8, 0.3], None).unwrap().shape.vbar.norm());
    }
    assert!(norms[0] > 0.0 && norms[0] / norms[1] >= 1.9, "{norms:?}");
}

#[test]
fn energy_gradient_matches_boundary_formula() {
    let ctx = ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::periodic_forcing(0.25),
        epsilon: 0.05,
        drift: None,
        config: small_config(),
    };
    let t0 = 0.6;
    let h = 1e-3;
    let base = solve_extremal(&ctx, [t0, 0.0], None).unwrap();
    let plus = solve_extremal(&ctx, [t0 + h, 0.0], Some(&base)).unwrap();
    let minus = solve_extremal(&ctx, [t0 - h, 0.0], Some(&base)).unwrap();
    let fd = (plus.energy - minus.energy) / (2.0 * h);
    let pred = gradient_prediction(&base, [1.0, 0.0]);
    assert!((fd - pred).abs() <= 0.02 * fd.abs(), "fd {fd} vs prediction {pred}");
}

#[test]
fn landscape_respects_declared_isometries() {
    let ctx = ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::periodic_forcing(0.25),
        epsilon: 0.05,
        drift: None,
        config: small_config(),
    };
    let grid = scan(&ctx, &GridSpec { n1: 8, n2: 2, ..Default::default() }).unwrap();
    let rep = isometry_check(&ctx, &grid);
    assert!(rep.pairs > 0);
    assert!(rep.max_relative_gap <= 1e-7, "{rep:?}");
}

#[test]
fn default_grid_meets_residual_and_volume_targets() {
    for (chart, spec) in [
        (ManifoldChart::round_sphere(1.0), NonlinearitySpec::constant_one()),
        (ManifoldChart::conformal_torus(0.3, [TAU, TAU]), NonlinearitySpec::affine(1.0, 0.5)),
    ] {
        let ctx = ExtremalContext { chart, spec, epsilon: 0.1, drift: None, config: ExtremalConfig::default() };
        let s = solve_extremal(&ctx, [0.5, 0.9], None).unwrap();
        assert!(s.dirichlet.residual_norm <= 1e-9, "{}", s.dirichlet.residual_norm);
        assert!((s.dirichlet.volume - std::f64::consts::PI).abs() <= 1e-9);
        assert!(s.mode_residual <= 1e-8 * s.c1.abs() && s.center_defect.iter().all(|c| c.abs() <= 1e-10));
    }
}

#[test]
fn refinement_moves_off_grid_starts_onto_symmetry_points() {
    let ctx = ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::periodic_forcing(0.25),
        epsilon: 0.05,
        drift: None,
        config: small_config(),
    };
    for (start, target) in [([1.3, 0.2], std::f64::consts::FRAC_PI_2), ([4.9, 1.0], 1.5 * std::f64::consts::PI)] {
        let (cp, _) = extremal_core::landscape::refine_critical_point(&ctx, start).unwrap();
        assert!(cp.converged);
        assert!((cp.p[0] - target).abs() <= 1e-4, "{:?}", cp.p);
        assert!(cp.neumann_constancy <= 1e-7 * cp.b.abs());
        // x₂ is a flat direction of a
        assert_eq!(cp.degenerate_directions.len(), 1);
    }
}
