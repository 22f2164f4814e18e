//! The acceptance suite, with the independent oracles it checks against.
//! Shared by the integration tests and the `validate` command.

use std::f64::consts::PI;
use std::time::Instant;

use serde::Serialize;

use crate::dirichlet::{solve_dirichlet_volume, DirichletOptions, DirichletProblem, VolumeMode};
use crate::error::Result;
use crate::extremal::{neumann_residual, solve_extremal, ExtremalConfig, ExtremalContext};
use crate::fourier::TrigSeries;
use crate::geometry::{ManifoldChart, NormalGridSpec, NormalMetric};
use crate::landscape::{scan, shape_derivative_check, GridSpec, ShapeDeformation};
use crate::modes::{literal_limit_indicator, verify_assumption_a};
use crate::nonlinearity::NonlinearitySpec;
use crate::radial::{
    continue_branch, first_dirichlet_eigen, solve_harmonic_radial, solve_radial_profile, sphere_density,
    RadialProfile,
};
use crate::spectral::PolarGrid;

pub mod oracle {
    //! Closed forms and reference computations that share no code with the solvers.

    /// φ = (1 − r²)/(2n) for f ≡ 1, λ̄ = 1.
    pub fn constant_profile(n: usize, r: f64) -> f64 {
        (1.0 - r * r) / (2.0 * n as f64)
    }

    /// α_j = (j − 1)/n for f ≡ 1: ψ_j = r^j/(2n)·… gives ψ_j'(1) = j/n, c₂ = −1/n.
    pub fn constant_alpha(n: usize, j: usize) -> f64 {
        (j as f64 - 1.0) / n as f64
    }

    /// First zero of J₀ by bisection on its power series.
    pub fn bessel_j0_first_zero() -> f64 {
        let j0 = |x: f64| {
            let mut term = 1.0;
            let mut s = 1.0;
            for k in 1..80 {
                term *= -(x * x / 4.0) / (k as f64 * k as f64);
                s += term;
            }
            s
        };
        let (mut a, mut b) = (2.0f64, 3.0f64);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if j0(a) * j0(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    /// Geodesic radius (in units of ε) of the ball of area πε² on the unit sphere.
    pub fn sphere_ball_radius(eps: f64) -> f64 {
        (1.0 - eps * eps / 2.0).acos() / eps
    }

    /// Solution of Δ_ĝ û + λ̄ = 0 on the unit disk for the geodesic ball of
    /// radius ερ₀ on the unit sphere: with k = ερ₀,
    /// û(r) = λ̄ρ₀² (2/k²) ln(cos(kr/2)/cos(k/2)).
    pub fn sphere_constant_solution(eps: f64, lambda_bar: f64, r: f64) -> f64 {
        let rho0 = sphere_ball_radius(eps);
        let k = eps * rho0;
        lambda_bar * rho0 * rho0 * 2.0 / (k * k) * ((k * r / 2.0).cos() / (k / 2.0).cos()).ln()
    }

    /// Hadamard value for a uniform unit normal speed on the flat radial
    /// solution of Δu + 1 = 0: −½ c₁² · 2π with c₁ = −1/2.
    pub fn uniform_speed_derivative() -> f64 {
        -0.5 * 0.25 * 2.0 * std::f64::consts::PI
    }

    /// Boundary center of mass of the circle r = 1 + s cos θ (flat), first
    /// order: (1/π)∫ s cos θ (cos θ, sin θ) dθ = (s, 0).
    pub fn mode_one_center(s: f64) -> [f64; 2] {
        [s, 0.0]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {} ({:.2}s / {:.0}s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.budget_seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(usize, &str, f64); 11] = [
    (1, "closed-form profile", 1.0),
    (2, "closed-form H-spectrum", 1.0),
    (3, "alpha_1 = 0 universality", 10.0),
    (4, "linearization identity", 30.0),
    (5, "first-order volume neutrality", 10.0),
    (6, "shape-derivative identity", 30.0),
    (7, "flat-torus exactness", 60.0),
    (8, "harmonic-space rigidity", 120.0),
    (9, "symmetry-located critical points", 600.0),
    (10, "bifurcation-branch signs", 60.0),
    (11, "literal kernel limit at the center", 5.0),
];

pub fn run(id: usize) -> CriterionReport {
    let (_, name, budget) = CRITERIA[id - 1];
    let t = Instant::now();
    let outcome = match id {
        1 => c1_profile(),
        2 => c2_spectrum(),
        3 => c3_alpha1(),
        4 => c4_linearization(),
        5 => c5_volume(),
        6 => c6_shape_derivative(),
        7 => c7_flat_torus(),
        8 => c8_sphere(),
        9 => c9_symmetry(),
        10 => c10_branch(),
        11 => c11_literal(),
        _ => unreachable!(),
    };
    let seconds = t.elapsed().as_secs_f64();
    let (ok, detail) = match outcome {
        Ok(v) => v,
        Err(e) => (false, format!("error {}: {e}", e.kind())),
    };
    let in_time = seconds <= budget;
    CriterionReport {
        id,
        name,
        passed: ok && in_time,
        detail: if in_time { detail } else { format!("{detail}; over time budget") },
        seconds,
        budget_seconds: budget,
    }
}

pub fn run_all() -> Vec<CriterionReport> {
    (1..=CRITERIA.len()).map(run).collect()
}

type Outcome = Result<(bool, String)>;

fn constant_profile(n: usize) -> Result<RadialProfile> {
    solve_radial_profile(&NonlinearitySpec::constant_one(), [0.0, 0.0], n, 1.0, 48, None)
}

fn c1_profile() -> Outcome {
    let mut worst = 0.0f64;
    let mut c1_err = 0.0f64;
    for n in [2, 3] {
        let prof = constant_profile(n)?;
        for (r, v) in prof.nodes.r.iter().zip(&prof.phi) {
            worst = worst.max((v - oracle::constant_profile(n, *r)).abs());
        }
        c1_err = c1_err.max((prof.c1 + 1.0 / n as f64).abs());
    }
    Ok((
        worst <= 1e-10 && c1_err <= 1e-10,
        format!("max|phi - (1-r^2)/2n| = {worst:.2e}, |c1 + 1/n| = {c1_err:.2e}"),
    ))
}

fn c2_spectrum() -> Outcome {
    let mut worst = 0.0f64;
    let mut a1 = 0.0f64;
    for n in [2, 3] {
        let spec = verify_assumption_a(&constant_profile(n)?, 16)?;
        for j in 1..=16 {
            worst = worst.max((spec.alpha(j) - oracle::constant_alpha(n, j)).abs());
        }
        a1 = a1.max(spec.alpha(1).abs());
    }
    Ok((worst <= 1e-8, format!("max|alpha_j - (j-1)/n| = {worst:.2e}, |alpha_1| = {a1:.2e}")))
}

fn c3_alpha1() -> Outcome {
    let mut profiles = vec![
        constant_profile(2)?,
        constant_profile(3)?,
        solve_radial_profile(&NonlinearitySpec::affine(1.0, 0.8), [0.0, 0.0], 2, 1.0, 48, None)?,
        solve_radial_profile(&NonlinearitySpec::periodic_forcing(0.25), [1.0, 0.0], 2, 2.0, 48, None)?,
    ];
    let branch = continue_branch(&NonlinearitySpec::linear_quadratic(1.0, -1.0, 0.0), [0.0, 0.0], 2, 0.05, 3, 0.01, 48)?;
    profiles.push(branch.profile(1));
    let mut worst = 0.0f64;
    for prof in &profiles {
        let spec = verify_assumption_a(prof, 4)?;
        worst = worst.max(spec.alpha(1).abs());
    }
    Ok((worst <= 1e-7, format!("max|alpha_1| over {} profiles = {worst:.2e}", profiles.len())))
}

fn flat_problem_parts(eps: f64) -> Result<(NormalMetric, PolarGrid)> {
    let nm = NormalMetric::new(&ManifoldChart::standard_torus(), [0.0, 0.0], eps, NormalGridSpec::default())?;
    let d = NormalGridSpec::default();
    Ok((nm, PolarGrid::new(d.n_r, d.n_theta, 1.0)))
}

fn c4_linearization() -> Outcome {
    let (nm, grid) = flat_problem_parts(0.0)?;
    let spec = NonlinearitySpec::constant_one();
    let profile = constant_profile(2)?;
    let problem = DirichletProblem {
        nm: &nm,
        grid: &grid,
        spec: &spec,
        lambda_bar: 1.0,
        drift: None,
        profile: Some(&profile),
        options: DirichletOptions::default(),
    };
    let spectrum = verify_assumption_a(&profile, 16)?;
    let jm = 16;
    let base = solve_dirichlet_volume(&problem, &TrigSeries::zeros(jm), VolumeMode::Constrained, None)?;
    let f0 = neumann_residual(&base);
    let mut worst_small = 0.0f64;
    let mut min_ratio = f64::INFINITY;
    for j in 2..=6 {
        let w = TrigSeries::mode(jm, j, 1.0, 0.0);
        let (hw, _) = crate::modes::apply_h(&spectrum, &w);
        let mut errs = Vec::new();
        for s in [1e-3, 1e-4] {
            let sol = solve_dirichlet_volume(&problem, &w.scaled(s), VolumeMode::Constrained, Some(&base))?;
            let fs = neumann_residual(&sol);
            // compare the zero-mean parts node by node
            let mut e = 0.0f64;
            for l in 0..grid.n_theta {
                let th = grid.theta[l];
                let dq = ((fs.values[l] - fs.mean) - (f0.values[l] - f0.mean)) / s;
                e = e.max((dq - hw.eval(th)).abs());
            }
            errs.push(e / spectrum.alpha(j).abs());
        }
        worst_small = worst_small.max(errs[1]);
        min_ratio = min_ratio.min(errs[0] / errs[1]);
    }
    Ok((
        worst_small <= 1e-2 && min_ratio >= 5.0,
        format!("max rel. error at s=1e-4: {worst_small:.2e}; min err(1e-3)/err(1e-4) = {min_ratio:.2}"),
    ))
}

fn c5_volume() -> Outcome {
    let (nm, grid) = flat_problem_parts(0.0)?;
    let dirs = [
        TrigSeries::mode(8, 2, 1.0, 0.0),
        TrigSeries::mode(8, 3, 0.0, 1.0),
        TrigSeries::mode(8, 1, 0.5, 0.0).add(&TrigSeries::mode(8, 5, 0.3, -0.4)),
    ];
    let mut worst = 0.0f64;
    for w in &dirs {
        for s in [1e-2, 1e-3] {
            let (v0, _) = crate::dirichlet::solve_volume_constraint(
                &nm,
                &grid,
                &w.scaled(s),
                Default::default(),
                0.0,
                1e-14,
            )?;
            worst = worst.max(v0.abs() / (s * s));
        }
    }
    Ok((worst <= 10.0, format!("max |v0|/s^2 = {worst:.3}")))
}

fn c6_shape_derivative() -> Outcome {
    let (nm, grid) = flat_problem_parts(0.1)?;
    let spec = NonlinearitySpec::constant_one();
    let problem = DirichletProblem {
        nm: &nm,
        grid: &grid,
        spec: &spec,
        lambda_bar: 1.0,
        drift: None,
        profile: None,
        options: DirichletOptions::default(),
    };
    let jm = 8;
    let radial = solve_dirichlet_volume(&problem, &TrigSeries::zeros(jm), VolumeMode::Fixed { v0: 0.0 }, None)?;
    let uni = shape_derivative_check(&problem, &radial, &ShapeDeformation::uniform(1.0, jm), 1e-4)?;
    let target = oracle::uniform_speed_derivative();
    let uni_ok = (uni.analytic - target).abs() <= 0.01 * target.abs()
        && (uni.numeric - target).abs() <= 0.01 * target.abs();
    let radial_c = solve_dirichlet_volume(&problem, &TrigSeries::zeros(jm), VolumeMode::Constrained, None)?;
    let mode2 = ShapeDeformation::volume_preserving(TrigSeries::mode(jm, 2, 1.0, 0.0));
    let at_radial = shape_derivative_check(&problem, &radial_c, &mode2, 1e-4)?;
    // at the radial solution both vanish; the relative check needs a non-radial base
    let base = solve_dirichlet_volume(&problem, &TrigSeries::mode(jm, 2, 0.1, 0.0), VolumeMode::Constrained, None)?;
    let d = shape_derivative_check(&problem, &base, &mode2, 1e-4)?;
    let ok = uni_ok && d.relative_gap() <= 0.01 && at_radial.analytic.abs() < 1e-10 && at_radial.numeric.abs() < 1e-6;
    Ok((
        ok,
        format!(
            "uniform: analytic {:.6} numeric {:.6} (target {:.6}); mode 2 at vbar=0.1cos2θ: analytic {:.6e} numeric {:.6e} (gap {:.2e}); at radial base {:.1e}/{:.1e}",
            uni.analytic, uni.numeric, target, d.analytic, d.numeric, d.relative_gap(), at_radial.analytic, at_radial.numeric
        ),
    ))
}

fn c7_flat_torus() -> Outcome {
    let ctx = ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::constant_one(),
        epsilon: 0.1,
        drift: None,
        config: ExtremalConfig::default(),
    };
    let sol = solve_extremal(&ctx, [1.0, 2.0], None)?;
    let vb = sol.shape.vbar.norm();
    let an = sol.a_norm();
    let b_err = (sol.b - sol.c1).abs();
    let grid = scan(&ctx, &GridSpec { n1: 8, n2: 8, ..Default::default() })?;
    let all = grid.points.iter().all(|p| p.converged);
    let spread = grid.energy_spread();
    let a_max = grid.points.iter().map(|p| p.a_norm).fold(0.0, f64::max);
    Ok((
        vb <= 1e-9 && an <= 1e-9 && b_err <= 1e-9 && all && spread <= 1e-9 && a_max <= 1e-9,
        format!(
            "|vbar| = {vb:.1e}, |a| = {an:.1e}, b = {:.12} (c1 = {:.12}); 8x8 grid: J spread {spread:.1e}, max|a| {a_max:.1e}",
            sol.b, sol.c1
        ),
    ))
}

fn c8_sphere() -> Outcome {
    let eps = 0.1;
    let ctx = ExtremalContext {
        chart: ManifoldChart::round_sphere(1.0),
        spec: NonlinearitySpec::constant_one(),
        epsilon: eps,
        drift: None,
        config: ExtremalConfig::default(),
    };
    let sol = solve_extremal(&ctx, [0.4, -0.3], None)?;
    let vb = sol.shape.vbar.norm();
    let an = sol.a_norm();
    let rho0 = 1.0 + sol.shape.v0;
    let harm = solve_harmonic_radial(&|_| (1.0, 0.0), &sphere_density(eps * rho0, 1.0, 2), 2, rho0 * rho0, 48)?;
    let g = &sol.dirichlet.metric.grid;
    let mut d_harm = 0.0f64;
    let mut d_closed = 0.0f64;
    for i in 0..g.n_r {
        for l in 0..g.n_theta {
            let u = sol.dirichlet.u[g.idx(i, l)];
            d_harm = d_harm.max((u - harm.psi_at(g.r[i])).abs());
            d_closed = d_closed.max((u - oracle::sphere_constant_solution(eps, 1.0, g.r[i])).abs());
        }
    }
    let v0_err = (rho0 - oracle::sphere_ball_radius(eps)).abs();
    Ok((
        vb <= 1e-6 && an <= 1e-6 && d_harm <= 1e-5 && d_closed <= 1e-5,
        format!(
            "|vbar| = {vb:.1e}, |a| = {an:.1e}, max|u - harmonic radial| = {d_harm:.1e}, max|u - closed form| = {d_closed:.1e}, |rho0 - exact| = {v0_err:.1e}"
        ),
    ))
}

fn c9_symmetry() -> Outcome {
    let ctx = ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::periodic_forcing(0.25),
        epsilon: 0.05,
        drift: None,
        config: ExtremalConfig::default(),
    };
    let grid = scan(
        &ctx,
        &GridSpec {
            n1: 16,
            n2: 4,
            refine: true,
            max_refine: 8,
            ..Default::default()
        },
    )?;
    let failed = grid.points.iter().filter(|p| !p.converged).count();
    let a2 = grid.points.iter().map(|p| p.a[1].abs()).fold(0.0, f64::max);
    let mut hits = [false, false];
    let mut worst_loc = 0.0f64;
    let mut worst_const = 0.0f64;
    let mut all_ok = !grid.critical_points.is_empty();
    for c in &grid.critical_points {
        let d1 = (c.p[0] - PI / 2.0).abs();
        let d2 = (c.p[0] - 3.0 * PI / 2.0).abs();
        let d = d1.min(d2);
        worst_loc = worst_loc.max(d);
        if d1 <= 1e-4 {
            hits[0] = true;
        }
        if d2 <= 1e-4 {
            hits[1] = true;
        }
        let tol = 1e-7 * c.b.abs();
        worst_const = worst_const.max(c.neumann_constancy / c.b.abs());
        all_ok &= c.converged && d <= 1e-4 && c.neumann_constancy <= tol;
    }
    Ok((
        failed == 0 && a2 <= 1e-8 && hits[0] && hits[1] && all_ok,
        format!(
            "{} refined points, max |x1 - {{pi/2, 3pi/2}}| = {worst_loc:.1e}, max|a_2| on grid = {a2:.1e}, max Neumann spread/|b| = {worst_const:.1e}",
            grid.critical_points.len()
        ),
    ))
}

fn c10_branch() -> Outcome {
    let j = oracle::bessel_j0_first_zero();
    let (lam1, _) = first_dirichlet_eigen(2, 48)?;
    let mut ok = (lam1 - j * j).abs() <= 1e-6;
    let mut detail = format!("lambda_1 = {lam1:.9} vs j01^2 = {:.9}", j * j);
    for (q, sign) in [(-1.0, 1.0), (1.0, -1.0)] {
        let spec = NonlinearitySpec::linear_quadratic(1.0, q, 0.0);
        let br = continue_branch(&spec, [0.0, 0.0], 2, 0.1, 4, 0.01, 48)?;
        let (dl, dm) = br
            .derivatives_at_origin()
            .ok_or_else(|| crate::error::Error::Setup("branch too short".into()))?;
        let rel = ((-dl * br.c) - dm).abs() / dm.abs();
        let l0 = (br.lambda0 - lam1 / br.c).abs();
        ok &= dl.signum() == sign && rel <= 0.01 && l0 <= 1e-6;
        detail.push_str(&format!(
            "; f = z {} z^2: d_s lambda = {dl:.4e}, relation gap {rel:.1e}, |lambda0 - lambda1/c| = {l0:.1e}",
            if q < 0.0 { "-" } else { "+" }
        ));
    }
    Ok((ok, detail))
}

fn c11_literal() -> Outcome {
    let prof = constant_profile(2)?;
    let mut ok = true;
    let mut vals = Vec::new();
    for j in 2..=6 {
        let v = literal_limit_indicator(&prof, j, 1e-3)?;
        // the r^{-j} coefficient is α_j/(2j) for f ≡ 1, n = 2
        let expect = oracle::constant_alpha(2, j) / (2.0 * j as f64);
        ok &= v > 0.5 * expect && (v - expect).abs() <= 0.05 * expect;
        vals.push(format!("{v:.4}"));
    }
    Ok((ok, format!("r^j|a_j| at r = 1e-3 for j = 2..6: [{}]", vals.join(", "))))
}
