//! Neumann defect, center of mass, and the reduction of the overdetermined
//! problem to an affine defect b − ⟨a, ·⟩.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dirichlet::{
    solve_dirichlet_volume, DirichletOptions, DirichletProblem, DirichletSolution, Drift, VolumeMode,
};
use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::geometry::chart::{sym_inner, Point, Vec2};
use crate::geometry::{BoundaryShape, ManifoldChart, NormalGridSpec, NormalMetric};
use crate::modes::{verify_assumption_a, ModeSpectrum};
use crate::nonlinearity::NonlinearitySpec;
use crate::radial::{solve_radial_profile, RadialProfile};
use crate::spectral::PolarGrid;

/// ĝ(∇_ĝ û, ν_ĝ) at the boundary nodes.
#[derive(Clone, Debug, Serialize)]
pub struct NeumannTrace {
    pub theta: Vec<f64>,
    pub values: Vec<f64>,
    pub mean: f64,
    /// modes 1..N_θ/2 − 1 of the trace
    pub zero_mean: TrigSeries,
}

impl NeumannTrace {
    /// max over modes j ≥ 2 of the coefficient magnitude
    pub fn high_mode_max(&self) -> f64 {
        (2..=self.zero_mean.j_max())
            .map(|j| self.zero_mean.cos[j - 1].abs().max(self.zero_mean.sin[j - 1].abs()))
            .fold(0.0, f64::max)
    }
}

pub fn neumann_residual(sol: &DirichletSolution) -> NeumannTrace {
    let op = &sol.operator;
    let g = &op.grid;
    let ur = g.radial_deriv(&sol.u);
    let values: Vec<f64> = (0..g.n_theta)
        .map(|l| {
            let k = g.idx(0, l);
            ur[k] * op.c_rr[k].sqrt()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / g.n_theta as f64;
    let zero_mean = TrigSeries::from_samples(&values, g.n_theta / 2 - 1);
    NeumannTrace {
        theta: g.theta.clone(),
        values,
        mean,
        zero_mean,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CenterDefect {
    /// ε⁻¹ · (frame coordinates of log_p(center))
    pub a: [f64; 2],
    /// the linearized value (1/π)∫ v̄(θ)(cos θ, sin θ) dθ
    pub first_order: [f64; 2],
    pub iterations: usize,
}

/// Center of mass of the boundary curve, in rescaled normal coordinates.
pub fn center_defect(nm: &NormalMetric, shape: &BoundaryShape) -> Result<CenterDefect> {
    let grid = &nm.grid;
    let nt = grid.n_theta;
    let mut pts = Vec::with_capacity(nt);
    let mut xs = Vec::with_capacity(nt);
    let mut w = Vec::with_capacity(nt);
    for l in 0..nt {
        let th = grid.theta[l];
        let rho = shape.radius(th);
        let drho = shape.vbar.eval_deriv(th);
        let (s, c) = th.sin_cos();
        let sample = nm.eval(l, rho)?;
        let tangent = [drho * c - rho * s, drho * s + rho * c];
        w.push(sym_inner(&sample.g, tangent, tangent).sqrt());
        xs.push([rho * c, rho * s]);
        pts.push(sample.pos);
    }
    let wsum: f64 = w.iter().sum();
    let first_order = [shape.vbar.cos.first().copied().unwrap_or(0.0), shape.vbar.sin.first().copied().unwrap_or(0.0)];
    if nm.epsilon == 0.0 || nm.chart.is_flat() {
        let mut a = [0.0; 2];
        for (x, wi) in xs.iter().zip(&w) {
            a[0] += wi * x[0] / wsum;
            a[1] += wi * x[1] / wsum;
        }
        return Ok(CenterDefect { a, first_order, iterations: 0 });
    }
    let chart = &nm.chart;
    let eps = nm.epsilon;
    let mut q = nm.p;
    let mut iterations = 0;
    loop {
        let mut grad = [0.0; 2];
        for (pt, wi) in pts.iter().zip(&w) {
            let v = chart.log_map(q, *pt)?;
            grad[0] += wi * v[0] / wsum;
            grad[1] += wi * v[1] / wsum;
        }
        let step = chart.norm(q, grad);
        if step <= 1e-14 * eps {
            break;
        }
        if iterations >= 60 || !step.is_finite() {
            return Err(Error::CenterUndefined(format!(
                "Karcher iteration stalled with step {step:.3e}"
            )));
        }
        q = chart.exp_map(q, grad)?;
        iterations += 1;
    }
    let v = chart.log_map(nm.p, q)?;
    let c = frame_coords(&nm.frame, v);
    Ok(CenterDefect {
        a: [c[0] / eps, c[1] / eps],
        first_order,
        iterations,
    })
}

fn frame_coords(frame: &[Vec2; 2], v: Vec2) -> [f64; 2] {
    let [e1, e2] = frame;
    let det = e1[0] * e2[1] - e2[0] * e1[1];
    [(v[0] * e2[1] - v[1] * e2[0]) / det, (e1[0] * v[1] - e1[1] * v[0]) / det]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremalConfig {
    pub n_r: usize,
    pub n_theta: usize,
    pub j_max: usize,
    pub lambda_bar: f64,
    /// radial collocation size for the frozen profile
    pub profile_n_r: usize,
    pub v_max: f64,
    pub jacobi_steps_per_unit: usize,
    /// modes ≥ 2 of the trace must fall below trace_tol·|c1|
    pub trace_tol: f64,
    pub center_tol: f64,
    pub max_iter: usize,
    pub dirichlet: DirichletOptions,
}

impl Default for ExtremalConfig {
    fn default() -> Self {
        ExtremalConfig {
            n_r: 48,
            n_theta: 64,
            j_max: 16,
            lambda_bar: 1.0,
            profile_n_r: 48,
            v_max: 0.5,
            jacobi_steps_per_unit: 64,
            trace_tol: 1e-8,
            center_tol: 1e-10,
            max_iter: 40,
            dirichlet: DirichletOptions::default(),
        }
    }
}

impl ExtremalConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_theta.is_multiple_of(2) || self.n_theta < 8 {
            return Err(Error::InvalidInput("n_theta must be even and >= 8".into()));
        }
        if self.j_max < 2 || self.j_max + 2 > self.n_theta / 2 {
            return Err(Error::InvalidInput(format!(
                "j_max = {} must lie in [2, n_theta/2 - 2]",
                self.j_max
            )));
        }
        if self.n_r < 4 {
            return Err(Error::InvalidInput("n_r must be >= 4".into()));
        }
        for (name, v) in [
            ("trace_tol", self.trace_tol),
            ("center_tol", self.center_tol),
            ("dirichlet.tol", self.dirichlet.tol),
            ("lambda_bar", self.lambda_bar),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    pub fn normal_spec(&self) -> NormalGridSpec {
        NormalGridSpec {
            n_r: self.n_r,
            n_theta: self.n_theta,
            v_max: self.v_max,
            steps_per_unit: self.jacobi_steps_per_unit,
        }
    }
}

/// The data shared by every solve at a fixed ε.
#[derive(Clone)]
pub struct ExtremalContext {
    pub chart: ManifoldChart,
    pub spec: NonlinearitySpec,
    pub epsilon: f64,
    pub drift: Option<Drift>,
    pub config: ExtremalConfig,
}

/// Per-point setup: frozen profile, mode spectrum, normal metric, grid.
pub struct PointSetup {
    pub p: Point,
    pub profile: RadialProfile,
    pub spectrum: ModeSpectrum,
    pub nm: NormalMetric,
    pub grid: PolarGrid,
}

impl ExtremalContext {
    pub fn setup(&self, p: Point) -> Result<PointSetup> {
        let c = &self.config;
        c.validate()?;
        let profile = solve_radial_profile(&self.spec, p, 2, c.lambda_bar, c.profile_n_r, None)?;
        let spectrum = verify_assumption_a(&profile, c.j_max)?;
        if !spectrum.verdict.all_pass() {
            return Err(Error::Precondition(format!(
                "assumption A fails at p = {:?}; offending modes {:?}",
                p, spectrum.verdict.offending_modes
            )));
        }
        let nm = NormalMetric::new(&self.chart, p, self.epsilon, c.normal_spec())?;
        let grid = PolarGrid::new(c.n_r, c.n_theta, 1.0);
        Ok(PointSetup { p, profile, spectrum, nm, grid })
    }
}

impl PointSetup {
    pub fn problem<'a>(&'a self, ctx: &'a ExtremalContext) -> DirichletProblem<'a> {
        DirichletProblem {
            nm: &self.nm,
            grid: &self.grid,
            spec: &ctx.spec,
            lambda_bar: ctx.config.lambda_bar,
            drift: ctx.drift.clone(),
            profile: Some(&self.profile),
            options: ctx.config.dirichlet,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtremalSolution {
    pub p: Point,
    pub epsilon: f64,
    pub shape: BoundaryShape,
    pub dirichlet: DirichletSolution,
    pub trace: NeumannTrace,
    /// defect vector in orthonormal frame components
    pub a_frame: [f64; 2],
    /// defect vector in chart components
    pub a: [f64; 2],
    pub b: f64,
    pub center_defect: [f64; 2],
    /// |A − first-order surrogate|
    pub center_first_order_gap: f64,
    /// max over modes 2..=J_max of the trace coefficients
    pub mode_residual: f64,
    /// max over all modes ≥ 2 (including those beyond J_max)
    pub trace_high_modes: f64,
    /// |Π₁ trace + ⟨a, ·⟩|
    pub v1_residual: f64,
    /// max over boundary nodes of |trace − (b − ⟨a, ·⟩)|
    pub affine_residual: f64,
    pub iterations: usize,
    pub jacobian_refreshes: usize,
    pub near_degenerate_modes: Vec<usize>,
    pub c1: f64,
    pub lambda_bar: f64,
    pub physical_lambda: f64,
    pub energy: f64,
    /// boundary curve in chart coordinates
    pub boundary: Vec<Point>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtremalSummary {
    pub p: Point,
    pub epsilon: f64,
    pub v0: f64,
    pub vbar: TrigSeries,
    pub a: [f64; 2],
    pub a_frame: [f64; 2],
    pub b: f64,
    pub energy: f64,
    pub lambda_bar: f64,
    pub physical_lambda: f64,
    pub center_defect: [f64; 2],
    pub center_first_order_gap: f64,
    pub mode_residual: f64,
    pub trace_high_modes: f64,
    pub v1_residual: f64,
    pub affine_residual: f64,
    pub dirichlet_residual: f64,
    pub volume_defect: f64,
    pub iterations: usize,
    pub jacobian_refreshes: usize,
    pub near_degenerate_modes: Vec<usize>,
}

impl ExtremalSolution {
    pub fn summary(&self) -> ExtremalSummary {
        ExtremalSummary {
            p: self.p,
            epsilon: self.epsilon,
            v0: self.shape.v0,
            vbar: self.shape.vbar.clone(),
            a: self.a,
            a_frame: self.a_frame,
            b: self.b,
            energy: self.energy,
            lambda_bar: self.lambda_bar,
            physical_lambda: self.physical_lambda,
            center_defect: self.center_defect,
            center_first_order_gap: self.center_first_order_gap,
            mode_residual: self.mode_residual,
            trace_high_modes: self.trace_high_modes,
            v1_residual: self.v1_residual,
            affine_residual: self.affine_residual,
            dirichlet_residual: self.dirichlet.residual_norm,
            volume_defect: self.dirichlet.volume - PI,
            iterations: self.iterations,
            jacobian_refreshes: self.jacobian_refreshes,
            near_degenerate_modes: self.near_degenerate_modes.clone(),
        }
    }

    pub fn a_norm(&self) -> f64 {
        self.a_frame[0].hypot(self.a_frame[1])
    }
}

/// ∫_{B₁} (½|∇û|²_ĝ − λ̄ F(Y, û)) √det ĝ dy
pub fn energy(sol: &DirichletSolution, spec: &NonlinearitySpec) -> f64 {
    let gs = sol.operator.grad_sq(&sol.u);
    let pm = &sol.metric;
    let dens: Vec<f64> = (0..sol.u.len())
        .map(|k| {
            (0.5 * gs[k] - sol.lambda_bar * spec.antiderivative(pm.samples[k].pos, sol.u[k]))
                * pm.sqrt_det[k]
        })
        .collect();
    pm.grid.integrate(&dens)
}

struct Eval {
    sol: DirichletSolution,
    trace: NeumannTrace,
    center: CenterDefect,
    residual: DVector<f64>,
}

fn evaluate(
    setup: &PointSetup,
    problem: &DirichletProblem,
    z: &DVector<f64>,
    warm: Option<&DirichletSolution>,
) -> Result<Eval> {
    let vbar = TrigSeries::from_vec(z.as_slice());
    let sol = solve_dirichlet_volume(problem, &vbar, VolumeMode::Constrained, warm)?;
    let trace = neumann_residual(&sol);
    let center = center_defect(&setup.nm, &sol.shape)?;
    let jm = vbar.j_max();
    let mut residual = DVector::zeros(2 * jm);
    residual[0] = center.a[0];
    residual[1] = center.a[1];
    for j in 2..=jm {
        residual[2 * (j - 1)] = trace.zero_mean.cos[j - 1];
        residual[2 * (j - 1) + 1] = trace.zero_mean.sin[j - 1];
    }
    Ok(Eval { sol, trace, center, residual })
}

fn converged(e: &Eval, c1: f64, cfg: &ExtremalConfig) -> bool {
    let modes = e.residual.rows(2, e.residual.len() - 2).amax();
    let center = e.center.a[0].hypot(e.center.a[1]);
    modes <= cfg.trace_tol * c1.abs() && center <= cfg.center_tol
}

fn fd_column(
    setup: &PointSetup,
    problem: &DirichletProblem,
    z: &DVector<f64>,
    base: &Eval,
    col: usize,
) -> Result<DVector<f64>> {
    let h = 1e-6;
    let mut zp = z.clone();
    zp[col] += h;
    let e = evaluate(setup, problem, &zp, Some(&base.sol))?;
    Ok((e.residual - &base.residual) / h)
}

pub fn solve_extremal(
    ctx: &ExtremalContext,
    p: Point,
    init: Option<&ExtremalSolution>,
) -> Result<ExtremalSolution> {
    let setup = ctx.setup(p)?;
    solve_extremal_with(ctx, &setup, init)
}

pub fn solve_extremal_with(
    ctx: &ExtremalContext,
    setup: &PointSetup,
    init: Option<&ExtremalSolution>,
) -> Result<ExtremalSolution> {
    let cfg = &ctx.config;
    let jm = cfg.j_max;
    let problem = setup.problem(ctx);
    let c1 = setup.profile.c1;
    let spectrum = &setup.spectrum;

    let mut z = DVector::zeros(2 * jm);
    if let Some(s) = init {
        let v = s.shape.vbar.truncated(jm).to_vec();
        z.copy_from_slice(&v);
    }
    let warm = init
        .map(|s| &s.dirichlet)
        .filter(|d| d.u.len() == setup.grid.len());
    let mut cur = evaluate(setup, &problem, &z, warm)?;

    let alpha2 = spectrum.alpha(2);
    let near_degenerate: Vec<usize> = (2..=jm)
        .filter(|&j| spectrum.alpha(j).abs() < 1e-4 * alpha2.abs())
        .collect();
    let mut jac = DMatrix::<f64>::identity(2 * jm, 2 * jm);
    for j in 2..=jm {
        jac[(2 * (j - 1), 2 * (j - 1))] = spectrum.alpha(j);
        jac[(2 * (j - 1) + 1, 2 * (j - 1) + 1)] = spectrum.alpha(j);
    }
    let mut refreshes = 0;
    if !near_degenerate.is_empty() && !converged(&cur, c1, cfg) {
        for &j in &near_degenerate {
            for col in [2 * (j - 1), 2 * (j - 1) + 1] {
                let c = fd_column(setup, &problem, &z, &cur, col)?;
                jac.set_column(col, &c);
            }
        }
    }

    let mut history = vec![cur.residual.amax()];
    let mut iterations = 0;
    while !converged(&cur, c1, cfg) {
        if iterations >= cfg.max_iter {
            return Err(Error::NoConvergence {
                what: "extremal quasi-Newton".into(),
                iterations,
                residual: cur.residual.amax(),
                history,
            });
        }
        iterations += 1;
        let step = jac
            .clone()
            .lu()
            .solve(&(-&cur.residual))
            .ok_or_else(|| Error::Setup("singular extremal Jacobian".into()))?;
        let z_new = &z + &step;
        let next = evaluate(setup, &problem, &z_new, Some(&cur.sol))?;
        let dr = &next.residual - &cur.residual;
        let ss = step.dot(&step);
        if ss > 0.0 {
            let corr = (dr - &jac * &step) / ss;
            jac += corr * step.transpose();
        }
        z = z_new;
        cur = next;
        history.push(cur.residual.amax());
        let k = history.len();
        let stalled = k >= 4 && history[k - 1] > 0.5 * history[k - 4];
        if stalled && !converged(&cur, c1, cfg) {
            if refreshes >= 2 {
                return Err(Error::NoConvergence {
                    what: "extremal quasi-Newton (after Jacobian refresh)".into(),
                    iterations,
                    residual: cur.residual.amax(),
                    history,
                });
            }
            refreshes += 1;
            for col in 0..2 * jm {
                let c = fd_column(setup, &problem, &z, &cur, col)?;
                jac.set_column(col, &c);
            }
            history.push(cur.residual.amax());
        }
    }

    let Eval { sol, trace, center, residual } = cur;
    let a_frame = [-trace.zero_mean.cos[0], -trace.zero_mean.sin[0]];
    let [e1, e2] = setup.nm.frame;
    let a = [
        a_frame[0] * e1[0] + a_frame[1] * e2[0],
        a_frame[0] * e1[1] + a_frame[1] * e2[1],
    ];
    let b = trace.mean;
    let affine_residual = trace
        .theta
        .iter()
        .zip(&trace.values)
        .map(|(t, v)| (v - (b - a_frame[0] * t.cos() - a_frame[1] * t.sin())).abs())
        .fold(0.0, f64::max);
    let v1_residual = (trace.zero_mean.cos[0] + a_frame[0]).hypot(trace.zero_mean.sin[0] + a_frame[1]);
    let boundary = (0..setup.grid.n_theta)
        .map(|l| sol.metric.samples[setup.grid.idx(0, l)].pos)
        .collect();
    let e = energy(&sol, &ctx.spec);
    Ok(ExtremalSolution {
        p: setup.p,
        epsilon: ctx.epsilon,
        shape: sol.shape.clone(),
        a_frame,
        a,
        b,
        center_defect: center.a,
        center_first_order_gap: (center.a[0] - center.first_order[0])
            .hypot(center.a[1] - center.first_order[1]),
        mode_residual: residual.rows(2, residual.len() - 2).amax(),
        trace_high_modes: trace.high_mode_max(),
        v1_residual,
        affine_residual,
        iterations,
        jacobian_refreshes: refreshes,
        near_degenerate_modes: near_degenerate,
        c1,
        lambda_bar: cfg.lambda_bar,
        physical_lambda: setup.profile.physical_lambda(ctx.epsilon),
        energy: e,
        boundary,
        trace,
        dirichlet: sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn small() -> ExtremalConfig {
        ExtremalConfig {
            n_r: 16,
            n_theta: 32,
            j_max: 8,
            profile_n_r: 24,
            ..Default::default()
        }
    }

    #[test]
    fn flat_trace_and_linearization() {
        let chart = ManifoldChart::standard_torus();
        let nm = NormalMetric::new(&chart, [0.0, 0.0], 0.0, small().normal_spec()).unwrap();
        let grid = PolarGrid::new(16, 32, 1.0);
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
        let s0 = solve_dirichlet_volume(&problem, &TrigSeries::zeros(8), VolumeMode::Constrained, None).unwrap();
        let t0 = neumann_residual(&s0);
        assert!((t0.mean + 0.5).abs() < 1e-12 && t0.zero_mean.max_abs() < 1e-12);
        let s = 1e-4;
        let sol = solve_dirichlet_volume(&problem, &TrigSeries::mode(8, 2, s, 0.0), VolumeMode::Constrained, None).unwrap();
        let t = neumann_residual(&sol);
        assert!((t.zero_mean.cos[1] / s - 0.5).abs() < 1e-2 * 0.5);
        let sol = solve_dirichlet_volume(&problem, &TrigSeries::mode(8, 1, s, 0.0), VolumeMode::Constrained, None).unwrap();
        let t = neumann_residual(&sol);
        assert!(t.zero_mean.max_abs() < 10.0 * s * s);
        let cd = center_defect(&nm, &sol.shape).unwrap();
        assert!((cd.a[0] / s - 1.0).abs() < 1e-3 && cd.a[1].abs() < 1e-15);
        let cd = center_defect(&nm, &BoundaryShape::new(0.0, TrigSeries::mode(8, 2, 1e-3, 0.0))).unwrap();
        assert!(cd.a[0].hypot(cd.a[1]) < 1e-5);
        // energy of the radial solution
        assert!((energy(&s0, &spec) + PI / 16.0).abs() < 1e-12);
    }

    #[test]
    fn flat_torus_is_exact() {
        let ctx = ExtremalContext {
            chart: ManifoldChart::standard_torus(),
            spec: NonlinearitySpec::constant_one(),
            epsilon: 0.1,
            drift: None,
            config: small(),
        };
        let sol = solve_extremal(&ctx, [1.0, 2.0], None).unwrap();
        assert!(sol.shape.vbar.max_abs() <= 1e-9);
        assert!(sol.a_norm() <= 1e-9);
        assert!((sol.b + 0.5).abs() < 1e-10);
    }

    #[test]
    fn sphere_balls_are_extremal() {
        let ctx = ExtremalContext {
            chart: ManifoldChart::round_sphere(1.0),
            spec: NonlinearitySpec::constant_one(),
            epsilon: 0.1,
            drift: None,
            config: small(),
        };
        let t = Instant::now();
        let sol = solve_extremal(&ctx, [0.3, -0.2], None).unwrap();
        assert!(sol.shape.vbar.max_abs() <= 1e-7, "{:?}", sol.shape.vbar);
        assert!(sol.a_norm() <= 1e-7, "{:?}", sol.a_frame);
        eprintln!("sphere extremal {:?}, iters {}", t.elapsed(), sol.iterations);
    }

    #[test]
    fn symmetric_forcing_has_zero_defect_at_fixed_point() {
        let ctx = ExtremalContext {
            chart: ManifoldChart::standard_torus(),
            spec: NonlinearitySpec::periodic_forcing(0.25),
            epsilon: 0.05,
            drift: None,
            config: small(),
        };
        let t = Instant::now();
        let sol = solve_extremal(&ctx, [PI / 2.0, 0.0], None).unwrap();
        assert!(sol.a_norm() < 1e-9, "{:?}", sol.a);
        let off = solve_extremal(&ctx, [1.0, 0.0], Some(&sol)).unwrap();
        assert!(off.a[1].abs() < 1e-10 && off.a[0].abs() > 1e-5, "{:?}", off.a);
        eprintln!("forcing extremal {:?}, iters {} {}", t.elapsed(), sol.iterations, off.iterations);
    }
}
