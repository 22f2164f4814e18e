//! Energy landscape p ↦ J_ε(p), the shape-derivative identity, and critical
//! points (zeros of the defect field a_ε).

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{solve_dirichlet_volume, DirichletProblem, DirichletSolution, VolumeMode};
use crate::error::{Error, Result};
use crate::extremal::{neumann_residual, solve_extremal, ExtremalContext, ExtremalSolution};
use crate::fourier::TrigSeries;
use crate::geometry::chart::{ChartKind, Isometry, Point};

pub use crate::extremal::energy;

/// A boundary normal speed δρ(θ) = constant + speed(θ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeDeformation {
    pub constant: f64,
    pub speed: TrigSeries,
    /// re-solve v0 from the volume constraint along the family
    pub volume_preserving: bool,
}

impl ShapeDeformation {
    pub fn volume_preserving(speed: TrigSeries) -> Self {
        ShapeDeformation {
            constant: 0.0,
            speed,
            volume_preserving: true,
        }
    }

    pub fn uniform(constant: f64, j_max: usize) -> Self {
        ShapeDeformation {
            constant,
            speed: TrigSeries::zeros(j_max),
            volume_preserving: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ShapeDerivative {
    pub analytic: f64,
    pub numeric: f64,
    /// ∫ ⟨Ξ, ν⟩ dσ of the deformation actually applied
    pub flux: f64,
}

impl ShapeDerivative {
    pub fn relative_gap(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs())
    }
}

/// Hadamard formula −½∫ (∂_ν u)² ⟨Ξ, ν⟩ dσ against a central difference of
/// the energy over re-solved Dirichlet problems at shapes v ± h·δρ.
pub fn shape_derivative_check(
    problem: &DirichletProblem,
    base: &DirichletSolution,
    def: &ShapeDeformation,
    h: f64,
) -> Result<ShapeDerivative> {
    let pm = &base.metric;
    let nt = pm.grid.n_theta;
    let bm = pm.boundary_measure();
    let w: Vec<f64> = pm.grid.theta.iter().map(|t| def.speed.eval(*t)).collect();
    let dv0 = if def.volume_preserving {
        -bm.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / bm.iter().sum::<f64>()
    } else {
        def.constant
    };
    let trace = neumann_residual(base);
    let dtheta = 2.0 * PI / nt as f64;
    let mut analytic = 0.0;
    let mut flux = 0.0;
    for l in 0..nt {
        let speed = dv0 + w[l];
        analytic += -0.5 * trace.values[l].powi(2) * speed * bm[l] * dtheta;
        flux += speed * bm[l] * dtheta;
    }
    let solve_at = |t: f64| -> Result<f64> {
        let vbar = base.shape.vbar.add(&def.speed.scaled(t));
        let mode = if def.volume_preserving {
            VolumeMode::Constrained
        } else {
            VolumeMode::Fixed { v0: base.v0 + t * def.constant }
        };
        let s = solve_dirichlet_volume(problem, &vbar, mode, Some(base)).map_err(|e| {
            Error::Setup(format!("shape derivative check infeasible at t = {t}: {e}"))
        })?;
        Ok(energy(&s, problem.spec))
    };
    let numeric = (solve_at(h)? - solve_at(-h)?) / (2.0 * h);
    Ok(ShapeDerivative { analytic, numeric, flux })
}

/// Prediction of D_p J(w) from the affine trace: −½∫ T² V dθ with V the
/// normal speed of the translated domain, in flat normal-coordinate form.
pub fn gradient_prediction(sol: &ExtremalSolution, w_frame: [f64; 2]) -> f64 {
    let tr = &sol.trace;
    let nt = tr.values.len();
    let shape = &sol.shape;
    let mut s = 0.0;
    for l in 0..nt {
        let th = tr.theta[l];
        let (sn, cs) = th.sin_cos();
        let rho = shape.radius(th);
        let drho = shape.vbar.eval_deriv(th);
        let xp = [drho * cs - rho * sn, drho * sn + rho * cs];
        let flux = (w_frame[0] * xp[1] - w_frame[1] * xp[0]) / sol.epsilon;
        s += -0.5 * tr.values[l].powi(2) * flux;
    }
    s * 2.0 * PI / nt as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    /// lower corner; None uses the chart's natural domain
    pub lower: Option<[f64; 2]>,
    pub upper: Option<[f64; 2]>,
    pub refine: bool,
    pub max_refine: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n1: 8,
            n2: 8,
            lower: None,
            upper: None,
            refine: false,
            max_refine: 8,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LandscapePoint {
    pub i: usize,
    pub j: usize,
    pub p: Point,
    pub energy: f64,
    pub a: [f64; 2],
    pub a_norm: f64,
    pub b: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub iterations: usize,
    /// (ε|a| + |a| + ε)/|b|, the ingredients of the a = 0 argument
    pub epsilon_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CriticalPoint {
    pub p: Point,
    pub a: [f64; 2],
    pub a_norm: f64,
    pub b: f64,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// unit chart directions along which the a-field Jacobian is singular
    pub degenerate_directions: Vec<[f64; 2]>,
    pub singular_values: [f64; 2],
    /// max over boundary nodes of |∂_ν u − b|
    pub neumann_constancy: f64,
    pub lambda_bar: f64,
    pub physical_lambda: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LandscapeGrid {
    pub epsilon: f64,
    pub n1: usize,
    pub n2: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub points: Vec<LandscapePoint>,
    pub candidates: Vec<Point>,
    pub critical_points: Vec<CriticalPoint>,
}

impl LandscapeGrid {
    pub fn at(&self, i: usize, j: usize) -> &LandscapePoint {
        &self.points[j * self.n1 + i]
    }

    pub fn energy_spread(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .filter(|p| p.converged)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.energy), b.max(p.energy)));
        hi - lo
    }
}

fn grid_bounds(ctx: &ExtremalContext, spec: &GridSpec) -> ([f64; 2], [f64; 2], bool) {
    let periodic = ctx.chart.periods().is_some();
    let (lo, hi) = match (&ctx.chart.kind, ctx.chart.periods()) {
        (_, Some(per)) => ([0.0, 0.0], per),
        (ChartKind::RoundSphere { radius }, _) => ([-radius, -radius], [*radius, *radius]),
        _ => ([-1.0, -1.0], [1.0, 1.0]),
    };
    (spec.lower.unwrap_or(lo), spec.upper.unwrap_or(hi), periodic && spec.lower.is_none() && spec.upper.is_none())
}

fn grid_point(lo: [f64; 2], hi: [f64; 2], n: [usize; 2], periodic: bool, i: usize, j: usize) -> Point {
    let coord = |k: usize, idx: usize| {
        if periodic {
            lo[k] + (hi[k] - lo[k]) * idx as f64 / n[k] as f64
        } else if n[k] == 1 {
            0.5 * (lo[k] + hi[k])
        } else {
            lo[k] + (hi[k] - lo[k]) * idx as f64 / (n[k] - 1) as f64
        }
    };
    [coord(0, i), coord(1, j)]
}

/// Solves on an n1 × n2 chart grid. Rows of constant x₂ are independent
/// warm-start chains run concurrently; results are merged by grid index.
pub fn scan(ctx: &ExtremalContext, spec: &GridSpec) -> Result<LandscapeGrid> {
    if spec.n1 == 0 || spec.n2 == 0 {
        return Err(Error::InvalidInput("grid must have at least one point per axis".into()));
    }
    let (lo, hi, periodic) = grid_bounds(ctx, spec);
    let n = [spec.n1, spec.n2];
    let rows: Vec<Vec<LandscapePoint>> = (0..spec.n2)
        .into_par_iter()
        .map(|j| {
            let mut prev: Option<ExtremalSolution> = None;
            let mut out = Vec::with_capacity(spec.n1);
            // alternate sweep direction between rows
            let order: Vec<usize> = if j % 2 == 0 {
                (0..spec.n1).collect()
            } else {
                (0..spec.n1).rev().collect()
            };
            for i in order {
                let p = grid_point(lo, hi, n, periodic, i, j);
                match solve_extremal(ctx, p, prev.as_ref()) {
                    Ok(sol) => {
                        let an = sol.a_norm();
                        out.push(LandscapePoint {
                            i,
                            j,
                            p,
                            energy: sol.energy,
                            a: sol.a,
                            a_norm: an,
                            b: sol.b,
                            converged: true,
                            error: None,
                            iterations: sol.iterations,
                            epsilon_ratio: (ctx.epsilon * an + an + ctx.epsilon) / sol.b.abs(),
                        });
                        prev = Some(sol);
                    }
                    Err(e) => {
                        out.push(LandscapePoint {
                            i,
                            j,
                            p,
                            energy: f64::NAN,
                            a: [f64::NAN; 2],
                            a_norm: f64::NAN,
                            b: f64::NAN,
                            converged: false,
                            error: Some(format!("{}: {}", e.kind(), e)),
                            iterations: 0,
                            epsilon_ratio: f64::NAN,
                        });
                        prev = None;
                    }
                }
            }
            out.sort_by_key(|p| p.i);
            out
        })
        .collect();
    let points: Vec<LandscapePoint> = rows.into_iter().flatten().collect();
    let mut grid = LandscapeGrid {
        epsilon: ctx.epsilon,
        n1: spec.n1,
        n2: spec.n2,
        lower: lo,
        upper: hi,
        points,
        candidates: Vec::new(),
        critical_points: Vec::new(),
    };
    grid.candidates = critical_candidates(&grid, periodic);
    if spec.refine {
        let mut cands = grid.candidates.clone();
        let norm_at = |p: &Point| {
            grid.points
                .iter()
                .find(|q| q.p == *p)
                .map(|q| q.a_norm)
                .unwrap_or(f64::INFINITY)
        };
        cands.sort_by(|a, b| norm_at(a).total_cmp(&norm_at(b)));
        cands.truncate(spec.max_refine);
        let refined: Vec<Result<CriticalPoint>> = cands
            .par_iter()
            .map(|p| refine_critical_point(ctx, *p).map(|(c, _)| c))
            .collect();
        grid.critical_points = refined.into_iter().filter_map(|r| r.ok()).collect();
    }
    Ok(grid)
}

/// Grid points where |a| is minimal among the 4-neighbours and the cell
/// corners where both components change sign.
fn critical_candidates(grid: &LandscapeGrid, periodic: bool) -> Vec<Point> {
    let (n1, n2) = (grid.n1, grid.n2);
    let mut out = Vec::new();
    let neighbour = |i: usize, j: usize, di: isize, dj: isize| -> Option<(usize, usize)> {
        let ii = i as isize + di;
        let jj = j as isize + dj;
        if periodic {
            Some((ii.rem_euclid(n1 as isize) as usize, jj.rem_euclid(n2 as isize) as usize))
        } else if ii < 0 || jj < 0 || ii >= n1 as isize || jj >= n2 as isize {
            None
        } else {
            Some((ii as usize, jj as usize))
        }
    };
    for j in 0..n2 {
        for i in 0..n1 {
            let pt = grid.at(i, j);
            if !pt.converged {
                continue;
            }
            let is_min = [(1, 0), (-1, 0), (0, 1), (0, -1)].iter().all(|&(di, dj)| {
                neighbour(i, j, di, dj)
                    .map(|(a, b)| {
                        let q = grid.at(a, b);
                        !q.converged || pt.a_norm <= q.a_norm
                    })
                    .unwrap_or(true)
            });
            if is_min {
                out.push(pt.p);
            }
        }
    }
    out
}

/// Newton iteration on p ↦ a_{ε,p} with a forward-difference Jacobian
/// (step ε/100) and an SVD pseudo-inverse; singular directions are flagged.
pub fn refine_critical_point(ctx: &ExtremalContext, p0: Point) -> Result<(CriticalPoint, ExtremalSolution)> {
    let h = ctx.epsilon.max(1e-3) / 100.0;
    let mut p = p0;
    let mut sol = solve_extremal(ctx, p, None)?;
    let tol = ctx.config.trace_tol * sol.c1.abs();
    let jacobian = |p: Point, sol: &ExtremalSolution| -> Result<Matrix2<f64>> {
        let mut m = Matrix2::zeros();
        for k in 0..2 {
            let mut q = p;
            q[k] += h;
            let s = solve_extremal(ctx, q, Some(sol))?;
            m[(0, k)] = (s.a[0] - sol.a[0]) / h;
            m[(1, k)] = (s.a[1] - sol.a[1]) / h;
        }
        Ok(m)
    };
    let sing_tol = 1e-6 * sol.c1.abs();
    let mut iterations = 0;
    let mut jac = jacobian(p, &sol)?;
    while sol.a_norm() > tol && iterations < 25 {
        iterations += 1;
        let svd = jac.svd(true, true);
        let step = svd
            .pseudo_inverse(sing_tol)
            .map_err(|e| Error::Setup(e.to_string()))?
            * Vector2::new(-sol.a[0], -sol.a[1]);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..7 {
            let q = ctx.chart.wrap([p[0] + t * step[0], p[1] + t * step[1]]);
            if let Ok(s) = solve_extremal(ctx, q, Some(&sol)) {
                if s.a_norm() < sol.a_norm() {
                    p = q;
                    sol = s;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        if sol.a_norm() > tol {
            jac = jacobian(p, &sol)?;
        }
    }
    if iterations > 0 {
        jac = jacobian(p, &sol)?;
    }
    let svd = jac.svd(true, true);
    let v_t = svd.v_t.unwrap();
    let mut degenerate = Vec::new();
    for k in 0..2 {
        if svd.singular_values[k] <= sing_tol {
            degenerate.push([v_t[(k, 0)], v_t[(k, 1)]]);
        }
    }
    let b = sol.b;
    let constancy = sol.trace.values.iter().map(|v| (v - b).abs()).fold(0.0, f64::max);
    Ok((
        CriticalPoint {
            p,
            a: sol.a,
            a_norm: sol.a_norm(),
            b,
            energy: sol.energy,
            iterations,
            converged: sol.a_norm() <= tol,
            degenerate_directions: degenerate,
            singular_values: [svd.singular_values[0], svd.singular_values[1]],
            neumann_constancy: constancy,
            lambda_bar: sol.lambda_bar,
            physical_lambda: sol.physical_lambda,
        },
        sol,
    ))
}

#[derive(Clone, Debug, Serialize)]
pub struct IsometryReport {
    pub pairs: usize,
    pub max_relative_gap: f64,
}

/// Whether f is invariant under the isometry, tested on sample points.
fn preserves_nonlinearity(ctx: &ExtremalContext, iso: &Isometry) -> bool {
    ctx.chart.sample_points(7).iter().all(|&p| {
        let q = ctx.chart.wrap(iso.apply(p));
        [0.0, 0.3, 1.0].iter().all(|&z| {
            let (a, b) = (ctx.spec.f(p, z), ctx.spec.f(q, z));
            (a - b).abs() <= 1e-12 * (1.0 + a.abs())
        })
    })
}

/// Compares J at grid points related by the chart's declared isometries,
/// skipping those that do not preserve f.
pub fn isometry_check(ctx: &ExtremalContext, grid: &LandscapeGrid) -> IsometryReport {
    let mut pairs = 0;
    let mut gap = 0.0f64;
    for iso in ctx.chart.known_isometries.iter().filter(|iso| preserves_nonlinearity(ctx, iso)) {
        for pt in grid.points.iter().filter(|p| p.converged) {
            let img = ctx.chart.wrap(iso.apply(pt.p));
            if let Some(q) = grid.points.iter().find(|q| {
                q.converged && {
                    let d0 = (q.p[0] - img[0]).abs();
                    let d1 = (q.p[1] - img[1]).abs();
                    let per = ctx.chart.periods().unwrap_or([f64::INFINITY; 2]);
                    d0.min((per[0] - d0).abs()) < 1e-9 && d1.min((per[1] - d1).abs()) < 1e-9
                }
            }) {
                pairs += 1;
                gap = gap.max((pt.energy - q.energy).abs() / pt.energy.abs().max(1e-300));
            }
        }
    }
    IsometryReport { pairs, max_relative_gap: gap }
}
