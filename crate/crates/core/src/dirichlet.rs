//! Volume-normalized semilinear Dirichlet problem on the unit disk with the
//! pulled-back metric ĝ:  Δ_ĝ û + dû(X̂) + λ̄ f(Y(y), û) = 0,  û|∂B₁ = 0,
//! vol_ĝ(B₁) = π.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU, Dyn};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::geometry::chart::{sym_inv, Point, Vec2};
use crate::geometry::{pullback_shape_metric, volume, BoundaryShape, Extension, NormalMetric, PulledBackMetric};
use crate::krylov::{gmres, GmresOptions};
use crate::nonlinearity::NonlinearitySpec;
use crate::radial::RadialProfile;
use crate::spectral::PolarGrid;

/// A chart vector field X(x) for the optional first-order term.
pub type Drift = Arc<dyn Fn(Point) -> Vec2 + Send + Sync>;

/// Polar-form coefficients of L u = Δ_ĝ u + dû(X̂):
/// L u = c_rr u_rr + c_r u_r + c_rt u_rθ + c_tt u_θθ + c_t u_θ.
#[derive(Clone, Debug)]
pub struct DiskOperator {
    pub grid: PolarGrid,
    pub c_rr: Vec<f64>,
    pub c_r: Vec<f64>,
    pub c_rt: Vec<f64>,
    pub c_tt: Vec<f64>,
    pub c_t: Vec<f64>,
    /// θ̂ᵀ ĝ⁻¹ r̂ / r, used for |∇u|²
    a_rt_r: Vec<f64>,
}

/// Δ_ĝ without drift.
pub fn assemble_laplace_beltrami(pm: &PulledBackMetric) -> Result<DiskOperator> {
    DiskOperator::new(pm, None)
}

impl DiskOperator {
    /// `drift` holds the Cartesian components of X̂ at every node.
    pub fn new(pm: &PulledBackMetric, drift: Option<&[Vec2]>) -> Result<Self> {
        let grid = &pm.grid;
        let n = grid.len();
        let mut a = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for k in 0..n {
            let g = pm.metric_at(k);
            let gi = sym_inv(&g);
            if !gi.iter().all(|v| v.is_finite()) {
                return Err(Error::MetricDegenerate(format!("metric inversion failed at node {k}")));
            }
            for c in 0..3 {
                a[c][k] = gi[c];
            }
        }
        // b^j = s⁻¹ ∂_i (s a^{ij})
        let sa: Vec<Vec<f64>> = (0..3)
            .map(|c| a[c].iter().zip(&pm.sqrt_det).map(|(x, s)| x * s).collect())
            .collect();
        let (d11x, _) = grid.cartesian_gradient(&sa[0]);
        let (d12x, d12y) = grid.cartesian_gradient(&sa[1]);
        let (_, d22y) = grid.cartesian_gradient(&sa[2]);
        let mut op = DiskOperator {
            grid: grid.clone(),
            c_rr: vec![0.0; n],
            c_r: vec![0.0; n],
            c_rt: vec![0.0; n],
            c_tt: vec![0.0; n],
            c_t: vec![0.0; n],
            a_rt_r: vec![0.0; n],
        };
        for i in 0..grid.n_r {
            let r = grid.r[i];
            for l in 0..grid.n_theta {
                let k = grid.idx(i, l);
                let (c, s) = (grid.cos[l], grid.sin[l]);
                let (a11, a12, a22) = (a[0][k], a[1][k], a[2][k]);
                let a_rr = c * c * a11 + 2.0 * c * s * a12 + s * s * a22;
                let a_tt = s * s * a11 - 2.0 * c * s * a12 + c * c * a22;
                let a_rt = -c * s * a11 + (c * c - s * s) * a12 + c * s * a22;
                let sd = pm.sqrt_det[k];
                let mut b = [(d11x[k] + d12y[k]) / sd, (d12x[k] + d22y[k]) / sd];
                if let Some(x) = drift {
                    b[0] += x[k][0];
                    b[1] += x[k][1];
                }
                let b_r = c * b[0] + s * b[1];
                let b_t = -s * b[0] + c * b[1];
                op.c_rr[k] = a_rr;
                op.c_r[k] = a_tt / r + b_r;
                op.c_rt[k] = 2.0 * a_rt / r;
                op.c_tt[k] = a_tt / (r * r);
                op.c_t[k] = b_t / r - 2.0 * a_rt / (r * r);
                op.a_rt_r[k] = a_rt / r;
            }
        }
        Ok(op)
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let (ur, urr) = self.grid.radial_derivs(u);
        let (ut, utt) = self.grid.theta_derivs(u);
        let urt = self.grid.theta_deriv(&ur);
        (0..u.len())
            .map(|k| {
                self.c_rr[k] * urr[k]
                    + self.c_r[k] * ur[k]
                    + self.c_rt[k] * urt[k]
                    + self.c_tt[k] * utt[k]
                    + self.c_t[k] * ut[k]
            })
            .collect()
    }

    /// |∇u|²_ĝ at every node.
    pub fn grad_sq(&self, u: &[f64]) -> Vec<f64> {
        let ur = self.grid.radial_deriv(u);
        let ut = self.grid.theta_deriv(u);
        let g = &self.grid;
        let mut out = vec![0.0; u.len()];
        for i in 0..g.n_r {
            let r = g.r[i];
            for l in 0..g.n_theta {
                let k = g.idx(i, l);
                let a_tt = self.c_tt[k] * r * r;
                out[k] = self.c_rr[k] * ur[k] * ur[k]
                    + 2.0 * self.a_rt_r[k] * ur[k] * ut[k]
                    + a_tt * ut[k] * ut[k] / (r * r);
            }
        }
        out
    }
}

/// X̂ = ε (dexp·Dβ)⁻¹ X(Y(y)) at every node.
pub fn drift_field(pm: &PulledBackMetric, x: &Drift) -> Vec<Vec2> {
    (0..pm.grid.len())
        .map(|k| {
            let s = &pm.samples[k];
            let d = &pm.dbeta[k];
            let mut m = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    m[a][b] = s.dexp[a][0] * d[0][b] + s.dexp[a][1] * d[1][b];
                }
            }
            let v = x(s.pos);
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let e = pm.epsilon;
            [
                e * (m[1][1] * v[0] - m[0][1] * v[1]) / det,
                e * (-m[1][0] * v[0] + m[0][0] * v[1]) / det,
            ]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VolumeMode {
    /// choose v0 so that vol_ĝ(B₁) = π
    Constrained,
    /// keep v0 fixed
    Fixed { v0: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirichletOptions {
    pub tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
    pub volume_tol: f64,
    pub extension: Extension,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        DirichletOptions {
            tol: 1e-10,
            max_newton: 50,
            max_halvings: 6,
            volume_tol: 1e-13,
            extension: Extension::Polynomial,
        }
    }
}

/// Everything that stays fixed while the boundary shape varies.
#[derive(Clone)]
pub struct DirichletProblem<'a> {
    pub nm: &'a NormalMetric,
    pub grid: &'a PolarGrid,
    pub spec: &'a NonlinearitySpec,
    pub lambda_bar: f64,
    pub drift: Option<Drift>,
    /// cold-start profile; without one a parabola is used
    pub profile: Option<&'a RadialProfile>,
    pub options: DirichletOptions,
}

#[derive(Clone, Debug)]
pub struct DirichletSolution {
    pub u: Vec<f64>,
    pub v0: f64,
    pub shape: BoundaryShape,
    pub metric: PulledBackMetric,
    pub operator: DiskOperator,
    pub lambda_bar: f64,
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
    pub newton_iterations: usize,
    pub gmres_iterations: usize,
    pub volume: f64,
    pub has_drift: bool,
}

impl DirichletSolution {
    /// max_j |û_j(r_inner)| / r_inner^min(j,4) over Fourier modes j ≥ 1.
    pub fn pole_regularity(&self) -> f64 {
        let g = &self.metric.grid;
        let i = g.n_r - 1;
        let r0 = g.r[i];
        let ring = &self.u[i * g.n_theta..(i + 1) * g.n_theta];
        let t = TrigSeries::from_samples(ring, g.n_theta / 2 - 1);
        (1..=t.j_max())
            .map(|j| t.cos[j - 1].hypot(t.sin[j - 1]) / r0.powi(j.min(4) as i32))
            .fold(0.0, f64::max)
    }

    pub fn min_interior(&self) -> f64 {
        let nt = self.metric.grid.n_theta;
        self.u[nt..].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Solves vol_ĝ(B₁) = π for v0 at fixed v̄; the volume depends on the shape only.
pub fn solve_volume_constraint(
    nm: &NormalMetric,
    grid: &PolarGrid,
    vbar: &TrigSeries,
    extension: Extension,
    v0_init: f64,
    tol: f64,
) -> Result<(f64, PulledBackMetric)> {
    let mut v0 = v0_init;
    let mut history = Vec::new();
    for _ in 0..40 {
        let shape = BoundaryShape::new(v0, vbar.clone()).with_extension(extension);
        let pm = pullback_shape_metric(nm, grid, &shape)?;
        let defect = volume(&pm) - PI;
        history.push(defect.abs());
        if defect.abs() <= tol * PI {
            return Ok((v0, pm));
        }
        let dvol: f64 = pm.boundary_measure().iter().sum::<f64>() * 2.0 * PI / grid.n_theta as f64;
        v0 -= defect / dvol;
    }
    Err(Error::NoConvergence {
        what: "volume constraint".into(),
        iterations: history.len(),
        residual: *history.last().unwrap_or(&f64::NAN),
        history,
    })
}

fn residual(
    op: &DiskOperator,
    pm: &PulledBackMetric,
    spec: &NonlinearitySpec,
    lambda_bar: f64,
    u: &[f64],
) -> Vec<f64> {
    let lu = op.apply(u);
    let nt = pm.grid.n_theta;
    (nt..u.len())
        .map(|k| lu[k] + lambda_bar * spec.f(pm.samples[k].pos, u[k]))
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Mode-wise flat preconditioner: ring-averaged coefficients, one LU per |m|.
struct ModePreconditioner {
    lus: Vec<LU<f64, Dyn, Dyn>>,
    grid: PolarGrid,
}

impl ModePreconditioner {
    fn new(op: &DiskOperator, q: &[f64]) -> Result<Self> {
        let g = &op.grid;
        let nt = g.n_theta;
        let avg = |v: &[f64], i: usize| v[i * nt..(i + 1) * nt].iter().sum::<f64>() / nt as f64;
        let n_in = g.n_r - 1;
        let mut lus = Vec::with_capacity(nt / 2 + 1);
        for m in 0..=nt / 2 {
            let (d1, d2) = g.mode_matrices(m);
            let mut a = DMatrix::<f64>::zeros(n_in, n_in);
            for i in 1..g.n_r {
                let (crr, cr, ctt) = (avg(&op.c_rr, i), avg(&op.c_r, i), avg(&op.c_tt, i));
                let qi = avg(q, i);
                for j in 1..g.n_r {
                    a[(i - 1, j - 1)] = crr * d2[(i, j)] + cr * d1[(i, j)];
                }
                a[(i - 1, i - 1)] += -((m * m) as f64) * ctt + qi;
            }
            lus.push(a.lu());
        }
        if lus.iter().any(|lu| !lu.is_invertible()) {
            return Err(Error::Setup("singular mode preconditioner".into()));
        }
        Ok(ModePreconditioner { lus, grid: g.clone() })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let nt = g.n_theta;
        let mut full = vec![0.0; g.len()];
        full[nt..].copy_from_slice(v);
        let c = g.ring_fft(&full);
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        let n_in = g.n_r - 1;
        for k in 0..nt {
            let m = g.wavenumber(k).unsigned_abs() as usize;
            let lu = &self.lus[m];
            let re = DVector::from_iterator(n_in, (1..g.n_r).map(|i| c[g.idx(i, k)].re));
            let im = DVector::from_iterator(n_in, (1..g.n_r).map(|i| c[g.idx(i, k)].im));
            let (xr, xi) = (lu.solve(&re).unwrap(), lu.solve(&im).unwrap());
            for i in 1..g.n_r {
                out[g.idx(i, k)] = Complex64::new(xr[i - 1], xi[i - 1]);
            }
        }
        g.ring_ifft(out)[nt..].to_vec()
    }
}

/// Newton–GMRES on û at a fixed pulled-back metric.
pub fn solve_field(
    pm: &PulledBackMetric,
    op: &DiskOperator,
    spec: &NonlinearitySpec,
    lambda_bar: f64,
    u_init: Vec<f64>,
    options: &DirichletOptions,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let g = &pm.grid;
    let nt = g.n_theta;
    let mut u = u_init;
    for v in &mut u[..nt] {
        *v = 0.0;
    }
    let mut history = Vec::new();
    let mut gmres_total = 0;
    let mut r = residual(op, pm, spec, lambda_bar, &u);
    let mut rn = max_abs(&r);
    history.push(rn);
    for _ in 0..options.max_newton {
        if rn <= options.tol {
            return Ok((u, history, gmres_total));
        }
        let q: Vec<f64> = (0..u.len())
            .map(|k| lambda_bar * spec.f_z(pm.samples[k].pos, u[k]))
            .collect();
        let pre = ModePreconditioner::new(op, &q)?;
        let apply = |d: &[f64]| -> Vec<f64> {
            let mut full = vec![0.0; u.len()];
            full[nt..].copy_from_slice(d);
            let ld = op.apply(&full);
            (nt..u.len()).map(|k| ld[k] + q[k] * full[k]).collect()
        };
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let (delta, rep) = gmres(&apply, &|v| pre.apply(v), &rhs, GmresOptions {
            rtol: 1e-11,
            ..Default::default()
        });
        gmres_total += rep.iterations;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=options.max_halvings {
            let mut trial = u.clone();
            for (k, d) in delta.iter().enumerate() {
                trial[nt + k] += t * d;
            }
            let rt = residual(op, pm, spec, lambda_bar, &trial);
            let rtn = max_abs(&rt);
            if rtn < rn || rtn <= options.tol {
                u = trial;
                r = rt;
                rn = rtn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        history.push(rn);
        if !accepted {
            break;
        }
    }
    if rn <= options.tol {
        return Ok((u, history, gmres_total));
    }
    // rounding floor: accept a stagnated residual that is still tiny
    if rn <= 10.0 * options.tol {
        return Ok((u, history, gmres_total));
    }
    Err(Error::NoConvergence {
        what: "dirichlet newton".into(),
        iterations: history.len() - 1,
        residual: rn,
        history,
    })
}

fn cold_start(problem: &DirichletProblem, grid: &PolarGrid, v0: f64) -> Vec<f64> {
    let s = (1.0 + v0) * (1.0 + v0);
    match problem.profile {
        Some(prof) => grid.from_fn(|r, _| s * prof.lambda_bar.recip() * problem.lambda_bar * prof.phi_at(r)),
        None => {
            let f0 = problem.spec.f(problem.nm.p, 0.0).abs().max(1.0);
            grid.from_fn(|r, _| s * problem.lambda_bar * f0 * (1.0 - r * r) / 4.0)
        }
    }
}

pub fn solve_dirichlet_volume(
    problem: &DirichletProblem,
    vbar: &TrigSeries,
    volume_mode: VolumeMode,
    init: Option<&DirichletSolution>,
) -> Result<DirichletSolution> {
    let opts = &problem.options;
    let grid = problem.grid;
    let (v0, pm) = match volume_mode {
        VolumeMode::Constrained => solve_volume_constraint(
            problem.nm,
            grid,
            vbar,
            opts.extension,
            init.map(|s| s.v0).unwrap_or(0.0),
            opts.volume_tol,
        )?,
        VolumeMode::Fixed { v0 } => {
            let shape = BoundaryShape::new(v0, vbar.clone()).with_extension(opts.extension);
            (v0, pullback_shape_metric(problem.nm, grid, &shape)?)
        }
    };
    let drift = problem.drift.as_ref().map(|x| drift_field(&pm, x));
    let op = DiskOperator::new(&pm, drift.as_deref())?;
    let u0 = match init {
        Some(s) if s.u.len() == grid.len() => s.u.clone(),
        _ => cold_start(problem, grid, v0),
    };
    let (u, history, gmres_iterations) = solve_field(&pm, &op, problem.spec, problem.lambda_bar, u0, opts)?;
    let sol = DirichletSolution {
        v0,
        shape: pm.shape.clone(),
        volume: volume(&pm),
        residual_norm: *history.last().unwrap(),
        newton_iterations: history.len() - 1,
        residual_history: history,
        gmres_iterations,
        u,
        metric: pm,
        operator: op,
        lambda_bar: problem.lambda_bar,
        has_drift: problem.drift.is_some(),
    };
    if sol.min_interior() <= 0.0 {
        return Err(Error::Positivity(format!(
            "solution reaches {:.3e} in the interior",
            sol.min_interior()
        )));
    }
    Ok(sol)
}

/// First-order response (δv0, δû) of the volume-constrained solution to a
/// shape direction δv̄: δv0 from the volume relation, δû from one linear solve
/// with the Newton Jacobian. The shape derivative of the residual is taken by
/// a central difference of the residual map at frozen û.
pub fn shape_sensitivity(
    problem: &DirichletProblem,
    sol: &DirichletSolution,
    dvbar: &TrigSeries,
) -> Result<(f64, Vec<f64>)> {
    let pm = &sol.metric;
    let g = &pm.grid;
    let nt = g.n_theta;
    let bm = pm.boundary_measure();
    let w: Vec<f64> = g.theta.iter().map(|t| dvbar.eval(*t)).collect();
    let dv0 = -bm.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / bm.iter().sum::<f64>();
    let h = 1e-6;
    let eval = |t: f64| -> Result<Vec<f64>> {
        let shape = BoundaryShape::new(sol.v0 + t * dv0, sol.shape.vbar.add(&dvbar.scaled(t)))
            .with_extension(problem.options.extension);
        let pmt = pullback_shape_metric(problem.nm, g, &shape)?;
        let drift = problem.drift.as_ref().map(|x| drift_field(&pmt, x));
        let opt = DiskOperator::new(&pmt, drift.as_deref())?;
        Ok(residual(&opt, &pmt, problem.spec, problem.lambda_bar, &sol.u))
    };
    let (rp, rm) = (eval(h)?, eval(-h)?);
    let rhs: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| -(a - b) / (2.0 * h)).collect();
    let q: Vec<f64> = (0..sol.u.len())
        .map(|k| problem.lambda_bar * problem.spec.f_z(pm.samples[k].pos, sol.u[k]))
        .collect();
    let pre = ModePreconditioner::new(&sol.operator, &q)?;
    let apply = |d: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; g.len()];
        full[nt..].copy_from_slice(d);
        let ld = sol.operator.apply(&full);
        (nt..g.len()).map(|k| ld[k] + q[k] * full[k]).collect()
    };
    let (d, _) = gmres(&apply, &|v| pre.apply(v), &rhs, GmresOptions::default());
    let mut du = vec![0.0; g.len()];
    du[nt..].copy_from_slice(&d);
    Ok((dv0, du))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ManifoldChart, NormalGridSpec};

    fn flat(n_r: usize, n_theta: usize, eps: f64) -> (NormalMetric, PolarGrid) {
        let chart = ManifoldChart::standard_torus();
        let nm = NormalMetric::new(&chart, [0.5, 0.5], eps, NormalGridSpec { n_r, n_theta, ..Default::default() }).unwrap();
        (nm, PolarGrid::new(n_r, n_theta, 1.0))
    }

    #[test]
    fn laplacian_on_polynomials() {
        let (nm, grid) = flat(16, 16, 0.1);
        let pm = pullback_shape_metric(&nm, &grid, &BoundaryShape::zero(4)).unwrap();
        let op = assemble_laplace_beltrami(&pm).unwrap();
        let u = grid.from_fn(|r, _| 1.0 - r * r);
        let lu = op.apply(&u);
        assert!(lu.iter().all(|v| (v + 4.0).abs() < 1e-9));
        // (r² − r⁴) cos 2θ: Δ = (4 − 16 r² − 4 + 4r²) cos 2θ = −12 r² cos 2θ
        let u = grid.from_fn(|r, t| (r * r - r.powi(4)) * (2.0 * t).cos());
        let lu = op.apply(&u);
        let exact = grid.from_fn(|r, t| -12.0 * r * r * (2.0 * t).cos());
        let err = lu.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        // dilation
        let pm = pullback_shape_metric(&nm, &grid, &BoundaryShape::new(0.2, TrigSeries::zeros(4))).unwrap();
        let op = assemble_laplace_beltrami(&pm).unwrap();
        let lu2 = op.apply(&u);
        let err = lu2.iter().zip(&exact).map(|(a, b)| (a * 1.44 - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn flat_constant_source_is_radial() {
        let (nm, grid) = flat(16, 16, 0.1);
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
        let sol = solve_dirichlet_volume(&problem, &TrigSeries::zeros(4), VolumeMode::Constrained, None).unwrap();
        assert!(sol.v0.abs() < 1e-14);
        let exact = grid.from_fn(|r, _| (1.0 - r * r) / 4.0);
        let err = sol.u.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert!(sol.residual_norm <= 1e-9);
    }

    #[test]
    fn volume_neutral_to_first_order() {
        let (nm, grid) = flat(16, 32, 0.1);
        for s in [1e-2, 1e-3] {
            let vbar = TrigSeries::mode(6, 2, s, 0.0);
            let (v0, pm) = solve_volume_constraint(&nm, &grid, &vbar, Extension::Polynomial, 0.0, 1e-14).unwrap();
            assert!(v0.abs() <= 10.0 * s * s, "{v0}");
            assert!((volume(&pm) - PI).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_sensitivity_matches_differences() {
        let (nm, grid) = flat(16, 32, 0.1);
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
        let base = TrigSeries::mode(6, 2, 0.05, 0.0);
        let dir = TrigSeries::mode(6, 3, 1.0, 0.0);
        let sol = solve_dirichlet_volume(&problem, &base, VolumeMode::Constrained, None).unwrap();
        let (dv0, du) = shape_sensitivity(&problem, &sol, &dir).unwrap();
        let h = 1e-5;
        let sp = solve_dirichlet_volume(&problem, &base.add(&dir.scaled(h)), VolumeMode::Constrained, Some(&sol)).unwrap();
        let sm = solve_dirichlet_volume(&problem, &base.add(&dir.scaled(-h)), VolumeMode::Constrained, Some(&sol)).unwrap();
        let fd: Vec<f64> = sp.u.iter().zip(&sm.u).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let scale = max_abs(&fd);
        let err = fd.iter().zip(&du).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-4 * scale, "{err} vs {scale}");
        assert!(((sp.v0 - sm.v0) / (2.0 * h) - dv0).abs() < 1e-6);
    }

    #[test]
    fn zero_drift_is_bitwise_neutral() {
        let chart = ManifoldChart::conformal_torus(0.1, [2.0 * PI, 2.0 * PI]);
        let nm = NormalMetric::new(&chart, [0.7, 0.0], 0.1, NormalGridSpec { n_r: 12, n_theta: 16, ..Default::default() }).unwrap();
        let grid = PolarGrid::new(12, 16, 1.0);
        let spec = NonlinearitySpec::constant_one();
        let mut problem = DirichletProblem {
            nm: &nm,
            grid: &grid,
            spec: &spec,
            lambda_bar: 1.0,
            drift: None,
            profile: None,
            options: DirichletOptions::default(),
        };
        let vbar = TrigSeries::mode(4, 2, 0.01, 0.0);
        let a = solve_dirichlet_volume(&problem, &vbar, VolumeMode::Constrained, None).unwrap();
        problem.drift = Some(Arc::new(|_| [0.0, 0.0]));
        let b = solve_dirichlet_volume(&problem, &vbar, VolumeMode::Constrained, None).unwrap();
        assert_eq!(a.u, b.u);
        // a genuine drift changes the solution
        problem.drift = Some(Arc::new(|_| [1.0, 0.0]));
        let c = solve_dirichlet_volume(&problem, &vbar, VolumeMode::Constrained, None).unwrap();
        assert!(max_abs(&a.u.iter().zip(&c.u).map(|(x, y)| x - y).collect::<Vec<_>>()) > 1e-4);
    }
}
