//! Rescaled normal-coordinate metric ḡ(x) = ε⁻² exp_p^* g (εx) on a disk
//! of radius R_max, tabulated on a polar spectral grid.

use serde::{Deserialize, Serialize};

use super::chart::{sym_det, ChartKind, ManifoldChart, Point, Sym2, Vec2};
use crate::error::{Error, Result};
use crate::spectral::PolarGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    JacobiIntegrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalGridSpec {
    pub n_r: usize,
    pub n_theta: usize,
    /// largest admissible |v0| + |v̄|; the table covers R_max = 1 + v_max
    pub v_max: f64,
    /// RK4 steps per unit of rescaled radius (h = ε / steps_per_unit)
    pub steps_per_unit: usize,
}

impl Default for NormalGridSpec {
    fn default() -> Self {
        NormalGridSpec {
            n_r: 48,
            n_theta: 64,
            v_max: 0.5,
            steps_per_unit: 64,
        }
    }
}

/// ḡ, its Cartesian derivatives, the chart position P(x) = exp_p(εEx)
/// and dexp = ε⁻¹ ∂P/∂x at one point.
#[derive(Clone, Copy, Debug)]
pub struct NormalSample {
    pub g: Sym2,
    pub dg: [Sym2; 2],
    pub pos: Point,
    /// dexp[a][b] = ε⁻¹ ∂P^a/∂x^b
    pub dexp: [[f64; 2]; 2],
}

#[derive(Clone, Copy, Debug)]
enum Source {
    Flat,
    Sphere { k: f64 },
    Grid,
}

#[derive(Clone, Debug)]
pub struct NormalMetric {
    pub chart: ManifoldChart,
    pub p: Point,
    pub epsilon: f64,
    /// orthonormal frame at p, in chart components
    pub frame: [Vec2; 2],
    pub provenance: Provenance,
    pub grid: PolarGrid,
    pub gbar: [Vec<f64>; 3],
    pub dgbar: [[Vec<f64>; 3]; 2],
    pub pos: [Vec<f64>; 2],
    pub dexp: [[Vec<f64>; 2]; 2],
    source: Source,
}

impl NormalMetric {
    pub fn new(chart: &ManifoldChart, p: Point, epsilon: f64, spec: NormalGridSpec) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if spec.n_theta < 4 || !spec.n_theta.is_multiple_of(2) || spec.n_r < 4 {
            return Err(Error::InvalidInput("normal grid needs n_r >= 4 and even n_theta >= 4".into()));
        }
        let r_max = 1.0 + spec.v_max;
        if epsilon * r_max >= chart.injectivity_radius_lower_bound {
            return Err(Error::Precondition(format!(
                "epsilon * R_max = {:.4} exceeds the injectivity radius bound {:.4}",
                epsilon * r_max,
                chart.injectivity_radius_lower_bound
            )));
        }
        chart.check_metric(&[p])?;
        let frame = chart.frame(p);
        let grid = PolarGrid::new(spec.n_r, spec.n_theta, r_max);
        let source = match chart.kind {
            _ if epsilon == 0.0 => Source::Flat,
            ChartKind::FlatTorus { .. } => Source::Flat,
            ChartKind::RoundSphere { radius } => Source::Sphere { k: epsilon / radius },
            _ => Source::Grid,
        };
        let provenance = match source {
            Source::Grid => Provenance::JacobiIntegrated,
            _ => Provenance::ClosedForm,
        };
        let mut nm = NormalMetric {
            chart: chart.clone(),
            p,
            epsilon,
            frame,
            provenance,
            gbar: [grid.zeros(), grid.zeros(), grid.zeros()],
            dgbar: std::array::from_fn(|_| [grid.zeros(), grid.zeros(), grid.zeros()]),
            pos: [grid.zeros(), grid.zeros()],
            dexp: std::array::from_fn(|_| [grid.zeros(), grid.zeros()]),
            grid,
            source,
        };
        match source {
            Source::Grid => nm.integrate_jacobi(spec.steps_per_unit)?,
            _ => {
                for i in 0..nm.grid.n_r {
                    for l in 0..nm.grid.n_theta {
                        let s = nm.closed_form(nm.grid.theta[l], nm.grid.r[i])?;
                        nm.store(nm.grid.idx(i, l), &s);
                    }
                }
            }
        }
        // conjugate points would make ḡ degenerate
        for (k, d) in nm.sqrt_det_values().iter().enumerate() {
            if !(*d > 1e-8) {
                return Err(Error::MetricDegenerate(format!(
                    "normal metric degenerate at node {k} (sqrt det = {d:.3e})"
                )));
            }
        }
        Ok(nm)
    }

    pub fn r_max(&self) -> f64 {
        self.grid.radius
    }

    fn store(&mut self, k: usize, s: &NormalSample) {
        for c in 0..3 {
            self.gbar[c][k] = s.g[c];
            self.dgbar[0][c][k] = s.dg[0][c];
            self.dgbar[1][c][k] = s.dg[1][c];
        }
        for a in 0..2 {
            self.pos[a][k] = s.pos[a];
            for b in 0..2 {
                self.dexp[a][b][k] = s.dexp[a][b];
            }
        }
    }

    fn frame_apply(&self, x: Vec2) -> Vec2 {
        let [e1, e2] = self.frame;
        [x[0] * e1[0] + x[1] * e2[0], x[0] * e1[1] + x[1] * e2[1]]
    }

    fn closed_form(&self, theta: f64, rho: f64) -> Result<NormalSample> {
        let (s, c) = theta.sin_cos();
        let x = [rho * c, rho * s];
        let e = [[self.frame[0][0], self.frame[1][0]], [self.frame[0][1], self.frame[1][1]]];
        match self.source {
            Source::Flat => {
                let v = self.frame_apply(x);
                Ok(NormalSample {
                    g: [1.0, 0.0, 1.0],
                    dg: [[0.0; 3]; 2],
                    pos: [self.p[0] + self.epsilon * v[0], self.p[1] + self.epsilon * v[1]],
                    dexp: e,
                })
            }
            Source::Sphere { k } => {
                let v = self.frame_apply([self.epsilon * x[0], self.epsilon * x[1]]);
                let (pos, m) = self.chart.exp_with_differential(self.p, v)?;
                let mut dexp = [[0.0; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        dexp[a][b] = m[a][0] * e[0][b] + m[a][1] * e[1][b];
                    }
                }
                let (g, dg) = sphere_gbar(k, x);
                Ok(NormalSample { g, dg, pos, dexp })
            }
            Source::Grid => unreachable!(),
        }
    }

    fn integrate_jacobi(&mut self, steps_per_unit: usize) -> Result<()> {
        let eps = self.epsilon;
        let h_unit = 1.0 / steps_per_unit as f64;
        let grid = self.grid.clone();
        for l in 0..grid.n_theta {
            let (s, c) = grid.theta[l].sin_cos();
            let u = self.frame_apply([c, s]);
            let perp = self.frame_apply([-s, c]);
            let mut y = [self.p[0], self.p[1], u[0], u[1], 0.0, 0.0, perp[0], perp[1]];
            let mut rho = 0.0;
            // radial nodes are stored outermost first
            for i in (0..grid.n_r).rev() {
                let target = grid.r[i];
                let n = ((target - rho) / h_unit).ceil().max(1.0) as usize;
                let h = (target - rho) / n as f64;
                for _ in 0..n {
                    y = self.chart.jacobi_step(y, eps * h);
                }
                rho = target;
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(Error::GeodesicFailure {
                        last_point: [y[0], y[1]],
                        reason: "non-finite geodesic state".into(),
                    });
                }
                let pos = [y[0], y[1]];
                let gd = [y[2], y[3]];
                let jr = [y[4] / (eps * rho), y[5] / (eps * rho)];
                let mut dexp = [[0.0; 2]; 2];
                for a in 0..2 {
                    dexp[a][0] = c * gd[a] - s * jr[a];
                    dexp[a][1] = s * gd[a] + c * jr[a];
                }
                let gp = self.chart.metric(pos);
                let g = pull(&gp, &dexp);
                let k = grid.idx(i, l);
                self.store(k, &NormalSample { g, dg: [[0.0; 3]; 2], pos, dexp });
            }
        }
        for c in 0..3 {
            let (gx, gy) = grid.cartesian_gradient(&self.gbar[c]);
            self.dgbar[0][c] = gx;
            self.dgbar[1][c] = gy;
        }
        Ok(())
    }

    /// All fields at distance `rho` along the grid ray `l`.
    pub fn eval(&self, l: usize, rho: f64) -> Result<NormalSample> {
        if rho > self.r_max() * (1.0 + 1e-12) || rho < 0.0 {
            return Err(Error::OutOfRange {
                radius: rho,
                limit: self.r_max(),
            });
        }
        match self.source {
            Source::Grid => {
                let (line, w) = self.grid.ray_weights(l, rho);
                let f = |u: &Vec<f64>| -> f64 {
                    self.grid
                        .line_values(u, line)
                        .iter()
                        .zip(&w)
                        .map(|(a, b)| a * b)
                        .sum()
                };
                let g = [f(&self.gbar[0]), f(&self.gbar[1]), f(&self.gbar[2])];
                let dg = [
                    [f(&self.dgbar[0][0]), f(&self.dgbar[0][1]), f(&self.dgbar[0][2])],
                    [f(&self.dgbar[1][0]), f(&self.dgbar[1][1]), f(&self.dgbar[1][2])],
                ];
                let pos = [f(&self.pos[0]), f(&self.pos[1])];
                let dexp = [
                    [f(&self.dexp[0][0]), f(&self.dexp[0][1])],
                    [f(&self.dexp[1][0]), f(&self.dexp[1][1])],
                ];
                Ok(NormalSample { g, dg, pos, dexp })
            }
            _ => self.closed_form(self.grid.theta[l], rho),
        }
    }

    pub fn sqrt_det_values(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|k| sym_det(&[self.gbar[0][k], self.gbar[1][k], self.gbar[2][k]]).sqrt())
            .collect()
    }

    /// max over the table of |ḡ − I| (entrywise)
    pub fn deviation_from_identity(&self) -> f64 {
        let mut m = 0.0f64;
        for k in 0..self.grid.len() {
            m = m
                .max((self.gbar[0][k] - 1.0).abs())
                .max(self.gbar[1][k].abs())
                .max((self.gbar[2][k] - 1.0).abs());
        }
        m
    }

    /// Rows (r, θ, ḡ11, ḡ12, ḡ22, sqrt det ḡ).
    pub fn rows(&self) -> Vec<[f64; 6]> {
        let sd = self.sqrt_det_values();
        let mut out = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.n_r {
            for l in 0..self.grid.n_theta {
                let k = self.grid.idx(i, l);
                out.push([
                    self.grid.r[i],
                    self.grid.theta[l],
                    self.gbar[0][k],
                    self.gbar[1][k],
                    self.gbar[2][k],
                    sd[k],
                ]);
            }
        }
        out
    }
}

/// Mᵀ g M for a 2x2 matrix M.
pub fn pull(g: &Sym2, m: &[[f64; 2]; 2]) -> Sym2 {
    let col = |b: usize| [m[0][b], m[1][b]];
    let ip = |a: [f64; 2], b: [f64; 2]| {
        a[0] * (g[0] * b[0] + g[1] * b[1]) + a[1] * (g[1] * b[0] + g[2] * b[1])
    };
    [ip(col(0), col(0)), ip(col(0), col(1)), ip(col(1), col(1))]
}

/// ḡ and ∂ḡ for the sphere of curvature k² (k = ε/R) in normal coordinates:
/// ḡ = S I + (1 − S) x̂x̂ᵀ with S = (sin kρ / kρ)².
pub fn sphere_gbar(k: f64, x: [f64; 2]) -> (Sym2, [Sym2; 2]) {
    let rho = x[0].hypot(x[1]);
    if rho == 0.0 {
        return ([1.0, 0.0, 1.0], [[0.0; 3]; 2]);
    }
    let u = k * rho;
    let (sinc, dsinc) = if u.abs() < 1e-4 {
        (1.0 - u * u / 6.0 + u.powi(4) / 120.0, -u / 3.0 + u.powi(3) / 30.0)
    } else {
        (u.sin() / u, (u * u.cos() - u.sin()) / (u * u))
    };
    let s = sinc * sinc;
    let ds = 2.0 * sinc * dsinc * k;
    // (1 − S)/ρ, stable for small ρ
    let one_minus_s_over_rho = if u.abs() < 1e-4 {
        k * k * rho / 3.0
    } else {
        (1.0 - s) / rho
    };
    let xh = [x[0] / rho, x[1] / rho];
    let g = [
        s + (1.0 - s) * xh[0] * xh[0],
        (1.0 - s) * xh[0] * xh[1],
        s + (1.0 - s) * xh[1] * xh[1],
    ];
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut dg = [[0.0; 3]; 2];
    let pairs = [(0, 0), (0, 1), (1, 1)];
    for (m, dgm) in dg.iter_mut().enumerate() {
        for (c, &(i, j)) in pairs.iter().enumerate() {
            let dxx = (d(i, m) - xh[i] * xh[m]) * xh[j] + xh[i] * (d(j, m) - xh[j] * xh[m]);
            dgm[c] = ds * xh[m] * (d(i, j) - xh[i] * xh[j]) + one_minus_s_over_rho * dxx;
        }
    }
    (g, dg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::ConformalCosine;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn sphere_closed_form_derivatives() {
        let k = 0.3;
        let x = [0.7, -0.4];
        let (_, dg) = sphere_gbar(k, x);
        let h = 1e-6;
        for m in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[m] += h;
            xm[m] -= h;
            let (a, b) = (sphere_gbar(k, xp).0, sphere_gbar(k, xm).0);
            for c in 0..3 {
                assert!(((a[c] - b[c]) / (2.0 * h) - dg[m][c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn jacobi_route_reproduces_sphere_closed_form() {
        // the sphere through the generic metric interface
        #[derive(Debug)]
        struct S;
        impl crate::geometry::chart::MetricField for S {
            fn metric(&self, x: Point) -> Sym2 {
                crate::geometry::chart::sphere::metric(1.0, x)
            }
        }
        let generic = ManifoldChart::custom(Arc::new(S), 2.0);
        let closed = ManifoldChart::round_sphere(1.0);
        let spec = NormalGridSpec::default();
        let p = [0.3, 0.2];
        let a = NormalMetric::new(&generic, p, 0.2, spec).unwrap();
        let b = NormalMetric::new(&closed, p, 0.2, spec).unwrap();
        assert_eq!(a.provenance, Provenance::JacobiIntegrated);
        let mut err = 0.0f64;
        for k in 0..a.grid.len() {
            for c in 0..3 {
                err = err.max((a.gbar[c][k] - b.gbar[c][k]).abs());
            }
        }
        assert!(err < 1e-7, "err {err}");
        let sa = a.eval(3, 1.1).unwrap();
        let sb = b.eval(3, 1.1).unwrap();
        for m in 0..2 {
            for c in 0..3 {
                assert!((sa.dg[m][c] - sb.dg[m][c]).abs() < 1e-6);
            }
        }
        assert!((sa.pos[0] - sb.pos[0]).abs() < 1e-9);
    }

    #[test]
    fn identity_at_origin_and_small_epsilon() {
        let chart = ManifoldChart::conformal_torus(0.1, [2.0 * PI, 2.0 * PI]);
        let _ = ConformalCosine { amplitude: 0.1 };
        for eps in [0.1, 0.05] {
            let nm = NormalMetric::new(&chart, [0.4, 0.0], eps, NormalGridSpec::default()).unwrap();
            let s = nm.eval(0, 0.0).unwrap();
            assert!((s.g[0] - 1.0).abs() < 1e-10 && s.g[1].abs() < 1e-10);
            assert!(s.dg[0].iter().chain(&s.dg[1]).all(|v| v.abs() < 1e-8));
            // deviation is O(ε²)
            let dev = nm.deviation_from_identity() / (eps * eps);
            assert!(dev < 1.0, "{dev}");
        }
    }

    #[test]
    fn rotation_equivariance_on_sphere() {
        let chart = ManifoldChart::round_sphere(1.0);
        let nm = NormalMetric::new(&chart, [0.0, 0.0], 0.3, NormalGridSpec::default()).unwrap();
        let a = nm.eval(0, 1.2).unwrap().g;
        for l in [1, 5, 11] {
            let t = nm.grid.theta[l];
            let (s, c) = t.sin_cos();
            // Rᵀ-conjugate of the metric on the x-axis
            let rt = [[c, s], [-s, c]];
            let g = pull(&a, &rt);
            let b = nm.eval(l, 1.2).unwrap().g;
            for k in 0..3 {
                assert!((g[k] - b[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn precondition_on_injectivity_radius() {
        let chart = ManifoldChart::round_sphere(1.0);
        let e = NormalMetric::new(&chart, [0.0, 0.0], 2.5, NormalGridSpec::default()).unwrap_err();
        assert_eq!(e.kind(), "precondition");
    }
}
