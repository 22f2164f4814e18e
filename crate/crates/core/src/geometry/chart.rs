//! Model 2-manifolds given by a single chart: metric, Christoffel symbols,
//! exponential and logarithm maps.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];
pub type Vec2 = [f64; 2];
/// Symmetric 2x2 matrix stored as (a11, a12, a22).
pub type Sym2 = [f64; 3];
/// Γ[k][i][j] = Γ^k_ij
pub type Christoffel = [[[f64; 2]; 2]; 2];
/// dΓ[l][k][i][j] = ∂_l Γ^k_ij
pub type ChristoffelGrad = [Christoffel; 2];

pub fn sym_apply(g: &Sym2, v: Vec2) -> Vec2 {
    [g[0] * v[0] + g[1] * v[1], g[1] * v[0] + g[2] * v[1]]
}

pub fn sym_inner(g: &Sym2, a: Vec2, b: Vec2) -> f64 {
    let gb = sym_apply(g, b);
    a[0] * gb[0] + a[1] * gb[1]
}

pub fn sym_det(g: &Sym2) -> f64 {
    g[0] * g[2] - g[1] * g[1]
}

pub fn sym_inv(g: &Sym2) -> Sym2 {
    let d = sym_det(g);
    [g[2] / d, -g[1] / d, g[0] / d]
}

pub fn sym_min_eig(g: &Sym2) -> f64 {
    let tr = g[0] + g[2];
    let d = sym_det(g);
    0.5 * tr - (0.25 * tr * tr - d).max(0.0).sqrt()
}

/// A metric field on chart coordinates. Christoffel symbols and their
/// derivatives default to central differences of `metric`.
pub trait MetricField: Send + Sync + Debug {
    fn metric(&self, x: Point) -> Sym2;

    fn christoffel(&self, x: Point) -> Christoffel {
        let h = 1e-5;
        let mut dg = [[0.0; 3]; 2];
        for (l, d) in dg.iter_mut().enumerate() {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            let (gp, gm) = (self.metric(xp), self.metric(xm));
            for c in 0..3 {
                d[c] = (gp[c] - gm[c]) / (2.0 * h);
            }
        }
        christoffel_from(&self.metric(x), &dg)
    }

    fn christoffel_grad(&self, x: Point) -> ChristoffelGrad {
        let h = 1e-5;
        let mut out = [[[[0.0; 2]; 2]; 2]; 2];
        for (l, o) in out.iter_mut().enumerate() {
            let mut xp = x;
            let mut xm = x;
            xp[l] += h;
            xm[l] -= h;
            let (a, b) = (self.christoffel(xp), self.christoffel(xm));
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        o[k][i][j] = (a[k][i][j] - b[k][i][j]) / (2.0 * h);
                    }
                }
            }
        }
        out
    }
}

fn comp(g: &Sym2, i: usize, j: usize) -> f64 {
    match (i, j) {
        (0, 0) => g[0],
        (1, 1) => g[2],
        _ => g[1],
    }
}

/// Γ from the metric and its first derivatives dg[l] = ∂_l g.
pub fn christoffel_from(g: &Sym2, dg: &[Sym2; 2]) -> Christoffel {
    let gi = sym_inv(g);
    let mut out = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for m in 0..2 {
                    s += comp(&gi, k, m)
                        * (comp(&dg[i], m, j) + comp(&dg[j], m, i) - comp(&dg[m], i, j));
                }
                out[k][i][j] = 0.5 * s;
            }
        }
    }
    out
}

/// g = (1 + A cos x₁) I, with analytic Christoffel symbols.
#[derive(Clone, Copy, Debug)]
pub struct ConformalCosine {
    pub amplitude: f64,
}

impl ConformalCosine {
    // σ = ½ ln(1 + A cos x₁): returns (σ₁, σ₁₁)
    fn sigma(&self, x: Point) -> (f64, f64) {
        let a = self.amplitude;
        let w = 1.0 + a * x[0].cos();
        let s1 = -a * x[0].sin() / (2.0 * w);
        let s11 = -a * (x[0].cos() + a) / (2.0 * w * w);
        (s1, s11)
    }
}

impl MetricField for ConformalCosine {
    fn metric(&self, x: Point) -> Sym2 {
        let w = 1.0 + self.amplitude * x[0].cos();
        [w, 0.0, w]
    }

    // Γ^k_ij = δ^k_i σ_j + δ^k_j σ_i − δ_ij σ_k
    fn christoffel(&self, x: Point) -> Christoffel {
        let (s1, _) = self.sigma(x);
        conformal_gamma([s1, 0.0])
    }

    fn christoffel_grad(&self, x: Point) -> ChristoffelGrad {
        let (_, s11) = self.sigma(x);
        [conformal_gamma([s11, 0.0]), [[[0.0; 2]; 2]; 2]]
    }
}

fn conformal_gamma(s: [f64; 2]) -> Christoffel {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut out = [[[0.0; 2]; 2]; 2];
    for k in 0..2 {
        for i in 0..2 {
            for j in 0..2 {
                out[k][i][j] = d(k, i) * s[j] + d(k, j) * s[i] - d(i, j) * s[k];
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Isometry {
    /// x₁ ↦ 2a − x₁
    ReflectX1 { about: f64 },
    /// x₂ ↦ 2a − x₂
    ReflectX2 { about: f64 },
    TranslateX1 { shift: f64 },
    TranslateX2 { shift: f64 },
    /// rotation about the chart origin
    Rotation { angle: f64 },
}

impl Isometry {
    pub fn apply(&self, p: Point) -> Point {
        match *self {
            Isometry::ReflectX1 { about } => [2.0 * about - p[0], p[1]],
            Isometry::ReflectX2 { about } => [p[0], 2.0 * about - p[1]],
            Isometry::TranslateX1 { shift } => [p[0] + shift, p[1]],
            Isometry::TranslateX2 { shift } => [p[0], p[1] + shift],
            Isometry::Rotation { angle } => {
                let (s, c) = angle.sin_cos();
                [c * p[0] - s * p[1], s * p[0] + c * p[1]]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum ChartKind {
    FlatTorus { periods: [f64; 2] },
    /// azimuthal equidistant chart about the north pole
    RoundSphere { radius: f64 },
    /// g = (1 + A cos x₁) I on the torus
    ConformalTorus { amplitude: f64, periods: [f64; 2] },
    Custom { field: Arc<dyn MetricField> },
}

#[derive(Clone, Debug)]
pub struct ManifoldChart {
    pub kind: ChartKind,
    pub injectivity_radius_lower_bound: f64,
    pub known_isometries: Vec<Isometry>,
    conformal: Option<ConformalCosine>,
}

const EXP_TOL: f64 = 1e-13;

impl ManifoldChart {
    pub fn flat_torus(periods: [f64; 2]) -> Self {
        ManifoldChart {
            kind: ChartKind::FlatTorus { periods },
            injectivity_radius_lower_bound: 0.5 * periods[0].min(periods[1]),
            known_isometries: vec![
                Isometry::TranslateX1 { shift: periods[0] / 4.0 },
                Isometry::TranslateX2 { shift: periods[1] / 4.0 },
                Isometry::ReflectX1 { about: 0.0 },
                Isometry::ReflectX1 { about: periods[0] / 4.0 },
                Isometry::ReflectX2 { about: 0.0 },
            ],
            conformal: None,
        }
    }

    pub fn standard_torus() -> Self {
        Self::flat_torus([2.0 * PI, 2.0 * PI])
    }

    pub fn round_sphere(radius: f64) -> Self {
        ManifoldChart {
            kind: ChartKind::RoundSphere { radius },
            injectivity_radius_lower_bound: PI * radius,
            known_isometries: vec![
                Isometry::Rotation { angle: PI / 4.0 },
                Isometry::ReflectX2 { about: 0.0 },
            ],
            conformal: None,
        }
    }

    pub fn conformal_torus(amplitude: f64, periods: [f64; 2]) -> Self {
        assert!(amplitude.abs() < 1.0);
        // geodesics shorter than this stay inside one fundamental domain
        let bound = 0.25 * periods[0].min(periods[1]) * (1.0 - amplitude.abs()).sqrt();
        ManifoldChart {
            kind: ChartKind::ConformalTorus { amplitude, periods },
            injectivity_radius_lower_bound: bound,
            known_isometries: vec![
                Isometry::ReflectX1 { about: 0.0 },
                Isometry::ReflectX1 { about: PI },
                Isometry::ReflectX2 { about: 0.0 },
                Isometry::TranslateX2 { shift: periods[1] / 4.0 },
            ],
            conformal: Some(ConformalCosine { amplitude }),
        }
    }

    pub fn custom(field: Arc<dyn MetricField>, injectivity_radius_lower_bound: f64) -> Self {
        ManifoldChart {
            kind: ChartKind::Custom { field },
            injectivity_radius_lower_bound,
            known_isometries: Vec::new(),
            conformal: None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ChartKind::FlatTorus { .. } => "flat_torus",
            ChartKind::RoundSphere { .. } => "round_sphere",
            ChartKind::ConformalTorus { .. } => "conformal_torus",
            ChartKind::Custom { .. } => "custom_chart",
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, ChartKind::FlatTorus { .. })
    }

    pub fn periods(&self) -> Option<[f64; 2]> {
        match self.kind {
            ChartKind::FlatTorus { periods } | ChartKind::ConformalTorus { periods, .. } => {
                Some(periods)
            }
            _ => None,
        }
    }

    pub fn metric(&self, x: Point) -> Sym2 {
        match &self.kind {
            ChartKind::FlatTorus { .. } => [1.0, 0.0, 1.0],
            ChartKind::RoundSphere { radius } => sphere::metric(*radius, x),
            ChartKind::ConformalTorus { .. } => self.conformal.unwrap().metric(x),
            ChartKind::Custom { field } => field.metric(x),
        }
    }

    pub fn christoffel(&self, x: Point) -> Christoffel {
        match &self.kind {
            ChartKind::FlatTorus { .. } => [[[0.0; 2]; 2]; 2],
            ChartKind::ConformalTorus { .. } => self.conformal.unwrap().christoffel(x),
            ChartKind::RoundSphere { radius } => sphere::Field(*radius).christoffel(x),
            ChartKind::Custom { field } => field.christoffel(x),
        }
    }

    pub fn christoffel_grad(&self, x: Point) -> ChristoffelGrad {
        match &self.kind {
            ChartKind::FlatTorus { .. } => [[[[0.0; 2]; 2]; 2]; 2],
            ChartKind::ConformalTorus { .. } => self.conformal.unwrap().christoffel_grad(x),
            ChartKind::RoundSphere { radius } => sphere::Field(*radius).christoffel_grad(x),
            ChartKind::Custom { field } => field.christoffel_grad(x),
        }
    }

    /// Positive definiteness on the given sample points.
    pub fn check_metric(&self, samples: &[Point]) -> Result<()> {
        for &x in samples {
            let g = self.metric(x);
            if !(sym_min_eig(&g) > 0.0) || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::MetricDegenerate(format!(
                    "metric {g:?} not positive definite at {x:?}"
                )));
            }
        }
        Ok(())
    }

    /// Reduce a point to the fundamental domain (periodic charts).
    pub fn wrap(&self, p: Point) -> Point {
        match self.periods() {
            Some(per) => [p[0].rem_euclid(per[0]), p[1].rem_euclid(per[1])],
            None => p,
        }
    }

    /// Orthonormal frame (e₁, e₂) at p, Gram–Schmidt on the coordinate axes.
    pub fn frame(&self, p: Point) -> [Vec2; 2] {
        let g = self.metric(p);
        let e1 = [1.0 / g[0].sqrt(), 0.0];
        let u = [0.0, 1.0];
        let c = sym_inner(&g, u, e1);
        let w = [u[0] - c * e1[0], u[1] - c * e1[1]];
        let nw = sym_inner(&g, w, w).sqrt();
        [e1, [w[0] / nw, w[1] / nw]]
    }

    pub fn norm(&self, p: Point, v: Vec2) -> f64 {
        sym_inner(&self.metric(p), v, v).sqrt()
    }

    pub fn exp_map(&self, p: Point, v: Vec2) -> Result<Point> {
        if v == [0.0, 0.0] {
            return Ok(p);
        }
        match &self.kind {
            ChartKind::FlatTorus { .. } => Ok([p[0] + v[0], p[1] + v[1]]),
            ChartKind::RoundSphere { radius } => sphere::exp(*radius, p, v),
            _ => self.exp_adaptive(p, v, EXP_TOL),
        }
    }

    /// d exp_p at v, as a 2x2 matrix (columns are images of coordinate vectors).
    pub fn exp_with_differential(&self, p: Point, v: Vec2) -> Result<(Point, [[f64; 2]; 2])> {
        match &self.kind {
            ChartKind::FlatTorus { .. } => Ok(([p[0] + v[0], p[1] + v[1]], [[1.0, 0.0], [0.0, 1.0]])),
            ChartKind::RoundSphere { radius } => sphere::exp_diff(*radius, p, v),
            _ => {
                let steps = 256;
                let mut cols = [[0.0; 2]; 2];
                let mut end = p;
                for (i, col) in cols.iter_mut().enumerate() {
                    let mut w = [0.0, 0.0];
                    w[i] = 1.0;
                    let y = self.jacobi_fixed(p, v, [0.0, 0.0], w, 1.0, steps)?;
                    end = [y[0], y[1]];
                    *col = [y[4], y[5]];
                }
                Ok((end, [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]]))
            }
        }
    }

    /// Inverse of `exp_map` near p.
    pub fn log_map(&self, p: Point, q: Point) -> Result<Vec2> {
        match &self.kind {
            ChartKind::FlatTorus { periods } => {
                let mut d = [q[0] - p[0], q[1] - p[1]];
                for i in 0..2 {
                    d[i] -= periods[i] * (d[i] / periods[i]).round();
                }
                Ok(d)
            }
            ChartKind::RoundSphere { radius } => sphere::log(*radius, p, q),
            _ => {
                let mut d = [q[0] - p[0], q[1] - p[1]];
                if let Some(per) = self.periods() {
                    for i in 0..2 {
                        d[i] -= per[i] * (d[i] / per[i]).round();
                    }
                }
                let target = [p[0] + d[0], p[1] + d[1]];
                let mut v = d;
                for _ in 0..40 {
                    let (e, m) = self.exp_with_differential(p, v)?;
                    let r = [target[0] - e[0], target[1] - e[1]];
                    if r[0].abs().max(r[1].abs()) < 1e-14 * (1.0 + v[0].abs() + v[1].abs()) {
                        return Ok(v);
                    }
                    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                    if det.abs() < 1e-300 {
                        break;
                    }
                    v[0] += (m[1][1] * r[0] - m[0][1] * r[1]) / det;
                    v[1] += (-m[1][0] * r[0] + m[0][0] * r[1]) / det;
                }
                let (e, _) = self.exp_with_differential(p, v)?;
                let err = (target[0] - e[0]).hypot(target[1] - e[1]);
                if err < 1e-10 {
                    Ok(v)
                } else {
                    Err(Error::GeodesicFailure {
                        last_point: e,
                        reason: format!("log map did not converge (miss {err:.2e})"),
                    })
                }
            }
        }
    }

    pub fn distance(&self, p: Point, q: Point) -> Result<f64> {
        let v = self.log_map(p, q)?;
        Ok(self.norm(p, v))
    }

    fn geodesic_rhs(&self, y: [f64; 4]) -> [f64; 4] {
        let g = self.christoffel([y[0], y[1]]);
        let v = [y[2], y[3]];
        let mut a = [0.0; 2];
        for (k, ak) in a.iter_mut().enumerate() {
            for i in 0..2 {
                for j in 0..2 {
                    *ak -= g[k][i][j] * v[i] * v[j];
                }
            }
        }
        [v[0], v[1], a[0], a[1]]
    }

    fn rk4_geodesic(&self, y: [f64; 4], h: f64) -> [f64; 4] {
        let add = |a: [f64; 4], b: [f64; 4], s: f64| {
            [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
        };
        let k1 = self.geodesic_rhs(y);
        let k2 = self.geodesic_rhs(add(y, k1, h / 2.0));
        let k3 = self.geodesic_rhs(add(y, k2, h / 2.0));
        let k4 = self.geodesic_rhs(add(y, k3, h));
        let mut out = y;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Adaptive RK4 with step doubling and local extrapolation.
    pub fn exp_adaptive(&self, p: Point, v: Vec2, tol: f64) -> Result<Point> {
        let mut y = [p[0], p[1], v[0], v[1]];
        let mut t = 0.0;
        let mut h = 0.125;
        while t < 1.0 {
            if t + h > 1.0 {
                h = 1.0 - t;
            }
            let one = self.rk4_geodesic(y, h);
            let half = self.rk4_geodesic(self.rk4_geodesic(y, h / 2.0), h / 2.0);
            let err = (0..4).map(|i| (one[i] - half[i]).abs()).fold(0.0, f64::max) / 15.0;
            if err <= tol || h < 1e-12 {
                if h < 1e-12 && err > tol {
                    return Err(Error::GeodesicFailure {
                        last_point: [y[0], y[1]],
                        reason: "step size underflow".into(),
                    });
                }
                for i in 0..4 {
                    y[i] = half[i] + (half[i] - one[i]) / 15.0;
                }
                if !y.iter().all(|c| c.is_finite()) || sym_min_eig(&self.metric([y[0], y[1]])) <= 0.0
                {
                    return Err(Error::GeodesicFailure {
                        last_point: [y[0], y[1]],
                        reason: "left the chart".into(),
                    });
                }
                t += h;
                let fac = if err == 0.0 { 2.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(0.2, 2.0) };
                h *= fac;
            } else {
                h *= (0.9 * (tol / err).powf(0.2)).clamp(0.1, 0.5);
            }
        }
        Ok([y[0], y[1]])
    }

    /// Fixed-step RK4 endpoint of the unit-time geodesic.
    pub fn exp_fixed(&self, p: Point, v: Vec2, steps: usize) -> Point {
        let mut y = [p[0], p[1], v[0], v[1]];
        let h = 1.0 / steps as f64;
        for _ in 0..steps {
            y = self.rk4_geodesic(y, h);
        }
        [y[0], y[1]]
    }

    fn jacobi_rhs(&self, y: [f64; 8]) -> [f64; 8] {
        let x = [y[0], y[1]];
        let v = [y[2], y[3]];
        let j = [y[4], y[5]];
        let jd = [y[6], y[7]];
        let g = self.christoffel(x);
        let dg = self.christoffel_grad(x);
        let mut a = [0.0; 2];
        let mut ja = [0.0; 2];
        for k in 0..2 {
            for i in 0..2 {
                for m in 0..2 {
                    a[k] -= g[k][i][m] * v[i] * v[m];
                    ja[k] -= 2.0 * g[k][i][m] * v[i] * jd[m];
                    for l in 0..2 {
                        ja[k] -= dg[l][k][i][m] * j[l] * v[i] * v[m];
                    }
                }
            }
        }
        [v[0], v[1], a[0], a[1], jd[0], jd[1], ja[0], ja[1]]
    }

    /// Geodesic from p with velocity v together with the variation field with
    /// J(0) = j0, J'(0) = jd0, integrated over [0, t_end] with fixed RK4 steps.
    /// Returns (x, v, J, J') at t_end.
    pub fn jacobi_fixed(
        &self,
        p: Point,
        v: Vec2,
        j0: Vec2,
        jd0: Vec2,
        t_end: f64,
        steps: usize,
    ) -> Result<[f64; 8]> {
        let mut y = [p[0], p[1], v[0], v[1], j0[0], j0[1], jd0[0], jd0[1]];
        let h = t_end / steps as f64;
        for _ in 0..steps {
            y = self.jacobi_step(y, h);
        }
        if !y.iter().all(|c| c.is_finite()) {
            return Err(Error::GeodesicFailure {
                last_point: [p[0], p[1]],
                reason: "non-finite Jacobi field".into(),
            });
        }
        Ok(y)
    }

    pub fn jacobi_step(&self, y: [f64; 8], h: f64) -> [f64; 8] {
        let add = |a: [f64; 8], b: [f64; 8], s: f64| {
            let mut o = a;
            for i in 0..8 {
                o[i] += s * b[i];
            }
            o
        };
        let k1 = self.jacobi_rhs(y);
        let k2 = self.jacobi_rhs(add(y, k1, h / 2.0));
        let k3 = self.jacobi_rhs(add(y, k2, h / 2.0));
        let k4 = self.jacobi_rhs(add(y, k3, h));
        let mut out = y;
        for i in 0..8 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// A small set of chart points for metric and nonlinearity checks.
    pub fn sample_points(&self, k: usize) -> Vec<Point> {
        let mut out = Vec::new();
        let span = match &self.kind {
            ChartKind::RoundSphere { radius } => [0.9 * PI * radius, 0.9 * PI * radius],
            _ => self.periods().unwrap_or([2.0 * PI, 2.0 * PI]),
        };
        for i in 0..k {
            for j in 0..k {
                let p = [span[0] * i as f64 / k as f64, span[1] * j as f64 / k as f64];
                out.push(match self.kind {
                    ChartKind::RoundSphere { .. } => [p[0] - span[0] / 2.0, p[1] - span[1] / 2.0],
                    _ => p,
                });
            }
        }
        out
    }
}

/// Azimuthal equidistant chart of the sphere of radius R about the north pole.
pub(crate) mod sphere {
    use super::*;

    #[derive(Debug)]
    pub struct Field(pub f64);

    impl MetricField for Field {
        fn metric(&self, x: Point) -> Sym2 {
            metric(self.0, x)
        }
    }

    fn sinc(u: f64) -> f64 {
        if u.abs() < 1e-6 {
            1.0 - u * u / 6.0
        } else {
            u.sin() / u
        }
    }

    pub fn metric(r: f64, x: Point) -> Sym2 {
        let rho = x[0].hypot(x[1]);
        let s = sinc(rho / r).powi(2);
        if rho == 0.0 {
            return [1.0, 0.0, 1.0];
        }
        let (u0, u1) = (x[0] / rho, x[1] / rho);
        [
            s + (1.0 - s) * u0 * u0,
            (1.0 - s) * u0 * u1,
            s + (1.0 - s) * u1 * u1,
        ]
    }

    pub fn embed(r: f64, c: Point) -> [f64; 3] {
        let rho = c[0].hypot(c[1]);
        let u = rho / r;
        // R sin(u) c/ρ = sinc(u) c
        let s = sinc(u);
        [s * c[0], s * c[1], r * u.cos()]
    }

    /// 3x2 differential of `embed`, rows are ambient components.
    pub fn embed_diff(r: f64, c: Point) -> [[f64; 2]; 3] {
        let rho = c[0].hypot(c[1]);
        let u = rho / r;
        let s = sinc(u);
        if rho < 1e-14 {
            return [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        }
        let ds = (u.cos() - s) / u / r; // d sinc(ρ/R)/dρ
        let (u0, u1) = (c[0] / rho, c[1] / rho);
        [
            [s + ds * c[0] * u0, ds * c[0] * u1],
            [ds * c[1] * u0, s + ds * c[1] * u1],
            [-u.sin() * u0, -u.sin() * u1],
        ]
    }

    pub fn chart_of(r: f64, x: [f64; 3]) -> Result<Point> {
        let h = x[0].hypot(x[1]);
        let rho = r * h.atan2(x[2]);
        if rho >= PI * r * (1.0 - 1e-12) {
            return Err(Error::GeodesicFailure {
                last_point: [0.0, 0.0],
                reason: "antipode of the chart center".into(),
            });
        }
        if h == 0.0 {
            return Ok([0.0, 0.0]);
        }
        Ok([rho * x[0] / h, rho * x[1] / h])
    }

    fn tangent3(r: f64, p: Point, v: Vec2) -> [f64; 3] {
        let d = embed_diff(r, p);
        [
            d[0][0] * v[0] + d[0][1] * v[1],
            d[1][0] * v[0] + d[1][1] * v[1],
            d[2][0] * v[0] + d[2][1] * v[1],
        ]
    }

    fn norm3(a: [f64; 3]) -> f64 {
        (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
    }

    pub fn exp(r: f64, p: Point, v: Vec2) -> Result<Point> {
        let p3 = embed(r, p);
        let w = tangent3(r, p, v);
        let nw = norm3(w);
        if nw == 0.0 {
            return Ok(p);
        }
        let a = nw / r;
        let q3 = [
            a.cos() * p3[0] + r * a.sin() * w[0] / nw,
            a.cos() * p3[1] + r * a.sin() * w[1] / nw,
            a.cos() * p3[2] + r * a.sin() * w[2] / nw,
        ];
        chart_of(r, q3)
    }

    pub fn exp_diff(r: f64, p: Point, v: Vec2) -> Result<(Point, [[f64; 2]; 2])> {
        let p3 = embed(r, p);
        let w = tangent3(r, p, v);
        let d = embed_diff(r, p);
        let nw = norm3(w);
        let q = exp(r, p, v)?;
        let dq = embed_diff(r, q);
        // ambient differential of w ↦ cos(|w|/R) P + R sin(|w|/R) ŵ
        let mut amb = [[0.0; 2]; 3];
        for i in 0..2 {
            let dw = [d[0][i], d[1][i], d[2][i]];
            let out = if nw < 1e-14 {
                dw
            } else {
                let a = nw / r;
                let wh = [w[0] / nw, w[1] / nw, w[2] / nw];
                let par = wh[0] * dw[0] + wh[1] * dw[1] + wh[2] * dw[2];
                let mut o = [0.0; 3];
                for c in 0..3 {
                    o[c] = -a.sin() / r * par * p3[c]
                        + a.cos() * par * wh[c]
                        + r * a.sin() / nw * (dw[c] - par * wh[c]);
                }
                o
            };
            for c in 0..3 {
                amb[c][i] = out[c];
            }
        }
        // back to the chart: (Dᵀ D)⁻¹ Dᵀ at q
        let g = metric(r, q);
        let gi = sym_inv(&g);
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            let dt = [
                dq[0][0] * amb[0][i] + dq[1][0] * amb[1][i] + dq[2][0] * amb[2][i],
                dq[0][1] * amb[0][i] + dq[1][1] * amb[1][i] + dq[2][1] * amb[2][i],
            ];
            let c = sym_apply(&gi, dt);
            m[0][i] = c[0];
            m[1][i] = c[1];
        }
        Ok((q, m))
    }

    pub fn log(r: f64, p: Point, q: Point) -> Result<Vec2> {
        let p3 = embed(r, p);
        let q3 = embed(r, q);
        let dot = p3[0] * q3[0] + p3[1] * q3[1] + p3[2] * q3[2];
        let cr = [
            p3[1] * q3[2] - p3[2] * q3[1],
            p3[2] * q3[0] - p3[0] * q3[2],
            p3[0] * q3[1] - p3[1] * q3[0],
        ];
        let omega = norm3(cr).atan2(dot);
        let c = dot / (r * r);
        let t = [q3[0] - c * p3[0], q3[1] - c * p3[1], q3[2] - c * p3[2]];
        let nt = norm3(t);
        if nt < 1e-300 {
            return Ok([0.0, 0.0]);
        }
        let v3 = [r * omega * t[0] / nt, r * omega * t[1] / nt, r * omega * t[2] / nt];
        let d = embed_diff(r, p);
        let dt = [
            d[0][0] * v3[0] + d[1][0] * v3[1] + d[2][0] * v3[2],
            d[0][1] * v3[0] + d[1][1] * v3[1] + d[2][1] * v3[2],
        ];
        Ok(sym_apply(&sym_inv(&metric(r, p)), dt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_exp_and_log() {
        let t = ManifoldChart::standard_torus();
        assert_eq!(t.exp_map([0.0, 0.0], [0.3, 0.4]).unwrap(), [0.3, 0.4]);
        let v = t.log_map([0.1, 0.1], [2.0 * PI - 0.1, 0.2]).unwrap();
        assert!((v[0] + 0.2).abs() < 1e-14 && (v[1] - 0.1).abs() < 1e-14);
        assert_eq!(t.exp_map([1.0, 2.0], [0.0, 0.0]).unwrap(), [1.0, 2.0]);
    }

    #[test]
    fn sphere_exp_matches_great_circle() {
        let s = ManifoldChart::round_sphere(1.0);
        let q = s.exp_map([0.0, 0.0], [PI / 2.0 * 0.6, PI / 2.0 * 0.8]).unwrap();
        assert!((q[0].hypot(q[1]) - PI / 2.0).abs() < 1e-14);
        // from an off-center point the geodesic distance equals |v|_g
        let p = [0.4, -0.3];
        let v = [0.2, 0.5];
        let q = s.exp_map(p, v).unwrap();
        let d = s.distance(p, q).unwrap();
        assert!((d - s.norm(p, v)).abs() < 1e-12);
        let back = s.log_map(p, q).unwrap();
        assert!((back[0] - v[0]).abs() < 1e-12 && (back[1] - v[1]).abs() < 1e-12);
    }

    #[test]
    fn sphere_geodesic_equation_agrees_with_closed_form() {
        let s = ManifoldChart::round_sphere(1.0);
        let p = [0.3, 0.2];
        let v = [0.25, -0.1];
        let closed = s.exp_map(p, v).unwrap();
        let num = s.exp_adaptive(p, v, 1e-13);
        let num = num.unwrap();
        assert!((closed[0] - num[0]).abs() < 1e-8 && (closed[1] - num[1]).abs() < 1e-8);
        let (_, m) = s.exp_with_differential(p, v).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut vp = v;
            let mut vm = v;
            vp[i] += h;
            vm[i] -= h;
            let (a, b) = (s.exp_map(p, vp).unwrap(), s.exp_map(p, vm).unwrap());
            for k in 0..2 {
                assert!(((a[k] - b[k]) / (2.0 * h) - m[k][i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn conformal_exp_richardson_self_consistency() {
        let c = ManifoldChart::conformal_torus(0.1, [2.0 * PI, 2.0 * PI]);
        let a = c.exp_map([0.0, 0.0], [0.2, 0.0]).unwrap();
        let b = c.exp_fixed([0.0, 0.0], [0.2, 0.0], 64);
        let b2 = c.exp_fixed([0.0, 0.0], [0.2, 0.0], 128);
        assert!((b[0] - b2[0]).abs() < 1e-8);
        assert!((a[0] - b2[0]).abs() < 1e-8 && a[1].abs() < 1e-14);
        // generic log inverts exp
        let p = [0.5, 1.0];
        let v = [0.1, -0.07];
        let q = c.exp_map(p, v).unwrap();
        let w = c.log_map(p, q).unwrap();
        assert!((w[0] - v[0]).abs() < 1e-10 && (w[1] - v[1]).abs() < 1e-10);
    }

    #[test]
    fn analytic_christoffels_match_differences() {
        let c = ConformalCosine { amplitude: 0.1 };
        #[derive(Debug)]
        struct Plain(ConformalCosine);
        impl MetricField for Plain {
            fn metric(&self, x: Point) -> Sym2 {
                self.0.metric(x)
            }
        }
        let p = Plain(c);
        for x in [[0.3, 0.1], [2.0, -1.0]] {
            let a = c.christoffel(x);
            let b = p.christoffel(x);
            let da = c.christoffel_grad(x);
            let db = p.christoffel_grad(x);
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((a[k][i][j] - b[k][i][j]).abs() < 1e-9);
                        for l in 0..2 {
                            assert!((da[l][k][i][j] - db[l][k][i][j]).abs() < 1e-5);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn frames_are_orthonormal() {
        for ch in [
            ManifoldChart::round_sphere(1.0),
            ManifoldChart::conformal_torus(0.1, [2.0 * PI, 2.0 * PI]),
        ] {
            for p in ch.sample_points(3) {
                let g = ch.metric(p);
                let [e1, e2] = ch.frame(p);
                assert!((sym_inner(&g, e1, e1) - 1.0).abs() < 1e-13);
                assert!((sym_inner(&g, e2, e2) - 1.0).abs() < 1e-13);
                assert!(sym_inner(&g, e1, e2).abs() < 1e-13);
            }
        }
    }
}
