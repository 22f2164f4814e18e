//! Boundary shapes y ↦ β(y) = m(y)·y and the pulled-back disk metric ĝ = β*ḡ.

use serde::{Deserialize, Serialize};

use super::chart::{sym_det, sym_min_eig, Sym2};
use super::normal::{pull, NormalMetric, NormalSample};
use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::spectral::PolarGrid;

/// How v̄ is carried from the boundary into the disk.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// mode j extended as r^j (a polynomial in y, so ĝ stays smooth)
    #[default]
    Polynomial,
    /// χ(r)·v̄(θ) with χ the quintic smoothstep on [1/2, 3/4]
    QuinticCutoff,
}

pub fn quintic_cutoff(r: f64) -> (f64, f64) {
    let t = ((r - 0.5) / 0.25).clamp(0.0, 1.0);
    if t <= 0.0 || t >= 1.0 {
        return (t, 0.0);
    }
    let v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let dv = 30.0 * t * t * (1.0 - t) * (1.0 - t) / 0.25;
    (v, dv)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryShape {
    pub v0: f64,
    pub vbar: TrigSeries,
    #[serde(default)]
    pub extension: Extension,
}

/// m = 1 + v0 + extension of v̄ and its polar derivatives at one point.
#[derive(Clone, Copy, Debug)]
pub struct ScaleField {
    pub m: f64,
    pub m_r: f64,
    /// ∂_θ m / r
    pub m_t_over_r: f64,
}

impl BoundaryShape {
    pub fn zero(j_max: usize) -> Self {
        BoundaryShape {
            v0: 0.0,
            vbar: TrigSeries::zeros(j_max),
            extension: Extension::Polynomial,
        }
    }

    pub fn new(v0: f64, vbar: TrigSeries) -> Self {
        BoundaryShape {
            v0,
            vbar,
            extension: Extension::Polynomial,
        }
    }

    pub fn with_extension(mut self, extension: Extension) -> Self {
        self.extension = extension;
        self
    }

    /// boundary radius ρ(θ) = 1 + v0 + v̄(θ)
    pub fn radius(&self, theta: f64) -> f64 {
        1.0 + self.v0 + self.vbar.eval(theta)
    }

    /// Rejects shapes with a non-positive boundary radius, checked on a fine θ sample.
    pub fn validate(&self) -> Result<()> {
        let n = 64 * self.vbar.j_max().max(1);
        let min = (0..n)
            .map(|k| self.radius(2.0 * std::f64::consts::PI * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::InvalidInput(format!(
                "boundary radius 1 + v0 + vbar reaches {min:.3e}"
            )));
        }
        Ok(())
    }

    pub fn bound(&self) -> f64 {
        self.v0.abs() + self.vbar.cos.iter().chain(&self.vbar.sin).map(|c| c.abs()).sum::<f64>()
    }

    pub fn scale_field(&self, r: f64, theta: f64) -> ScaleField {
        let mut e = 0.0;
        let mut e_r = 0.0;
        let mut e_t = 0.0;
        match self.extension {
            Extension::Polynomial => {
                for j in 1..=self.vbar.j_max() {
                    let (c, s) = (self.vbar.cos[j - 1], self.vbar.sin[j - 1]);
                    if c == 0.0 && s == 0.0 {
                        continue;
                    }
                    let jf = j as f64;
                    let (sn, cs) = (jf * theta).sin_cos();
                    let w = c * cs + s * sn;
                    let wt = jf * (-c * sn + s * cs);
                    let rj1 = r.powi(j as i32 - 1);
                    e += rj1 * r * w;
                    e_r += jf * rj1 * w;
                    e_t += rj1 * wt;
                }
            }
            Extension::QuinticCutoff => {
                let (chi, dchi) = quintic_cutoff(r);
                e = chi * self.vbar.eval(theta);
                e_r = dchi * self.vbar.eval(theta);
                e_t = if r > 0.0 { chi * self.vbar.eval_deriv(theta) / r } else { 0.0 };
            }
        }
        ScaleField {
            m: 1.0 + self.v0 + e,
            m_r: e_r,
            m_t_over_r: e_t,
        }
    }

    /// β(y) and Dβ at y = r(cos θ, sin θ); dbeta[a][b] = ∂β^a/∂y^b.
    pub fn map(&self, r: f64, theta: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let sf = self.scale_field(r, theta);
        let (s, c) = theta.sin_cos();
        let y = [r * c, r * s];
        let grad = [c * sf.m_r - s * sf.m_t_over_r, s * sf.m_r + c * sf.m_t_over_r];
        let mut d = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                d[a][b] = y[a] * grad[b] + if a == b { sf.m } else { 0.0 };
            }
        }
        ([sf.m * y[0], sf.m * y[1]], d)
    }
}

/// ĝ = β*ḡ on the disk grid, with the normal-coordinate data at β(y) kept
/// for the drift term and for shape derivatives.
#[derive(Clone, Debug)]
pub struct PulledBackMetric {
    pub grid: PolarGrid,
    pub shape: BoundaryShape,
    pub ghat: [Vec<f64>; 3],
    pub sqrt_det: Vec<f64>,
    /// sqrt det ḡ at β(y)
    pub sqrt_det_bar: Vec<f64>,
    pub samples: Vec<NormalSample>,
    pub dbeta: Vec<[[f64; 2]; 2]>,
    pub epsilon: f64,
}

pub fn pullback_shape_metric(
    nm: &NormalMetric,
    grid: &PolarGrid,
    shape: &BoundaryShape,
) -> Result<PulledBackMetric> {
    if grid.n_theta != nm.grid.n_theta {
        return Err(Error::InvalidInput(format!(
            "disk grid has {} angles, normal metric has {}",
            grid.n_theta, nm.grid.n_theta
        )));
    }
    shape.validate()?;
    let n = grid.len();
    let mut ghat = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut sqrt_det = vec![0.0; n];
    let mut sqrt_det_bar = vec![0.0; n];
    let mut samples = Vec::with_capacity(n);
    let mut dbeta = Vec::with_capacity(n);
    for i in 0..grid.n_r {
        for l in 0..grid.n_theta {
            let k = grid.idx(i, l);
            let (b, d) = shape.map(grid.r[i], grid.theta[l]);
            let rho = b[0].hypot(b[1]);
            let s = nm.eval(l, rho)?;
            let g = pull(&s.g, &d);
            if !(sym_min_eig(&g) > 0.0) {
                return Err(Error::MetricDegenerate(format!(
                    "pulled-back metric not positive definite at r={:.4}, theta={:.4}",
                    grid.r[i], grid.theta[l]
                )));
            }
            for c in 0..3 {
                ghat[c][k] = g[c];
            }
            sqrt_det[k] = sym_det(&g).sqrt();
            sqrt_det_bar[k] = sym_det(&s.g).sqrt();
            samples.push(s);
            dbeta.push(d);
        }
    }
    Ok(PulledBackMetric {
        grid: grid.clone(),
        shape: shape.clone(),
        ghat,
        sqrt_det,
        sqrt_det_bar,
        samples,
        dbeta,
        epsilon: nm.epsilon,
    })
}

impl PulledBackMetric {
    pub fn metric_at(&self, k: usize) -> Sym2 {
        [self.ghat[0][k], self.ghat[1][k], self.ghat[2][k]]
    }

    /// √det ḡ(ρ(θ_l), θ_l)·ρ(θ_l) on the boundary ring: the derivative of the
    /// volume with respect to a boundary displacement.
    pub fn boundary_measure(&self) -> Vec<f64> {
        (0..self.grid.n_theta)
            .map(|l| {
                let k = self.grid.idx(0, l);
                self.sqrt_det_bar[k] * self.shape.radius(self.grid.theta[l])
            })
            .collect()
    }

    /// Rows (r, θ, ĝ11, ĝ12, ĝ22, sqrt det ĝ).
    pub fn rows(&self) -> Vec<[f64; 6]> {
        let mut out = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.n_r {
            for l in 0..self.grid.n_theta {
                let k = self.grid.idx(i, l);
                out.push([
                    self.grid.r[i],
                    self.grid.theta[l],
                    self.ghat[0][k],
                    self.ghat[1][k],
                    self.ghat[2][k],
                    self.sqrt_det[k],
                ]);
            }
        }
        out
    }
}

/// ∫_{B₁} √det ĝ dy
pub fn volume(pm: &PulledBackMetric) -> f64 {
    pm.grid.integrate(&pm.sqrt_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::ManifoldChart;
    use crate::geometry::normal::NormalGridSpec;
    use std::f64::consts::PI;

    fn spec(n_r: usize, n_theta: usize) -> NormalGridSpec {
        NormalGridSpec {
            n_r,
            n_theta,
            ..Default::default()
        }
    }

    #[test]
    fn dilation_and_identity() {
        let chart = ManifoldChart::standard_torus();
        let nm = NormalMetric::new(&chart, [1.0, 2.0], 0.1, spec(16, 16)).unwrap();
        let grid = PolarGrid::new(16, 16, 1.0);
        let pm = pullback_shape_metric(&nm, &grid, &BoundaryShape::zero(4)).unwrap();
        assert!(pm.ghat[0].iter().all(|v| *v == 1.0) && pm.ghat[1].iter().all(|v| *v == 0.0));
        assert!((volume(&pm) - PI).abs() < 1e-10);
        let pm = pullback_shape_metric(&nm, &grid, &BoundaryShape::new(0.1, TrigSeries::zeros(4))).unwrap();
        assert!((volume(&pm) - 1.21 * PI).abs() < 1e-10);
        assert!((pm.ghat[2][5] - 1.21).abs() < 1e-14);
    }

    #[test]
    fn jacobian_matches_differences() {
        let shape = BoundaryShape::new(0.05, TrigSeries::mode(4, 3, 0.02, -0.01).add(&TrigSeries::mode(4, 2, 0.03, 0.0)));
        for ext in [Extension::Polynomial, Extension::QuinticCutoff] {
            let sh = shape.clone().with_extension(ext);
            let y: [f64; 2] = [0.41, 0.37];
            let eval = |y: [f64; 2]| sh.map(y[0].hypot(y[1]), y[1].atan2(y[0])).0;
            let (_, d) = sh.map(y[0].hypot(y[1]), y[1].atan2(y[0]));
            let h = 1e-6;
            for b in 0..2 {
                let mut yp = y;
                let mut ym = y;
                yp[b] += h;
                ym[b] -= h;
                let (p, m) = (eval(yp), eval(ym));
                for a in 0..2 {
                    assert!(((p[a] - m[a]) / (2.0 * h) - d[a][b]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn sphere_cap_volume() {
        let chart = ManifoldChart::round_sphere(1.0);
        let eps = 0.2;
        let nm = NormalMetric::new(&chart, [0.0, 0.0], eps, spec(24, 32)).unwrap();
        let grid = PolarGrid::new(24, 32, 1.0);
        let pm = pullback_shape_metric(&nm, &grid, &BoundaryShape::zero(4)).unwrap();
        let exact = 2.0 * PI * (1.0 - eps.cos()) / (eps * eps);
        assert!((volume(&pm) - exact).abs() < 1e-12);
    }
}
