//! Chebyshev lines through the origin and the polar Fourier x Chebyshev disk grid.
//!
//! Radial nodes are the positive half of an even-count Chebyshev–Lobatto set on
//! [-1, 1]. A diameter at angle θ_l together with its continuation at θ_l + π is
//! one Chebyshev line, so smooth fields are differentiated along lines with no
//! node at the pole and no parity bookkeeping. Mode-wise operators fold the line
//! matrices with the parity (-1)^m of Fourier mode m.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone, Debug)]
pub struct ChebLine {
    pub t: Vec<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    bary: Vec<f64>,
    upper: Vec<f64>,
}

impl ChebLine {
    /// `m` points, `m` even.
    pub fn new(m: usize) -> Self {
        assert!(m >= 4 && m.is_multiple_of(2), "Chebyshev line needs an even count >= 4");
        let nn = (m - 1) as f64;
        // sine form keeps t[m-1-k] = -t[k] exactly
        let t: Vec<f64> = (0..m)
            .map(|k| (PI * (nn - 2.0 * k as f64) / (2.0 * nn)).sin())
            .collect();
        let c = |k: usize| if k == 0 || k == m - 1 { 2.0 } else { 1.0 };
        let sign = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let mut d1 = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let mut row = 0.0;
            for j in 0..m {
                if i == j {
                    continue;
                }
                let diff = 2.0
                    * (PI * (i + j) as f64 / (2.0 * nn)).sin()
                    * (PI * (j as f64 - i as f64) / (2.0 * nn)).sin();
                let v = c(i) / c(j) * sign(i + j) / diff;
                d1[(i, j)] = v;
                row += v;
            }
            d1[(i, i)] = -row;
        }
        let d2 = &d1 * &d1;
        let bary = (0..m)
            .map(|k| sign(k) * if k == 0 || k == m - 1 { 0.5 } else { 1.0 })
            .collect();

        // weights of ∫_0^1 from the Chebyshev expansion of the interpolant
        let deg = m - 1;
        let int_t = |n: usize| -> f64 {
            if n == 1 {
                return 0.5;
            }
            let a = n as f64;
            0.5 * ((1.0 - ((1.0 + a) * PI / 2.0).cos()) / (1.0 + a)
                + (1.0 - ((1.0 - a) * PI / 2.0).cos()) / (1.0 - a))
        };
        let moments: Vec<f64> = (0..=deg).map(int_t).collect();
        let mut upper = vec![0.0; m];
        for (j, w) in upper.iter_mut().enumerate() {
            let gj = if j == 0 || j == deg { 0.5 } else { 1.0 };
            let mut s = 0.0;
            for (n, mom) in moments.iter().enumerate() {
                let gn = if n == 0 || n == deg { 0.5 } else { 1.0 };
                s += gn * (PI * (n * j) as f64 / deg as f64).cos() * mom;
            }
            *w = 2.0 / deg as f64 * gj * s;
        }
        ChebLine { t, d1, d2, bary, upper }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Weights w_k with Σ w_k g(t_k) = ∫_0^1 g for the interpolant of g.
    pub fn upper_weights(&self) -> &[f64] {
        &self.upper
    }

    /// Normalized barycentric weights for evaluating the interpolant at `x`.
    pub fn interp_weights(&self, x: f64) -> Vec<f64> {
        let m = self.len();
        let mut w = vec![0.0; m];
        for k in 0..m {
            if (x - self.t[k]).abs() < 1e-15 {
                w[k] = 1.0;
                return w;
            }
        }
        let mut s = 0.0;
        for k in 0..m {
            let v = self.bary[k] / (x - self.t[k]);
            w[k] = v;
            s += v;
        }
        for v in &mut w {
            *v /= s;
        }
        w
    }

    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        self.interp_weights(x)
            .iter()
            .zip(values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Restriction of a line matrix to the positive half for functions of parity `parity`.
    pub fn fold(&self, mat: &DMatrix<f64>, parity: f64) -> DMatrix<f64> {
        let m = self.len();
        let h = m / 2;
        DMatrix::from_fn(h, h, |i, j| mat[(i, j)] + parity * mat[(i, m - 1 - j)])
    }
}

/// Fourier (θ) x Chebyshev (r) grid on the disk of radius `radius`.
///
/// Nodes are stored ring-major: index `i * n_theta + l`, ring 0 is the boundary.
#[derive(Clone)]
pub struct PolarGrid {
    pub n_r: usize,
    pub n_theta: usize,
    pub radius: f64,
    pub line: ChebLine,
    pub r: Vec<f64>,
    pub theta: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub ring_weight: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PolarGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolarGrid")
            .field("n_r", &self.n_r)
            .field("n_theta", &self.n_theta)
            .field("radius", &self.radius)
            .finish()
    }
}

impl PolarGrid {
    pub fn new(n_r: usize, n_theta: usize, radius: f64) -> Self {
        assert!(n_theta >= 4 && n_theta.is_multiple_of(2), "n_theta must be even");
        assert!(n_r >= 2);
        let line = ChebLine::new(2 * n_r);
        let r: Vec<f64> = line.t[..n_r].iter().map(|t| t * radius).collect();
        let theta: Vec<f64> = (0..n_theta)
            .map(|l| 2.0 * PI * l as f64 / n_theta as f64)
            .collect();
        let cos = theta.iter().map(|t| t.cos()).collect();
        let sin = theta.iter().map(|t| t.sin()).collect();
        let m = line.len();
        let up = line.upper_weights();
        let ring_weight = (0..n_r)
            .map(|i| {
                let q = (up[i] - up[m - 1 - i]) * line.t[i];
                2.0 * PI / n_theta as f64 * radius * radius * q
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n_theta);
        let inv = planner.plan_fft_inverse(n_theta);
        PolarGrid {
            n_r,
            n_theta,
            radius,
            line,
            r,
            theta,
            cos,
            sin,
            ring_weight,
            fwd,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, l: usize) -> usize {
        i * self.n_theta + l
    }

    /// Signed Fourier wavenumber of FFT slot `k`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        if k <= self.n_theta / 2 {
            k as i64
        } else {
            k as i64 - self.n_theta as i64
        }
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    pub fn from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut u = self.zeros();
        for i in 0..self.n_r {
            for l in 0..self.n_theta {
                u[self.idx(i, l)] = f(self.r[i], self.theta[l]);
            }
        }
        u
    }

    /// Values of `u` along the diameter through θ_l (l < n_theta/2), ordered as `line.t`.
    pub fn line_values(&self, u: &[f64], l: usize) -> Vec<f64> {
        let m = self.line.len();
        let half = self.n_theta / 2;
        (0..m)
            .map(|k| {
                if k < self.n_r {
                    u[self.idx(k, l)]
                } else {
                    u[self.idx(m - 1 - k, l + half)]
                }
            })
            .collect()
    }

    fn line_apply(&self, u: &[f64], mats: &[&DMatrix<f64>]) -> Vec<Vec<f64>> {
        let m = self.line.len();
        let half = self.n_theta / 2;
        let mut v = DMatrix::<f64>::zeros(m, half);
        for l in 0..half {
            for k in 0..m {
                v[(k, l)] = if k < self.n_r {
                    u[self.idx(k, l)]
                } else {
                    u[self.idx(m - 1 - k, l + half)]
                };
            }
        }
        mats.iter()
            .map(|mat| {
                let out = *mat * &v;
                let mut res = self.zeros();
                for l in 0..half {
                    for k in 0..m {
                        let val = out[(k, l)];
                        if k < self.n_r {
                            res[self.idx(k, l)] = val;
                        } else {
                            res[self.idx(m - 1 - k, l + half)] = val;
                        }
                    }
                }
                res
            })
            .collect()
    }

    /// (∂_r u, ∂_rr u) at all nodes.
    pub fn radial_derivs(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut out = self.line_apply(u, &[&self.line.d1, &self.line.d2]);
        let urr = out.pop().unwrap();
        let ur = out.pop().unwrap();
        self.orient(ur, urr)
    }

    pub fn radial_deriv(&self, u: &[f64]) -> Vec<f64> {
        let ur = self.line_apply(u, &[&self.line.d1]).pop().unwrap();
        self.orient(ur, Vec::new()).0
    }

    // line derivatives are d/dt; convert to outward radial derivatives
    fn orient(&self, mut ur: Vec<f64>, mut urr: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let half = self.n_theta / 2;
        let s = 1.0 / self.radius;
        for i in 0..self.n_r {
            for l in 0..self.n_theta {
                let k = self.idx(i, l);
                ur[k] *= if l < half { s } else { -s };
                if !urr.is_empty() {
                    urr[k] *= s * s;
                }
            }
        }
        (ur, urr)
    }

    /// Forward ring transforms: per ring, the unnormalized DFT in θ.
    pub fn ring_fft(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for ring in buf.chunks_mut(self.n_theta) {
            self.fwd.process(ring);
        }
        buf
    }

    /// Inverse of `ring_fft`, real part.
    pub fn ring_ifft(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        for ring in c.chunks_mut(self.n_theta) {
            self.inv.process(ring);
        }
        let s = 1.0 / self.n_theta as f64;
        c.iter().map(|z| z.re * s).collect()
    }

    /// (∂_θ u, ∂_θθ u); the Nyquist mode is dropped from the odd derivative.
    pub fn theta_derivs(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.ring_fft(u);
        let mut c1 = c.clone();
        let mut c2 = c;
        let nyq = self.n_theta / 2;
        for i in 0..self.n_r {
            for k in 0..self.n_theta {
                let j = self.idx(i, k);
                let m = self.wavenumber(k) as f64;
                c1[j] = if k == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    c1[j] * Complex64::new(0.0, m)
                };
                c2[j] *= -m * m;
            }
        }
        (self.ring_ifft(c1), self.ring_ifft(c2))
    }

    pub fn theta_deriv(&self, u: &[f64]) -> Vec<f64> {
        let mut c = self.ring_fft(u);
        let nyq = self.n_theta / 2;
        for i in 0..self.n_r {
            for k in 0..self.n_theta {
                let j = self.idx(i, k);
                let m = self.wavenumber(k) as f64;
                c[j] = if k == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    c[j] * Complex64::new(0.0, m)
                };
            }
        }
        self.ring_ifft(c)
    }

    /// Cartesian gradient of a smooth field.
    pub fn cartesian_gradient(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ur = self.radial_deriv(u);
        let ut = self.theta_deriv(u);
        let mut ux = self.zeros();
        let mut uy = self.zeros();
        for i in 0..self.n_r {
            for l in 0..self.n_theta {
                let k = self.idx(i, l);
                let (c, s, r) = (self.cos[l], self.sin[l], self.r[i]);
                ux[k] = c * ur[k] - s * ut[k] / r;
                uy[k] = s * ur[k] + c * ut[k] / r;
            }
        }
        (ux, uy)
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n_r {
            let ring: f64 = u[i * self.n_theta..(i + 1) * self.n_theta].iter().sum();
            s += self.ring_weight[i] * ring;
        }
        s
    }

    /// Value of the interpolant of `u` at distance `rho` along the ray θ_l.
    pub fn interpolate_ray(&self, u: &[f64], l: usize, rho: f64) -> f64 {
        self.ray_weights(l, rho)
            .1
            .iter()
            .zip(self.line_values(u, self.ray_line(l)))
            .map(|(w, v)| w * v)
            .sum()
    }

    /// Line index carrying ray `l`.
    pub fn ray_line(&self, l: usize) -> usize {
        l % (self.n_theta / 2)
    }

    /// (line index, interpolation weights on that line) for the point at `rho` on ray `l`.
    pub fn ray_weights(&self, l: usize, rho: f64) -> (usize, Vec<f64>) {
        let half = self.n_theta / 2;
        let t = if l < half { rho } else { -rho } / self.radius;
        (l % half, self.line.interp_weights(t))
    }

    /// Mode-m radial first and second derivative matrices on the positive nodes.
    pub fn mode_matrices(&self, m: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let parity = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        let s = 1.0 / self.radius;
        (
            self.line.fold(&self.line.d1, parity) * s,
            self.line.fold(&self.line.d2, parity) * (s * s),
        )
    }

    /// Weights for ∫_0^R r^{n-1} h(r) dr from values at the positive nodes (h even in r).
    pub fn radial_weights(&self, n: usize) -> Vec<f64> {
        radial_weights(&self.line, n, self.radius)
    }
}

/// Weights for ∫_0^R r^{n-1} h(r) dr from an even function sampled at the positive nodes.
pub fn radial_weights(line: &ChebLine, n: usize, radius: f64) -> Vec<f64> {
    let m = line.len();
    let up = line.upper_weights();
    let p = (n - 1) as i32;
    (0..m / 2)
        .map(|i| {
            let t = line.t[i];
            (up[i] * t.powi(p) + up[m - 1 - i] * (-t).powi(p)) * radius.powi(n as i32)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_is_antisymmetric_and_differentiates_polynomials() {
        let line = ChebLine::new(12);
        for k in 0..12 {
            assert_eq!(line.t[k], -line.t[11 - k]);
        }
        let f: Vec<f64> = line.t.iter().map(|t| t.powi(5) - 2.0 * t).collect();
        let df = &line.d1 * nalgebra::DVector::from_vec(f);
        for (k, t) in line.t.iter().enumerate() {
            assert!((df[k] - (5.0 * t.powi(4) - 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn upper_weights_integrate_monomials() {
        let line = ChebLine::new(20);
        for p in 0..10 {
            let s: f64 = line
                .upper_weights()
                .iter()
                .zip(&line.t)
                .map(|(w, t)| w * t.powi(p))
                .sum();
            assert!((s - 1.0 / (p as f64 + 1.0)).abs() < 1e-13, "p = {p}");
        }
    }

    #[test]
    fn disk_quadrature_and_derivatives() {
        let g = PolarGrid::new(16, 16, 1.0);
        let one = vec![1.0; g.len()];
        assert!((g.integrate(&one) - PI).abs() < 1e-13);
        // ∫ x² dA = π/4
        let x2 = g.from_fn(|r, t| (r * t.cos()).powi(2));
        assert!((g.integrate(&x2) - PI / 4.0).abs() < 1e-13);
        let u = g.from_fn(|r, t| (r * r - r.powi(4)) * (2.0 * t).cos());
        let (ur, urr) = g.radial_derivs(&u);
        let (ut, utt) = g.theta_derivs(&u);
        for i in 0..g.n_r {
            for l in 0..g.n_theta {
                let (r, t) = (g.r[i], g.theta[l]);
                let k = g.idx(i, l);
                assert!((ur[k] - (2.0 * r - 4.0 * r.powi(3)) * (2.0 * t).cos()).abs() < 1e-11);
                assert!((urr[k] - (2.0 - 12.0 * r * r) * (2.0 * t).cos()).abs() < 1e-10);
                assert!((ut[k] + 2.0 * (r * r - r.powi(4)) * (2.0 * t).sin()).abs() < 1e-12);
                assert!((utt[k] + 4.0 * (r * r - r.powi(4)) * (2.0 * t).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ray_interpolation_and_radial_weights() {
        let g = PolarGrid::new(12, 8, 1.5);
        let u = g.from_fn(|r, t| 1.0 + r * t.cos() + r * r);
        for l in 0..8 {
            let rho = 0.37;
            let exact = 1.0 + rho * g.theta[l].cos() + rho * rho;
            assert!((g.interpolate_ray(&u, l, rho) - exact).abs() < 1e-13);
        }
        let w = g.radial_weights(3);
        let s: f64 = w.iter().zip(&g.r).map(|(w, r)| w * r * r).sum();
        assert!((s - 1.5f64.powi(5) / 5.0).abs() < 1e-12);
    }
}
