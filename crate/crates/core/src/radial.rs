//! Radial two-point problems on [0, 1]: frozen-point profiles, the branch
//! bifurcating from the first Dirichlet eigenvalue, and the density-weighted
//! radial problem of geodesic balls in harmonic spaces.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::{NonlinearitySpec, Point};
use crate::spectral::{radial_weights, ChebLine};

pub const PROFILE_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 6;

/// Area of the unit sphere S^{n-1} in R^n.
pub fn sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 2.0) * sphere_area(n - 2),
    }
}

/// Positive radial nodes of an even-count Chebyshev line on [-1, 1], with
/// mode-parity folded differentiation.
#[derive(Clone, Debug)]
pub struct RadialNodes {
    pub line: ChebLine,
    pub r: Vec<f64>,
}

impl RadialNodes {
    pub fn new(n_r: usize) -> Self {
        let line = ChebLine::new(2 * n_r);
        let r = line.t[..n_r].to_vec();
        RadialNodes { line, r }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// (D1, D2) for functions with the parity of mode j.
    pub fn mode_matrices(&self, j: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        let parity = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        (
            self.line.fold(&self.line.d1, parity),
            self.line.fold(&self.line.d2, parity),
        )
    }

    /// Weights of ∫_0^1 r^{n-1} h dr for even h.
    pub fn weights(&self, n: usize) -> Vec<f64> {
        radial_weights(&self.line, n, 1.0)
    }

    /// Interpolate a function of parity `parity` given at the positive nodes.
    pub fn interpolate(&self, values: &[f64], parity: f64, r: f64) -> f64 {
        let m = self.line.len();
        let full: Vec<f64> = (0..m)
            .map(|k| {
                if k < self.len() {
                    values[k]
                } else {
                    parity * values[m - 1 - k]
                }
            })
            .collect();
        self.line.interpolate(&full, r)
    }
}

fn matvec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

/// Newton on y'' + b(r) y' + s(r, y) = 0 at interior nodes, y(1) = 0.
/// `source(i, y)` returns (s, ∂s/∂y) at node i.
fn solve_even_bvp(
    nodes: &RadialNodes,
    drift: &[f64],
    source: &dyn Fn(usize, f64) -> (f64, f64),
    init: Vec<f64>,
    what: &str,
) -> Result<(Vec<f64>, f64, usize)> {
    let n_r = nodes.len();
    let (d1, d2) = nodes.mode_matrices(0);
    let residual = |y: &[f64]| -> Vec<f64> {
        let y1 = matvec(&d1, y);
        let y2 = matvec(&d2, y);
        (1..n_r)
            .map(|i| y2[i] + drift[i] * y1[i] + source(i, y[i]).0)
            .collect()
    };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut y = init;
    y[0] = 0.0;
    let mut res = residual(&y);
    let mut rn = norm(&res);
    let mut history = vec![rn];
    for it in 0..MAX_NEWTON {
        if rn <= PROFILE_TOL {
            return Ok((y, rn, it));
        }
        let jac = DMatrix::from_fn(n_r - 1, n_r - 1, |a, b| {
            let (i, j) = (a + 1, b + 1);
            let mut v = d2[(i, j)] + drift[i] * d1[(i, j)];
            if i == j {
                v += source(i, y[i]).1;
            }
            v
        });
        let rhs = DVector::from_iterator(n_r - 1, res.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Setup(format!("{what}: singular Newton matrix")))?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = y.clone();
            for i in 1..n_r {
                trial[i] += t * step[i - 1];
            }
            let tres = residual(&trial);
            let tn = norm(&tres);
            if tn < rn || tn <= PROFILE_TOL {
                y = trial;
                res = tres;
                rn = tn;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // take the full step anyway; stagnation is caught by the iteration cap
            for i in 1..n_r {
                y[i] += step[i - 1];
            }
            res = residual(&y);
            rn = norm(&res);
        }
        history.push(rn);
    }
    if rn <= PROFILE_TOL {
        return Ok((y, rn, MAX_NEWTON));
    }
    Err(Error::NoConvergence {
        what: what.into(),
        iterations: MAX_NEWTON,
        residual: rn,
        history,
    })
}

/// Frozen-point radial solution φ_p of Δφ + λ̄ f(p, φ) = 0 in B₁ ⊂ Rⁿ, φ = 0 on ∂B₁.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub n: usize,
    pub lambda_bar: f64,
    pub p: Point,
    pub nodes: RadialNodes,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    /// f_z(p, φ(r)) at the nodes
    pub fz: Vec<f64>,
    pub residual: f64,
    pub newton_iterations: usize,
    pub spec: NonlinearitySpec,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileSummary {
    pub n: usize,
    pub lambda_bar: f64,
    pub p: Point,
    pub c1: f64,
    pub c2: f64,
    pub phi0: f64,
    pub residual: f64,
    pub newton_iterations: usize,
}

impl RadialProfile {
    /// Build from converged nodal values (φ(1) must be 0).
    pub fn from_values(
        spec: &NonlinearitySpec,
        p: Point,
        n: usize,
        lambda_bar: f64,
        nodes: RadialNodes,
        phi: Vec<f64>,
    ) -> Self {
        let (d1, d2) = nodes.mode_matrices(0);
        let dphi = matvec(&d1, &phi);
        let ddphi = matvec(&d2, &phi);
        let fz = phi.iter().map(|&z| spec.f_z(p, z)).collect();
        let residual = (1..nodes.len())
            .map(|i| {
                (ddphi[i] + (n as f64 - 1.0) / nodes.r[i] * dphi[i] + lambda_bar * spec.f(p, phi[i]))
                    .abs()
            })
            .fold(0.0, f64::max);
        RadialProfile {
            n,
            lambda_bar,
            p,
            c1: dphi[0],
            c2: ddphi[0],
            nodes,
            phi,
            dphi,
            fz,
            residual,
            newton_iterations: 0,
            spec: spec.clone(),
        }
    }

    pub fn phi_at(&self, r: f64) -> f64 {
        self.nodes.interpolate(&self.phi, 1.0, r)
    }

    pub fn dphi_at(&self, r: f64) -> f64 {
        self.nodes.interpolate(&self.dphi, -1.0, r)
    }

    /// λ̄ f_z(p, φ(r))
    pub fn potential_at(&self, r: f64) -> f64 {
        self.lambda_bar * self.spec.f_z(self.p, self.phi_at(r))
    }

    /// max over the nodes of |λ̄ f_z(p, φ)|
    pub fn potential_bound(&self) -> f64 {
        self.fz
            .iter()
            .fold(0.0f64, |a, v| a.max((self.lambda_bar * v).abs()))
    }

    pub fn physical_lambda(&self, epsilon: f64) -> f64 {
        self.lambda_bar / (epsilon * epsilon)
    }

    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary {
            n: self.n,
            lambda_bar: self.lambda_bar,
            p: self.p,
            c1: self.c1,
            c2: self.c2,
            phi0: self.phi_at(0.0),
            residual: self.residual,
            newton_iterations: self.newton_iterations,
        }
    }
}

/// Solve the frozen-point radial problem by Chebyshev collocation and damped Newton.
pub fn solve_radial_profile(
    spec: &NonlinearitySpec,
    p: Point,
    n: usize,
    lambda_bar: f64,
    n_r: usize,
    init: Option<&[f64]>,
) -> Result<RadialProfile> {
    if lambda_bar <= 0.0 || !lambda_bar.is_finite() {
        return Err(Error::InvalidInput(format!("lambda_bar = {lambda_bar} must be > 0")));
    }
    if n < 2 {
        return Err(Error::InvalidInput("dimension must be >= 2".into()));
    }
    let nodes = RadialNodes::new(n_r);
    let guess = match init {
        Some(g) => {
            if g.len() != n_r {
                return Err(Error::InvalidInput("initial guess has wrong length".into()));
            }
            if g[0] != 0.0 {
                return Err(Error::InvalidInput("initial guess must vanish at r = 1".into()));
            }
            g.to_vec()
        }
        None => {
            let amp = lambda_bar * spec.f(p, 0.0).max(1.0) / (2.0 * n as f64);
            nodes.r.iter().map(|r| amp * (1.0 - r * r)).collect()
        }
    };
    let drift: Vec<f64> = nodes.r.iter().map(|r| (n as f64 - 1.0) / r).collect();
    let phi_src = |_i: usize, z: f64| (lambda_bar * spec.f(p, z), lambda_bar * spec.f_z(p, z));
    let (phi, _res, iters) = solve_even_bvp(&nodes, &drift, &phi_src, guess, "radial profile")?;
    let mut prof = RadialProfile::from_values(spec, p, n, lambda_bar, nodes, phi);
    prof.newton_iterations = iters;
    if let Some(i) = (1..n_r).find(|&i| prof.phi[i] <= 0.0) {
        return Err(Error::Positivity(format!(
            "profile value {} at r = {}",
            prof.phi[i], prof.nodes.r[i]
        )));
    }
    Ok(prof)
}

/// Solution ψ of ψ'' + ((n-1)/r + θ'/θ) ψ' + κ G(ψ) = 0, ψ(1) = 0.
#[derive(Clone, Debug)]
pub struct HarmonicRadial {
    pub n: usize,
    pub nodes: RadialNodes,
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub density: Vec<f64>,
    pub scale: f64,
    pub residual: f64,
}

impl HarmonicRadial {
    pub fn psi_at(&self, r: f64) -> f64 {
        self.nodes.interpolate(&self.psi, 1.0, r)
    }

    /// ω_n ∫ (½ψ'² − κ G(ψ)) θ r^{n-1} dr, with `big_g` the antiderivative of G.
    pub fn energy(&self, big_g: &dyn Fn(f64) -> f64) -> f64 {
        let w = self.nodes.weights(self.n);
        let mut s = 0.0;
        for i in 0..self.nodes.len() {
            s += w[i]
                * (0.5 * self.dpsi[i] * self.dpsi[i] - self.scale * big_g(self.psi[i]))
                * self.density[i];
        }
        sphere_area(self.n) * s
    }
}

/// Geodesic-ball density on the round sphere of radius `radius`, in units where
/// the ball has radius 1 and geodesic radius `epsilon`: (sin(εr/R)/(εr/R))^{n-1}.
pub fn sphere_density(epsilon: f64, radius: f64, n: usize) -> impl Fn(f64) -> f64 {
    move |r: f64| {
        let s = epsilon * r / radius;
        let v = if s.abs() < 1e-8 { 1.0 - s * s / 6.0 } else { s.sin() / s };
        v.powi(n as i32 - 1)
    }
}

/// Density-weighted radial problem; `g` returns (G(z), G'(z)), `density` is θ
/// (even, θ(0) = 1), `scale` multiplies G.
pub fn solve_harmonic_radial(
    g: &dyn Fn(f64) -> (f64, f64),
    density: &dyn Fn(f64) -> f64,
    n: usize,
    scale: f64,
    n_r: usize,
) -> Result<HarmonicRadial> {
    let nodes = RadialNodes::new(n_r);
    let m = nodes.line.len();
    let theta_line: Vec<f64> = nodes.line.t.iter().map(|t| density(t.abs())).collect();
    if theta_line.iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidInput("density must be positive on [0, 1]".into()));
    }
    if (density(0.0) - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput("density must equal 1 at r = 0".into()));
    }
    let dtheta = matvec(&nodes.line.d1, &theta_line);
    let density_nodes: Vec<f64> = theta_line[..nodes.len()].to_vec();
    let drift: Vec<f64> = (0..nodes.len())
        .map(|i| (n as f64 - 1.0) / nodes.r[i] + dtheta[i] / theta_line[i])
        .collect();
    debug_assert_eq!(m, 2 * nodes.len());
    let src = |_i: usize, z: f64| {
        let (v, d) = g(z);
        (scale * v, scale * d)
    };
    let amp = scale * g(0.0).0.max(1.0) / (2.0 * n as f64);
    let guess = nodes.r.iter().map(|r| amp * (1.0 - r * r)).collect();
    let (psi, residual, _) = solve_even_bvp(&nodes, &drift, &src, guess, "harmonic radial")?;
    let (d1, _) = nodes.mode_matrices(0);
    let dpsi = matvec(&d1, &psi);
    if let Some(i) = (1..nodes.len()).find(|&i| psi[i] <= 0.0) {
        return Err(Error::Positivity(format!(
            "harmonic radial value {} at r = {}",
            psi[i], nodes.r[i]
        )));
    }
    Ok(HarmonicRadial {
        n,
        nodes,
        psi,
        dpsi,
        density: density_nodes,
        scale,
        residual,
    })
}

/// LU-based inverse iteration for the eigenvalue of `a` closest to `shift`.
pub fn inverse_power(a: &DMatrix<f64>, shift: f64) -> Result<(f64, DVector<f64>)> {
    let k = a.nrows();
    let shifted = a - DMatrix::<f64>::identity(k, k) * shift;
    let lu = shifted.lu();
    let mut x = DVector::from_element(k, 1.0);
    x /= x.norm();
    let mut est = f64::NAN;
    for _ in 0..500 {
        let y = lu
            .solve(&x)
            .ok_or_else(|| Error::Setup("inverse iteration: singular shifted matrix".into()))?;
        let new_est = shift + x.dot(&x) / x.dot(&y);
        let yn = y.norm();
        let mut xn = y / yn;
        // fix the sign by the largest component
        let imax = xn.iamax();
        if xn[imax] < 0.0 {
            xn = -xn;
        }
        let done = (new_est - est).abs() <= 1e-14 * new_est.abs().max(1.0) && (&xn - &x).norm() < 1e-10;
        x = xn;
        est = new_est;
        if done {
            return Ok((est, x));
        }
    }
    if est.is_finite() {
        Ok((est, x))
    } else {
        Err(Error::Setup("inverse iteration failed".into()))
    }
}

/// Radial part of L = Δ + V(r) on interior nodes (Dirichlet at r = 1).
fn radial_operator(nodes: &RadialNodes, n: usize, potential: &[f64]) -> DMatrix<f64> {
    let (d1, d2) = nodes.mode_matrices(0);
    let k = nodes.len() - 1;
    DMatrix::from_fn(k, k, |a, b| {
        let (i, j) = (a + 1, b + 1);
        let mut v = d2[(i, j)] + (n as f64 - 1.0) / nodes.r[i] * d1[(i, j)];
        if i == j {
            v += potential[i];
        }
        v
    })
}

/// First radial Dirichlet eigenpair of −Δ on B₁ ⊂ Rⁿ; the eigenfunction has
/// unit L²(B₁) norm and is positive.
pub fn first_dirichlet_eigen(n: usize, n_r: usize) -> Result<(f64, Vec<f64>)> {
    let nodes = RadialNodes::new(n_r);
    let zero = vec![0.0; n_r];
    let neg = -radial_operator(&nodes, n, &zero);
    let (lam, v) = inverse_power(&neg, 0.0)?;
    let mut phi = vec![0.0; n_r];
    for i in 1..n_r {
        phi[i] = v[i - 1];
    }
    let nrm = l2_norm(&nodes, n, &phi);
    let sign = if phi[n_r - 1] < 0.0 { -1.0 } else { 1.0 };
    for v in &mut phi {
        *v *= sign / nrm;
    }
    Ok((lam, phi))
}

fn l2_inner(nodes: &RadialNodes, n: usize, a: &[f64], b: &[f64]) -> f64 {
    let w = nodes.weights(n);
    sphere_area(n) * (0..nodes.len()).map(|i| w[i] * a[i] * b[i]).sum::<f64>()
}

fn l2_norm(nodes: &RadialNodes, n: usize, a: &[f64]) -> f64 {
    l2_inner(nodes, n, a, a).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchSample {
    /// s = ⟨φ, φ₁⟩ in L²(B₁)
    pub s: f64,
    pub lambda: f64,
    pub phi: Vec<f64>,
    /// principal eigenvalue of Δ + λ f_z(p, φ) on radial functions
    pub mu: f64,
}

#[derive(Clone, Debug)]
pub struct BifurcationBranch {
    pub n: usize,
    pub p: Point,
    pub c: f64,
    pub lambda1: f64,
    pub lambda0: f64,
    pub phi1: Vec<f64>,
    pub nodes: RadialNodes,
    pub direction: f64,
    pub samples: Vec<BranchSample>,
    pub fold: bool,
    spec: NonlinearitySpec,
}

impl BifurcationBranch {
    /// One-sided estimates of (∂_sλ, ∂_sμ) at s = 0 from a quadratic through the
    /// first three samples.
    pub fn derivatives_at_origin(&self) -> Option<(f64, f64)> {
        if self.samples.len() < 3 {
            return None;
        }
        let d = |f: &dyn Fn(&BranchSample) -> f64| {
            let (s0, s1, s2) = (self.samples[0].s, self.samples[1].s, self.samples[2].s);
            let (y0, y1, y2) = (f(&self.samples[0]), f(&self.samples[1]), f(&self.samples[2]));
            // derivative of the Lagrange interpolant at s0
            y0 * ((s0 - s1) + (s0 - s2)) / ((s0 - s1) * (s0 - s2))
                + y1 * (s0 - s2) / ((s1 - s0) * (s1 - s2))
                + y2 * (s0 - s1) / ((s2 - s0) * (s2 - s1))
        };
        Some((d(&|b| b.lambda), d(&|b| b.mu)))
    }

    /// Profile at sample k, with λ̄ = λ_k.
    pub fn profile(&self, k: usize) -> RadialProfile {
        let smp = &self.samples[k];
        RadialProfile::from_values(
            &self.spec,
            self.p,
            self.n,
            smp.lambda,
            self.nodes.clone(),
            smp.phi.clone(),
        )
    }
}

/// Principal eigenvalue of Δ + λ f_z(p, φ) on radial functions.
fn principal_mu(
    nodes: &RadialNodes,
    n: usize,
    spec: &NonlinearitySpec,
    p: Point,
    lambda: f64,
    phi: &[f64],
    guess: f64,
) -> Result<f64> {
    let pot: Vec<f64> = phi.iter().map(|&z| lambda * spec.f_z(p, z)).collect();
    let op = radial_operator(nodes, n, &pot);
    Ok(inverse_power(&op, guess + 0.5)?.0)
}

/// Pseudo-arclength continuation of the branch of positive solutions
/// bifurcating from (λ₁/c, 0), with arclength measured in (λ, ‖φ‖_{L²}).
pub fn continue_branch(
    spec: &NonlinearitySpec,
    p: Point,
    n: usize,
    s_max: f64,
    steps: usize,
    ds: f64,
    n_r: usize,
) -> Result<BifurcationBranch> {
    let f0 = spec.f(p, 0.0);
    let c = spec.f_z(p, 0.0);
    if f0.abs() > 1e-14 || c <= 0.0 || spec.f_zz(p, 0.0) == 0.0 {
        return Err(Error::Precondition(
            "branch continuation needs f(p,0) = 0, f_z(p,0) > 0, f_zz(p,0) != 0".into(),
        ));
    }
    let nodes = RadialNodes::new(n_r);
    let (lambda1, phi1) = first_dirichlet_eigen(n, n_r)?;
    let lambda0 = lambda1 / c;
    let w = nodes.weights(n);
    let area = sphere_area(n);
    let (d1, d2) = nodes.mode_matrices(0);
    let k = n_r - 1;
    let mu0 = principal_mu(&nodes, n, spec, p, lambda0, &vec![0.0; n_r], 0.0)?;
    let mut samples = vec![BranchSample {
        s: 0.0,
        lambda: lambda0,
        phi: vec![0.0; n_r],
        mu: mu0,
    }];

    // state and tangent: interior φ values and λ
    let mut phi = vec![0.0; n_r];
    let mut lambda = lambda0;
    let mut tan_phi = phi1.clone();
    let mut tan_lam = 0.0;
    let inner = |a: &[f64], b: &[f64]| area * (1..n_r).map(|i| w[i] * a[i] * b[i]).sum::<f64>();
    let mut fold = false;
    let mut prev_lam_sign = 0.0;
    let mut mu_guess = mu0;

    for _ in 0..steps {
        let pred_phi: Vec<f64> = (0..n_r).map(|i| phi[i] + ds * tan_phi[i]).collect();
        let pred_lam = lambda + ds * tan_lam;
        let mut y = pred_phi.clone();
        let mut lam = pred_lam;
        let mut converged = false;
        for _ in 0..MAX_NEWTON {
            let y1 = matvec(&d1, &y);
            let y2 = matvec(&d2, &y);
            let mut rhs = DVector::zeros(k + 1);
            for i in 1..n_r {
                rhs[i - 1] = -(y2[i] + (n as f64 - 1.0) / nodes.r[i] * y1[i] + lam * spec.f(p, y[i]));
            }
            let diff: Vec<f64> = (0..n_r).map(|i| y[i] - pred_phi[i]).collect();
            rhs[k] = -(inner(&diff, &tan_phi) + (lam - pred_lam) * tan_lam);
            let rn = rhs.amax();
            if rn <= PROFILE_TOL {
                converged = true;
                break;
            }
            let jac = branch_jacobian(&nodes, n, spec, p, lam, &y, &w, area, &tan_phi, tan_lam);
            let step = jac
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Setup("branch corrector: singular matrix".into()))?;
            for i in 1..n_r {
                y[i] += step[i - 1];
            }
            lam += step[k];
        }
        if !converged {
            break;
        }
        // new tangent
        let jac = branch_jacobian(&nodes, n, spec, p, lam, &y, &w, area, &tan_phi, tan_lam);
        let mut e = DVector::zeros(k + 1);
        e[k] = 1.0;
        let t = jac
            .lu()
            .solve(&e)
            .ok_or_else(|| Error::Setup("branch tangent: singular matrix".into()))?;
        let mut tp = vec![0.0; n_r];
        for i in 1..n_r {
            tp[i] = t[i - 1];
        }
        let tl = t[k];
        let nrm = (inner(&tp, &tp) + tl * tl).sqrt();
        let orient = if inner(&tp, &tan_phi) + tl * tan_lam < 0.0 { -1.0 } else { 1.0 };
        tan_phi = tp.iter().map(|v| v * orient / nrm).collect();
        tan_lam = tl * orient / nrm;
        phi = y;
        lambda = lam;

        let s = inner(&phi, &phi1);
        let mu = principal_mu(&nodes, n, spec, p, lambda, &phi, mu_guess)?;
        mu_guess = mu;
        samples.push(BranchSample {
            s,
            lambda,
            phi: phi.clone(),
            mu,
        });
        let lam_sign = tan_lam.signum();
        if prev_lam_sign != 0.0 && lam_sign != prev_lam_sign {
            fold = true;
            break;
        }
        if tan_lam.abs() > 1e-12 {
            prev_lam_sign = lam_sign;
        }
        if s.abs() >= s_max {
            break;
        }
    }
    Ok(BifurcationBranch {
        n,
        p,
        c,
        lambda1,
        lambda0,
        phi1,
        nodes,
        direction: 1.0,
        samples,
        fold,
        spec: spec.clone(),
    })
}

#[allow(clippy::too_many_arguments)]
fn branch_jacobian(
    nodes: &RadialNodes,
    n: usize,
    spec: &NonlinearitySpec,
    p: Point,
    lam: f64,
    y: &[f64],
    w: &[f64],
    area: f64,
    tan_phi: &[f64],
    tan_lam: f64,
) -> DMatrix<f64> {
    let (d1, d2) = nodes.mode_matrices(0);
    let n_r = nodes.len();
    let k = n_r - 1;
    let mut jac = DMatrix::zeros(k + 1, k + 1);
    for a in 0..k {
        let i = a + 1;
        for b in 0..k {
            let j = b + 1;
            jac[(a, b)] = d2[(i, j)] + (n as f64 - 1.0) / nodes.r[i] * d1[(i, j)];
        }
        jac[(a, a)] += lam * spec.f_z(p, y[i]);
        jac[(a, k)] = spec.f(p, y[i]);
        jac[(k, a)] = area * w[i] * tan_phi[i];
    }
    jac[(k, k)] = tan_lam;
    jac
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent shooting oracle: RK4 from the series start near r = 0.
    fn shoot(g: &dyn Fn(f64, f64) -> f64, drift: &dyn Fn(f64) -> f64, a: f64, h: f64) -> f64 {
        let r0 = h;
        let mut r = r0;
        let mut y = [a - g(0.0, a) * r0 * r0 / 4.0, -g(0.0, a) * r0 / 2.0];
        let rhs = |r: f64, y: [f64; 2]| [y[1], -drift(r) * y[1] - g(r, y[0])];
        let steps = ((1.0 - r0) / h).round() as usize;
        let h = (1.0 - r0) / steps as f64;
        for _ in 0..steps {
            let k1 = rhs(r, y);
            let k2 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = rhs(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = rhs(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
            y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
            r += h;
        }
        y[0]
    }

    fn shoot_center(g: &dyn Fn(f64, f64) -> f64, drift: &dyn Fn(f64) -> f64) -> f64 {
        // secant on the center value
        let (mut a0, mut a1) = (0.2, 0.3);
        let (mut f0, mut f1) = (shoot(g, drift, a0, 1e-5), shoot(g, drift, a1, 1e-5));
        for _ in 0..30 {
            let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
            a0 = a1;
            f0 = f1;
            a1 = a2;
            f1 = shoot(g, drift, a1, 1e-5);
            if f1.abs() < 1e-13 {
                break;
            }
        }
        a1
    }

    #[test]
    fn closed_form_profiles() {
        for n in [2usize, 3, 4] {
            let prof = solve_radial_profile(&NonlinearitySpec::constant_one(), [0.0, 0.0], n, 1.0, 48, None)
                .unwrap();
            let err = prof
                .nodes
                .r
                .iter()
                .zip(&prof.phi)
                .map(|(r, p)| (p - (1.0 - r * r) / (2.0 * n as f64)).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1e-10, "n = {n}: {err}");
            assert!((prof.c1 + 1.0 / n as f64).abs() <= 1e-10);
            assert!((prof.c2 + 1.0 / n as f64).abs() <= 1e-9);
        }
    }

    #[test]
    fn affine_profile_matches_shooting() {
        let spec = NonlinearitySpec::affine(1.0, 0.5);
        let prof = solve_radial_profile(&spec, [0.0, 0.0], 2, 0.5, 48, None).unwrap();
        let g = |_r: f64, z: f64| 0.5 * (1.0 + 0.5 * z);
        let oracle = shoot_center(&g, &|r| 1.0 / r);
        assert!((prof.phi_at(0.0) - oracle).abs() < 1e-7, "{} vs {}", prof.phi_at(0.0), oracle);
    }

    #[test]
    fn grid_refinement_is_converged() {
        let spec = NonlinearitySpec::affine(1.0, 0.5);
        let a = solve_radial_profile(&spec, [0.0, 0.0], 2, 0.5, 24, None).unwrap();
        let b = solve_radial_profile(&spec, [0.0, 0.0], 2, 0.5, 48, None).unwrap();
        assert!((a.phi_at(0.0) - b.phi_at(0.0)).abs() <= 1e-9);
    }

    #[test]
    fn harmonic_radial_flat_and_sphere() {
        let g = |_z: f64| (1.0, 0.0);
        let flat = solve_harmonic_radial(&g, &|_r| 1.0, 2, 1.0, 32).unwrap();
        assert!((flat.psi_at(0.0) - 0.25).abs() < 1e-12);
        let eps = 0.2;
        let dens = sphere_density(eps, 1.0, 2);
        let sph = solve_harmonic_radial(&g, &dens, 2, 1.0, 32).unwrap();
        let drift = |r: f64| {
            let s = eps * r;
            1.0 / r + eps * (s.cos() / s.sin() - 1.0 / s)
        };
        let oracle = shoot_center(&|_r, _z| 1.0, &drift);
        assert!((sph.psi_at(0.0) - oracle).abs() < 1e-7);
        // ε² scaling of the deviation from the flat value
        let d1 = (sph.psi_at(0.0) - 0.25).abs();
        let sph2 = solve_harmonic_radial(&g, &sphere_density(eps / 2.0, 1.0, 2), 2, 1.0, 32).unwrap();
        let d2 = (sph2.psi_at(0.0) - 0.25).abs();
        assert!((d1 / d2 - 4.0).abs() < 0.05, "{}", d1 / d2);
    }

    /// J₀ by its power series and bisection for its first zero.
    fn bessel_j01() -> f64 {
        let j0 = |x: f64| {
            let mut term = 1.0;
            let mut s = 1.0;
            for k in 1..60 {
                term *= -(x * x / 4.0) / (k as f64 * k as f64);
                s += term;
            }
            s
        };
        let (mut a, mut b) = (2.0, 3.0);
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

    #[test]
    fn first_eigenvalue_matches_bessel_zero() {
        let (lam, phi) = first_dirichlet_eigen(2, 48).unwrap();
        let j = bessel_j01();
        assert!((lam - j * j).abs() < 1e-9, "{lam} vs {}", j * j);
        assert!(phi[1..].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn branch_directions_follow_fzz_sign() {
        for (q, sign) in [(-1.0, 1.0), (1.0, -1.0)] {
            let spec = NonlinearitySpec::linear_quadratic(1.0, q, 0.0);
            let br = continue_branch(&spec, [0.0, 0.0], 2, 0.1, 4, 0.01, 32).unwrap();
            assert!(!br.fold);
            let (dl, dm) = br.derivatives_at_origin().unwrap();
            assert_eq!(dl.signum(), sign);
            assert!(((-dl * br.c) - dm).abs() <= 0.01 * dm.abs(), "{dl} {dm}");
            for w in br.samples.windows(2) {
                assert_eq!((w[1].lambda - w[0].lambda).signum(), sign);
            }
            let s1 = &br.samples[1];
            let dev = s1
                .phi
                .iter()
                .zip(&br.phi1)
                .map(|(a, b)| (a / s1.s - b).abs())
                .fold(0.0, f64::max);
            let top = br.phi1.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            assert!(dev / top <= 0.05);
        }
    }
}
