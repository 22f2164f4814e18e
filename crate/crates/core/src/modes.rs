//! Mode-wise analysis of the linearization at a radial profile: kernel values of
//! the homogeneous mode equations, the eigenvalues α_j of the Neumann-defect
//! linearization H, and the nondegeneracy verdict.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::TrigSeries;
use crate::radial::RadialProfile;

pub const KERNEL_THRESHOLD: f64 = 1e-6;
const R0: f64 = 1e-4;
const LOG_STEP: f64 = 0.002;

/// μ_j = j(j + n − 2)
pub fn mode_constant(j: usize, n: usize) -> u64 {
    (j * (j + n - 2)) as u64
}

/// Shooting result for the regular homogeneous solution w ~ r^j.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct KernelShot {
    /// w(1), normalized so that w(r₀) = r₀^j
    pub value: f64,
    /// w'(1)
    pub slope: f64,
    /// max over [r₀, 1] of |w|
    pub max_abs: f64,
}

impl KernelShot {
    pub fn is_invertible(&self) -> bool {
        self.value.abs() > KERNEL_THRESHOLD * self.max_abs
    }
}

/// Integrate w'' + (n−1)/r w' + (q(r) − μ_j/r²) w = 0 from r₀ with Frobenius data.
///
/// Works with w = r^j v in the variable s = ln r, where
/// v_ss + (2j + n − 2) v_s + q r² v = 0, so no magnitudes of size r^j appear.
pub fn shoot_mode(profile: &RadialProfile, j: usize) -> Result<KernelShot> {
    let n = profile.n as f64;
    let jf = j as f64;
    let q0 = profile.potential_at(0.0);
    let c = -q0 / (2.0 * (2.0 * jf + n));
    let norm = 1.0 + c * R0 * R0;
    // v and v_s = r v_r at r₀
    let mut y = [1.0, 2.0 * c * R0 * R0 / norm];
    let a = 2.0 * jf + n - 2.0;
    let s0 = R0.ln();
    let steps = (-s0 / LOG_STEP).ceil() as usize;
    let h = -s0 / steps as f64;
    let rhs = |s: f64, y: [f64; 2]| {
        let r = s.exp();
        [y[1], -a * y[1] - profile.potential_at(r) * r * r * y[0]]
    };
    let mut s = s0;
    let mut max_abs = R0.powi(j as i32);
    for _ in 0..steps {
        let k1 = rhs(s, y);
        let k2 = rhs(s + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(s + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        s += h;
        let w = (jf * s).exp() * y[0];
        if !w.is_finite() {
            return Err(Error::InvalidInput(format!("mode {j}: numerical range exceeded")));
        }
        max_abs = max_abs.max(w.abs());
    }
    Ok(KernelShot {
        value: y[0],
        slope: jf * y[0] + y[1],
        max_abs,
    })
}

/// w_j(1) for the homogeneous mode-j equation; nonzero certifies no kernel in mode j.
pub fn mode_kernel_value(profile: &RadialProfile, j: usize) -> Result<f64> {
    Ok(shoot_mode(profile, j)?.value)
}

/// Regular solution ψ_j of the homogeneous mode equation with ψ_j(1) = −c₁, by
/// collocation on the parity-(−1)^j nodes.
fn regular_mode_solution(profile: &RadialProfile, j: usize) -> Result<(Vec<f64>, f64)> {
    let nodes = &profile.nodes;
    let n_r = nodes.len();
    let (d1, d2) = nodes.mode_matrices(j);
    let mu = mode_constant(j, profile.n) as f64;
    let nf = profile.n as f64;
    let k = n_r - 1;
    let mut a = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    let bval = -profile.c1;
    for ai in 0..k {
        let i = ai + 1;
        let r = nodes.r[i];
        let row = |jj: usize| d2[(i, jj)] + (nf - 1.0) / r * d1[(i, jj)];
        for bi in 0..k {
            a[(ai, bi)] = row(bi + 1);
        }
        a[(ai, ai)] += profile.lambda_bar * profile.fz[i] - mu / (r * r);
        rhs[ai] = -row(0) * bval;
    }
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or(Error::ModeDegenerate { j, kernel_value: 0.0 })?;
    let mut psi = vec![bval; n_r];
    for i in 1..n_r {
        psi[i] = sol[i - 1];
    }
    let dpsi1 = (0..n_r).map(|jj| d1[(0, jj)] * psi[jj]).sum();
    Ok((psi, dpsi1))
}

/// α_j = b_j'(1), where b_j solves the inhomogeneous mode equation, is continuous
/// at 0 and vanishes at r = 1.
///
/// b_j has an r¹ term at the pole, so it is split as b_j = ∂_rφ + ψ_j with ψ_j the
/// regular homogeneous solution, ψ_j(1) = −c₁; then α_j = c₂ + ψ_j'(1).
pub fn mode_eigenvalue(profile: &RadialProfile, j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidInput("mode eigenvalues start at j = 1".into()));
    }
    let shot = shoot_mode(profile, j)?;
    if !shot.is_invertible() {
        return Err(Error::ModeDegenerate {
            j,
            kernel_value: shot.value,
        });
    }
    let (_, dpsi1) = regular_mode_solution(profile, j)?;
    Ok(profile.c2 + dpsi1)
}

/// b_j at the radial nodes.
pub fn mode_solution(profile: &RadialProfile, j: usize) -> Result<Vec<f64>> {
    let (psi, _) = regular_mode_solution(profile, j)?;
    Ok(psi.iter().zip(&profile.dphi).map(|(a, b)| a + b).collect())
}

/// α_j from the shooting solution: c₂ − c₁ w_j'(1)/w_j(1).
pub fn mode_eigenvalue_shooting(profile: &RadialProfile, j: usize) -> Result<f64> {
    let shot = shoot_mode(profile, j)?;
    if !shot.is_invertible() {
        return Err(Error::ModeDegenerate {
            j,
            kernel_value: shot.value,
        });
    }
    Ok(profile.c2 - profile.c1 * shot.slope / shot.value)
}

/// Backward integration of the inhomogeneous mode equation from r = 1 with
/// a(1) = a'(1) = 0 down to `r_min`; returns r_min^j |a_j(r_min)|, the scaled
/// size of the r^{−j} component (nonzero iff the literal limit is nonzero).
pub fn literal_limit_indicator(profile: &RadialProfile, j: usize, r_min: f64) -> Result<f64> {
    let n = profile.n as f64;
    let mu = mode_constant(j, profile.n) as f64;
    // s = ln r: a_ss + (n−2) a_s + (q r² − μ) a = (n−1−μ) φ'(r)
    let rhs = |s: f64, y: [f64; 2]| {
        let r = s.exp();
        let forcing = (n - 1.0 - mu) * profile.dphi_at(r);
        [
            y[1],
            forcing - (n - 2.0) * y[1] - (profile.potential_at(r) * r * r - mu) * y[0],
        ]
    };
    let s_end = r_min.ln();
    let steps = (-s_end / LOG_STEP).ceil() as usize;
    let h = s_end / steps as f64;
    let mut y = [0.0, 0.0];
    let mut s = 0.0;
    for _ in 0..steps {
        let k1 = rhs(s, y);
        let k2 = rhs(s + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
        let k3 = rhs(s + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
        let k4 = rhs(s + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        s += h;
    }
    if !y[0].is_finite() {
        return Err(Error::InvalidInput(format!("mode {j}: numerical range exceeded")));
    }
    Ok(r_min.powi(j as i32) * y[0].abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub invertible: bool,
    pub alpha1_zero: bool,
    pub alphas_nonzero_j_ge_2: bool,
    pub tail_certified: bool,
    /// the tail bound failed, so the invertibility claim is not certified
    pub inconclusive: bool,
    pub offending_modes: Vec<usize>,
}

impl Verdict {
    pub fn all_pass(&self) -> bool {
        self.invertible && self.alpha1_zero && self.alphas_nonzero_j_ge_2
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeSpectrum {
    pub n: usize,
    pub j_max: usize,
    /// w_j(1), j = 0..=j_max
    pub kernel_values: Vec<f64>,
    /// α_j, j = 1..=j_max (index j − 1); NaN where the mode is degenerate
    pub alphas: Vec<f64>,
    /// μ_j = j(j + n − 2), j = 0..=j_max
    pub mu: Vec<u64>,
    /// max |λ̄ f_z(p, φ)|
    pub potential_bound: f64,
    /// min over 2 ≤ j ≤ j_max of |α_j|
    pub min_abs_alpha: f64,
    pub verdict: Verdict,
}

impl ModeSpectrum {
    pub fn alpha(&self, j: usize) -> f64 {
        self.alphas[j - 1]
    }
}

pub const ALPHA1_TOL: f64 = 1e-8;

pub fn verify_assumption_a(profile: &RadialProfile, j_max: usize) -> Result<ModeSpectrum> {
    if j_max < 2 {
        return Err(Error::InvalidInput("j_max must be at least 2".into()));
    }
    let shots: Vec<KernelShot> = (0..=j_max)
        .into_par_iter()
        .map(|j| shoot_mode(profile, j))
        .collect::<Result<_>>()?;
    let alphas: Vec<f64> = (1..=j_max)
        .into_par_iter()
        .map(|j| {
            if shots[j].is_invertible() {
                regular_mode_solution(profile, j).map(|(_, d)| profile.c2 + d)
            } else {
                Ok(f64::NAN)
            }
        })
        .collect::<Result<_>>()?;
    let mu: Vec<u64> = (0..=j_max).map(|j| mode_constant(j, profile.n)).collect();
    let k = profile.potential_bound();
    let tail_certified = mode_constant(j_max + 1, profile.n) as f64 > k;
    let mut offending: Vec<usize> = (0..=j_max).filter(|&j| !shots[j].is_invertible()).collect();
    let finite_ok = offending.is_empty();
    let alpha1_zero = alphas[0].is_finite() && alphas[0].abs() <= ALPHA1_TOL;
    let mut nonzero = true;
    let mut min_abs_alpha = f64::INFINITY;
    for j in 2..=j_max {
        let a = alphas[j - 1];
        if !a.is_finite() || a.abs() <= 1e-10 {
            nonzero = false;
            if !offending.contains(&j) {
                offending.push(j);
            }
        }
        if a.is_finite() {
            min_abs_alpha = min_abs_alpha.min(a.abs());
        }
    }
    Ok(ModeSpectrum {
        n: profile.n,
        j_max,
        kernel_values: shots.iter().map(|s| s.value).collect(),
        alphas,
        mu,
        potential_bound: k,
        min_abs_alpha,
        verdict: Verdict {
            invertible: finite_ok && tail_certified,
            alpha1_zero,
            alphas_nonzero_j_ge_2: nonzero,
            tail_certified,
            inconclusive: finite_ok && !tail_certified,
            offending_modes: offending,
        },
    })
}

/// H(w) = Σ α_j w_j; the flag reports coefficients beyond j_max that were dropped.
pub fn apply_h(spectrum: &ModeSpectrum, w: &TrigSeries) -> (TrigSeries, bool) {
    let mut out = TrigSeries::zeros(spectrum.j_max);
    let mut truncated = false;
    for j in 0..w.j_max() {
        if j < spectrum.j_max {
            out.cos[j] = spectrum.alphas[j] * w.cos[j];
            out.sin[j] = spectrum.alphas[j] * w.sin[j];
        } else if w.cos[j] != 0.0 || w.sin[j] != 0.0 {
            truncated = true;
        }
    }
    (out, truncated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::NonlinearitySpec;
    use crate::radial::{continue_branch, solve_radial_profile};

    fn flat(n: usize) -> RadialProfile {
        solve_radial_profile(&NonlinearitySpec::constant_one(), [0.0, 0.0], n, 1.0, 48, None).unwrap()
    }

    #[test]
    fn closed_form_alphas_and_kernel_values() {
        for n in [2usize, 3] {
            let prof = flat(n);
            let spec = verify_assumption_a(&prof, 16).unwrap();
            assert!(spec.verdict.all_pass());
            for j in 1..=16 {
                let exact = (j as f64 - 1.0) / n as f64;
                assert!((spec.alpha(j) - exact).abs() <= 1e-8, "n={n} j={j}: {}", spec.alpha(j));
                assert!((spec.kernel_values[j] - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn b_j_closed_form() {
        let prof = flat(2);
        for j in 1..6 {
            let b = mode_solution(&prof, j).unwrap();
            for (i, r) in prof.nodes.r.iter().enumerate() {
                assert!((b[i] - 0.5 * (r.powi(j as i32) - r)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn shooting_and_collocation_alphas_agree() {
        let prof =
            solve_radial_profile(&NonlinearitySpec::affine(1.0, 0.5), [0.0, 0.0], 2, 0.5, 48, None).unwrap();
        for j in 1..=8 {
            let a = mode_eigenvalue(&prof, j).unwrap();
            let b = mode_eigenvalue_shooting(&prof, j).unwrap();
            assert!((a - b).abs() < 1e-8, "j={j}: {a} vs {b}");
        }
        assert!(mode_eigenvalue(&prof, 1).unwrap().abs() < 1e-8);
    }

    #[test]
    fn kernel_value_vs_dense_eigen_solve() {
        let prof =
            solve_radial_profile(&NonlinearitySpec::affine(1.0, 0.5), [0.0, 0.0], 2, 0.5, 48, None).unwrap();
        let w = mode_kernel_value(&prof, 0).unwrap();
        // dense eigenvalues of the mode-0 operator via Schur form
        let (d1, d2) = prof.nodes.mode_matrices(0);
        let k = prof.nodes.len() - 1;
        let a = DMatrix::from_fn(k, k, |i, j| {
            let (ii, jj) = (i + 1, j + 1);
            let mut v = d2[(ii, jj)] + d1[(ii, jj)] / prof.nodes.r[ii];
            if ii == jj {
                v += prof.potential_at(prof.nodes.r[ii]);
            }
            v
        });
        let closest = a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(closest > 1e-6);
        assert!(w.abs() > 1e-3);
    }

    #[test]
    fn kernel_vanishes_at_bifurcation_point() {
        let spec = NonlinearitySpec::linear_quadratic(1.0, -1.0, 0.0);
        let br = continue_branch(&spec, [0.0, 0.0], 2, 0.05, 2, 0.01, 48).unwrap();
        let at_zero = br.profile(0);
        let shot = shoot_mode(&at_zero, 0).unwrap();
        assert!(!shot.is_invertible(), "{:?}", shot);
        let prof = br.profile(2);
        let spec = verify_assumption_a(&prof, 16).unwrap();
        assert!(spec.verdict.all_pass(), "{:?}", spec.verdict);
        assert!(spec.alpha(1).abs() < 1e-8);
        // α_j = O(s)
        assert!(spec.alpha(2).abs() < 0.5);
    }

    #[test]
    fn failing_mode_zero_is_reported() {
        // λ̄ at the first eigenvalue for f = 1 + z makes mode 0 singular
        let (lam1, _) = crate::radial::first_dirichlet_eigen(2, 48).unwrap();
        let prof = solve_radial_profile(&NonlinearitySpec::affine(1.0, 1.0), [0.0, 0.0], 2, lam1 * 0.999999, 48, None);
        if let Ok(prof) = prof {
            let spec = verify_assumption_a(&prof, 8).unwrap();
            assert!(!spec.verdict.invertible);
            assert!(spec.verdict.offending_modes.contains(&0));
        }
    }

    #[test]
    fn literal_limit_matches_flat_closed_form() {
        let prof = flat(2);
        for j in 2..=6 {
            let ind = literal_limit_indicator(&prof, j, 1e-3).unwrap();
            let expected = (j as f64 - 1.0) / (4.0 * j as f64);
            assert!((ind - expected).abs() < 1e-6 * expected.max(1.0), "j={j}: {ind} vs {expected}");
        }
        assert!(literal_limit_indicator(&prof, 1, 1e-3).unwrap() < 1e-8);
    }

    #[test]
    fn apply_h_is_diagonal() {
        let spec = verify_assumption_a(&flat(2), 8).unwrap();
        let mut w = TrigSeries::zeros(8);
        w.cos[1] = 1.0;
        w.sin[4] = 1.0;
        let (hw, trunc) = apply_h(&spec, &w);
        assert!(!trunc);
        assert!((hw.cos[1] - 0.5).abs() < 1e-9 && (hw.sin[4] - 2.0).abs() < 1e-9);
        let (h1, _) = apply_h(&spec, &TrigSeries::mode(8, 1, 1.0, 0.0));
        assert!(h1.max_abs() < 1e-9);
        let (_, trunc) = apply_h(&spec, &TrigSeries::mode(10, 10, 1.0, 0.0));
        assert!(trunc);
    }
}
