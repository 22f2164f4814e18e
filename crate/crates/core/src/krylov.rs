//! Restarted GMRES with right preconditioning.

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub restart: usize,
    pub max_iter: usize,
    /// relative residual target ‖b − Ax‖ ≤ rtol·‖b‖
    pub rtol: f64,
    pub atol: f64,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions {
            restart: 40,
            max_iter: 400,
            rtol: 1e-12,
            atol: 1e-15,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresReport {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves A x = b with x₀ = 0, preconditioner M⁻¹ applied on the right.
pub fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    opts: GmresOptions,
) -> (Vec<f64>, GmresReport) {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    let target = (opts.rtol * bnorm).max(opts.atol);
    let mut total = 0;
    if bnorm == 0.0 {
        return (x, GmresReport { iterations: 0, residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut rnorm = bnorm;
    while total < opts.max_iter {
        let m = opts.restart.min(opts.max_iter - total);
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        v.push(r.iter().map(|c| c / rnorm).collect());
        let mut k_used = 0;
        for k in 0..m {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            // modified Gram-Schmidt, twice for stability
            for _ in 0..2 {
                for (j, vj) in v.iter().enumerate() {
                    let c = dot(&w, vj);
                    h[j][k] += c;
                    for (wi, vi) in w.iter_mut().zip(vj) {
                        *wi -= c * vi;
                    }
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for j in 0..k {
                let t = cs[j] * h[j][k] + sn[j] * h[j + 1][k];
                h[j + 1][k] = -sn[j] * h[j][k] + cs[j] * h[j + 1][k];
                h[j][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if g[k + 1].abs() <= target || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|c| c / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, zi) in x.iter_mut().zip(&z[j]) {
                *xi += yj * zi;
            }
        }
        let ax = apply(&x);
        r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        rnorm = norm(&r);
        if rnorm <= target {
            return (x, GmresReport { iterations: total, residual: rnorm / bnorm, converged: true });
        }
    }
    (x, GmresReport { iterations: total, residual: rnorm / bnorm, converged: false })
}
