//! Position-dependent nonlinearities f(x, z) with their z-derivatives and antiderivative.

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A nonlinearity on chart coordinates x and values z.
///
/// `f_z` and `f_zz` must be supplied analytically. `grad_x` defaults to central
/// differences and is only used for shape sensitivities.
pub trait Nonlinearity: Send + Sync + Debug {
    fn f(&self, x: Point, z: f64) -> f64;
    fn f_z(&self, x: Point, z: f64) -> f64;
    fn f_zz(&self, x: Point, z: f64) -> f64;
    /// F(x, z) = ∫_0^z f(x, ζ) dζ
    fn antiderivative(&self, x: Point, z: f64) -> f64;

    fn grad_x(&self, x: Point, z: f64) -> [f64; 2] {
        let h = 1e-6;
        let d = |e: [f64; 2]| {
            (self.f([x[0] + h * e[0], x[1] + h * e[1]], z)
                - self.f([x[0] - h * e[0], x[1] - h * e[1]], z))
                / (2.0 * h)
        };
        [d([1.0, 0.0]), d([0.0, 1.0])]
    }

    fn depends_on_position(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "custom".into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityClass {
    PositiveAtZero,
    Bifurcation,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Builtin {
    /// f ≡ 1
    ConstantOne,
    /// f = a + b z
    Affine { a: f64, b: f64 },
    /// f = c z + (q0 + q1 sin x₁) z²
    LinearQuadratic { c: f64, q0: f64, q1: f64 },
    /// f = 1 + A sin x₁
    PeriodicForcing { amplitude: f64 },
}

impl Nonlinearity for Builtin {
    fn f(&self, x: Point, z: f64) -> f64 {
        match *self {
            Builtin::ConstantOne => 1.0,
            Builtin::Affine { a, b } => a + b * z,
            Builtin::LinearQuadratic { c, q0, q1 } => c * z + (q0 + q1 * x[0].sin()) * z * z,
            Builtin::PeriodicForcing { amplitude } => 1.0 + amplitude * x[0].sin(),
        }
    }

    fn f_z(&self, x: Point, z: f64) -> f64 {
        match *self {
            Builtin::ConstantOne | Builtin::PeriodicForcing { .. } => 0.0,
            Builtin::Affine { b, .. } => b,
            Builtin::LinearQuadratic { c, q0, q1 } => c + 2.0 * (q0 + q1 * x[0].sin()) * z,
        }
    }

    fn f_zz(&self, x: Point, _z: f64) -> f64 {
        match *self {
            Builtin::LinearQuadratic { q0, q1, .. } => 2.0 * (q0 + q1 * x[0].sin()),
            _ => 0.0,
        }
    }

    fn antiderivative(&self, x: Point, z: f64) -> f64 {
        match *self {
            Builtin::ConstantOne => z,
            Builtin::Affine { a, b } => a * z + 0.5 * b * z * z,
            Builtin::LinearQuadratic { c, q0, q1 } => {
                0.5 * c * z * z + (q0 + q1 * x[0].sin()) * z * z * z / 3.0
            }
            Builtin::PeriodicForcing { amplitude } => (1.0 + amplitude * x[0].sin()) * z,
        }
    }

    fn grad_x(&self, x: Point, z: f64) -> [f64; 2] {
        match *self {
            Builtin::LinearQuadratic { q1, .. } => [q1 * x[0].cos() * z * z, 0.0],
            Builtin::PeriodicForcing { amplitude } => [amplitude * x[0].cos(), 0.0],
            _ => [0.0, 0.0],
        }
    }

    fn depends_on_position(&self) -> bool {
        match *self {
            Builtin::LinearQuadratic { q1, .. } => q1 != 0.0,
            Builtin::PeriodicForcing { amplitude } => amplitude != 0.0,
            _ => false,
        }
    }

    fn name(&self) -> String {
        match self {
            Builtin::ConstantOne => "constant_one",
            Builtin::Affine { .. } => "affine",
            Builtin::LinearQuadratic { .. } => "linear_quadratic",
            Builtin::PeriodicForcing { .. } => "periodic_forcing",
        }
        .into()
    }
}

#[derive(Clone, Debug)]
pub struct NonlinearitySpec {
    inner: Arc<dyn Nonlinearity>,
    pub class: NonlinearityClass,
}

impl NonlinearitySpec {
    pub fn builtin(b: Builtin) -> Self {
        let class = match b {
            Builtin::LinearQuadratic { .. } => NonlinearityClass::Bifurcation,
            Builtin::Affine { a, .. } if a <= 0.0 => NonlinearityClass::Custom,
            Builtin::PeriodicForcing { amplitude } if amplitude.abs() >= 1.0 => {
                NonlinearityClass::Custom
            }
            _ => NonlinearityClass::PositiveAtZero,
        };
        NonlinearitySpec {
            inner: Arc::new(b),
            class,
        }
    }

    pub fn constant_one() -> Self {
        Self::builtin(Builtin::ConstantOne)
    }

    pub fn affine(a: f64, b: f64) -> Self {
        Self::builtin(Builtin::Affine { a, b })
    }

    pub fn linear_quadratic(c: f64, q0: f64, q1: f64) -> Self {
        Self::builtin(Builtin::LinearQuadratic { c, q0, q1 })
    }

    pub fn periodic_forcing(amplitude: f64) -> Self {
        Self::builtin(Builtin::PeriodicForcing { amplitude })
    }

    pub fn custom(inner: Arc<dyn Nonlinearity>, class: NonlinearityClass) -> Self {
        NonlinearitySpec { inner, class }
    }

    #[inline]
    pub fn f(&self, x: Point, z: f64) -> f64 {
        self.inner.f(x, z)
    }
    #[inline]
    pub fn f_z(&self, x: Point, z: f64) -> f64 {
        self.inner.f_z(x, z)
    }
    #[inline]
    pub fn f_zz(&self, x: Point, z: f64) -> f64 {
        self.inner.f_zz(x, z)
    }
    #[inline]
    pub fn antiderivative(&self, x: Point, z: f64) -> f64 {
        self.inner.antiderivative(x, z)
    }
    #[inline]
    pub fn grad_x(&self, x: Point, z: f64) -> [f64; 2] {
        self.inner.grad_x(x, z)
    }
    pub fn depends_on_position(&self) -> bool {
        self.inner.depends_on_position()
    }
    pub fn name(&self) -> String {
        self.inner.name()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassReport {
    pub declared: NonlinearityClass,
    pub detected: NonlinearityClass,
    pub passes: bool,
    pub inf_f0: f64,
    /// f_z(·, 0) when it is constant on the sample
    pub c: Option<f64>,
    pub min_abs_fzz0: f64,
    pub witnesses: Vec<String>,
}

const Z_SAMPLES: [f64; 7] = [-0.5, -0.1, 0.0, 0.1, 0.3, 0.5, 1.0];

/// Checks derivative consistency and the class conditions on the given chart points.
pub fn check_class(spec: &NonlinearitySpec, samples: &[Point]) -> Result<ClassReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no sample points".into()));
    }
    let h = 1e-5;
    let mut worst = (0.0, [0.0, 0.0], 0.0);
    let mut note = |dev: f64, x: Point, z: f64| {
        if dev > worst.0 {
            worst = (dev, x, z);
        }
    };
    for &x in samples {
        let f0 = spec.antiderivative(x, 0.0);
        note(f0.abs(), x, 0.0);
        for &z in &Z_SAMPLES {
            let fd = (spec.antiderivative(x, z + h) - spec.antiderivative(x, z - h)) / (2.0 * h);
            let f = spec.f(x, z);
            note((fd - f).abs() / f.abs().max(1.0), x, z);
            let fzd = (spec.f(x, z + h) - spec.f(x, z - h)) / (2.0 * h);
            let fz = spec.f_z(x, z);
            note((fzd - fz).abs() / fz.abs().max(1.0), x, z);
            let fzzd = (spec.f_z(x, z + h) - spec.f_z(x, z - h)) / (2.0 * h);
            let fzz = spec.f_zz(x, z);
            note((fzzd - fzz).abs() / fzz.abs().max(1.0), x, z);
        }
    }
    if worst.0 > 1e-6 {
        return Err(Error::Consistency {
            deviation: worst.0,
            x: worst.1,
            z: worst.2,
        });
    }

    let f0: Vec<f64> = samples.iter().map(|&x| spec.f(x, 0.0)).collect();
    let fz0: Vec<f64> = samples.iter().map(|&x| spec.f_z(x, 0.0)).collect();
    let fzz0: Vec<f64> = samples.iter().map(|&x| spec.f_zz(x, 0.0)).collect();
    let inf_f0 = f0.iter().cloned().fold(f64::INFINITY, f64::min);
    let (lo, hi) = fz0
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let c = if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        Some(fz0[0])
    } else {
        None
    };
    let min_abs_fzz0 = fzz0.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);

    let mut witnesses = Vec::new();
    let detected = if inf_f0 > 0.0 {
        NonlinearityClass::PositiveAtZero
    } else if f0.iter().all(|v| v.abs() <= 1e-14)
        && c.is_some_and(|c| c > 0.0)
        && min_abs_fzz0 > 0.0
    {
        NonlinearityClass::Bifurcation
    } else {
        NonlinearityClass::Custom
    };
    let passes = match spec.class {
        NonlinearityClass::PositiveAtZero => {
            if inf_f0 <= 0.0 {
                let k = argmin(&f0);
                witnesses.push(format!("f(x,0) = {} at x = {:?}", f0[k], samples[k]));
            }
            inf_f0 > 0.0
        }
        NonlinearityClass::Bifurcation => {
            if let Some(k) = f0.iter().position(|v| v.abs() > 1e-14) {
                witnesses.push(format!("f(x,0) = {} at x = {:?}", f0[k], samples[k]));
            }
            match c {
                None => witnesses.push(format!("f_z(x,0) ranges over [{lo}, {hi}]")),
                Some(c) if c <= 0.0 => witnesses.push(format!("f_z(x,0) = {c} is not positive")),
                Some(_) => {}
            }
            if min_abs_fzz0 == 0.0 {
                let k = fzz0.iter().position(|v| *v == 0.0).unwrap();
                witnesses.push(format!("f_zz(x,0) = 0 at x = {:?}", samples[k]));
            }
            detected == NonlinearityClass::Bifurcation
        }
        NonlinearityClass::Custom => true,
    };
    Ok(ClassReport {
        declared: spec.class,
        detected,
        passes,
        inf_f0,
        c,
        min_abs_fzz0,
        witnesses,
    })
}

fn argmin(v: &[f64]) -> usize {
    let mut k = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[k] {
            k = i;
        }
    }
    k
}
