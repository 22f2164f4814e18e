//! Benchmark fixtures: the configurations the criterion benches time.

use extremal_core::{ExtremalConfig, ExtremalContext, ManifoldChart, NonlinearitySpec};

/// Reduced grid used for the per-solve benches.
pub fn small_config() -> ExtremalConfig {
    ExtremalConfig { n_r: 24, n_theta: 32, j_max: 8, profile_n_r: 32, ..Default::default() }
}

pub fn sphere_context(config: ExtremalConfig) -> ExtremalContext {
    ExtremalContext {
        chart: ManifoldChart::round_sphere(1.0),
        spec: NonlinearitySpec::constant_one(),
        epsilon: 0.1,
        drift: None,
        config,
    }
}

pub fn forcing_context(config: ExtremalConfig) -> ExtremalContext {
    ExtremalContext {
        chart: ManifoldChart::standard_torus(),
        spec: NonlinearitySpec::periodic_forcing(0.25),
        epsilon: 0.05,
        drift: None,
        config,
    }
}

pub fn conformal_context(config: ExtremalConfig) -> ExtremalContext {
    ExtremalContext {
        chart: ManifoldChart::conformal_torus(0.3, [std::f64::consts::TAU; 2]),
        spec: NonlinearitySpec::affine(1.0, 0.5),
        epsilon: 0.1,
        drift: None,
        config,
    }
}
