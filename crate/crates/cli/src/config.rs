use std::f64::consts::TAU;
use std::path::PathBuf;

use extremal_core::{
    Builtin, Error, ExtremalConfig, GridSpec, ManifoldChart, NonlinearitySpec, Point, TrigSeries, VolumeMode,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartConfig {
    FlatTorus {
        #[serde(default = "default_periods")]
        periods: [f64; 2],
    },
    RoundSphere {
        #[serde(default = "one")]
        radius: f64,
    },
    ConformalTorus {
        amplitude: f64,
        #[serde(default = "default_periods")]
        periods: [f64; 2],
    },
}

fn default_periods() -> [f64; 2] {
    [TAU, TAU]
}

fn one() -> f64 {
    1.0
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig::FlatTorus { periods: default_periods() }
    }
}

impl ChartConfig {
    pub fn build(&self) -> Result<ManifoldChart, Error> {
        match *self {
            ChartConfig::FlatTorus { periods } => {
                if !(periods[0] > 0.0 && periods[1] > 0.0) {
                    return Err(Error::InvalidInput("torus periods must be positive".into()));
                }
                Ok(ManifoldChart::flat_torus(periods))
            }
            ChartConfig::RoundSphere { radius } => {
                if !(radius > 0.0) {
                    return Err(Error::InvalidInput("sphere radius must be positive".into()));
                }
                Ok(ManifoldChart::round_sphere(radius))
            }
            ChartConfig::ConformalTorus { amplitude, periods } => {
                if !(amplitude.abs() < 1.0) || !(periods[0] > 0.0 && periods[1] > 0.0) {
                    return Err(Error::InvalidInput(
                        "conformal torus needs |amplitude| < 1 and positive periods".into(),
                    ));
                }
                Ok(ManifoldChart::conformal_torus(amplitude, periods))
            }
        }
    }
}

/// Options for the `solve` command: one Dirichlet solve at a prescribed shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub vbar: TrigSeries,
    pub volume: VolumeMode,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { vbar: TrigSeries::zeros(0), volume: VolumeMode::Constrained }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chart: ChartConfig,
    pub nonlinearity: Builtin,
    /// space dimension of the radial model problems (profile, modes)
    pub dimension: usize,
    pub point: Point,
    pub epsilons: Vec<f64>,
    pub numerics: ExtremalConfig,
    pub grid: GridSpec,
    pub solve: SolveOptions,
    pub svg: bool,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            chart: ChartConfig::default(),
            nonlinearity: Builtin::ConstantOne,
            dimension: 2,
            point: [0.0, 0.0],
            epsilons: vec![0.1],
            numerics: ExtremalConfig::default(),
            grid: GridSpec::default(),
            solve: SolveOptions::default(),
            svg: true,
            workers: None,
            output_dir: None,
        }
    }
}

/// A config failure located by JSON pointer.
#[derive(Debug, Serialize)]
pub struct ConfigError {
    pub pointer: String,
    pub message: String,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
            pointer: pointer_of(e.path()),
            message: e.inner().to_string(),
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |pointer: &str, message: String| Err(ConfigError { pointer: pointer.into(), message });
        if let Err(e) = self.numerics.validate() {
            return bad("/numerics", e.to_string());
        }
        if self.dimension < 2 {
            return bad("/dimension", "dimension must be at least 2".into());
        }
        if self.epsilons.is_empty() {
            return bad("/epsilons", "at least one epsilon is required".into());
        }
        for (k, e) in self.epsilons.iter().enumerate() {
            if !(*e >= 0.0 && e.is_finite()) {
                return bad(&format!("/epsilons/{k}"), format!("epsilon must be finite and >= 0, got {e}"));
            }
        }
        if self.grid.n1 == 0 || self.grid.n2 == 0 {
            return bad("/grid", "grid dimensions must be positive".into());
        }
        if self.solve.vbar.cos.len() != self.solve.vbar.sin.len() {
            return bad("/solve/vbar", "cos and sin must have equal length".into());
        }
        if self.solve.vbar.j_max() > self.numerics.j_max {
            return bad("/solve/vbar", format!("more modes than numerics.j_max = {}", self.numerics.j_max));
        }
        if self.workers == Some(0) {
            return bad("/workers", "workers must be positive".into());
        }
        if let Err(e) = self.chart.build() {
            return bad("/chart", e.to_string());
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> NonlinearitySpec {
        NonlinearitySpec::builtin(self.nonlinearity)
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => out.push_str("/?"),
        }
    }
    out
}
