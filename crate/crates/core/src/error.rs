use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("geodesic integration failed at {last_point:?}: {reason}")]
    GeodesicFailure { last_point: [f64; 2], reason: String },

    #[error("metric degenerate: {0}")]
    MetricDegenerate(String),

    #[error("shape leaves the normal-coordinate grid (radius {radius} > {limit})")]
    OutOfRange { radius: f64, limit: f64 },

    #[error("inconsistent derivative callables: max deviation {deviation:.3e} at x = {x:?}, z = {z}")]
    Consistency { deviation: f64, x: [f64; 2], z: f64 },

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("positivity violated: {0}")]
    Positivity(String),

    #[error("mode {j} is degenerate (kernel value {kernel_value:.3e})")]
    ModeDegenerate { j: usize, kernel_value: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("center of mass undefined: {0}")]
    CenterUndefined(String),

    #[error("setup failed: {0}")]
    Setup(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::GeodesicFailure { .. } => "geodesic_failure",
            Error::MetricDegenerate(_) => "metric_degenerate",
            Error::OutOfRange { .. } => "out_of_range",
            Error::Consistency { .. } => "consistency",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Positivity(_) => "positivity_violation",
            Error::ModeDegenerate { .. } => "mode_degenerate",
            Error::Precondition(_) => "precondition",
            Error::CenterUndefined(_) => "center_undefined",
            Error::Setup(_) => "setup",
        }
    }
}
