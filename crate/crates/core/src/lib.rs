//! Extremal domains of small volume for semilinear overdetermined problems
//! on Riemannian surfaces: perturbed geodesic balls whose Dirichlet solution
//! has constant Neumann data.

pub mod dirichlet;
pub mod error;
pub mod extremal;
pub mod fourier;
pub mod geometry;
pub mod krylov;
pub mod landscape;
pub mod modes;
pub mod nonlinearity;
pub mod radial;
pub mod spectral;
pub mod validation;

pub use dirichlet::{DirichletOptions, DirichletProblem, DirichletSolution, VolumeMode};
pub use error::{Error, Result};
pub use extremal::{ExtremalConfig, ExtremalContext, ExtremalSolution, ExtremalSummary};
pub use fourier::TrigSeries;
pub use geometry::{BoundaryShape, Extension, ManifoldChart, NormalGridSpec, NormalMetric, Point};
pub use landscape::{CriticalPoint, GridSpec, LandscapeGrid};
pub use modes::ModeSpectrum;
pub use nonlinearity::{Builtin, NonlinearitySpec};
pub use radial::RadialProfile;
