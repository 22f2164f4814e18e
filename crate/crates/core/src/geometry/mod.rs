//! Charts, normal coordinates and shape pullbacks.

pub mod chart;
pub mod normal;
pub mod shape;

pub use chart::{Isometry, ManifoldChart, MetricField, Point, Sym2, Vec2};
pub use normal::{NormalGridSpec, NormalMetric, NormalSample, Provenance};
pub use shape::{pullback_shape_metric, volume, BoundaryShape, Extension, PulledBackMetric};
