//! Point-level uncertainty classification for mobile laser scanning (MLS)
//! point clouds.
//!
//! The pipeline labels every MLS point by its cloud-to-cloud distance to a
//! reference scan, describes each point with 21 geometric features computed
//! at the eigenentropy-optimal neighborhood size, and trains a random forest
//! and a histogram gradient-boosted tree ensemble under spatially blocked
//! cross-validation.
//!
//! Geometry, feature and metric code is generic over [`Scalar`] (`f32` or
//! `f64`); the aliases below fix the scalar to `f64`, which is what the
//! pipeline and the file formats use.

pub mod boosting;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
pub mod geometry;
pub mod ingest;
pub mod labeling;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod seeds;
pub mod synth;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// 3D point with `f64` coordinates in meters.
pub type Point3d = geometry::Point3<f64>;
/// Point cloud with `f64` coordinates.
pub type Cloud = geometry::PointCloud<f64>;
/// Exact 3D kd-tree over an `f64` cloud.
pub type SpatialIndex = geometry::KdTree<f64, 3>;
/// Exact 2D (XY) kd-tree over an `f64` cloud.
pub type SpatialIndex2d = geometry::KdTree<f64, 2>;
/// Grid partition with `f64` origin and cell size.
pub type GridPartition = geometry::GridPartition<f64>;
/// Per-point features in `f64`.
pub type FeatureVector = features::FeatureVector<f64>;
/// Accumulation map with `f64` statistics.
pub type AccumulationMap = features::AccumulationMap<f64>;
