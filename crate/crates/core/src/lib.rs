//! Class-targeted point cloud reduction guided by 2D semantic label maps.
//!
//! The pipeline projects a point cloud into a set of calibrated camera views,
//! resolves visibility with a per-pixel depth buffer, extracts per-class pixel
//! sets from 2D label maps and keeps only the point/pixel pairs whose pixels
//! carry one of the requested classes. The reduced correspondence is then
//! classified with a multi-view vote and scored with per-class IoU, run time
//! and resident memory statistics.
//!
//! Module map:
//!
//! - [`scene`]: point clouds, cameras, projection, voxel and cylinder sampling,
//!   PLY and calibration files.
//! - [`mapping`]: depth-buffered point/pixel correspondence.
//! - [`labels`]: 2D label maps (PGM), ground-truth rendering, label noise.
//! - [`extrusion`]: per-class pixel extraction, JSON index files and point
//!   subspace reduction.
//! - [`classify`]: multi-view majority vote and external prediction files.
//! - [`metrics`]: confusion counts, IoU, cross-entropy and stage benchmarking.
//! - [`synth`]: deterministic synthetic scenes with exact ground truth.

pub mod classify;
pub mod extrusion;
pub mod labels;
pub mod mapping;
pub mod metrics;
pub mod scene;
pub mod synth;

pub use scene::{CameraView, ClassId, PixelCoord, Point3, PointCloud, ViewGeometry};
