//! Voxel contouring engine: volume sampling, direct volume rendering, 2D/3D
//! brush annotation on a shared label volume, shape-based interpolation,
//! evaluation metrics, persistence and an HTTP service.

pub mod annotate;
pub mod error;
pub mod geom;
pub mod interp;
pub mod metrics;
pub mod phantom;
pub mod render;
pub mod service;
pub mod store;
pub mod volume;
pub mod workflow;

pub use error::{Error, Result};
