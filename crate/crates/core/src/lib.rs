//! Computational core for single-view semantic scene completion.
//!
//! The crate covers everything around an SSC network except the network
//! itself: dense voxel grids, depth-camera geometry, projective TSDF and
//! flipped-TSDF encoding, Local Geometric Anisotropy (LGA) with the
//! derived per-voxel importance, the position-aware loss together with the
//! weighted cross-entropy, focal and dice baselines (all with analytic
//! gradients), and the SC/SSC evaluation protocol.
//!
//! Per-voxel work runs on rayon when the `parallel` feature is enabled
//! (the default). [`exec::sequential`] forces the single-threaded path at
//! runtime; both paths produce bit-identical results.

pub mod camera;
pub mod error;
pub mod exec;
pub mod grid;
pub mod io;
pub mod lga;
pub mod loss;
pub mod metrics;
pub mod synth;
pub mod tsdf;

pub use error::{Error, Result};
pub use grid::{GridGeometry, SemanticLabel, VoxelGrid, VoxelMask};

/// Grid dimensions of the reference configuration (x, y, z).
pub const REFERENCE_DIMS: [usize; 3] = [240, 144, 240];
/// Voxel edge length of the reference configuration, meters.
pub const REFERENCE_VOXEL_SIZE: f64 = 0.02;
/// TSDF truncation distance of the reference configuration, meters.
pub const REFERENCE_TRUNCATION: f64 = 0.24;
