//! Local Geometric Anisotropy and the importance weights derived from it.
//!
//! The LGA of a non-empty voxel is the number of its six face neighbors that
//! carry a different label (empty counts as different). Neighbors outside the
//! grid count as equal, so the volume border never looks like an object
//! surface. Free-space voxels have no LGA.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{SemanticLabel, VoxelGrid, VoxelMask};

/// Number of face neighbors; the upper bound of an LGA value.
pub const NEIGHBORS: usize = 6;

/// Per-voxel LGA in `0..=6`; `None` on free-space voxels.
pub type LgaGrid = VoxelGrid<Option<u8>>;

/// Per-voxel importance `λ + α·LGA` (exactly `λ` on free space).
pub type ImportanceGrid = VoxelGrid<f64>;

/// Default base importance λ.
pub const DEFAULT_LAMBDA: f64 = 1.0;
/// Default LGA gain α.
pub const DEFAULT_ALPHA: f64 = 0.5;

pub fn compute_lga(labels: &VoxelGrid<SemanticLabel>, free_space: &VoxelMask) -> Result<LgaGrid> {
    labels
        .geometry()
        .check_same(free_space.geometry(), "labels vs free-space mask")?;
    let g = labels.geometry();
    let [nx, ny, nz] = g.dims();
    let lab = labels.data();
    let free = free_space.data();
    let sx = 1;
    let sy = nx;
    let sz = nx * ny;

    let mut out = vec![None; g.len()];
    exec::fill_chunks(&mut out, nx * ny, |z, slab| {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + sy * y + sz * z;
                if free[i] {
                    continue;
                }
                let c = lab[i];
                let mut m = 0u8;
                m += (x > 0 && lab[i - sx] != c) as u8;
                m += (x + 1 < nx && lab[i + sx] != c) as u8;
                m += (y > 0 && lab[i - sy] != c) as u8;
                m += (y + 1 < ny && lab[i + sy] != c) as u8;
                m += (z > 0 && lab[i - sz] != c) as u8;
                m += (z + 1 < nz && lab[i + sz] != c) as u8;
                slab[x + nx * y] = Some(m);
            }
        }
    });
    VoxelGrid::from_vec(*g, out)
}

/// LGA with the free-space mask derived from the labels themselves.
pub fn compute_lga_from_labels(labels: &VoxelGrid<SemanticLabel>) -> LgaGrid {
    compute_lga(labels, &labels.free_space_mask()).expect("mask derived from the same grid")
}

pub fn importance_grid(lga: &LgaGrid, lambda: f64, alpha: f64) -> Result<ImportanceGrid> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    let src = lga.data();
    let mut out = vec![0.0; src.len()];
    exec::fill_chunks(&mut out, exec::REDUCE_CHUNK, |k, chunk| {
        let base = k * exec::REDUCE_CHUNK;
        for (o, m) in chunk.iter_mut().zip(&src[base..]) {
            *o = match m {
                Some(m) => lambda + alpha * f64::from(*m),
                None => lambda,
            };
        }
    });
    VoxelGrid::from_vec(*lga.geometry(), out)
}

/// Population of defined LGA values.
#[derive(Debug, Clone, PartialEq)]
pub struct LgaHistogram {
    pub counts: [u64; NEIGHBORS + 1],
    pub fractions: [f64; NEIGHBORS + 1],
}

impl LgaHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

pub fn lga_histogram(lga: &LgaGrid) -> Result<LgaHistogram> {
    let data = lga.data();
    let partial = exec::map_chunks(data.len(), exec::REDUCE_CHUNK, |r| {
        let mut c = [0u64; NEIGHBORS + 1];
        for m in data[r].iter().flatten() {
            c[usize::from(*m)] += 1;
        }
        c
    });
    let mut counts = [0u64; NEIGHBORS + 1];
    for p in partial {
        for (a, b) in counts.iter_mut().zip(p) {
            *a += b;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoDefinedVoxels);
    }
    let fractions = counts.map(|c| c as f64 / total as f64);
    Ok(LgaHistogram { counts, fractions })
}
