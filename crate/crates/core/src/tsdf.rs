//! Projective TSDF and flipped-TSDF encoding of a single depth view.
//!
//! Sign convention: positive on the observed-free side between camera and
//! surface, negative behind the surface. Voxels that fall outside the image,
//! behind the camera, or onto a missing depth reading are `+1`.

use crate::camera::{pixel_at, CameraIntrinsics, CameraPose, DepthMap};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{GridGeometry, VoxelGrid};

/// Truncation-normalized signed distances in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfGrid {
    pub grid: VoxelGrid<f32>,
    /// Truncation distance in meters.
    pub truncation: f64,
}

/// Flipped TSDF: `sign(t) · (1 - |t|)` with `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FTsdfGrid {
    pub grid: VoxelGrid<f32>,
}

/// Normalized projective signed distance of a single voxel center.
#[inline]
fn voxel_tsdf(
    center: [f64; 3],
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    truncation: f64,
) -> f32 {
    let p = pose.world_to_camera(center);
    let Some((u, v)) = intr.project(p) else {
        return 1.0;
    };
    let Some((pu, pv)) = pixel_at(u, v, depth.width(), depth.height()) else {
        return 1.0;
    };
    let Some(d) = depth.valid_at(pu, pv) else {
        return 1.0;
    };
    ((d - p[2]) / truncation).clamp(-1.0, 1.0) as f32
}

pub fn compute_tsdf(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    geometry: &GridGeometry,
    truncation: f64,
) -> Result<TsdfGrid> {
    if !(truncation.is_finite() && truncation > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation must be positive, got {truncation}"
        )));
    }
    let [nx, ny, _] = geometry.dims();
    let mut data = vec![0.0f32; geometry.len()];
    exec::fill_chunks(&mut data, nx * ny, |iz, slab| {
        for iy in 0..ny {
            for ix in 0..nx {
                let c = geometry.center_unchecked([ix, iy, iz]);
                slab[ix + nx * iy] = voxel_tsdf(c, depth, intr, pose, truncation);
            }
        }
    });
    Ok(TsdfGrid {
        grid: VoxelGrid::from_vec(*geometry, data)?,
        truncation,
    })
}

#[inline]
pub fn flip_value(t: f32) -> f32 {
    let m = 1.0 - t.abs();
    if t < 0.0 {
        -m
    } else {
        m
    }
}

pub fn flip_tsdf(tsdf: &TsdfGrid) -> Result<FTsdfGrid> {
    if let Some((i, t)) = tsdf
        .grid
        .data()
        .iter()
        .enumerate()
        .find(|(_, t)| !(-1.0..=1.0).contains(*t))
    {
        return Err(Error::InvalidArgument(format!(
            "TSDF value {t} at voxel {i} outside [-1, 1]"
        )));
    }
    let src = tsdf.grid.data();
    let mut data = vec![0.0f32; src.len()];
    exec::fill_chunks(&mut data, exec::REDUCE_CHUNK, |k, out| {
        let base = k * exec::REDUCE_CHUNK;
        for (o, &t) in out.iter_mut().zip(&src[base..]) {
            *o = flip_value(t);
        }
    });
    Ok(FTsdfGrid {
        grid: VoxelGrid::from_vec(*tsdf.grid.geometry(), data)?,
    })
}
