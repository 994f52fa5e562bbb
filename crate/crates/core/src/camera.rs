//! Pinhole depth-camera geometry and the per-pixel pixel→voxel mapping.
//!
//! Pixel `(u, v)` refers to the integer column/row index with no half-pixel
//! offset. A continuous image coordinate maps to pixel `floor(u + 0.5)`.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{GridGeometry, VoxelGrid, VoxelMask};

/// Single-view depth image in meters, row-major. `0.0` marks a missing reading.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "depth map must be non-empty, got {width}x{height}"
            )));
        }
        if depth.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "depth has {} values, {width}x{height} needs {}",
                depth.len(),
                width * height
            )));
        }
        if let Some((i, d)) = depth
            .iter()
            .enumerate()
            .find(|(_, d)| !(d.is_finite() && **d >= 0.0))
        {
            return Err(Error::InvalidArgument(format!(
                "depth at pixel {i} must be finite and >= 0, got {d}"
            )));
        }
        Ok(DepthMap {
            width,
            height,
            depth,
        })
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Result<Self> {
        DepthMap::new(width, height, vec![depth; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.depth
    }

    /// Depth at column `u`, row `v`.
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> f64 {
        self.depth[v * self.width + u]
    }

    /// Depth at `(u, v)` when the reading is valid (> 0).
    #[inline]
    pub fn valid_at(&self, u: usize, v: usize) -> Option<f64> {
        let d = self.at(u, v);
        (d > 0.0).then_some(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0 && fy.is_finite() && fy > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidArgument(
                "principal point must be finite".into(),
            ));
        }
        Ok(CameraIntrinsics { fx, fy, cx, cy })
    }

    /// Intrinsics with the given horizontal/vertical field of view (radians)
    /// for a `width`×`height` image, principal point at the image center.
    pub fn from_fov(width: usize, height: usize, fov_x: f64, fov_y: f64) -> Result<Self> {
        let fx = width as f64 / 2.0 / (fov_x / 2.0).tan();
        let fy = height as f64 / 2.0 / (fov_y / 2.0).tan();
        CameraIntrinsics::new(
            fx,
            fy,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
        )
    }

    /// Camera-frame point for continuous image coordinate `(u, v)` at depth `d`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, d: f64) -> [f64; 3] {
        [d * (u - self.cx) / self.fx, d * (v - self.cy) / self.fy, d]
    }

    /// Continuous image coordinate of a camera-frame point with `z > 0`.
    #[inline]
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 0.0 || !p[2].is_finite() {
            return None;
        }
        Some((
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ))
    }
}

/// Integer pixel containing continuous coordinate `(u, v)`, if inside a
/// `width`×`height` image.
#[inline]
pub fn pixel_at(u: f64, v: f64, width: usize, height: usize) -> Option<(usize, usize)> {
    let pu = (u + 0.5).floor();
    let pv = (v + 0.5).floor();
    if pu >= 0.0 && pv >= 0.0 && pu < width as f64 && pv < height as f64 {
        Some((pu as usize, pv as usize))
    } else {
        None
    }
}

/// Rigid camera-to-world transform `p_world = R · p_cam + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

const ORTHONORMAL_TOL: f64 = 1e-6;

impl CameraPose {
    pub fn new(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        if rotation
            .iter()
            .flatten()
            .chain(&translation)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("pose must be finite".into()));
        }
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[i][k] * rotation[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                if (dot - want).abs() > ORTHONORMAL_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "rotation is not orthonormal: (R·Rᵀ)[{i}][{j}] = {dot}"
                    )));
                }
            }
        }
        let r = &rotation;
        let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidArgument(format!(
                "rotation determinant must be +1, got {det}"
            )));
        }
        Ok(CameraPose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        CameraPose {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Identity rotation with the camera center at `t`.
    pub fn translation_only(t: [f64; 3]) -> Self {
        CameraPose {
            translation: t,
            ..CameraPose::identity()
        }
    }

    pub fn rotation(&self) -> [[f64; 3]; 3] {
        self.rotation
    }

    pub fn translation(&self) -> [f64; 3] {
        self.translation
    }

    #[inline]
    pub fn camera_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    #[inline]
    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let d = [0, 1, 2].map(|i| p[i] - self.translation[i]);
        [0, 1, 2].map(|i| r[0][i] * d[0] + r[1][i] * d[1] + r[2][i] * d[2])
    }
}

/// World point seen at continuous pixel `(u, v)` with depth `d`.
#[inline]
pub fn backproject_pixel(
    u: f64,
    v: f64,
    d: f64,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
) -> [f64; 3] {
    pose.camera_to_world(intr.unproject(u, v, d))
}

/// World points of every valid depth pixel, in row-major pixel order.
pub fn backproject(depth: &DepthMap, intr: &CameraIntrinsics, pose: &CameraPose) -> Vec<[f64; 3]> {
    let w = depth.width();
    let mut out = Vec::new();
    for v in 0..depth.height() {
        for u in 0..w {
            if let Some(d) = depth.valid_at(u, v) {
                out.push(backproject_pixel(u as f64, v as f64, d, intr, pose));
            }
        }
    }
    out
}

/// Per-pixel voxel index of the back-projected depth reading.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    width: usize,
    height: usize,
    geometry: GridGeometry,
    entries: Vec<Option<[usize; 3]>>,
}

impl ProjectionMap {
    /// Builds a map from precomputed entries, row-major. Every present entry
    /// must lie inside `geometry`.
    pub fn from_entries(
        width: usize,
        height: usize,
        geometry: GridGeometry,
        entries: Vec<Option<[usize; 3]>>,
    ) -> Result<Self> {
        if entries.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {width}x{height} map",
                entries.len()
            )));
        }
        if let Some([x, y, z]) = entries
            .iter()
            .flatten()
            .find(|[x, y, z]| !geometry.contains_index(*x, *y, *z))
        {
            return Err(Error::IndexOutOfRange(*x, *y, *z));
        }
        Ok(ProjectionMap {
            width,
            height,
            geometry,
            entries,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    #[inline]
    pub fn entry(&self, u: usize, v: usize) -> Option<[usize; 3]> {
        self.entries[v * self.width + u]
    }

    pub fn entries(&self) -> &[Option<[usize; 3]>] {
        &self.entries
    }

    pub fn mapped_pixels(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

pub fn compute_projection_map(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    geometry: &GridGeometry,
) -> ProjectionMap {
    let w = depth.width();
    let entries = exec::map_indices(w * depth.height(), |i| {
        let (u, v) = (i % w, i / w);
        depth.valid_at(u, v).and_then(|d| {
            geometry.world_to_index(backproject_pixel(u as f64, v as f64, d, intr, pose))
        })
    });
    ProjectionMap {
        width: w,
        height: depth.height(),
        geometry: *geometry,
        entries,
    }
}

/// Per-pixel feature vectors of fixed dimension, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f32>,
}

impl PixelFeatures {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * dim {
            return Err(Error::ShapeMismatch(format!(
                "feature data has {} values, {width}x{height}x{dim} needs {}",
                data.len(),
                width * height * dim
            )));
        }
        Ok(PixelFeatures {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pixel(&self, u: usize, v: usize) -> &[f32] {
        let i = (v * self.width + u) * self.dim;
        &self.data[i..i + self.dim]
    }
}

/// Voxel grid carrying a fixed-length feature vector per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelFeatures {
    geometry: GridGeometry,
    dim: usize,
    data: Vec<f32>,
}

impl VoxelFeatures {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> &[f32] {
        let i = self.geometry.linear(ix, iy, iz) * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Lifts per-pixel features into the grid. Each touched voxel holds the
/// element-wise maximum over its pixels; untouched voxels hold zeros and are
/// `false` in the returned mask.
pub fn scatter_to_volume(
    features: &PixelFeatures,
    map: &ProjectionMap,
) -> Result<(VoxelFeatures, VoxelMask)> {
    if features.width != map.width || features.height != map.height {
        return Err(Error::ShapeMismatch(format!(
            "features are {}x{}, projection map is {}x{}",
            features.width, features.height, map.width, map.height
        )));
    }
    let geometry = map.geometry;
    let dim = features.dim;

    // (voxel, pixel) pairs sorted by voxel, so each voxel's pixels are contiguous
    let mut pairs: Vec<(usize, usize)> = map
        .entries
        .iter()
        .enumerate()
        .filter_map(|(p, e)| e.map(|[x, y, z]| (geometry.linear(x, y, z), p)))
        .collect();
    pairs.sort_unstable();
    let mut starts: Vec<usize> = (0..pairs.len())
        .filter(|&i| i == 0 || pairs[i].0 != pairs[i - 1].0)
        .collect();
    starts.push(pairs.len());

    let reduced = exec::map_indices(starts.len() - 1, |g| {
        let group = &pairs[starts[g]..starts[g + 1]];
        let first = group[0].1 * dim;
        let mut acc = features.data[first..first + dim].to_vec();
        for &(_, p) in &group[1..] {
            for (a, &f) in acc.iter_mut().zip(&features.data[p * dim..(p + 1) * dim]) {
                *a = a.max(f);
            }
        }
        (group[0].0, acc)
    });

    let mut data = vec![0.0f32; geometry.len() * dim];
    let mut mask = vec![false; geometry.len()];
    for (voxel, acc) in reduced {
        data[voxel * dim..(voxel + 1) * dim].copy_from_slice(&acc);
        mask[voxel] = true;
    }
    Ok((
        VoxelFeatures {
            geometry,
            dim,
            data,
        },
        VoxelGrid::from_vec(geometry, mask)?,
    ))
}
