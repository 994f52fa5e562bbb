//! Dense voxel grids anchored in world space.
//!
//! Storage is flat with x varying fastest, then y, then z. All file formats
//! and oracles in this crate use that order.

use crate::error::{Error, Result};
use std::fmt;

/// Number of semantic labels including the empty label 0.
pub const NUM_LABELS: usize = 12;

/// Names of labels `0..=11`, indexed by code.
pub const LABEL_NAMES: [&str; NUM_LABELS] = [
    "empty",
    "ceiling",
    "floor",
    "wall",
    "window",
    "chair",
    "bed",
    "sofa",
    "table",
    "tvs",
    "furniture",
    "objects",
];

/// Semantic class of a voxel. Code 0 is free space, 1..=11 are object classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SemanticLabel(u8);

impl SemanticLabel {
    pub const EMPTY: SemanticLabel = SemanticLabel(0);
    pub const MAX_CODE: u8 = (NUM_LABELS - 1) as u8;

    pub fn new(code: u8) -> Result<Self> {
        if code > Self::MAX_CODE {
            return Err(Error::InvalidArgument(format!(
                "semantic label code {code} outside 0..={}",
                Self::MAX_CODE
            )));
        }
        Ok(SemanticLabel(code))
    }

    #[inline]
    pub fn code(self) -> u8 {
        self.0
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn name(self) -> &'static str {
        LABEL_NAMES[self.index()]
    }
}

impl TryFrom<u8> for SemanticLabel {
    type Error = Error;
    fn try_from(code: u8) -> Result<Self> {
        SemanticLabel::new(code)
    }
}

impl fmt::Display for SemanticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.0, self.name())
    }
}

/// Placement of a dense grid in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    dims: [usize; 3],
    voxel_size: f64,
    origin: [f64; 3],
}

/// Relative tolerance used to snap a coordinate that lands on a voxel face
/// (up to rounding) onto that face, so the floor rule sees the exact boundary.
const BOUNDARY_SNAP: f64 = 1e-9;

impl GridGeometry {
    pub fn new(dims: [usize; 3], voxel_size: f64, origin: [f64; 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "grid dims must be positive, got {dims:?}"
            )));
        }
        if !(voxel_size.is_finite() && voxel_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "voxel size must be positive and finite, got {voxel_size}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid origin must be finite, got {origin:?}"
            )));
        }
        Ok(GridGeometry {
            dims,
            voxel_size,
            origin,
        })
    }

    /// The 240×144×240 grid with 2 cm voxels anchored at `origin`.
    pub fn reference(origin: [f64; 3]) -> Self {
        GridGeometry::new(crate::REFERENCE_DIMS, crate::REFERENCE_VOXEL_SIZE, origin)
            .expect("reference geometry is valid")
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    #[inline]
    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    #[inline]
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// World extent along each axis, meters.
    pub fn extent(&self) -> [f64; 3] {
        self.dims.map(|d| d as f64 * self.voxel_size)
    }

    #[inline]
    pub fn contains_index(&self, ix: usize, iy: usize, iz: usize) -> bool {
        ix < self.dims[0] && iy < self.dims[1] && iz < self.dims[2]
    }

    /// Flat offset of `(ix, iy, iz)`. Indices are not bounds-checked.
    #[inline]
    pub fn linear(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.dims[0] * (iy + self.dims[1] * iz)
    }

    /// Inverse of [`GridGeometry::linear`].
    #[inline]
    pub fn unlinear(&self, i: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    /// Voxel containing `point`, using `floor((p - origin) / voxel_size)`.
    /// A point on a shared face belongs to the higher-index voxel.
    pub fn world_to_index(&self, point: [f64; 3]) -> Option<[usize; 3]> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let q = (point[a] - self.origin[a]) / self.voxel_size;
            if !q.is_finite() {
                return None;
            }
            let r = q.round();
            let q = if (q - r).abs() <= BOUNDARY_SNAP * r.abs().max(1.0) {
                r
            } else {
                q.floor()
            };
            if q < 0.0 || q >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = q as usize;
        }
        Some(idx)
    }

    /// World coordinates of the center of voxel `(ix, iy, iz)`.
    pub fn index_to_center(&self, ix: usize, iy: usize, iz: usize) -> Result<[f64; 3]> {
        if !self.contains_index(ix, iy, iz) {
            return Err(Error::IndexOutOfRange(ix, iy, iz));
        }
        Ok(self.center_unchecked([ix, iy, iz]))
    }

    #[inline]
    pub(crate) fn center_unchecked(&self, idx: [usize; 3]) -> [f64; 3] {
        [0, 1, 2].map(|a| self.origin[a] + (idx[a] as f64 + 0.5) * self.voxel_size)
    }

    /// Center of the voxel at flat offset `i`.
    #[inline]
    pub fn center_of_linear(&self, i: usize) -> [f64; 3] {
        self.center_unchecked(self.unlinear(i))
    }

    pub fn check_same(&self, other: &GridGeometry, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch(format!(
                "{what}: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}

/// Dense 3D array of `T` with world-space geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<T> {
    geometry: GridGeometry,
    data: Vec<T>,
}

/// Participation mask; `true` marks a voxel that takes part in a computation.
pub type VoxelMask = VoxelGrid<bool>;

impl<T> VoxelGrid<T> {
    pub fn from_vec(geometry: GridGeometry, data: Vec<T>) -> Result<Self> {
        if data.len() != geometry.len() {
            return Err(Error::ShapeMismatch(format!(
                "grid data has {} elements, dims {:?} need {}",
                data.len(),
                geometry.dims(),
                geometry.len()
            )));
        }
        Ok(VoxelGrid { geometry, data })
    }

    #[inline]
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    #[inline]
    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> Option<&T> {
        self.geometry
            .contains_index(ix, iy, iz)
            .then(|| &self.data[self.geometry.linear(ix, iy, iz)])
    }

    pub fn get_mut(&mut self, ix: usize, iy: usize, iz: usize) -> Option<&mut T> {
        if !self.geometry.contains_index(ix, iy, iz) {
            return None;
        }
        let i = self.geometry.linear(ix, iy, iz);
        Some(&mut self.data[i])
    }

    /// Applies `f` element-wise, keeping the geometry.
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> VoxelGrid<U> {
        VoxelGrid {
            geometry: self.geometry,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T: Clone> VoxelGrid<T> {
    pub fn filled(geometry: GridGeometry, value: T) -> Self {
        VoxelGrid {
            data: vec![value; geometry.len()],
            geometry,
        }
    }
}

impl VoxelGrid<SemanticLabel> {
    /// Builds a label grid from raw codes, rejecting codes above 11.
    pub fn from_codes(geometry: GridGeometry, codes: &[u8]) -> Result<Self> {
        let data = codes
            .iter()
            .map(|&c| SemanticLabel::new(c))
            .collect::<Result<Vec<_>>>()?;
        VoxelGrid::from_vec(geometry, data)
    }

    /// Mask that is `true` exactly on empty (label 0) voxels.
    pub fn free_space_mask(&self) -> VoxelMask {
        self.map(|l| l.is_empty())
    }

    /// Per-label voxel counts.
    pub fn histogram(&self) -> [u64; NUM_LABELS] {
        let mut h = [0u64; NUM_LABELS];
        for l in &self.data {
            h[l.index()] += 1;
        }
        h
    }
}

/// Majority-vote downsampling over `factor³` blocks. Ties go to the lowest
/// label code. The output voxel size is `voxel_size · factor`; the origin is
/// unchanged.
pub fn downsample_labels(
    labels: &VoxelGrid<SemanticLabel>,
    factor: usize,
) -> Result<VoxelGrid<SemanticLabel>> {
    if factor == 0 {
        return Err(Error::InvalidArgument(
            "downsample factor must be positive".into(),
        ));
    }
    let g = labels.geometry();
    let dims = g.dims();
    if dims.iter().any(|d| d % factor != 0) {
        return Err(Error::InvalidArgument(format!(
            "dims {dims:?} not divisible by factor {factor}"
        )));
    }
    let out_dims = dims.map(|d| d / factor);
    let out_geom = GridGeometry::new(out_dims, g.voxel_size() * factor as f64, g.origin())?;
    let mut out = vec![SemanticLabel::EMPTY; out_geom.len()];
    let slab = out_dims[0] * out_dims[1];
    crate::exec::fill_chunks(&mut out, slab, |oz, row| {
        for oy in 0..out_dims[1] {
            for ox in 0..out_dims[0] {
                let mut counts = [0u32; NUM_LABELS];
                for dz in 0..factor {
                    for dy in 0..factor {
                        for dx in 0..factor {
                            let l = labels.data
                                [g.linear(ox * factor + dx, oy * factor + dy, oz * factor + dz)];
                            counts[l.index()] += 1;
                        }
                    }
                }
                // first maximum wins, i.e. lowest code on ties
                let mut best = 0;
                for (code, &c) in counts.iter().enumerate() {
                    if c > counts[best] {
                        best = code;
                    }
                }
                row[ox + out_dims[0] * oy] = SemanticLabel(best as u8);
            }
        }
    });
    VoxelGrid::from_vec(out_geom, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> GridGeometry {
        GridGeometry::reference([0.0; 3])
    }

    #[test]
    fn label_range_enforced() {
        assert!(SemanticLabel::new(11).is_ok());
        assert!(SemanticLabel::new(12).is_err());
        assert!(SemanticLabel::new(0).unwrap().is_empty());
        assert_eq!(SemanticLabel::new(3).unwrap().name(), "wall");
    }

    #[test]
    fn reference_extent() {
        let e = reference().extent();
        for (got, want) in e.iter().zip([4.8, 2.88, 4.8]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn world_to_index_examples() {
        let g = reference();
        assert_eq!(g.world_to_index([0.01, 0.01, 0.01]), Some([0, 0, 0]));
        assert_eq!(g.world_to_index([4.81, 0.0, 0.0]), None);
        assert_eq!(g.world_to_index([0.02, 0.04, 0.06]), Some([1, 2, 3]));
        assert_eq!(g.world_to_index([-0.001, 0.0, 0.0]), None);
        assert_eq!(g.world_to_index([4.8, 0.0, 0.0]), None);
    }

    #[test]
    fn index_to_center_examples() {
        let g = reference();
        let c = g.index_to_center(0, 0, 0).unwrap();
        assert!(c.iter().all(|v| (v - 0.01).abs() < 1e-12));
        let c = g.index_to_center(239, 143, 239).unwrap();
        for (got, want) in c.iter().zip([4.79, 2.87, 4.79]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!(matches!(
            g.index_to_center(240, 0, 0),
            Err(Error::IndexOutOfRange(240, 0, 0))
        ));
    }

    #[test]
    fn center_round_trip_every_voxel() {
        let g = GridGeometry::new([24, 14, 24], 0.02, [-0.3, 0.1, 1.7]).unwrap();
        for i in 0..g.len() {
            let idx = g.unlinear(i);
            let c = g.index_to_center(idx[0], idx[1], idx[2]).unwrap();
            assert_eq!(g.world_to_index(c), Some(idx));
        }
    }

    #[test]
    fn from_vec_rejects_wrong_length() {
        let g = GridGeometry::new([2, 2, 2], 1.0, [0.0; 3]).unwrap();
        assert!(VoxelGrid::from_vec(g, vec![0u8; 7]).is_err());
    }

    fn block(codes: [u8; 8]) -> VoxelGrid<SemanticLabel> {
        let g = GridGeometry::new([2, 2, 2], 0.02, [0.0; 3]).unwrap();
        VoxelGrid::from_codes(g, &codes).unwrap()
    }

    #[test]
    fn downsample_examples() {
        let out = downsample_labels(&block([3; 8]), 2).unwrap();
        assert_eq!(out.data(), &[SemanticLabel(3)]);
        assert!((out.geometry().voxel_size() - 0.04).abs() < 1e-15);

        let out = downsample_labels(&block([2, 7, 2, 7, 2, 7, 2, 2]), 2).unwrap();
        assert_eq!(out.data(), &[SemanticLabel(2)]);

        let out = downsample_labels(&block([7, 2, 7, 2, 7, 2, 7, 2]), 2).unwrap();
        assert_eq!(out.data(), &[SemanticLabel(2)]);
    }

    #[test]
    fn downsample_rejects_non_divisible() {
        let g = GridGeometry::new([3, 2, 2], 0.02, [0.0; 3]).unwrap();
        let grid = VoxelGrid::filled(g, SemanticLabel::EMPTY);
        assert!(downsample_labels(&grid, 2).is_err());
        assert!(downsample_labels(&grid, 0).is_err());
    }

    proptest! {
        #[test]
        fn world_to_index_containment(
            x in 0.0f64..4.8, y in 0.0f64..2.88, z in 0.0f64..4.8
        ) {
            let g = reference();
            if let Some([ix, iy, iz]) = g.world_to_index([x, y, z]) {
                let c = g.index_to_center(ix, iy, iz).unwrap();
                let d = ((c[0]-x).powi(2) + (c[1]-y).powi(2) + (c[2]-z).powi(2)).sqrt();
                prop_assert!(d <= 0.01 * 3f64.sqrt() + 1e-12);
            }
        }

        #[test]
        fn downsample_preserves_total(codes in proptest::collection::vec(0u8..12, 4*4*2)) {
            let g = GridGeometry::new([4, 4, 2], 0.02, [0.0; 3]).unwrap();
            let grid = VoxelGrid::from_codes(g, &codes).unwrap();
            let out = downsample_labels(&grid, 2).unwrap();
            prop_assert_eq!(out.histogram().iter().sum::<u64>() * 8, grid.len() as u64);
        }
    }
}
