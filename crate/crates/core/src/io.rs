//! File formats: voxel grids (`VXG1`), depth rasters (`DPM1`), class-score
//! volumes (`PRB1`) and the plain-text camera file.
//!
//! All binary formats are little-endian. Grid payloads are x-fastest, then
//! y, then z.

use crate::camera::{CameraIntrinsics, CameraPose, DepthMap};
use crate::error::{Error, Result};
use crate::grid::{GridGeometry, SemanticLabel, VoxelGrid, VoxelMask};
use crate::lga::LgaGrid;
use crate::loss::{LogitVolume, ProbabilityVolume};
use std::fs;
use std::path::Path;

pub const GRID_MAGIC: &[u8; 4] = b"VXG1";
pub const DEPTH_MAGIC: &[u8; 4] = b"DPM1";
pub const SCORES_MAGIC: &[u8; 4] = b"PRB1";

/// Byte length of the `VXG1` header.
pub const GRID_HEADER_LEN: usize = 4 + 1 + 12 + 4 + 12;
/// Stored value for an undefined LGA voxel.
pub const LGA_UNDEFINED: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum GridDtype {
    Labels = 0,
    Scalar = 1,
    Lga = 2,
    Mask = 3,
}

impl GridDtype {
    fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => GridDtype::Labels,
            1 => GridDtype::Scalar,
            2 => GridDtype::Lga,
            3 => GridDtype::Mask,
            _ => return None,
        })
    }

    fn element_size(self) -> usize {
        match self {
            GridDtype::Scalar => 4,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridDtype::Labels => "labels",
            GridDtype::Scalar => "f32 scalar",
            GridDtype::Lga => "lga",
            GridDtype::Mask => "mask",
        }
    }
}

/// Contents of a `VXG1` file.
#[derive(Debug, Clone, PartialEq)]
pub enum GridFile {
    Labels(VoxelGrid<SemanticLabel>),
    Scalar(VoxelGrid<f32>),
    Lga(LgaGrid),
    Mask(VoxelMask),
}

impl GridFile {
    pub fn dtype(&self) -> GridDtype {
        match self {
            GridFile::Labels(_) => GridDtype::Labels,
            GridFile::Scalar(_) => GridDtype::Scalar,
            GridFile::Lga(_) => GridDtype::Lga,
            GridFile::Mask(_) => GridDtype::Mask,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        match self {
            GridFile::Labels(g) => g.geometry(),
            GridFile::Scalar(g) => g.geometry(),
            GridFile::Lga(g) => g.geometry(),
            GridFile::Mask(g) => g.geometry(),
        }
    }

    fn wrong(&self, want: GridDtype) -> Error {
        Error::format_at_byte(
            4,
            format!(
                "expected dtype {} ({}), found {} ({})",
                want as u8,
                want.name(),
                self.dtype() as u8,
                self.dtype().name()
            ),
        )
    }

    pub fn into_labels(self) -> Result<VoxelGrid<SemanticLabel>> {
        match self {
            GridFile::Labels(g) => Ok(g),
            other => Err(other.wrong(GridDtype::Labels)),
        }
    }

    pub fn into_scalar(self) -> Result<VoxelGrid<f32>> {
        match self {
            GridFile::Scalar(g) => Ok(g),
            other => Err(other.wrong(GridDtype::Scalar)),
        }
    }

    pub fn into_lga(self) -> Result<LgaGrid> {
        match self {
            GridFile::Lga(g) => Ok(g),
            other => Err(other.wrong(GridDtype::Lga)),
        }
    }

    pub fn into_mask(self) -> Result<VoxelMask> {
        match self {
            GridFile::Mask(g) => Ok(g),
            other => Err(other.wrong(GridDtype::Mask)),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let g = self.geometry();
        let mut out = Vec::with_capacity(GRID_HEADER_LEN + g.len() * self.dtype().element_size());
        out.extend_from_slice(GRID_MAGIC);
        out.push(self.dtype() as u8);
        for d in g.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(g.voxel_size() as f32).to_le_bytes());
        for o in g.origin() {
            out.extend_from_slice(&(o as f32).to_le_bytes());
        }
        match self {
            GridFile::Labels(grid) => out.extend(grid.data().iter().map(|l| l.code())),
            GridFile::Scalar(grid) => {
                for v in grid.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            GridFile::Lga(grid) => {
                out.extend(grid.data().iter().map(|m| m.unwrap_or(LGA_UNDEFINED)))
            }
            GridFile::Mask(grid) => out.extend(grid.data().iter().map(|&b| b as u8)),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(GRID_MAGIC)?;
        let code = r.u8()?;
        let dtype = GridDtype::from_code(code)
            .ok_or_else(|| Error::format_at_byte(4, format!("unknown dtype code {code}")))?;
        let dims_at = r.pos;
        let dims = [r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let size_at = r.pos;
        let voxel_size = r.f32()? as f64;
        let origin = [r.f32()?, r.f32()?, r.f32()?].map(f64::from);
        if dims.contains(&0) {
            return Err(Error::format_at_byte(
                dims_at,
                format!("zero grid dimension {dims:?}"),
            ));
        }
        let geometry = GridGeometry::new(dims, voxel_size, origin)
            .map_err(|e| Error::format_at_byte(size_at, e.to_string()))?;
        let count = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::format_at_byte(dims_at, "grid dimensions overflow"))?;
        let payload = r.rest_exact(count * dtype.element_size())?;
        let start = GRID_HEADER_LEN;
        let bad = |i: usize, v: u8| {
            Error::format_at_byte(start + i, format!("invalid {} value {v}", dtype.name()))
        };
        Ok(match dtype {
            GridDtype::Labels => {
                let data = payload
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| SemanticLabel::new(v).map_err(|_| bad(i, v)))
                    .collect::<Result<Vec<_>>>()?;
                GridFile::Labels(VoxelGrid::from_vec(geometry, data)?)
            }
            GridDtype::Scalar => {
                let data = payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                GridFile::Scalar(VoxelGrid::from_vec(geometry, data)?)
            }
            GridDtype::Lga => {
                let data = payload
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| match v {
                        0..=6 => Ok(Some(v)),
                        LGA_UNDEFINED => Ok(None),
                        _ => Err(bad(i, v)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                GridFile::Lga(VoxelGrid::from_vec(geometry, data)?)
            }
            GridDtype::Mask => {
                let data = payload
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| match v {
                        0 => Ok(false),
                        1 => Ok(true),
                        _ => Err(bad(i, v)),
                    })
                    .collect::<Result<Vec<_>>>()?;
                GridFile::Mask(VoxelGrid::from_vec(geometry, data)?)
            }
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        GridFile::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}

/// Importance or other `f64` grids are stored as `f32` scalars.
pub fn scalar_grid_from_f64(grid: &VoxelGrid<f64>) -> VoxelGrid<f32> {
    grid.map(|&v| v as f32)
}

/// Contents of a `DPM1` file: depth in millimeters, `0` = invalid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthFile {
    pub width: usize,
    pub height: usize,
    pub millimeters: Vec<u16>,
}

impl DepthFile {
    pub fn from_depth_map(depth: &DepthMap) -> Self {
        DepthFile {
            width: depth.width(),
            height: depth.height(),
            millimeters: depth
                .data()
                .iter()
                .map(|m| (m * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16)
                .collect(),
        }
    }

    pub fn to_depth_map(&self) -> Result<DepthMap> {
        DepthMap::new(
            self.width,
            self.height,
            self.millimeters
                .iter()
                .map(|&mm| f64::from(mm) / 1000.0)
                .collect(),
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 2 * self.millimeters.len());
        out.extend_from_slice(DEPTH_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        for v in &self.millimeters {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(DEPTH_MAGIC)?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        if width == 0 || height == 0 {
            return Err(Error::format_at_byte(
                4,
                format!("empty depth raster {width}x{height}"),
            ));
        }
        let payload = r.rest_exact(width * height * 2)?;
        Ok(DepthFile {
            width,
            height,
            millimeters: payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        DepthFile::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}

/// Intrinsics and camera-to-world pose from the plain-text camera file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraFile {
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
}

impl CameraFile {
    /// Parses five non-comment lines: `fx fy cx cy`, three rotation rows,
    /// and the translation. Lines starting with `#` and blank lines are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let vals = t
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::format_at_line(line_no, format!("not a number: {tok:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push((line_no, vals));
        }
        let want = [4, 3, 3, 3, 3];
        if rows.len() != want.len() {
            return Err(Error::format_at_line(
                rows.last().map_or(1, |r| r.0),
                format!("expected 5 data lines, found {}", rows.len()),
            ));
        }
        for ((line_no, vals), n) in rows.iter().zip(want) {
            if vals.len() != n {
                return Err(Error::format_at_line(
                    *line_no,
                    format!("expected {n} values, found {}", vals.len()),
                ));
            }
        }
        let k = &rows[0].1;
        let intrinsics = CameraIntrinsics::new(k[0], k[1], k[2], k[3])
            .map_err(|e| Error::format_at_line(rows[0].0, e.to_string()))?;
        let row = |i: usize| [rows[i].1[0], rows[i].1[1], rows[i].1[2]];
        let pose = CameraPose::new([row(1), row(2), row(3)], row(4))
            .map_err(|e| Error::format_at_line(rows[1].0, e.to_string()))?;
        Ok(CameraFile { intrinsics, pose })
    }

    pub fn format(&self) -> String {
        let k = &self.intrinsics;
        let r = self.pose.rotation();
        let t = self.pose.translation();
        let mut s = String::from("# fx fy cx cy\n");
        s += &format!("{} {} {} {}\n", k.fx, k.fy, k.cx, k.cy);
        s += "# rotation (camera to world), row-major\n";
        for row in r {
            s += &format!("{} {} {}\n", row[0], row[1], row[2]);
        }
        s += "# translation\n";
        s += &format!("{} {} {}\n", t[0], t[1], t[2]);
        s
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        CameraFile::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.format())?;
        Ok(())
    }
}

/// Contents of a `PRB1` file: an `n × c` matrix of f64 class scores, one
/// row per voxel in grid order.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoresFile {
    Probabilities(ProbabilityVolume),
    Logits(LogitVolume),
}

impl ScoresFile {
    pub fn encode(&self) -> Vec<u8> {
        let (kind, n, c, data) = match self {
            ScoresFile::Probabilities(p) => (0u8, p.voxels(), p.classes(), p.data()),
            ScoresFile::Logits(z) => (1u8, z.voxels(), z.classes(), z.data()),
        };
        let mut out = Vec::with_capacity(13 + 8 * data.len());
        out.extend_from_slice(SCORES_MAGIC);
        out.extend_from_slice(&(n as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        out.push(kind);
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(SCORES_MAGIC)?;
        let n = r.u32()? as usize;
        let c = r.u32()? as usize;
        let kind_at = r.pos;
        let kind = r.u8()?;
        if kind > 1 {
            return Err(Error::format_at_byte(
                kind_at,
                format!("unknown score kind {kind}"),
            ));
        }
        let data: Vec<f64> = r
            .rest_exact(n * c * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let wrap = |e: Error| Error::format_at_byte(13, e.to_string());
        Ok(match kind {
            0 => ScoresFile::Probabilities(ProbabilityVolume::new(n, c, data).map_err(wrap)?),
            _ => ScoresFile::Logits(LogitVolume::new(n, c, data).map_err(wrap)?),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        ScoresFile::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::format_at_byte(
                self.pos,
                format!(
                    "unexpected end of file: need {n} bytes, {} available",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != want {
            return Err(Error::format_at_byte(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(want)
                ),
            ));
        }
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    /// The remaining bytes, which must be exactly `len` long.
    fn rest_exact(&mut self, len: usize) -> Result<&'a [u8]> {
        let actual = self.bytes.len() - self.pos;
        if actual != len {
            return Err(Error::format_at_byte(
                self.pos,
                format!("payload length mismatch: expected {len} bytes, got {actual}"),
            ));
        }
        self.take(len)
    }
}
