//! Scene-completion (SC) and semantic-scene-completion (SSC) metrics.
//!
//! Only voxels inside the evaluation mask are scored. Ratios with a zero
//! denominator are reported as `None` rather than folded into 0 or 1.

use crate::camera::{pixel_at, CameraIntrinsics, CameraPose, DepthMap};
use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{GridGeometry, SemanticLabel, VoxelGrid, VoxelMask, NUM_LABELS};

/// Voxels inside the camera view and inside the room.
pub type EvalMask = VoxelMask;

/// Axis-aligned box in world coordinates, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|a| min[a].is_nan() || max[a].is_nan() || min[a] > max[a]) {
            return Err(Error::InvalidArgument(format!(
                "box min {min:?} exceeds max {max:?}"
            )));
        }
        Ok(Aabb { min, max })
    }

    /// The full world extent of a grid.
    pub fn of_grid(g: &GridGeometry) -> Self {
        let o = g.origin();
        let e = g.extent();
        Aabb {
            min: o,
            max: [o[0] + e[0], o[1] + e[1], o[2] + e[2]],
        }
    }

    #[inline]
    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// A voxel is in the mask iff its center lies in `room` and projects into
/// the image with positive camera depth. Depth validity is not consulted;
/// the depth map only supplies the image size.
pub fn build_eval_mask(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    geometry: &GridGeometry,
    room: &Aabb,
) -> EvalMask {
    let [nx, ny, _] = geometry.dims();
    let (w, h) = (depth.width(), depth.height());
    let mut data = vec![false; geometry.len()];
    exec::fill_chunks(&mut data, nx * ny, |iz, slab| {
        for iy in 0..ny {
            for ix in 0..nx {
                let c = geometry.center_unchecked([ix, iy, iz]);
                slab[ix + nx * iy] = room.contains(c)
                    && intr
                        .project(pose.world_to_camera(c))
                        .and_then(|(u, v)| pixel_at(u, v, w, h))
                        .is_some();
            }
        }
    });
    VoxelGrid::from_vec(*geometry, data).expect("length matches geometry")
}

/// True positive / false positive / false negative tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn iou(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }

    fn add(&mut self, o: &Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Binary occupancy counts plus one-vs-rest counts for every label code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub occupancy: Counts,
    pub per_label: [Counts; NUM_LABELS],
}

impl Confusion {
    pub fn merge(&mut self, o: &Confusion) {
        self.occupancy.add(&o.occupancy);
        for (a, b) in self.per_label.iter_mut().zip(&o.per_label) {
            a.add(b);
        }
    }
}

fn check_inputs(
    pred: &VoxelGrid<SemanticLabel>,
    gt: &VoxelGrid<SemanticLabel>,
    mask: &EvalMask,
) -> Result<()> {
    pred.geometry()
        .check_same(gt.geometry(), "prediction vs ground truth")?;
    pred.geometry()
        .check_same(mask.geometry(), "prediction vs evaluation mask")
}

/// Tallies the confusion counts over masked voxels.
pub fn confusion(
    pred: &VoxelGrid<SemanticLabel>,
    gt: &VoxelGrid<SemanticLabel>,
    mask: &EvalMask,
) -> Result<Confusion> {
    check_inputs(pred, gt, mask)?;
    let (p, g, m) = (pred.data(), gt.data(), mask.data());
    let parts = exec::map_chunks(p.len(), exec::REDUCE_CHUNK, |r| {
        let mut c = Confusion::default();
        for i in r {
            if !m[i] {
                continue;
            }
            let (pl, gl) = (p[i], g[i]);
            match (!pl.is_empty(), !gl.is_empty()) {
                (true, true) => c.occupancy.tp += 1,
                (true, false) => c.occupancy.fp += 1,
                (false, true) => c.occupancy.fn_ += 1,
                (false, false) => {}
            }
            if pl == gl {
                c.per_label[pl.index()].tp += 1;
            } else {
                c.per_label[pl.index()].fp += 1;
                c.per_label[gl.index()].fn_ += 1;
            }
        }
        c
    });
    let mut total = Confusion::default();
    for c in &parts {
        total.merge(c);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScMetrics {
    pub counts: Counts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub iou: Option<f64>,
}

impl From<Counts> for ScMetrics {
    fn from(counts: Counts) -> Self {
        ScMetrics {
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            iou: counts.iou(),
        }
    }
}

/// Occupied-vs-empty precision, recall and IoU over masked voxels.
pub fn sc_metrics(
    pred: &VoxelGrid<SemanticLabel>,
    gt: &VoxelGrid<SemanticLabel>,
    mask: &EvalMask,
) -> Result<ScMetrics> {
    Ok(confusion(pred, gt, mask)?.occupancy.into())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassIou {
    pub label: SemanticLabel,
    pub counts: Counts,
    /// `None` when the class is absent from both prediction and ground truth.
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sc: ScMetrics,
    /// Object classes 1..=11 in label order.
    pub per_class: Vec<ClassIou>,
    /// Mean IoU over classes with a defined IoU; `None` if there are none.
    pub mean_iou: Option<f64>,
    /// Classes left out of `mean_iou` because their IoU is undefined.
    pub excluded: Vec<SemanticLabel>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricsReport {
    pub fn from_confusion(c: &Confusion) -> Self {
        let per_class: Vec<ClassIou> = (1..NUM_LABELS)
            .map(|k| ClassIou {
                label: SemanticLabel::new(k as u8).expect("object label"),
                counts: c.per_label[k],
                iou: c.per_label[k].iou(),
            })
            .collect();
        let mean_iou = mean(per_class.iter().filter_map(|c| c.iou));
        let excluded = per_class
            .iter()
            .filter(|c| c.iou.is_none())
            .map(|c| c.label)
            .collect();
        MetricsReport {
            sc: c.occupancy.into(),
            per_class,
            mean_iou,
            excluded,
        }
    }
}

/// Per-class IoU for the eleven object classes, their mean, and SC metrics.
pub fn ssc_metrics(
    pred: &VoxelGrid<SemanticLabel>,
    gt: &VoxelGrid<SemanticLabel>,
    mask: &EvalMask,
) -> Result<MetricsReport> {
    Ok(MetricsReport::from_confusion(&confusion(pred, gt, mask)?))
}

/// How per-scene results are combined over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Sum counts over scenes, then compute each ratio once.
    #[default]
    Micro,
    /// Compute ratios per scene, then average the defined ones.
    Macro,
}

/// Dataset-level aggregation of per-scene confusion counts.
#[derive(Debug, Clone, Default)]
pub struct Aggregator {
    scenes: Vec<Confusion>,
}

impl Aggregator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        pred: &VoxelGrid<SemanticLabel>,
        gt: &VoxelGrid<SemanticLabel>,
        mask: &EvalMask,
    ) -> Result<()> {
        self.scenes.push(confusion(pred, gt, mask)?);
        Ok(())
    }

    pub fn add_confusion(&mut self, c: Confusion) {
        self.scenes.push(c);
    }

    pub fn scenes(&self) -> usize {
        self.scenes.len()
    }

    pub fn total(&self) -> Confusion {
        let mut t = Confusion::default();
        for s in &self.scenes {
            t.merge(s);
        }
        t
    }

    pub fn report(&self, averaging: Averaging) -> MetricsReport {
        let total = self.total();
        match averaging {
            Averaging::Micro => MetricsReport::from_confusion(&total),
            Averaging::Macro => {
                let reports: Vec<_> = self
                    .scenes
                    .iter()
                    .map(MetricsReport::from_confusion)
                    .collect();
                let per_class: Vec<ClassIou> = (0..NUM_LABELS - 1)
                    .map(|k| ClassIou {
                        label: SemanticLabel::new(k as u8 + 1).expect("object label"),
                        counts: total.per_label[k + 1],
                        iou: mean(reports.iter().filter_map(|r| r.per_class[k].iou)),
                    })
                    .collect();
                let mean_iou = mean(per_class.iter().filter_map(|c| c.iou));
                let excluded = per_class
                    .iter()
                    .filter(|c| c.iou.is_none())
                    .map(|c| c.label)
                    .collect();
                MetricsReport {
                    sc: ScMetrics {
                        counts: total.occupancy,
                        precision: mean(reports.iter().filter_map(|r| r.sc.precision)),
                        recall: mean(reports.iter().filter_map(|r| r.sc.recall)),
                        iou: mean(reports.iter().filter_map(|r| r.sc.iou)),
                    },
                    per_class,
                    mean_iou,
                    excluded,
                }
            }
        }
    }
}
