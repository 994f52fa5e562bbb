//! Synthetic scenes and deliberately naive reference implementations.
//!
//! The oracles here share no computational code with the modules they
//! check: they use nested loops, signed index arithmetic and scalar math.
//! They are single-threaded and slow on purpose.

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, SemanticLabel, VoxelGrid, NUM_LABELS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator used by every randomized fixture.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    /// Axis-aligned box covering `min .. min + size`.
    Box {
        min: [usize; 3],
        size: [usize; 3],
        label: SemanticLabel,
    },
    /// One-voxel-wide run of `length` voxels along `axis` (0, 1 or 2).
    Strip {
        start: [usize; 3],
        axis: usize,
        length: usize,
        label: SemanticLabel,
    },
}

impl Primitive {
    fn extent(&self) -> ([usize; 3], [usize; 3], SemanticLabel) {
        match *self {
            Primitive::Box { min, size, label } => (min, size, label),
            Primitive::Strip {
                start,
                axis,
                length,
                label,
            } => {
                let mut size = [1; 3];
                size[axis.min(2)] = length;
                (start, size, label)
            }
        }
    }
}

/// Primitives painted in order onto an empty grid; later ones win.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub geometry: GridGeometry,
    pub primitives: Vec<Primitive>,
}

impl SceneSpec {
    pub fn new(geometry: GridGeometry) -> Self {
        SceneSpec {
            geometry,
            primitives: Vec::new(),
        }
    }

    pub fn with(mut self, p: Primitive) -> Self {
        self.primitives.push(p);
        self
    }

    /// `count` random boxes and strips with labels in 1..=11.
    pub fn random(geometry: GridGeometry, count: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let dims = geometry.dims();
        let mut spec = SceneSpec::new(geometry);
        for _ in 0..count {
            let label = SemanticLabel::new(r.gen_range(1..NUM_LABELS as u8)).unwrap();
            let p = if r.gen_bool(0.7) {
                let size = dims.map(|d| r.gen_range(1..=d.min(6)));
                let min = [0, 1, 2].map(|a| r.gen_range(0..=dims[a] - size[a]));
                Primitive::Box { min, size, label }
            } else {
                let axis = r.gen_range(0..3);
                let length = r.gen_range(1..=dims[axis]);
                let mut start = dims.map(|d| r.gen_range(0..d));
                start[axis] = r.gen_range(0..=dims[axis] - length);
                Primitive::Strip {
                    start,
                    axis,
                    length,
                    label,
                }
            };
            spec.primitives.push(p);
        }
        spec
    }
}

pub fn rasterize(spec: &SceneSpec) -> Result<VoxelGrid<SemanticLabel>> {
    let dims = spec.geometry.dims();
    let mut grid = VoxelGrid::filled(spec.geometry, SemanticLabel::EMPTY);
    for (k, p) in spec.primitives.iter().enumerate() {
        if let Primitive::Strip { axis, .. } = p {
            if *axis > 2 {
                return Err(Error::InvalidArgument(format!(
                    "primitive {k}: axis {axis} > 2"
                )));
            }
        }
        let (min, size, label) = p.extent();
        if (0..3).any(|a| size[a] == 0 || min[a] + size[a] > dims[a]) {
            return Err(Error::InvalidArgument(format!(
                "primitive {k} ({min:?} + {size:?}) outside grid {dims:?}"
            )));
        }
        for z in min[2]..min[2] + size[2] {
            for y in min[1]..min[1] + size[1] {
                for x in min[0]..min[0] + size[0] {
                    *grid.get_mut(x, y, z).expect("checked bounds") = label;
                }
            }
        }
    }
    Ok(grid)
}

/// I.i.d. labels: empty with probability `1 - occupancy`, otherwise uniform
/// over `1..labels`.
pub fn random_labels(
    geometry: GridGeometry,
    labels: u8,
    occupancy: f64,
    seed: u64,
) -> VoxelGrid<SemanticLabel> {
    let mut r = rng(seed);
    let data = (0..geometry.len())
        .map(|_| {
            if labels <= 1 || !r.gen_bool(occupancy) {
                SemanticLabel::EMPTY
            } else {
                SemanticLabel::new(r.gen_range(1..labels)).expect("label in range")
            }
        })
        .collect();
    VoxelGrid::from_vec(geometry, data).expect("length matches")
}

/// Uniform random values in `[lo, hi)`.
pub fn random_values(len: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.gen_range(lo..hi)).collect()
}

/// Neighbor-scan LGA. `None` on voxels where `free_space` is set.
pub fn oracle_lga(
    labels: &VoxelGrid<SemanticLabel>,
    free_space: &VoxelGrid<bool>,
) -> VoxelGrid<Option<u8>> {
    let [nx, ny, nz] = labels.dims();
    let offsets: [[i64; 3]; 6] = [
        [-1, 0, 0],
        [1, 0, 0],
        [0, -1, 0],
        [0, 1, 0],
        [0, 0, -1],
        [0, 0, 1],
    ];
    let mut out = VoxelGrid::filled(*labels.geometry(), None);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if *free_space.get(x, y, z).unwrap() {
                    continue;
                }
                let me = *labels.get(x, y, z).unwrap();
                let mut count = 0u8;
                for o in offsets {
                    let q = [x as i64 + o[0], y as i64 + o[1], z as i64 + o[2]];
                    if q.iter().any(|v| *v < 0) {
                        continue;
                    }
                    if let Some(other) = labels.get(q[0] as usize, q[1] as usize, q[2] as usize) {
                        if *other != me {
                            count += 1;
                        }
                    }
                }
                *out.get_mut(x, y, z).unwrap() = Some(count);
            }
        }
    }
    out
}

/// Naive per-class tallies. Index 0 of each array is the empty class; the
/// `occupancy_*` fields count the binary occupied-vs-empty problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OracleConfusion {
    pub tp: [u64; NUM_LABELS],
    pub fp: [u64; NUM_LABELS],
    pub fn_: [u64; NUM_LABELS],
    pub occupancy_tp: u64,
    pub occupancy_fp: u64,
    pub occupancy_fn: u64,
}

pub fn oracle_confusion(
    pred: &VoxelGrid<SemanticLabel>,
    gt: &VoxelGrid<SemanticLabel>,
    mask: &VoxelGrid<bool>,
) -> OracleConfusion {
    let mut out = OracleConfusion::default();
    let [nx, ny, nz] = gt.dims();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                if !mask.get(x, y, z).unwrap() {
                    continue;
                }
                let p = pred.get(x, y, z).unwrap().code() as usize;
                let g = gt.get(x, y, z).unwrap().code() as usize;
                for c in 0..NUM_LABELS {
                    if p == c && g == c {
                        out.tp[c] += 1;
                    }
                    if p == c && g != c {
                        out.fp[c] += 1;
                    }
                    if p != c && g == c {
                        out.fn_[c] += 1;
                    }
                }
                if p != 0 && g != 0 {
                    out.occupancy_tp += 1;
                }
                if p != 0 && g == 0 {
                    out.occupancy_fp += 1;
                }
                if p == 0 && g != 0 {
                    out.occupancy_fn += 1;
                }
            }
        }
    }
    out
}

/// Loss selector for [`oracle_loss`].
#[derive(Debug, Clone, PartialEq)]
pub enum OracleLoss {
    /// Per-voxel importance.
    PositionAware(Vec<f64>),
    /// Per-class weights.
    WeightedCrossEntropy(Vec<f64>),
    /// Focal exponent.
    Focal(f64),
    Dice,
}

/// Term-by-term evaluation of the loss formulas with an explicit one-hot
/// target. `probs` is row-major `n × c`; `eps` floors logs and dice
/// denominators.
pub fn oracle_loss(
    loss: &OracleLoss,
    probs: &[f64],
    c: usize,
    targets: &[usize],
    mask: Option<&[bool]>,
    eps: f64,
) -> f64 {
    let n = targets.len();
    let y = |i: usize, k: usize| if targets[i] == k { 1.0 } else { 0.0 };
    let p = |i: usize, k: usize| probs[i * c + k];
    let used = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..n).filter(|&i| used(i)).count() as f64;
    match loss {
        OracleLoss::Dice => {
            let mut total = 0.0;
            for k in 0..c {
                let mut num = 0.0;
                let mut yy = 0.0;
                let mut pp = 0.0;
                for i in 0..n {
                    if used(i) {
                        num += y(i, k) * p(i, k);
                        yy += y(i, k) * y(i, k);
                        pp += p(i, k) * p(i, k);
                    }
                }
                total += 1.0 - 2.0 * num / (yy + pp + eps);
            }
            total
        }
        _ => {
            let mut total = 0.0;
            for i in 0..n {
                if !used(i) {
                    continue;
                }
                for k in 0..c {
                    let log_p = if p(i, k) > eps {
                        p(i, k).ln()
                    } else {
                        eps.ln()
                    };
                    let factor = match loss {
                        OracleLoss::PositionAware(imp) => imp[i],
                        OracleLoss::WeightedCrossEntropy(w) => w[k],
                        OracleLoss::Focal(gamma) => (1.0 - p(i, k)).powf(*gamma),
                        OracleLoss::Dice => unreachable!(),
                    };
                    total += factor * y(i, k) * log_p;
                }
            }
            -total / count
        }
    }
}

/// Naive row softmax used as a test reference.
pub fn oracle_softmax(logits: &[f64], c: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(c) {
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let denom: f64 = row.iter().map(|v| (v - m).exp()).sum();
        out.extend(row.iter().map(|v| (v - m).exp() / denom));
    }
    out
}
