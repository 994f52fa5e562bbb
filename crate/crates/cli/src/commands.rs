use crate::report;
use crate::{
    AverageName, EncodeArgs, EvalArgs, Failure, LgaArgs, LossArgs, LossName, StatsArgs, WeightsArgs,
};
use ssc_core::grid::{GridGeometry, SemanticLabel, VoxelGrid, VoxelMask};
use ssc_core::io::{scalar_grid_from_f64, CameraFile, DepthFile, GridFile, ScoresFile};
use ssc_core::lga::{compute_lga_from_labels, importance_grid, LgaGrid, LgaHistogram, NEIGHBORS};
use ssc_core::loss::{
    class_weights_from_frequency, evaluate, softmax, ClassWeights, LossConfig, LossKind,
    TargetVolume,
};
use ssc_core::metrics::{Aggregator, Averaging};
use ssc_core::tsdf::{compute_tsdf, flip_tsdf};
use std::path::{Path, PathBuf};

type Outcome = Result<String, Failure>;

fn read_grid(path: &Path) -> Result<GridFile, Failure> {
    GridFile::read(path).map_err(|e| Failure::at(path, e))
}

fn read_labels(path: &Path) -> Result<VoxelGrid<SemanticLabel>, Failure> {
    read_grid(path)?
        .into_labels()
        .map_err(|e| Failure::at(path, e))
}

fn read_mask(path: &Path) -> Result<VoxelMask, Failure> {
    read_grid(path)?
        .into_mask()
        .map_err(|e| Failure::at(path, e))
}

fn write_grid(path: &Path, grid: &GridFile) -> Result<(), Failure> {
    grid.write(path).map_err(|e| Failure::at(path, e))
}

fn same_geometry(a: &GridGeometry, b: &GridGeometry, path: &Path) -> Result<(), Failure> {
    a.check_same(b, "input grids")
        .map_err(|e| Failure::at(path, e))
}

pub fn encode(a: EncodeArgs) -> Outcome {
    let depth = DepthFile::read(&a.depth)
        .and_then(|d| d.to_depth_map())
        .map_err(|e| Failure::at(&a.depth, e))?;
    let camera = CameraFile::read(&a.camera).map_err(|e| Failure::at(&a.camera, e))?;
    let geometry = GridGeometry::new(
        [a.dims[0], a.dims[1], a.dims[2]],
        a.voxel_size,
        [a.origin[0], a.origin[1], a.origin[2]],
    )
    .map_err(Failure::of)?;
    let tsdf = compute_tsdf(
        &depth,
        &camera.intrinsics,
        &camera.pose,
        &geometry,
        a.truncation,
    )
    .map_err(Failure::of)?;
    let (grid, kind) = if a.flipped {
        (flip_tsdf(&tsdf).map_err(Failure::of)?.grid, "f-tsdf")
    } else {
        (tsdf.grid, "tsdf")
    };
    write_grid(&a.out, &GridFile::Scalar(grid))?;
    Ok(format!(
        "wrote {} ({kind}, {}x{}x{}, truncation {})\n",
        a.out.display(),
        a.dims[0],
        a.dims[1],
        a.dims[2],
        a.truncation
    ))
}

pub fn lga(a: LgaArgs) -> Outcome {
    let labels = read_labels(&a.labels)?;
    let lga = compute_lga_from_labels(&labels);
    let defined = lga.data().iter().filter(|m| m.is_some()).count();
    write_grid(&a.out, &GridFile::Lga(lga))?;
    Ok(format!(
        "wrote {} ({defined} defined voxels)\n",
        a.out.display()
    ))
}

pub fn weights(a: WeightsArgs) -> Outcome {
    let lga = read_grid(&a.lga)?
        .into_lga()
        .map_err(|e| Failure::at(&a.lga, e))?;
    let imp = importance_grid(&lga, a.lambda, a.alpha).map_err(Failure::of)?;
    write_grid(&a.out, &GridFile::Scalar(scalar_grid_from_f64(&imp)))?;
    Ok(format!(
        "wrote {} (lambda {}, alpha {})\n",
        a.out.display(),
        a.lambda,
        a.alpha
    ))
}

fn lga_of(path: &Path) -> Result<LgaGrid, Failure> {
    match read_grid(path)? {
        GridFile::Lga(g) => Ok(g),
        GridFile::Labels(l) => Ok(compute_lga_from_labels(&l)),
        other => Err(Failure::at(
            path,
            ssc_core::Error::Format {
                location: "byte offset 4".into(),
                message: format!(
                    "expected an LGA or label grid, found dtype {} ({})",
                    other.dtype() as u8,
                    other.dtype().name()
                ),
            },
        )),
    }
}

pub fn stats(a: StatsArgs) -> Outcome {
    let mut counts = [0u64; NEIGHBORS + 1];
    for path in &a.grids {
        let lga = lga_of(path)?;
        for m in lga.data().iter().flatten() {
            counts[usize::from(*m)] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Failure::of(ssc_core::Error::NoDefinedVoxels));
    }
    let hist = LgaHistogram {
        counts,
        fractions: counts.map(|c| c as f64 / total as f64),
    };
    Ok(if a.csv {
        report::histogram_csv(&hist)
    } else {
        report::histogram_text(&hist, a.grids.len())
    })
}

pub fn loss(a: LossArgs) -> Outcome {
    let scores = ScoresFile::read(&a.scores).map_err(|e| Failure::at(&a.scores, e))?;
    let labels = read_labels(&a.labels)?;
    let importance_grid = read_grid(&a.importance)?
        .into_scalar()
        .map_err(|e| Failure::at(&a.importance, e))?;
    same_geometry(labels.geometry(), importance_grid.geometry(), &a.importance)?;
    let codes: Vec<usize> = labels.data().iter().map(|l| l.index()).collect();
    let targets = match &a.mask {
        Some(path) => {
            let mask = read_mask(path)?;
            same_geometry(labels.geometry(), mask.geometry(), path)?;
            TargetVolume::with_mask(codes, mask.into_data()).map_err(Failure::of)?
        }
        None => TargetVolume::new(codes),
    };
    let importance: Vec<f64> = importance_grid
        .data()
        .iter()
        .map(|&v| f64::from(v))
        .collect();

    let (probs, input_kind) = match scores {
        ScoresFile::Probabilities(p) => (p, "probabilities"),
        ScoresFile::Logits(z) => (softmax(&z), "logits"),
    };
    if probs.voxels() != targets.len() {
        return Err(Failure::at(
            &a.scores,
            ssc_core::Error::ShapeMismatch(format!(
                "{} score rows but the label grid has {} voxels",
                probs.voxels(),
                targets.len()
            )),
        ));
    }
    let cfg = LossConfig {
        gamma: a.gamma,
        epsilon: a.epsilon,
        ..LossConfig::default()
    };
    let selected: Vec<LossName> = if a.all {
        vec![LossName::Pa, LossName::Wce, LossName::Focal, LossName::Dice]
    } else {
        vec![a.loss]
    };

    let mut values = Vec::new();
    for name in selected {
        let v = match name {
            LossName::Pa => evaluate(
                LossKind::PositionAware {
                    importance: &importance,
                },
                &probs,
                &targets,
                &cfg,
            ),
            LossName::Wce => {
                let w = wce_weights(&a, &targets, probs.classes())?;
                evaluate(
                    LossKind::WeightedCrossEntropy { weights: &w },
                    &probs,
                    &targets,
                    &cfg,
                )
            }
            LossName::Focal => evaluate(LossKind::Focal, &probs, &targets, &cfg),
            LossName::Dice => evaluate(LossKind::Dice, &probs, &targets, &cfg),
        }
        .map_err(Failure::of)?;
        values.push((loss_label(name), v));
    }
    Ok(report::losses(
        input_kind,
        probs.voxels(),
        probs.classes(),
        targets.participating(),
        &values,
    ))
}

fn loss_label(name: LossName) -> &'static str {
    match name {
        LossName::Pa => "pa",
        LossName::Wce => "wce",
        LossName::Focal => "focal",
        LossName::Dice => "dice",
    }
}

fn wce_weights(
    a: &LossArgs,
    targets: &TargetVolume,
    classes: usize,
) -> Result<ClassWeights, Failure> {
    if let Some(w) = &a.weights {
        if w.len() != classes {
            return Err(Failure::usage(format!(
                "--weights has {} values but the scores have {classes} classes",
                w.len()
            )));
        }
        return ClassWeights::new(w.clone()).map_err(Failure::of);
    }
    if a.frequency_weights {
        let labels = targets.labels();
        let used = (0..labels.len())
            .filter(|&i| targets.participates(i))
            .map(|i| labels[i]);
        return class_weights_from_frequency(used, classes).map_err(Failure::of);
    }
    Ok(ClassWeights::uniform(classes))
}

/// Resolves the scene list for `eval`.
fn scenes(a: &EvalArgs) -> Result<Vec<[PathBuf; 3]>, Failure> {
    let Some(list) = &a.aggregate else {
        // clap guarantees all three positionals when --aggregate is absent
        let files = [&a.pred, &a.gt, &a.mask].map(|p| p.clone().unwrap_or_default());
        return Ok(vec![files]);
    };
    let text = std::fs::read_to_string(list).map_err(|e| Failure::at(list, e.into()))?;
    let base = list.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [p, g, m] = parts[..] else {
            return Err(Failure {
                code: crate::EXIT_IO,
                message: format!(
                    "{}: line {}: expected \"pred gt mask\", found {} fields",
                    list.display(),
                    i + 1,
                    parts.len()
                ),
            });
        };
        out.push([p, g, m].map(|s| base.join(s)));
    }
    if out.is_empty() {
        return Err(Failure {
            code: crate::EXIT_IO,
            message: format!("{}: no scenes listed", list.display()),
        });
    }
    Ok(out)
}

pub fn eval(a: EvalArgs) -> Outcome {
    let mut agg = Aggregator::new();
    for [pred_path, gt_path, mask_path] in scenes(&a)? {
        let pred = read_labels(&pred_path)?;
        let gt = read_labels(&gt_path)?;
        let mask = read_mask(&mask_path)?;
        same_geometry(gt.geometry(), pred.geometry(), &pred_path)?;
        same_geometry(gt.geometry(), mask.geometry(), &mask_path)?;
        agg.add(&pred, &gt, &mask).map_err(Failure::of)?;
    }
    let averaging = match a.average {
        AverageName::Micro => Averaging::Micro,
        AverageName::Macro => Averaging::Macro,
    };
    Ok(report::metrics(
        &agg.report(averaging),
        agg.scenes(),
        averaging,
    ))
}
