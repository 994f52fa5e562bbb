use rand::seq::SliceRandom;
use rand::Rng;
use ssc_core::camera::{CameraIntrinsics, CameraPose, DepthMap};
use ssc_core::exec;
use ssc_core::grid::{GridGeometry, SemanticLabel, VoxelGrid, VoxelMask, NUM_LABELS};
use ssc_core::metrics::*;
use ssc_core::synth::{self, oracle_confusion};
use std::f64::consts::FRAC_PI_2;

fn geom() -> GridGeometry {
    GridGeometry::new([8, 8, 8], 0.02, [0.0; 3]).unwrap()
}

fn random_mask(seed: u64, p: f64) -> VoxelMask {
    let mut r = synth::rng(seed);
    let g = geom();
    VoxelGrid::from_vec(g, (0..g.len()).map(|_| r.gen_bool(p)).collect()).unwrap()
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

#[test]
fn counts_and_ratios_match_brute_force() {
    for seed in 0..100 {
        let gt = synth::random_labels(geom(), 12, 0.5, seed);
        let pred = synth::random_labels(geom(), 12, 0.5, seed + 10_000);
        let mask = random_mask(seed + 20_000, 0.8);
        let o = oracle_confusion(&pred, &gt, &mask);
        let c = confusion(&pred, &gt, &mask).unwrap();
        assert_eq!(
            (c.occupancy.tp, c.occupancy.fp, c.occupancy.fn_),
            (o.occupancy_tp, o.occupancy_fp, o.occupancy_fn)
        );
        for k in 0..NUM_LABELS {
            assert_eq!(
                (c.per_label[k].tp, c.per_label[k].fp, c.per_label[k].fn_),
                (o.tp[k], o.fp[k], o.fn_[k])
            );
        }
        let sc = sc_metrics(&pred, &gt, &mask).unwrap();
        assert_eq!(
            sc.precision,
            ratio(o.occupancy_tp, o.occupancy_tp + o.occupancy_fp)
        );
        assert_eq!(
            sc.recall,
            ratio(o.occupancy_tp, o.occupancy_tp + o.occupancy_fn)
        );
        assert_eq!(
            sc.iou,
            ratio(
                o.occupancy_tp,
                o.occupancy_tp + o.occupancy_fp + o.occupancy_fn
            )
        );
        let r = ssc_metrics(&pred, &gt, &mask).unwrap();
        let mut ious = Vec::new();
        for k in 1..NUM_LABELS {
            let want = ratio(o.tp[k], o.tp[k] + o.fp[k] + o.fn_[k]);
            assert_eq!(r.per_class[k - 1].iou, want);
            ious.extend(want);
        }
        let want_mean = ious.iter().sum::<f64>() / ious.len() as f64;
        assert_eq!(r.mean_iou, Some(want_mean));
    }
}

#[test]
fn identity_prediction_is_perfect() {
    for seed in 0..10 {
        let gt = synth::random_labels(geom(), 12, 0.5, seed);
        let r = ssc_metrics(&gt, &gt, &random_mask(seed, 0.9)).unwrap();
        assert_eq!(r.sc.precision, Some(1.0));
        assert_eq!(r.sc.recall, Some(1.0));
        assert_eq!(r.sc.iou, Some(1.0));
        assert_eq!(r.mean_iou, Some(1.0));
        assert!(r
            .per_class
            .iter()
            .all(|c| c.iou.is_none() || c.iou == Some(1.0)));
    }
}

#[test]
fn shared_permutation_leaves_metrics_unchanged() {
    let gt = synth::random_labels(geom(), 12, 0.5, 1);
    let pred = synth::random_labels(geom(), 12, 0.5, 2);
    let mask = random_mask(3, 0.7);
    let mut order: Vec<usize> = (0..geom().len()).collect();
    order.shuffle(&mut synth::rng(4));
    let permute = |g: &VoxelGrid<SemanticLabel>| {
        VoxelGrid::from_vec(geom(), order.iter().map(|&i| g.data()[i]).collect()).unwrap()
    };
    let pm = VoxelGrid::from_vec(geom(), order.iter().map(|&i| mask.data()[i]).collect()).unwrap();
    assert_eq!(
        ssc_metrics(&pred, &gt, &mask).unwrap(),
        ssc_metrics(&permute(&pred), &permute(&gt), &pm).unwrap()
    );
}

#[test]
fn voxels_outside_mask_do_not_matter() {
    let gt = synth::random_labels(geom(), 12, 0.5, 5);
    let pred = synth::random_labels(geom(), 12, 0.5, 6);
    let mask = random_mask(7, 0.5);
    let scramble = |g: &VoxelGrid<SemanticLabel>, seed| {
        let noise = synth::random_labels(geom(), 12, 0.9, seed);
        VoxelGrid::from_vec(
            geom(),
            (0..geom().len())
                .map(|i| {
                    if mask.data()[i] {
                        g.data()[i]
                    } else {
                        noise.data()[i]
                    }
                })
                .collect(),
        )
        .unwrap()
    };
    assert_eq!(
        ssc_metrics(&pred, &gt, &mask).unwrap(),
        ssc_metrics(&scramble(&pred, 8), &scramble(&gt, 9), &mask).unwrap()
    );
}

#[test]
fn occupancy_role_swaps() {
    let gt = synth::random_labels(geom(), 12, 0.4, 11);
    let pred = synth::random_labels(geom(), 12, 0.6, 12);
    let mask = random_mask(13, 0.8);
    let a = sc_metrics(&pred, &gt, &mask).unwrap();

    // exchanging prediction and ground truth exchanges FP and FN
    let b = sc_metrics(&gt, &pred, &mask).unwrap();
    assert_eq!((b.counts.fp, b.counts.fn_), (a.counts.fn_, a.counts.fp));
    assert_eq!((b.precision, b.recall), (a.recall, a.precision));
    assert_eq!(b.iou, a.iou);

    // complementing the prediction: TP' = FN, FN' = TP, FP' = TN
    let one = SemanticLabel::new(1).unwrap();
    let flipped = pred.map(|l| {
        if l.is_empty() {
            one
        } else {
            SemanticLabel::EMPTY
        }
    });
    let tn = (0..geom().len())
        .filter(|&i| mask.data()[i] && pred.data()[i].is_empty() && gt.data()[i].is_empty())
        .count() as u64;
    let c = sc_metrics(&flipped, &gt, &mask).unwrap();
    assert_eq!(
        (c.counts.tp, c.counts.fn_, c.counts.fp),
        (a.counts.fn_, a.counts.tp, tn)
    );
}

#[test]
fn frustum_mask_matches_analytic_volume() {
    // 90° camera at the center of the front face of a box looking down +z.
    // The pyramid |x| ≤ z, |y| ≤ z up to z = 2 has volume 32/3 and fits
    // inside the box. x/y centers sit on multiples of 0.05 and z centers on
    // odd multiples of 0.025, so no center lies exactly on a frustum plane.
    let (w, h) = (200, 200);
    let intr = CameraIntrinsics::from_fov(w, h, FRAC_PI_2, FRAC_PI_2).unwrap();
    let depth = DepthMap::filled(w, h, 1.0).unwrap();
    let g = GridGeometry::new([81, 81, 40], 0.05, [-2.025, -2.025, 0.0]).unwrap();
    let room = Aabb::of_grid(&g);
    let mask = build_eval_mask(&depth, &intr, &CameraPose::identity(), &g, &room);
    let frac = mask.data().iter().filter(|b| **b).count() as f64 / g.len() as f64;

    let e = g.extent();
    let analytic = (32.0 / 3.0) / (e[0] * e[1] * e[2]);
    let mut r = synth::rng(99);
    let samples = 400_000;
    let inside = (0..samples)
        .filter(|_| {
            let x = r.gen_range(room.min[0]..room.max[0]);
            let y = r.gen_range(room.min[1]..room.max[1]);
            let z = r.gen_range(room.min[2]..room.max[2]);
            x.abs() <= z && y.abs() <= z
        })
        .count();
    let monte_carlo = inside as f64 / samples as f64;
    assert!((monte_carlo - analytic).abs() < 0.01 * analytic);
    assert!(
        (frac - analytic).abs() < 0.02 * analytic,
        "{frac} vs {analytic}"
    );
    assert!(
        (frac - monte_carlo).abs() < 0.02 * monte_carlo,
        "{frac} vs {monte_carlo}"
    );
}

#[test]
fn full_view_mask_is_all_true() {
    let (w, h) = (64, 64);
    let intr = CameraIntrinsics::from_fov(w, h, 2.0, 2.0).unwrap();
    let depth = DepthMap::filled(w, h, 0.0).unwrap();
    let g = GridGeometry::new([10, 10, 10], 0.1, [-0.5, -0.5, 1.0]).unwrap();
    let mask = build_eval_mask(
        &depth,
        &intr,
        &CameraPose::identity(),
        &g,
        &Aabb::of_grid(&g),
    );
    assert!(mask.data().iter().all(|b| *b));
    assert_eq!(
        mask,
        exec::sequential(|| build_eval_mask(
            &depth,
            &intr,
            &CameraPose::identity(),
            &g,
            &Aabb::of_grid(&g)
        ))
    );
}

#[test]
fn parallel_counting_matches_sequential() {
    let g = GridGeometry::new([60, 36, 60], 0.02, [0.0; 3]).unwrap();
    let gt = synth::random_labels(g, 12, 0.3, 1);
    let pred = synth::random_labels(g, 12, 0.3, 2);
    let mask = VoxelGrid::filled(g, true);
    let a = ssc_metrics(&pred, &gt, &mask).unwrap();
    let b = exec::sequential(|| ssc_metrics(&pred, &gt, &mask).unwrap());
    assert_eq!(a, b);
}
