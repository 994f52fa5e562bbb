//! Position-aware loss and the weighted cross-entropy, focal and dice
//! baselines, with analytic gradients with respect to logits.
//!
//! Losses consume row-stochastic probabilities; gradients consume logits and
//! fold the softmax Jacobian in analytically. Every `log` and every dice
//! denominator is floored by `LossConfig::epsilon`. Voxels excluded by the
//! target mask contribute neither to the sums nor to the voxel count `N`.
//! Sums run over fixed-size chunks merged in order, so the result does not
//! depend on the thread count.

use crate::error::{Error, Result};
use crate::exec;
use crate::grid::{SemanticLabel, VoxelGrid};

/// Row-major `n × c` matrix of unnormalized class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVolume {
    n: usize,
    c: usize,
    data: Vec<f64>,
}

impl LogitVolume {
    pub fn new(n: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(n, c, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("logits must be finite".into()));
        }
        Ok(LogitVolume { n, c, data })
    }

    pub fn voxels(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.c..(i + 1) * self.c]
    }
}

/// Row-stochastic `n × c` matrix of class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    n: usize,
    c: usize,
    data: Vec<f64>,
}

/// Allowed deviation of a probability row sum from 1.
pub const ROW_SUM_TOL: f64 = 1e-9;

impl ProbabilityVolume {
    pub fn new(n: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(n, c, data.len())?;
        for (i, row) in data.chunks(c).enumerate() {
            if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidArgument(format!(
                    "probability {p} in row {i} outside [0, 1]"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArgument(format!(
                    "row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(ProbabilityVolume { n, c, data })
    }

    pub fn voxels(&self) -> usize {
        self.n
    }

    pub fn classes(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.c..(i + 1) * self.c]
    }
}

fn check_shape(n: usize, c: usize, len: usize) -> Result<()> {
    if c == 0 {
        return Err(Error::InvalidArgument(
            "class count must be positive".into(),
        ));
    }
    if n.checked_mul(c) != Some(len) {
        return Err(Error::ShapeMismatch(format!(
            "{len} values cannot form a {n} x {c} volume"
        )));
    }
    Ok(())
}

/// Ground-truth class per voxel plus an optional participation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVolume {
    labels: Vec<usize>,
    mask: Option<Vec<bool>>,
}

impl TargetVolume {
    pub fn new(labels: Vec<usize>) -> Self {
        TargetVolume { labels, mask: None }
    }

    pub fn with_mask(labels: Vec<usize>, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "mask has {} entries for {} targets",
                mask.len(),
                labels.len()
            )));
        }
        Ok(TargetVolume {
            labels,
            mask: Some(mask),
        })
    }

    pub fn from_labels(grid: &VoxelGrid<SemanticLabel>) -> Self {
        TargetVolume::new(grid.data().iter().map(|l| l.index()).collect())
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn participates(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[i])
    }

    /// Number of participating voxels.
    pub fn participating(&self) -> usize {
        match &self.mask {
            Some(m) => m.iter().filter(|b| **b).count(),
            None => self.labels.len(),
        }
    }

    fn check_against(&self, n: usize, c: usize) -> Result<()> {
        if self.labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} targets for {n} voxels",
                self.labels.len()
            )));
        }
        if let Some(bad) = self.labels.iter().find(|&&t| t >= c) {
            return Err(Error::InvalidArgument(format!(
                "target class {bad} out of range for {c} classes"
            )));
        }
        Ok(())
    }
}

/// Per-class weights for weighted cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "class weights must be finite and >= 0, got {weights:?}"
            )));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::InvalidArgument(
                "at least one class weight must be positive".into(),
            ));
        }
        Ok(ClassWeights(weights))
    }

    pub fn uniform(classes: usize) -> Self {
        ClassWeights(vec![1.0; classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Inverse-frequency class weights scaled so the rarest class gets 1.
///
/// Empty voxels are counted like any other class. A class that never occurs
/// is an error because its reciprocal frequency is unbounded.
pub fn class_weights_from_frequency<I>(labels: I, classes: usize) -> Result<ClassWeights>
where
    I: IntoIterator<Item = usize>,
{
    let mut counts = vec![0u64; classes];
    for l in labels {
        if l >= classes {
            return Err(Error::InvalidArgument(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        counts[l] += 1;
    }
    class_weights_from_counts(&counts)
}

pub fn class_weights_from_counts(counts: &[u64]) -> Result<ClassWeights> {
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::UnobservedClass(c));
    }
    let rarest = *counts
        .iter()
        .min()
        .ok_or_else(|| Error::InvalidArgument("no classes".into()))?;
    // (1/freq_c) / max_k(1/freq_k) = min_k(count_k) / count_c
    ClassWeights::new(counts.iter().map(|&n| rarest as f64 / n as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda: f64,
    pub alpha: f64,
    /// Focal modulating exponent.
    pub gamma: f64,
    /// Floor applied inside every log and dice denominator.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: crate::lga::DEFAULT_LAMBDA,
            alpha: crate::lga::DEFAULT_ALPHA,
            gamma: 2.0,
            epsilon: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "focal gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Loss selector shared by evaluation, gradients and the finite-difference check.
#[derive(Debug, Clone, Copy)]
pub enum LossKind<'a> {
    /// Cross-entropy weighted per voxel by LGA importance.
    PositionAware {
        importance: &'a [f64],
    },
    /// Cross-entropy weighted per ground-truth class.
    WeightedCrossEntropy {
        weights: &'a ClassWeights,
    },
    Focal,
    Dice,
}

impl LossKind<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::PositionAware { .. } => "pa",
            LossKind::WeightedCrossEntropy { .. } => "wce",
            LossKind::Focal => "focal",
            LossKind::Dice => "dice",
        }
    }
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(logits: &LogitVolume) -> ProbabilityVolume {
    let c = logits.c;
    let mut data = vec![0.0; logits.data.len()];
    exec::fill_chunks(&mut data, c * 256, |k, out| {
        let base = k * c * 256;
        for (r, row) in out.chunks_mut(c).enumerate() {
            let z = &logits.data[base + r * c..base + (r + 1) * c];
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (o, &v) in row.iter_mut().zip(z) {
                *o = (v - max).exp();
                s += *o;
            }
            for o in row.iter_mut() {
                *o /= s;
            }
        }
    });
    ProbabilityVolume {
        n: logits.n,
        c,
        data,
    }
}

fn participating_count(targets: &TargetVolume) -> Result<usize> {
    match targets.participating() {
        0 => Err(Error::InvalidArgument("no participating voxels".into())),
        n => Ok(n),
    }
}

fn check_importance(importance: &[f64], n: usize) -> Result<()> {
    if importance.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} importance values for {n} voxels",
            importance.len()
        )));
    }
    if importance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(
            "importance must be finite and >= 0".into(),
        ));
    }
    Ok(())
}

fn check_weights(weights: &ClassWeights, c: usize) -> Result<()> {
    if weights.0.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "{} class weights for {c} classes",
            weights.0.len()
        )));
    }
    Ok(())
}

/// `-(1/N) Σ_n weight(n) · modulation(p_true) · log(max(p_true, ε))` over
/// participating voxels.
fn weighted_nll<W, M>(
    probs: &ProbabilityVolume,
    targets: &TargetVolume,
    eps: f64,
    weight: W,
    modulation: M,
) -> Result<f64>
where
    W: Fn(usize, usize) -> f64 + Sync + Send,
    M: Fn(f64) -> f64 + Sync + Send,
{
    targets.check_against(probs.n, probs.c)?;
    let n = participating_count(targets)?;
    let c = probs.c;
    let total = exec::sum(probs.n, |i| {
        if !targets.participates(i) {
            return 0.0;
        }
        let t = targets.labels[i];
        let p = probs.data[i * c + t];
        weight(i, t) * modulation(p) * -p.max(eps).ln()
    });
    Ok(total / n as f64)
}

/// Position-aware loss: cross-entropy scaled per voxel by `importance[n]`.
pub fn pa_loss(
    probs: &ProbabilityVolume,
    targets: &TargetVolume,
    importance: &[f64],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_importance(importance, probs.n)?;
    weighted_nll(probs, targets, cfg.epsilon, |i, _| importance[i], |_| 1.0)
}

pub fn wce_loss(
    probs: &ProbabilityVolume,
    targets: &TargetVolume,
    weights: &ClassWeights,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    check_weights(weights, probs.c)?;
    weighted_nll(probs, targets, cfg.epsilon, |_, t| weights.0[t], |_| 1.0)
}

/// Focal loss with exponent `cfg.gamma`.
pub fn focal_loss(
    probs: &ProbabilityVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let gamma = cfg.gamma;
    weighted_nll(
        probs,
        targets,
        cfg.epsilon,
        |_, _| 1.0,
        |p| (1.0 - p).powf(gamma),
    )
}

/// Per-class sums `(Σ y·p, Σ y², Σ p²)` over participating voxels.
fn dice_sums(probs: &ProbabilityVolume, targets: &TargetVolume) -> Vec<[f64; 3]> {
    let c = probs.c;
    let partial = exec::map_chunks(probs.n, exec::REDUCE_CHUNK / c.max(1), |r| {
        let mut acc = vec![[0.0f64; 3]; c];
        for i in r {
            if !targets.participates(i) {
                continue;
            }
            let t = targets.labels[i];
            for (k, a) in acc.iter_mut().enumerate() {
                let p = probs.data[i * c + k];
                if k == t {
                    a[0] += p;
                    a[1] += 1.0;
                }
                a[2] += p * p;
            }
        }
        acc
    });
    let mut sums = vec![[0.0f64; 3]; c];
    for acc in partial {
        for (s, a) in sums.iter_mut().zip(acc) {
            for j in 0..3 {
                s[j] += a[j];
            }
        }
    }
    sums
}

/// Multi-class dice loss `Σ_c [1 - 2 Σ y·p / (Σ y² + Σ p² + ε)]`.
///
/// A class absent from the targets and predicted as exactly zero contributes 1.
pub fn dice_loss(
    probs: &ProbabilityVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    targets.check_against(probs.n, probs.c)?;
    participating_count(targets)?;
    Ok(dice_sums(probs, targets)
        .iter()
        .map(|[inter, yy, pp]| 1.0 - 2.0 * inter / (yy + pp + cfg.epsilon))
        .sum())
}

/// Evaluates the selected loss on probabilities.
pub fn evaluate(
    kind: LossKind<'_>,
    probs: &ProbabilityVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
) -> Result<f64> {
    match kind {
        LossKind::PositionAware { importance } => pa_loss(probs, targets, importance, cfg),
        LossKind::WeightedCrossEntropy { weights } => wce_loss(probs, targets, weights, cfg),
        LossKind::Focal => focal_loss(probs, targets, cfg),
        LossKind::Dice => dice_loss(probs, targets, cfg),
    }
}

/// Loss as a function of logits, `evaluate(kind, softmax(logits), …)`.
pub fn evaluate_logits(
    kind: LossKind<'_>,
    logits: &LogitVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
) -> Result<f64> {
    evaluate(kind, &softmax(logits), targets, cfg)
}

/// Analytic gradient of the selected loss with respect to the logits,
/// row-major `n × c`. Rows of masked-out voxels are zero.
pub fn gradient(
    kind: LossKind<'_>,
    logits: &LogitVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    targets.check_against(logits.n, logits.c)?;
    let n_part = participating_count(targets)? as f64;
    let probs = softmax(logits);
    let c = logits.c;
    let mut grad = vec![0.0; logits.data.len()];

    match kind {
        LossKind::PositionAware { .. } | LossKind::WeightedCrossEntropy { .. } => {
            match kind {
                LossKind::PositionAware { importance } => check_importance(importance, logits.n)?,
                LossKind::WeightedCrossEntropy { weights } => check_weights(weights, c)?,
                _ => unreachable!(),
            }
            let scale = |i: usize, t: usize| match kind {
                LossKind::PositionAware { importance } => importance[i],
                LossKind::WeightedCrossEntropy { weights } => weights.0[t],
                _ => unreachable!(),
            };
            // d/dz_j [-w log softmax(z)_t] = w (p_j - δ_tj)
            fill_rows(&mut grad, c, |i, row| {
                if !targets.participates(i) {
                    return;
                }
                let t = targets.labels[i];
                let w = scale(i, t) / n_part;
                let p = probs.row(i);
                for (j, g) in row.iter_mut().enumerate() {
                    *g = w * (p[j] - if j == t { 1.0 } else { 0.0 });
                }
            });
        }
        LossKind::Focal => {
            let gamma = cfg.gamma;
            fill_rows(&mut grad, c, |i, row| {
                if !targets.participates(i) {
                    return;
                }
                let t = targets.labels[i];
                let p = probs.row(i);
                let pt = p[t];
                let q = 1.0 - pt;
                // dL/dp_t for L = -(1-p)^γ log p
                let modulation_term = if gamma == 0.0 || q == 0.0 {
                    0.0
                } else {
                    gamma * q.powf(gamma - 1.0) * pt.ln()
                };
                let dl_dpt = modulation_term - q.powf(gamma) / pt;
                // dp_t/dz_j = p_t (δ_tj - p_j)
                let s = dl_dpt * pt / n_part;
                for (j, g) in row.iter_mut().enumerate() {
                    *g = s * (if j == t { 1.0 } else { 0.0 } - p[j]);
                }
            });
        }
        LossKind::Dice => {
            let sums = dice_sums(&probs, targets);
            let eps = cfg.epsilon;
            fill_rows(&mut grad, c, |i, row| {
                if !targets.participates(i) {
                    return;
                }
                let t = targets.labels[i];
                let p = probs.row(i);
                // dL/dp_k = -2 (y_k D_k - 2 A_k p_k) / D_k²
                let dl_dp = |k: usize| {
                    let [inter, yy, pp] = sums[k];
                    let d = yy + pp + eps;
                    let y = if k == t { 1.0 } else { 0.0 };
                    -2.0 * (y * d - 2.0 * inter * p[k]) / (d * d)
                };
                let dl: Vec<f64> = (0..c).map(dl_dp).collect();
                let dot: f64 = dl.iter().zip(p).map(|(a, b)| a * b).sum();
                for (j, g) in row.iter_mut().enumerate() {
                    *g = p[j] * (dl[j] - dot);
                }
            });
        }
    }
    Ok(grad)
}

fn fill_rows<F>(grad: &mut [f64], c: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    const ROWS: usize = 256;
    exec::fill_chunks(grad, c * ROWS, |k, chunk| {
        for (r, row) in chunk.chunks_mut(c).enumerate() {
            f(k * ROWS + r, row);
        }
    });
}

pub fn pa_loss_grad(
    logits: &LogitVolume,
    targets: &TargetVolume,
    importance: &[f64],
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    gradient(LossKind::PositionAware { importance }, logits, targets, cfg)
}

/// Gradient entries below this magnitude are compared absolutely rather than
/// relatively by the finite-difference check.
pub const FD_ABS_FLOOR: f64 = 1e-4;

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    /// `max_k |g_k - fd_k| / max(|g_k|, |fd_k|, FD_ABS_FLOOR)`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Flat index of the entry with the largest relative error.
    pub worst_index: usize,
}

/// Compares `analytic` against central differences of the selected loss.
pub fn compare_with_finite_differences(
    kind: LossKind<'_>,
    logits: &LogitVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
    analytic: &[f64],
    step: f64,
) -> Result<FdReport> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step must be > 0, got {step}"
        )));
    }
    if analytic.len() != logits.data.len() {
        return Err(Error::ShapeMismatch(format!(
            "analytic gradient has {} entries, logits {}",
            analytic.len(),
            logits.data.len()
        )));
    }
    let numeric = exec::map_indices(logits.data.len(), |k| -> Result<f64> {
        let mut z = logits.clone();
        let x = z.data[k];
        z.data[k] = x + step;
        let plus = evaluate_logits(kind, &z, targets, cfg)?;
        z.data[k] = x - step;
        let minus = evaluate_logits(kind, &z, targets, cfg)?;
        Ok((plus - minus) / (2.0 * step))
    });
    let mut report = FdReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        worst_index: 0,
    };
    for (k, (num, &ana)) in numeric.into_iter().zip(analytic).enumerate() {
        let num = num?;
        let abs = (ana - num).abs();
        let rel = abs / ana.abs().max(num.abs()).max(FD_ABS_FLOOR);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || rel.is_nan() {
            report.max_rel_error = rel;
            report.worst_index = k;
        }
    }
    Ok(report)
}

/// Checks the analytic gradient of the selected loss by central differences.
pub fn finite_diff_check(
    kind: LossKind<'_>,
    logits: &LogitVolume,
    targets: &TargetVolume,
    cfg: &LossConfig,
    step: f64,
) -> Result<FdReport> {
    let analytic = gradient(kind, logits, targets, cfg)?;
    compare_with_finite_differences(kind, logits, targets, cfg, &analytic, step)
}
