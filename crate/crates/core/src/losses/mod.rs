//! Training losses: penalty-reduced focal loss on the heatmap and the corner
//! distance loss on lifted boxes, optionally split into parameter groups.

use std::str::FromStr;

use thiserror::Error;

use crate::codec::{CodecConfig, CodecError, Heatmap, RegressionMap, TargetSet};
use crate::exec::Execution;
use crate::geometry::{CameraProjection, GeometryError};

mod activation;
mod corners;
pub mod dual;
mod focal;
mod gradcheck;

pub use activation::{activate_map, activate_tuple, dim_activation, orient_activation};
pub use corners::{
    corner_l1, corner_loss, disentangled_corners, predicted_corners, CornerNorm, LiftMode, ObjectContext,
};
pub use focal::{focal_loss, focal_loss_with_grad, PROB_CLAMP};
pub use gradcheck::{grad_check, grad_check_coords, relative_error, GradCheckReport, DEFAULT_EPS};

use corners::{activate, corner_distance, gt_flat, lift_corners};
use dual::{Dual, Real};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate orientation vector ({0}, {1})")]
    DegenerateVector(f64, f64),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Parameter groups of the regression tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Group {
    /// Channels 6, 7 (angle vector).
    Orientation,
    /// Channels 3, 4, 5 (dimension residuals).
    Dimension,
    /// Channels 0, 1, 2 (depth residual and keypoint offsets).
    Location,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Orientation, Group::Dimension, Group::Location];

    /// Slot in [`LossBreakdown::reg_per_group`].
    pub fn index(self) -> usize {
        match self {
            Group::Orientation => 0,
            Group::Dimension => 1,
            Group::Location => 2,
        }
    }

    /// The group a raw regression channel belongs to.
    pub fn of_channel(channel: usize) -> Option<Group> {
        match channel {
            0..=2 => Some(Group::Location),
            3..=5 => Some(Group::Dimension),
            6 | 7 => Some(Group::Orientation),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Group::Orientation => "orientation",
            Group::Dimension => "dimension",
            Group::Location => "location",
        }
    }
}

/// Form of the regression loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// One L1 corner term per group.
    DisentangledL1,
    /// A single L1 corner term on the fully predicted box.
    PlainL1,
    /// A single smooth-L1 corner term on the fully predicted box.
    SmoothL1,
}

impl LossVariant {
    pub const ALL: [LossVariant; 3] = [LossVariant::DisentangledL1, LossVariant::PlainL1, LossVariant::SmoothL1];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::DisentangledL1 => "disentangled_l1",
            LossVariant::PlainL1 => "plain_l1",
            LossVariant::SmoothL1 => "smooth_l1",
        }
    }

    fn norm(self) -> CornerNorm {
        match self {
            LossVariant::SmoothL1 => CornerNorm::SmoothL1,
            _ => CornerNorm::L1,
        }
    }
}

impl FromStr for LossVariant {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| LossError::InvalidConfig(format!("unknown loss variant '{s}'")))
    }
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub variant: LossVariant,
    pub groups: [Group; 3],
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
            lambda: 1.0,
            variant: LossVariant::DisentangledL1,
            groups: Group::ALL,
        }
    }
}

impl LossConfig {
    pub fn with_variant(variant: LossVariant) -> Self {
        Self { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("lambda", self.lambda)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LossError::InvalidConfig(format!("{name} = {v}")));
            }
        }
        if self.groups != Group::ALL {
            return Err(LossError::InvalidConfig(format!("groups must be {:?}", Group::ALL)));
        }
        Ok(())
    }
}

/// Loss values for one batch.
///
/// Slots of `reg_per_group` follow [`Group::index`]. Single-term variants
/// store their whole regression loss in slot 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cls: f64,
    pub reg_per_group: [f64; 3],
    pub total: f64,
}

impl LossBreakdown {
    pub fn reg(&self) -> f64 {
        self.reg_per_group.iter().sum()
    }

    fn finish(cls: f64, reg_per_group: [f64; 3]) -> Result<Self, LossError> {
        let total = cls + reg_per_group.iter().sum::<f64>();
        if !total.is_finite() {
            return Err(LossError::NonFiniteLoss(format!("cls {cls}, reg {reg_per_group:?}")));
        }
        Ok(Self { cls, reg_per_group, total })
    }
}

/// Unnormalized corner terms of one object, per slot, from raw channels.
pub fn object_loss(raw: [f64; 8], ctx: &ObjectContext, variant: LossVariant) -> Result<[f64; 3], LossError> {
    object_terms(raw, ctx, variant)
}

/// As [`object_loss`], plus the gradient of the slot sum with respect to the
/// raw channels.
pub fn object_loss_with_grad(
    raw: [f64; 8],
    ctx: &ObjectContext,
    variant: LossVariant,
) -> Result<([f64; 3], [f64; 8]), LossError> {
    let vars: [Dual<8>; 8] = std::array::from_fn(|i| Dual::variable(raw[i], i));
    let terms = object_terms(vars, ctx, variant)?;
    let sum = terms[0] + terms[1] + terms[2];
    Ok((terms.map(|t| t.v), sum.d))
}

fn object_terms<T: Real>(raw: [T; 8], ctx: &ObjectContext, variant: LossVariant) -> Result<[T; 3], LossError> {
    let t = activate(raw)?;
    let gt = gt_flat(ctx.gt);
    let norm = variant.norm();
    let mut out = [T::cst(0.0); 3];
    match variant {
        LossVariant::DisentangledL1 => {
            for g in Group::ALL {
                let c = lift_corners(&t, ctx, LiftMode::Group(g))?;
                out[g.index()] = corner_distance(&c, &gt, norm);
            }
        }
        LossVariant::PlainL1 | LossVariant::SmoothL1 => {
            let c = lift_corners(&t, ctx, LiftMode::All)?;
            out[0] = corner_distance(&c, &gt, norm);
        }
    }
    Ok(out)
}

/// One sample of network output with its targets.
#[derive(Debug, Clone, Copy)]
pub struct SampleRef<'a> {
    /// Predicted probabilities.
    pub heatmap: &'a Heatmap,
    /// Raw (not activated) regression channels.
    pub regression: &'a RegressionMap,
    pub targets: &'a TargetSet,
    pub proj: &'a CameraProjection,
}

/// Gradients with respect to the predicted heatmap probabilities and the raw
/// regression channels, laid out like the respective `data` vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub heatmap: Vec<f64>,
    pub regression: Vec<f64>,
}

struct SampleSums {
    cls: f64,
    positives: usize,
    reg: [f64; 3],
    valid: usize,
    grad: Option<LossGrad>,
}

fn sample_sums(s: &SampleRef, codec: &CodecConfig, cfg: &LossConfig, with_grad: bool) -> Result<SampleSums, LossError> {
    let (hm, reg) = (s.heatmap, s.regression);
    if hm.rows != reg.rows || hm.cols != reg.cols || reg.data.len() != 8 * reg.rows * reg.cols {
        return Err(LossError::ShapeMismatch(format!(
            "heatmap grid {}x{}, regression grid {}x{}",
            hm.rows, hm.cols, reg.rows, reg.cols
        )));
    }
    // Unit normalizer; the caller rescales by the batch count.
    let positives = s.targets.positive_cells();
    let unit = |n: usize| n.max(1) as f64;
    let (cls, mut hm_grad) = if with_grad {
        let (l, g) = focal_loss_with_grad(hm, &s.targets.heatmap, cfg)?;
        (l * unit(positives), Some(g.into_iter().map(|v| v * unit(positives)).collect::<Vec<_>>()))
    } else {
        (focal_loss(hm, &s.targets.heatmap, cfg)? * unit(positives), None)
    };
    let mut reg_grad = with_grad.then(|| vec![0.0; reg.data.len()]);
    let mut sums = [0.0; 3];
    let mut valid = 0;
    for e in s.targets.entries.iter().filter(|e| e.regression_valid) {
        valid += 1;
        if e.cell.row >= reg.rows || e.cell.col >= reg.cols {
            return Err(LossError::ShapeMismatch(format!(
                "target cell ({}, {}) outside {}x{} regression map",
                e.cell.row, e.cell.col, reg.rows, reg.cols
            )));
        }
        let ctx = ObjectContext {
            proj: s.proj,
            prior: codec.prior(e.cell.class)?,
            stride: codec.stride,
            cell: e.cell,
            gt: &e.gt,
        };
        let raw = reg.raw_at(e.cell.row, e.cell.col);
        let terms = if let Some(g) = reg_grad.as_mut() {
            let (terms, d) = object_loss_with_grad(raw, &ctx, cfg.variant)?;
            for (c, dv) in d.into_iter().enumerate() {
                g[reg.index(c, e.cell.row, e.cell.col)] += dv;
            }
            terms
        } else {
            object_loss(raw, &ctx, cfg.variant)?
        };
        for (a, t) in sums.iter_mut().zip(terms) {
            *a += t;
        }
    }
    Ok(SampleSums {
        cls,
        positives,
        reg: sums,
        valid,
        grad: hm_grad.take().zip(reg_grad).map(|(heatmap, regression)| LossGrad { heatmap, regression }),
    })
}

fn batch(
    samples: &[SampleRef],
    codec: &CodecConfig,
    cfg: &LossConfig,
    exec: Execution,
    with_grad: bool,
) -> Result<(LossBreakdown, Vec<LossGrad>), LossError> {
    cfg.validate()?;
    let parts = exec
        .map_slice(samples, |s| sample_sums(s, codec, cfg, with_grad))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let n_cls = parts.iter().map(|p| p.positives).sum::<usize>().max(1) as f64;
    let n_reg = parts.iter().map(|p| p.valid).sum::<usize>().max(1) as f64;
    let k = cfg.lambda / n_reg;
    let cls = parts.iter().map(|p| p.cls).sum::<f64>() / n_cls;
    let mut reg = [0.0; 3];
    for p in &parts {
        for (a, t) in reg.iter_mut().zip(p.reg) {
            *a += t;
        }
    }
    let breakdown = LossBreakdown::finish(cls, reg.map(|r| r * k))?;
    let grads = parts
        .into_iter()
        .filter_map(|p| p.grad)
        .map(|mut g| {
            g.heatmap.iter_mut().for_each(|v| *v /= n_cls);
            g.regression.iter_mut().for_each(|v| *v *= k);
            g
        })
        .collect();
    Ok((breakdown, grads))
}

/// Focal loss plus regression loss for one sample.
///
/// The focal term is normalized by the number of target cells equal to 1 and
/// the regression term by the number of regression-valid objects (each at
/// least 1).
pub fn total_loss(
    heatmap: &Heatmap,
    regression: &RegressionMap,
    targets: &TargetSet,
    proj: &CameraProjection,
    codec: &CodecConfig,
    cfg: &LossConfig,
) -> Result<LossBreakdown, LossError> {
    let s = SampleRef { heatmap, regression, targets, proj };
    Ok(batch(&[s], codec, cfg, Execution::Sequential, false)?.0)
}

pub fn total_loss_with_grad(
    heatmap: &Heatmap,
    regression: &RegressionMap,
    targets: &TargetSet,
    proj: &CameraProjection,
    codec: &CodecConfig,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, LossGrad), LossError> {
    let s = SampleRef { heatmap, regression, targets, proj };
    let (b, mut g) = batch(&[s], codec, cfg, Execution::Sequential, true)?;
    Ok((b, g.remove(0)))
}

/// Batch loss with normalizers counted over the whole batch. Per-sample work
/// may run in parallel; sums are reduced in sample order.
pub fn batch_loss(samples: &[SampleRef], codec: &CodecConfig, cfg: &LossConfig, exec: Execution) -> Result<LossBreakdown, LossError> {
    Ok(batch(samples, codec, cfg, exec, false)?.0)
}

/// As [`batch_loss`], with one gradient per sample.
pub fn batch_loss_with_grad(
    samples: &[SampleRef],
    codec: &CodecConfig,
    cfg: &LossConfig,
    exec: Execution,
) -> Result<(LossBreakdown, Vec<LossGrad>), LossError> {
    batch(samples, codec, cfg, exec, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_targets, ideal_outputs, ClassPrior};
    use crate::geometry::Dimensions;
    use crate::Box3D;

    fn scene() -> (CameraProjection, CodecConfig, TargetSet) {
        let proj = CameraProjection::from_intrinsics(110.0, 110.0, 48.0, 48.0).unwrap();
        let cfg = CodecConfig::new(96, 96, vec![ClassPrior { mean_dims: Dimensions::new(1.5, 1.6, 3.9), depth_mean: 12.0, depth_std: 4.0 }]);
        let objs = [
            Box3D::new(0, Dimensions::new(1.4, 1.7, 4.2), [-1.5, 1.2, 10.0], 0.4).unwrap(),
            Box3D::new(0, Dimensions::new(1.6, 1.5, 3.6), [2.0, 1.2, 15.0], -2.0).unwrap(),
        ];
        let t = encode_targets(&objs, &proj, &cfg).unwrap();
        (proj, cfg, t)
    }

    /// Raw channels whose activation reproduces `tuple`.
    fn raw_for(t: &crate::RegressionTuple) -> [f64; 8] {
        let logit = |d: f64| ((0.5 + d) / (0.5 - d)).ln();
        [t.delta_z, t.delta_xc, t.delta_yc, logit(t.delta_h), logit(t.delta_w), logit(t.delta_l), t.sin_a, t.cos_a]
    }

    #[test]
    fn ideal_prediction_has_zero_regression_loss() {
        let (proj, codec, t) = scene();
        let (_, tuples) = ideal_outputs(&t);
        // Ideal scores: 1 at object cells, 0 elsewhere.
        let mut hm = Heatmap::zeros(1, tuples.rows, tuples.cols);
        let mut raw = RegressionMap::zeros(tuples.rows, tuples.cols);
        for e in &t.entries {
            raw.set_raw(e.cell.row, e.cell.col, raw_for(&e.tuple));
            hm.set(0, e.cell.row, e.cell.col, 1.0);
        }
        for v in LossVariant::ALL {
            let b = total_loss(&hm, &raw, &t, &proj, &codec, &LossConfig::with_variant(v)).unwrap();
            assert!(b.reg() < 1e-9, "{v}: {b:?}");
            assert!(b.total < 1e-9);
            assert!((b.total - b.cls - b.reg()).abs() < 1e-12);
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in LossVariant::ALL {
            assert_eq!(v.name().parse::<LossVariant>().unwrap(), v);
        }
        assert!("huber".parse::<LossVariant>().is_err());
    }

    #[test]
    fn lambda_scales_regression_only() {
        let (proj, codec, t) = scene();
        let hm = Heatmap::zeros(1, 24, 24);
        let mut raw = RegressionMap::zeros(24, 24);
        for e in &t.entries {
            raw.set_raw(e.cell.row, e.cell.col, [0.3, 0.2, 0.6, 0.1, -0.2, 0.3, 0.5, 0.5]);
        }
        let b1 = total_loss(&hm, &raw, &t, &proj, &codec, &LossConfig::default()).unwrap();
        let cfg = LossConfig { lambda: 2.5, ..LossConfig::default() };
        let b2 = total_loss(&hm, &raw, &t, &proj, &codec, &cfg).unwrap();
        assert_eq!(b1.cls, b2.cls);
        for g in 0..3 {
            assert!((b2.reg_per_group[g] - 2.5 * b1.reg_per_group[g]).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_objects_contribute_nothing() {
        let (proj, codec, mut t) = scene();
        for e in t.entries.iter_mut() {
            e.regression_valid = false;
        }
        let hm = t.heatmap.clone();
        let mut raw = RegressionMap::zeros(24, 24);
        raw.data.iter_mut().for_each(|v| *v = 0.7);
        let b = total_loss(&hm, &raw, &t, &proj, &codec, &LossConfig::default()).unwrap();
        assert_eq!(b.reg_per_group, [0.0; 3]);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig { beta: -1.0, ..LossConfig::default() };
        assert!(matches!(bad.validate(), Err(LossError::InvalidConfig(_))));
        let reordered = LossConfig { groups: [Group::Location, Group::Dimension, Group::Orientation], ..LossConfig::default() };
        assert!(reordered.validate().is_err());
    }
}
