//! Box lifting for the regression loss and the corner distance terms.
//!
//! Everything here is generic over [`Real`] so the same code yields loss
//! values (`f64`) and exact derivatives with respect to the eight raw
//! channels (`Dual<8>`).

use std::f64::consts::FRAC_PI_2;

use super::activation::{dim_activation_generic, orient_activation_generic};
use super::dual::Real;
use super::{Group, LossError};
use crate::codec::{Cell, ClassPrior, RegressionTuple};
use crate::geometry::{box_corners, CameraProjection, CornerSet, GeometryError};
use crate::Box3D;

/// Which values are taken from the prediction when building corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftMode {
    /// One group predicted, the other two from ground truth.
    Group(Group),
    /// Every value predicted.
    All,
}

/// Ground truth and camera data for one encoded object.
#[derive(Debug, Clone, Copy)]
pub struct ObjectContext<'a> {
    pub proj: &'a CameraProjection,
    pub prior: &'a ClassPrior,
    pub stride: usize,
    pub cell: Cell,
    pub gt: &'a Box3D,
}

/// Activated tuple in generic form.
pub(crate) fn activate<T: Real>(raw: [T; 8]) -> Result<[T; 8], LossError> {
    let (s, c) = orient_activation_generic(raw[6], raw[7])?;
    Ok([
        raw[0],
        raw[1],
        raw[2],
        dim_activation_generic(raw[3]),
        dim_activation_generic(raw[4]),
        dim_activation_generic(raw[5]),
        s,
        c,
    ])
}

fn unproject<T: Real>(proj: &CameraProjection, u: T, v: T, z: T) -> [T; 3] {
    let m = proj.matrix();
    let d = z + T::cst(m[2][3]);
    let y = (d * v - T::cst(m[1][3]) - z.scale(m[1][2])) / T::cst(m[1][1]);
    let x = (d * u - T::cst(m[0][3]) - y.scale(m[0][1]) - z.scale(m[0][2])) / T::cst(m[0][0]);
    [x, y, z]
}

/// Predicted geometric center from the cell, offsets and depth residual.
fn predicted_center<T: Real>(t: &[T; 8], ctx: &ObjectContext) -> [T; 3] {
    let r = ctx.stride as f64;
    let z = T::cst(ctx.prior.depth_mean) + t[0].scale(ctx.prior.depth_std);
    let u = (T::cst(ctx.cell.col as f64) + t[1]).scale(r);
    let v = (T::cst(ctx.cell.row as f64) + t[2]).scale(r);
    unproject(ctx.proj, u, v, z)
}

fn predicted_dims<T: Real>(t: &[T; 8], prior: &ClassPrior) -> [T; 3] {
    let m = prior.mean_dims;
    [t[3].exp().scale(m.h), t[4].exp().scale(m.w), t[5].exp().scale(m.l)]
}

/// Yaw from the predicted head angle and a location, before wrapping.
fn predicted_yaw<T: Real>(t: &[T; 8], x: T, z: T) -> T {
    let alpha_x = t[6].atan2(t[7]);
    alpha_x - T::cst(FRAC_PI_2) + x.atan2(z)
}

fn corners_from<T: Real>(dims: [T; 3], location: [T; 3], yaw: T) -> [T; 24] {
    let [h, w, l] = dims;
    let (hl, hw) = (l.scale(0.5), w.scale(0.5));
    let zero = T::cst(0.0);
    let footprint = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let (s, c) = (yaw.sin(), yaw.cos());
    let mut out = [zero; 24];
    for (i, (lx, lz)) in footprint.into_iter().enumerate() {
        let x = c * lx + s * lz + location[0];
        let z = -s * lx + c * lz + location[2];
        let b = 3 * i;
        out[b] = x;
        out[b + 1] = location[1];
        out[b + 2] = z;
        let t = b + 12;
        out[t] = x;
        out[t + 1] = location[1] - h;
        out[t + 2] = z;
    }
    out
}

/// Corners lifted from an activated tuple, flattened in [`CornerSet`] order.
///
/// Predicted depth is not range-checked: the lifting formulas stay defined
/// for any value, which keeps the loss usable early in training.
pub(crate) fn lift_corners<T: Real>(t: &[T; 8], ctx: &ObjectContext, mode: LiftMode) -> Result<[T; 24], LossError> {
    let gt = ctx.gt;
    if gt.location[2] <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(gt.location[2]).into());
    }
    let gt_dims = gt.dims.to_array().map(T::cst);
    let gt_loc = gt.location.map(T::cst);
    let gt_yaw = T::cst(gt.yaw);
    Ok(match mode {
        LiftMode::Group(Group::Location) => {
            let [x, yc, z] = predicted_center(t, ctx);
            corners_from(gt_dims, [x, yc + T::cst(gt.dims.h / 2.0), z], gt_yaw)
        }
        LiftMode::Group(Group::Dimension) => corners_from(predicted_dims(t, ctx.prior), gt_loc, gt_yaw),
        LiftMode::Group(Group::Orientation) => {
            let yaw = predicted_yaw(t, gt_loc[0], gt_loc[2]);
            corners_from(gt_dims, gt_loc, yaw)
        }
        LiftMode::All => {
            let [x, yc, z] = predicted_center(t, ctx);
            let dims = predicted_dims(t, ctx.prior);
            let yaw = predicted_yaw(t, x, z);
            corners_from(dims, [x, yc + dims[0].scale(0.5), z], yaw)
        }
    })
}

fn to_corner_set(flat: [f64; 24]) -> CornerSet {
    let mut corners = [[0.0; 3]; 8];
    for (i, c) in corners.iter_mut().enumerate() {
        *c = [flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]];
    }
    CornerSet { corners }
}

/// Corners built from the predicted values of one group and ground truth for
/// the other two.
///
/// * location: the object's cell plus predicted offsets and depth, unprojected;
///   ground-truth dims and yaw.
/// * orientation: ground-truth location and dims; yaw from the predicted angle
///   using the ground-truth location.
/// * dimension: predicted dims; ground-truth location and yaw.
///
/// `pred` must hold activated values.
pub fn disentangled_corners(group: Group, pred: &RegressionTuple, ctx: &ObjectContext) -> Result<CornerSet, LossError> {
    Ok(to_corner_set(lift_corners(&pred.to_array(), ctx, LiftMode::Group(group))?))
}

/// Corners with every value predicted.
pub fn predicted_corners(pred: &RegressionTuple, ctx: &ObjectContext) -> Result<CornerSet, LossError> {
    Ok(to_corner_set(lift_corners(&pred.to_array(), ctx, LiftMode::All)?))
}

/// Distance applied to each corner coordinate difference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CornerNorm {
    L1,
    /// Quadratic below 1, linear above.
    SmoothL1,
}

impl CornerNorm {
    pub(crate) fn apply<T: Real>(self, d: T) -> T {
        let a = d.abs();
        match self {
            CornerNorm::L1 => a,
            CornerNorm::SmoothL1 if a.value() < 1.0 => d * d * T::cst(0.5),
            CornerNorm::SmoothL1 => a - T::cst(0.5),
        }
    }
}

pub(crate) fn corner_distance<T: Real>(pred: &[T; 24], gt: &[f64; 24], norm: CornerNorm) -> T {
    pred.iter()
        .zip(gt)
        .fold(T::cst(0.0), |acc, (&p, &g)| acc + norm.apply(p - T::cst(g)))
}

/// `(lambda / n) * sum |pred - gt|` over all corner coordinates of all
/// objects; objects with `valid == false` contribute nothing.
pub fn corner_l1(pred: &[CornerSet], gt: &[CornerSet], valid: &[bool], lambda: f64, n: usize) -> Result<f64, LossError> {
    corner_loss(pred, gt, valid, lambda, n, CornerNorm::L1)
}

pub fn corner_loss(
    pred: &[CornerSet],
    gt: &[CornerSet],
    valid: &[bool],
    lambda: f64,
    n: usize,
    norm: CornerNorm,
) -> Result<f64, LossError> {
    if pred.len() != gt.len() || pred.len() != valid.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} predicted, {} ground-truth corner sets, {} mask entries",
            pred.len(),
            gt.len(),
            valid.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .zip(valid)
        .filter(|(_, &v)| v)
        .map(|((p, g), _)| corner_distance(&p.flatten(), &g.flatten(), norm))
        .sum();
    Ok(lambda * sum / n.max(1) as f64)
}

/// Ground-truth corners, flattened.
pub(crate) fn gt_flat(gt: &Box3D) -> [f64; 24] {
    box_corners(gt).flatten()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_targets, ClassPrior, CodecConfig};
    use crate::geometry::Dimensions;

    fn fixture() -> (CameraProjection, CodecConfig, Box3D) {
        let proj = CameraProjection::new([
            [721.5377, 0.0, 609.5593, 44.85728],
            [0.0, 721.5377, 172.854, 0.2163791],
            [0.0, 0.0, 1.0, 0.002745884],
        ])
        .unwrap();
        let cfg = CodecConfig::new(1280, 384, vec![ClassPrior::KITTI_CAR]);
        let gt = Box3D::new(0, Dimensions::new(1.5, 1.7, 4.1), [2.5, 1.6, 18.0], 0.7).unwrap();
        (proj, cfg, gt)
    }

    #[test]
    fn exact_encoding_is_a_fixed_point() {
        let (proj, cfg, gt) = fixture();
        let t = encode_targets(&[gt], &proj, &cfg).unwrap();
        let e = t.entries[0];
        let ctx = ObjectContext { proj: &proj, prior: &cfg.class_priors[0], stride: 4, cell: e.cell, gt: &e.gt };
        let truth = box_corners(&gt);
        for g in Group::ALL {
            assert!(disentangled_corners(g, &e.tuple, &ctx).unwrap().max_abs_diff(&truth) < 1e-9);
        }
        assert!(predicted_corners(&e.tuple, &ctx).unwrap().max_abs_diff(&truth) < 1e-9);
    }

    #[test]
    fn orientation_off_by_quarter_turn() {
        let (proj, cfg, gt) = fixture();
        let e = encode_targets(&[gt], &proj, &cfg).unwrap().entries[0];
        let ctx = ObjectContext { proj: &proj, prior: &cfg.class_priors[0], stride: 4, cell: e.cell, gt: &e.gt };
        let a = e.tuple.sin_a.atan2(e.tuple.cos_a) + FRAC_PI_2;
        let pred = RegressionTuple { sin_a: a.sin(), cos_a: a.cos(), ..e.tuple };
        let expected = box_corners(&Box3D { yaw: gt.yaw + FRAC_PI_2, ..gt });
        let got = disentangled_corners(Group::Orientation, &pred, &ctx).unwrap();
        assert!(got.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn dimension_with_doubled_height() {
        let (proj, cfg, gt) = fixture();
        let e = encode_targets(&[gt], &proj, &cfg).unwrap().entries[0];
        let ctx = ObjectContext { proj: &proj, prior: &cfg.class_priors[0], stride: 4, cell: e.cell, gt: &e.gt };
        let pred = RegressionTuple { delta_h: e.tuple.delta_h + 2f64.ln(), ..e.tuple };
        let got = disentangled_corners(Group::Dimension, &pred, &ctx).unwrap();
        // Hand-built: bottom face unchanged, top face 2h above it.
        let (c, s) = (gt.yaw.cos(), gt.yaw.sin());
        let foot = [(2.05, 0.85), (-2.05, 0.85), (-2.05, -0.85), (2.05, -0.85)];
        for (i, (lx, lz)) in foot.into_iter().enumerate() {
            let x = gt.location[0] + c * lx + s * lz;
            let z = gt.location[2] - s * lx + c * lz;
            for (k, y) in [(i, 1.6), (i + 4, 1.6 - 3.0)] {
                let p = got.corners[k];
                assert!((p[0] - x).abs() < 1e-9 && (p[1] - y).abs() < 1e-9 && (p[2] - z).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn corner_l1_hand_values() {
        let (_, _, gt) = fixture();
        let g = box_corners(&gt);
        let shifted = box_corners(&Box3D { location: [2.6, 1.6, 18.0], ..gt });
        assert_eq!(corner_l1(&[g], &[g], &[true], 1.0, 1).unwrap(), 0.0);
        assert!((corner_l1(&[shifted], &[g], &[true], 1.0, 1).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(corner_l1(&[shifted], &[g], &[false], 1.0, 1).unwrap(), 0.0);
        let l3 = corner_l1(&[shifted], &[g], &[true], 3.0, 1).unwrap();
        assert!((l3 - 2.4).abs() < 1e-12);
        assert!(matches!(corner_l1(&[g], &[], &[true], 1.0, 1), Err(LossError::ShapeMismatch(_))));
    }

    #[test]
    fn smooth_l1_switches_at_one() {
        assert_eq!(CornerNorm::SmoothL1.apply(0.5), 0.125);
        assert_eq!(CornerNorm::SmoothL1.apply(-3.0), 2.5);
        assert_eq!(CornerNorm::L1.apply(-3.0), 3.0);
    }
}
