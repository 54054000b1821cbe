use std::collections::HashSet;

use super::{
    draw_gaussian, gaussian_sigma, Cell, CodecConfig, CodecError, Heatmap, RegressionMap, RegressionTuple,
    TargetEntry, TargetSet,
};
use crate::exec::Execution;
use crate::geometry::{
    alpha_z_to_x, box2d_from_projection, encode_depth, encode_dims, sincos_encode, theta_to_alpha, Box3D,
    CameraProjection, GeometryError, Point2,
};

/// Projection of the box's 3D center.
pub fn projected_keypoint(proj: &CameraProjection, b: &Box3D) -> Result<Point2, GeometryError> {
    proj.project(b.center())
}

/// True iff the projected 3D center lies in `[0, w) x [0, h)` in front of the camera.
pub fn keep_object(proj: &CameraProjection, b: &Box3D, image_w: f64, image_h: f64) -> bool {
    match projected_keypoint(proj, b) {
        Ok([u, v]) => u >= 0.0 && u < image_w && v >= 0.0 && v < image_h,
        Err(_) => false,
    }
}

struct Candidate {
    index: usize,
    entry: TargetEntry,
    sigma: f64,
}

fn encode_one(
    index: usize,
    b: &Box3D,
    valid: bool,
    proj: &CameraProjection,
    cfg: &CodecConfig,
) -> Result<Option<Candidate>, CodecError> {
    let (w, h) = (cfg.image_w as f64, cfg.image_h as f64);
    if !keep_object(proj, b, w, h) {
        return Ok(None);
    }
    let prior = cfg.prior(b.class_id)?;
    let Ok(rect) = box2d_from_projection(proj, b, w, h) else {
        return Ok(None);
    };
    let [u, v] = projected_keypoint(proj, b)?;
    let r = cfg.stride as f64;
    let (su, sv) = (u / r, v / r);
    let (col, row) = (su.floor(), sv.floor());
    let alpha_z = theta_to_alpha(b.yaw, b.location[0], b.location[2])?;
    let (sin_a, cos_a) = sincos_encode(alpha_z_to_x(alpha_z));
    let [dh, dw, dl] = encode_dims(b.dims, prior.mean_dims)?;
    let tuple = RegressionTuple {
        delta_z: encode_depth(b.location[2], prior.depth_mean, prior.depth_std),
        delta_xc: su - col,
        delta_yc: sv - row,
        delta_h: dh,
        delta_w: dw,
        delta_l: dl,
        sin_a,
        cos_a,
    };
    Ok(Some(Candidate {
        index,
        entry: TargetEntry {
            cell: Cell {
                class: b.class_id,
                row: row as usize,
                col: col as usize,
            },
            tuple,
            gt: *b,
            keypoint: [u, v],
            regression_valid: valid,
        },
        sigma: gaussian_sigma(&rect.scaled(1.0 / r)),
    }))
}

/// Encodes ground truth into heatmap and regression targets.
///
/// Objects whose keypoint leaves the image or whose box crosses the camera
/// plane are dropped. When two objects of one class fall in the same cell the
/// nearer one is kept. Entries keep the input order.
pub fn encode_targets(objects: &[Box3D], proj: &CameraProjection, cfg: &CodecConfig) -> Result<TargetSet, CodecError> {
    encode_targets_masked(objects, &vec![true; objects.len()], proj, cfg)
}

/// As [`encode_targets`], with a per-object regression mask.
pub fn encode_targets_masked(
    objects: &[Box3D],
    regression_valid: &[bool],
    proj: &CameraProjection,
    cfg: &CodecConfig,
) -> Result<TargetSet, CodecError> {
    cfg.validate()?;
    if regression_valid.len() != objects.len() {
        return Err(CodecError::ShapeMismatch(format!(
            "{} objects but {} mask entries",
            objects.len(),
            regression_valid.len()
        )));
    }
    let mut candidates = Vec::with_capacity(objects.len());
    let mut dropped = Vec::new();
    for (i, (b, &valid)) in objects.iter().zip(regression_valid).enumerate() {
        match encode_one(i, b, valid, proj, cfg)? {
            Some(c) => candidates.push(c),
            None => dropped.push(i),
        }
    }

    let mut by_depth: Vec<usize> = (0..candidates.len()).collect();
    by_depth.sort_by(|&a, &b| {
        let (za, zb) = (candidates[a].entry.gt.location[2], candidates[b].entry.gt.location[2]);
        za.total_cmp(&zb).then(a.cmp(&b))
    });
    let mut occupied = HashSet::new();
    let mut keep = vec![false; candidates.len()];
    for i in by_depth {
        if occupied.insert(candidates[i].entry.cell) {
            keep[i] = true;
        } else {
            dropped.push(candidates[i].index);
        }
    }
    dropped.sort_unstable();

    let mut heatmap = Heatmap::for_config(cfg);
    let mut entries = Vec::new();
    for (c, _) in candidates.iter().zip(&keep).filter(|(_, k)| **k) {
        let cell = c.entry.cell;
        draw_gaussian(&mut heatmap, cell.class, cell.row as i64, cell.col as i64, c.sigma)?;
        entries.push(c.entry);
    }
    Ok(TargetSet {
        heatmap,
        entries,
        dropped,
        stride: cfg.stride,
    })
}

/// Encodes many scenes; the result order follows the input order.
pub fn encode_batch(
    scenes: &[(Vec<Box3D>, CameraProjection)],
    cfg: &CodecConfig,
    exec: Execution,
) -> Vec<Result<TargetSet, CodecError>> {
    exec.map_slice(scenes, |(objects, proj)| encode_targets(objects, proj, cfg))
}

/// The outputs a perfect network would produce for `targets`: the target
/// heatmap itself and the exact regression tuples at each object cell.
pub fn ideal_outputs(targets: &TargetSet) -> (Heatmap, RegressionMap) {
    let hm = targets.heatmap.clone();
    let mut reg = RegressionMap::zeros(hm.rows, hm.cols);
    for e in &targets.entries {
        reg.set_tuple(e.cell.row, e.cell.col, e.tuple);
    }
    (hm, reg)
}
