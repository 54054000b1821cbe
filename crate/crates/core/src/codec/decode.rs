use super::{Cell, CodecConfig, CodecError, Detection, Heatmap, RegressionMap, RegressionTuple};
use crate::geometry::{
    alpha_to_theta, alpha_x_to_z, box2d_from_projection, decode_depth, decode_dims, sincos_decode, Box3D,
    CameraProjection,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: Cell,
    pub score: f64,
}

/// Cells not exceeded by any 3x3 neighbor in the same class plane, sorted by
/// descending score with ties broken by `(row, col, class)`.
pub fn find_peaks(heatmap: &Heatmap) -> Vec<Peak> {
    let (rows, cols) = (heatmap.rows as i64, heatmap.cols as i64);
    let mut peaks = Vec::new();
    for class in 0..heatmap.classes {
        for r in 0..rows {
            for c in 0..cols {
                let s = heatmap.get(class, r as usize, c as usize);
                let mut is_max = true;
                'scan: for dr in -1..=1 {
                    for dc in -1..=1 {
                        let (nr, nc) = (r + dr, c + dc);
                        if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= rows || nc >= cols {
                            continue;
                        }
                        if heatmap.get(class, nr as usize, nc as usize) > s {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
                if is_max {
                    peaks.push(Peak {
                        cell: Cell {
                            class,
                            row: r as usize,
                            col: c as usize,
                        },
                        score: s,
                    });
                }
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.cell.row.cmp(&b.cell.row))
            .then(a.cell.col.cmp(&b.cell.col))
            .then(a.cell.class.cmp(&b.cell.class))
    });
    peaks
}

/// Lifts one activated tuple at `cell` to a box.
pub fn lift_tuple(
    cell: Cell,
    t: &RegressionTuple,
    proj: &CameraProjection,
    cfg: &CodecConfig,
) -> Result<Box3D, CodecError> {
    let prior = cfg.prior(cell.class)?;
    let r = cfg.stride as f64;
    let z = decode_depth(t.delta_z, prior.depth_mean, prior.depth_std);
    let u = (cell.col as f64 + t.delta_xc) * r;
    let v = (cell.row as f64 + t.delta_yc) * r;
    let [x, yc, z] = proj.unproject(u, v, z)?;
    let dims = decode_dims(t.dims_residual(), prior.mean_dims);
    let alpha_x = sincos_decode(t.sin_a, t.cos_a)?;
    let yaw = alpha_to_theta(alpha_x_to_z(alpha_x), x, z)?;
    Ok(Box3D::new(cell.class, dims, [x, yc + dims.h / 2.0, z], yaw)?)
}

/// Peak extraction, top-k, threshold, then closed-form lifting. No NMS.
///
/// `regression` must already hold activated tuples. Peaks whose tuple cannot
/// be lifted (non-positive depth, degenerate angle vector) are skipped.
pub fn decode_detections(
    heatmap: &Heatmap,
    regression: &RegressionMap,
    proj: &CameraProjection,
    cfg: &CodecConfig,
) -> Result<Vec<Detection>, CodecError> {
    cfg.validate()?;
    if heatmap.rows != regression.rows
        || heatmap.cols != regression.cols
        || heatmap.rows != cfg.grid_rows()
        || heatmap.cols != cfg.grid_cols()
        || heatmap.classes != cfg.num_classes()
    {
        return Err(CodecError::ShapeMismatch(format!(
            "heatmap {}x{}x{}, regression {}x{}, config grid {}x{}x{}",
            heatmap.classes,
            heatmap.rows,
            heatmap.cols,
            regression.rows,
            regression.cols,
            cfg.num_classes(),
            cfg.grid_rows(),
            cfg.grid_cols()
        )));
    }
    let mut out = Vec::new();
    for peak in find_peaks(heatmap)
        .into_iter()
        .take(cfg.topk)
        .filter(|p| p.score >= cfg.score_threshold)
    {
        let t = regression.tuple_at(peak.cell.row, peak.cell.col);
        let Ok(box3d) = lift_tuple(peak.cell, &t, proj, cfg) else {
            continue;
        };
        let box2d = box2d_from_projection(proj, &box3d, cfg.image_w as f64, cfg.image_h as f64).ok();
        out.push(Detection {
            box3d,
            score: peak.score,
            cell: peak.cell,
            box2d,
        });
    }
    Ok(out)
}
