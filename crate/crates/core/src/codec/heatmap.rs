use super::{CodecError, Heatmap};
use crate::geometry::Rect2;

/// Target IoU between the true box and a box whose corners are shifted by
/// the keypoint radius.
pub const MIN_OVERLAP: f64 = 0.7;

/// Largest corner displacement `r` keeping IoU >= `overlap` for a box of the
/// given size, minimized over the three placements (both corners shifted
/// outward-inward diagonally, box shrunk on every side, box grown on every
/// side). Each case reduces to a quadratic in `r`; the admissible root is
/// returned.
pub fn gaussian_radius(height: f64, width: f64, overlap: f64) -> f64 {
    let (h, w, o) = (height.max(0.0), width.max(0.0), overlap);
    let s = h + w;
    let area = h * w;
    // (h - r)(w - r) / (2hw - (h - r)(w - r)) = o
    let r1 = smaller_root(1.0, -s, area * (1.0 - o) / (1.0 + o));
    // (h - 2r)(w - 2r) / hw = o
    let r2 = smaller_root(4.0, -2.0 * s, area * (1.0 - o));
    // hw / ((h + 2r)(w + 2r)) = o
    let r3 = larger_root(4.0 * o, 2.0 * o * s, area * (o - 1.0));
    r1.min(r2).min(r3).max(0.0)
}

fn discriminant(a: f64, b: f64, c: f64) -> f64 {
    (b * b - 4.0 * a * c).max(0.0)
}

fn smaller_root(a: f64, b: f64, c: f64) -> f64 {
    (-b - discriminant(a, b, c).sqrt()) / (2.0 * a)
}

fn larger_root(a: f64, b: f64, c: f64) -> f64 {
    (-b + discriminant(a, b, c).sqrt()) / (2.0 * a)
}

/// Gaussian standard deviation (heatmap cells) from the enclosing 2D box
/// expressed at heatmap scale.
pub fn gaussian_sigma(box_at_heatmap_scale: &Rect2) -> f64 {
    let r = gaussian_radius(box_at_heatmap_scale.height(), box_at_heatmap_scale.width(), MIN_OVERLAP);
    (r / 3.0).max(1.0)
}

/// Max-merges `exp(-d^2 / (2 sigma^2))` around `(row, col)`; the center
/// becomes exactly 1. The kernel is truncated at `3 sigma`.
pub fn draw_gaussian(
    heatmap: &mut Heatmap,
    class: usize,
    row: i64,
    col: i64,
    sigma: f64,
) -> Result<(), CodecError> {
    if class >= heatmap.classes
        || row < 0
        || col < 0
        || row as usize >= heatmap.rows
        || col as usize >= heatmap.cols
    {
        return Err(CodecError::OutOfBounds {
            row,
            col,
            rows: heatmap.rows,
            cols: heatmap.cols,
        });
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    let r0 = (row - radius).max(0);
    let r1 = (row + radius).min(heatmap.rows as i64 - 1);
    let c0 = (col - radius).max(0);
    let c1 = (col + radius).min(heatmap.cols as i64 - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let (dr, dc) = ((r - row) as f64, (c - col) as f64);
            let v = (-(dr * dr + dc * dc) / denom).exp();
            let i = heatmap.index(class, r as usize, c as usize);
            if v > heatmap.data[i] {
                heatmap.data[i] = v;
            }
        }
    }
    Ok(())
}
