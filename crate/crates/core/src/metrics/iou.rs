use super::MetricsError;
use crate::geometry::{box_corners, Box3D, Point2, Rect2};

/// Signed shoelace area; positive for counterclockwise vertex order.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn ccw(mut poly: Vec<Point2>) -> Vec<Point2> {
    if signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

fn cross(a: Point2, b: Point2, p: Point2) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn segment_hit(p: Point2, q: Point2, a: Point2, b: Point2) -> Point2 {
    let (cp, cq) = (cross(a, b, p), cross(a, b, q));
    let t = cp / (cp - cq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Intersection of two convex polygons (Sutherland-Hodgman). Either vertex
/// order is accepted; the result is counterclockwise.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let clip = ccw(clip.to_vec());
    let mut out = ccw(subject.to_vec());
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let (p_in, q_in) = (cross(a, b, p) >= 0.0, cross(a, b, q) >= 0.0);
            if p_in {
                out.push(p);
                if !q_in {
                    out.push(segment_hit(p, q, a, b));
                }
            } else if q_in {
                out.push(segment_hit(p, q, a, b));
            }
        }
    }
    out
}

fn footprint(b: &Box3D) -> Result<Vec<Point2>, MetricsError> {
    if !(b.dims.w > 0.0 && b.dims.l > 0.0) {
        return Err(MetricsError::DegenerateBox(format!("footprint {} x {}", b.dims.l, b.dims.w)));
    }
    Ok(box_corners(b).footprint().to_vec())
}

/// Ground-plane intersection area of two boxes.
pub fn bev_intersection(a: &Box3D, b: &Box3D) -> Result<f64, MetricsError> {
    let inter = clip_convex(&footprint(a)?, &footprint(b)?);
    Ok(if inter.len() < 3 { 0.0 } else { signed_area(&inter).abs() })
}

/// Rotated-rectangle IoU of the two footprints.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> Result<f64, MetricsError> {
    let inter = bev_intersection(a, b)?;
    let union = a.dims.w * a.dims.l + b.dims.w * b.dims.l - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Volume IoU: footprint intersection times overlap of the `[y - h, y]` spans.
pub fn iou_3d(a: &Box3D, b: &Box3D) -> Result<f64, MetricsError> {
    if !(a.dims.h > 0.0 && b.dims.h > 0.0) {
        return Err(MetricsError::DegenerateBox("zero height".into()));
    }
    let inter_area = bev_intersection(a, b)?;
    let top = (a.location[1] - a.dims.h).max(b.location[1] - b.dims.h);
    let bottom = a.location[1].min(b.location[1]);
    let inter = inter_area * (bottom - top).max(0.0);
    let vol = |x: &Box3D| x.dims.h * x.dims.w * x.dims.l;
    Ok((inter / (vol(a) + vol(b) - inter)).clamp(0.0, 1.0))
}

pub fn rect_intersection(a: &Rect2, b: &Rect2) -> f64 {
    let w = a.xmax.min(b.xmax) - a.xmin.max(b.xmin);
    let h = a.ymax.min(b.ymax) - a.ymin.max(b.ymin);
    w.max(0.0) * h.max(0.0)
}

/// Axis-aligned IoU; 0 when the union is empty.
pub fn iou_2d(a: &Rect2, b: &Rect2) -> f64 {
    let inter = rect_intersection(a, b);
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}
