//! Box overlays on images and bird's-eye SVG plots.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use mono3d_core::geometry::{box_corners, projected_corners};
use mono3d_core::{Box3D, CameraProjection};

pub const GT_COLOR: [u8; 3] = [40, 200, 80];
pub const DET_COLOR: [u8; 3] = [230, 40, 40];
const PX_PER_M: f64 = 10.0;
const GRID_M: f64 = 10.0;

/// Edges of the 8-corner layout: bottom ring, top ring, pillars.
const EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

fn line(img: &mut RgbImage, a: [f64; 2], b: [f64; 2], color: [u8; 3]) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let steps = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().min(20_000.0) as i64;
    for i in 0..=steps {
        let t = if steps == 0 { 0.0 } else { i as f64 / steps as f64 };
        let x = (a[0] + t * (b[0] - a[0])).round() as i64;
        let y = (a[1] + t * (b[1] - a[1])).round() as i64;
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }
}

/// Draws the projected wireframe of `b`; boxes crossing the camera plane are skipped.
pub fn draw_box(img: &mut RgbImage, proj: &CameraProjection, b: &Box3D, color: [u8; 3]) -> bool {
    let Ok(pts) = projected_corners(proj, b) else {
        return false;
    };
    for (i, j) in EDGES {
        line(img, pts[i], pts[j], color);
    }
    // Front face cross marks the heading.
    line(img, pts[0], pts[7], color);
    line(img, pts[3], pts[4], color);
    true
}

/// Converts a planar `[0, 1]` RGB buffer (height x width x 3) to an image.
pub fn image_from_hwc(width: usize, height: usize, data: &[f64]) -> RgbImage {
    RgbImage::from_fn(width as u32, height as u32, |x, y| {
        let k = 3 * (y as usize * width + x as usize);
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([q(data[k]), q(data[k + 1]), q(data[k + 2])])
    })
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Top-down plot: x to the right, depth upward, camera at the bottom center,
/// grid lines every 10 m.
pub fn bev_svg(gts: &[Box3D], dets: &[(Box3D, f64)], half_width: f64, depth: f64) -> String {
    let (w, h) = (2.0 * half_width * PX_PER_M, depth * PX_PER_M);
    let to_px = |x: f64, z: f64| ((x + half_width) * PX_PER_M, h - z * PX_PER_M);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#);
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let mut g = 0.0;
    while g <= half_width + 1e-9 {
        for x in if g == 0.0 { vec![0.0] } else { vec![-g, g] } {
            let (px, _) = to_px(x, 0.0);
            let _ = writeln!(s, r##"<line x1="{px:.1}" y1="0" x2="{px:.1}" y2="{h:.1}" stroke="#d0d0d0" stroke-width="1"/>"##);
        }
        g += GRID_M;
    }
    let mut z = 0.0;
    while z <= depth + 1e-9 {
        let (_, py) = to_px(0.0, z);
        let _ = writeln!(s, r##"<line x1="0" y1="{py:.1}" x2="{w:.1}" y2="{py:.1}" stroke="#d0d0d0" stroke-width="1"/>"##);
        let _ = writeln!(s, r##"<text x="2" y="{:.1}" font-size="10" fill="#808080">{z:.0} m</text>"##, py - 2.0);
        z += GRID_M;
    }
    let (cx, cy) = to_px(0.0, 0.0);
    let _ = writeln!(s, r##"<polygon points="{cx:.1},{:.1} {:.1},{cy:.1} {:.1},{cy:.1}" fill="#404040"/>"##, cy - 8.0, cx - 5.0, cx + 5.0);
    let mut poly = |b: &Box3D, color: [u8; 3], label: Option<String>| {
        let fp = box_corners(b).footprint();
        let pts: Vec<String> = fp.iter().map(|p| to_px(p[0], p[1])).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), hex(color));
        // Heading tick from the box center to the front edge.
        let c = to_px(b.location[0], b.location[2]);
        let f = to_px((fp[0][0] + fp[3][0]) / 2.0, (fp[0][1] + fp[3][1]) / 2.0);
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/>"#, c.0, c.1, f.0, f.1, hex(color));
        if let Some(t) = label {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" fill="{}">{t}</text>"#, c.0 + 4.0, c.1, hex(color));
        }
    };
    for b in gts {
        poly(b, GT_COLOR, None);
    }
    for (b, score) in dets {
        poly(b, DET_COLOR, Some(format!("{score:.2}")));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use mono3d_core::Dimensions;

    fn car(x: f64, z: f64) -> Box3D {
        Box3D::new(0, Dimensions::new(1.5, 1.6, 3.9), [x, 1.6, z], 0.3).unwrap()
    }

    #[test]
    fn svg_has_grid_and_boxes() {
        let s = bev_svg(&[car(0.0, 20.0)], &[(car(1.0, 21.0), 0.8)], 20.0, 40.0);
        assert_eq!(s.matches("<line").count(), 5 + 5 + 2);
        assert_eq!(s.matches("<polygon").count(), 3);
        assert!(s.contains("0.80"));
        assert_eq!(s, bev_svg(&[car(0.0, 20.0)], &[(car(1.0, 21.0), 0.8)], 20.0, 40.0));
    }

    #[test]
    fn boxes_behind_camera_are_skipped() {
        let proj = CameraProjection::from_intrinsics(700.0, 700.0, 600.0, 180.0).unwrap();
        let mut img = RgbImage::new(1200, 360);
        assert!(!draw_box(&mut img, &proj, &car(0.0, 0.5), DET_COLOR));
        assert!(draw_box(&mut img, &proj, &car(0.0, 20.0), DET_COLOR));
        assert!(img.pixels().any(|p| p.0 == DET_COLOR));
    }
}
