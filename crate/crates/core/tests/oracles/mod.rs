//! Independent reference implementations and random case generators shared
//! by the integration and acceptance tests.
#![allow(dead_code)]

use mono3d_core::geometry::{box_corners, wrap_angle, Rect2};
use mono3d_core::kitti::{DetectionRecord, GtObject};
use mono3d_core::metrics::{Difficulty, EvalFrame, IouKind, MatchSpec, RecallPoints};
use mono3d_core::{Box3D, CameraProjection, Dimensions};
use rand::Rng;

/// KITTI training P2 (frame 000000).
pub fn kitti_p2() -> CameraProjection {
    CameraProjection::new([
        [721.5377, 0.0, 609.5593, 44.85728],
        [0.0, 721.5377, 172.854, 0.2163791],
        [0.0, 0.0, 1.0, 0.002745884],
    ])
    .unwrap()
}

/// A random P2-like projection with a translation column.
pub fn random_projection<R: Rng>(rng: &mut R) -> CameraProjection {
    let f = rng.random_range(600.0..800.0);
    CameraProjection::new([
        [f, rng.random_range(-0.5..0.5), rng.random_range(600.0..660.0), rng.random_range(-50.0..50.0)],
        [0.0, f * rng.random_range(0.98..1.02), rng.random_range(170.0..200.0), rng.random_range(-1.0..1.0)],
        [0.0, 0.0, 1.0, rng.random_range(-0.01..0.01)],
    ])
    .unwrap()
}

/// A car-like box whose center projects inside a 1280x384 image.
pub fn random_visible_box<R: Rng>(rng: &mut R, proj: &CameraProjection) -> Box3D {
    loop {
        let z = rng.random_range(5.0..80.0);
        let dims = Dimensions::new(
            rng.random_range(1.3..2.0),
            rng.random_range(1.4..1.9),
            rng.random_range(3.0..5.0),
        );
        let u = rng.random_range(0.0..1280.0);
        let v = rng.random_range(0.0..384.0);
        let [x, yc, _] = proj.unproject(u, v, z).unwrap();
        let yaw = wrap_angle(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let b = Box3D::new(0, dims, [x, yc + dims.h / 2.0, z], yaw).unwrap();
        if box_corners(&b).corners.iter().all(|c| c[2] > 0.5) {
            return b;
        }
    }
}

/// Estimates BEV IoU by sampling points uniformly inside `a`'s footprint and
/// testing membership in `b`'s rectangle in its own frame.
pub fn monte_carlo_bev_iou<R: Rng>(a: &Box3D, b: &Box3D, samples: usize, rng: &mut R) -> f64 {
    let (sa, ca) = a.yaw.sin_cos();
    let (sb, cb) = b.yaw.sin_cos();
    let mut hits = 0usize;
    for _ in 0..samples {
        let lx = rng.random_range(-0.5..0.5) * a.dims.l;
        let lz = rng.random_range(-0.5..0.5) * a.dims.w;
        let x = a.location[0] + ca * lx + sa * lz;
        let z = a.location[2] - sa * lx + ca * lz;
        let (dx, dz) = (x - b.location[0], z - b.location[2]);
        // Inverse rotation into b's frame.
        let bx = cb * dx - sb * dz;
        let bz = sb * dx + cb * dz;
        if bx.abs() <= b.dims.l / 2.0 && bz.abs() <= b.dims.w / 2.0 {
            hits += 1;
        }
    }
    let area_a = a.dims.l * a.dims.w;
    let area_b = b.dims.l * b.dims.w;
    let inter = area_a * hits as f64 / samples as f64;
    inter / (area_a + area_b - inter)
}

/// Average precision by re-running a from-scratch matcher at every distinct
/// score cutoff.
pub fn brute_force_ap(frames: &[EvalFrame], spec: &MatchSpec, recall: RecallPoints) -> f64 {
    let mut cutoffs: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.dets.iter())
        .filter(|d| d.object.kind == spec.class)
        .map(|d| d.score)
        .collect();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    cutoffs.dedup();
    let n_gt: usize = frames.iter().map(|f| f.gts.iter().filter(|g| is_valid(g, spec)).count()).sum();
    if n_gt == 0 {
        return 0.0;
    }
    let mut pts = Vec::new();
    for &c in &cutoffs {
        let (mut tp, mut fp) = (0usize, 0usize);
        for f in frames {
            let (t, p) = match_at_cutoff(f, spec, c);
            tp += t;
            fp += p;
        }
        if tp + fp > 0 {
            pts.push((tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    let levels: Vec<f64> = match recall {
        RecallPoints::R11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
        RecallPoints::R40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
    };
    let sum: f64 = levels
        .iter()
        .map(|&r| pts.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max))
        .sum();
    sum / levels.len() as f64
}

fn min_height(spec: &MatchSpec) -> f64 {
    match spec.difficulty {
        Some(Difficulty::Easy) => 40.0,
        Some(Difficulty::Moderate) | Some(Difficulty::Hard) => 25.0,
        _ => 0.0,
    }
}

fn in_level(g: &GtObject, d: Difficulty) -> bool {
    let h = g.bbox.ymax - g.bbox.ymin;
    match d {
        Difficulty::Easy => h >= 40.0 && g.occluded == 0 && g.truncated <= 0.15,
        Difficulty::Moderate => h >= 25.0 && (0..=1).contains(&g.occluded) && g.truncated <= 0.30,
        Difficulty::Hard => h >= 25.0 && (0..=2).contains(&g.occluded) && g.truncated <= 0.50,
        Difficulty::Ignored => false,
    }
}

fn is_valid(g: &GtObject, spec: &MatchSpec) -> bool {
    g.kind == spec.class && spec.difficulty.is_none_or(|d| in_level(g, d))
}

fn is_ignored(g: &GtObject, spec: &MatchSpec) -> bool {
    (g.kind == spec.class && !is_valid(g, spec))
        || (spec.class == "Car" && g.kind == "Van")
        || (spec.class == "Pedestrian" && g.kind == "Person_sitting")
}

fn overlap(kind: IouKind, a: &GtObject, b: &GtObject) -> f64 {
    kind.overlap(a, b)
}

fn match_at_cutoff(f: &EvalFrame, spec: &MatchSpec, cutoff: f64) -> (usize, usize) {
    let mut dets: Vec<(usize, &DetectionRecord)> = f
        .dets
        .iter()
        .enumerate()
        .filter(|(_, d)| d.object.kind == spec.class && d.score >= cutoff)
        .collect();
    dets.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    let mut used = vec![false; f.gts.len()];
    let (mut tp, mut fp) = (0, 0);
    for (_, d) in dets {
        let pick = |pred: &dyn Fn(&GtObject) -> bool, used: &[bool]| {
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in f.gts.iter().enumerate() {
                if used[j] || !pred(g) {
                    continue;
                }
                let o = overlap(spec.iou, &d.object, g);
                if o > spec.threshold && best.is_none_or(|(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            best.map(|b| b.0)
        };
        if let Some(j) = pick(&|g| is_valid(g, spec), &used) {
            used[j] = true;
            tp += 1;
        } else if let Some(j) = pick(&|g| is_ignored(g, spec), &used) {
            used[j] = true;
        } else if d.object.bbox.ymax - d.object.bbox.ymin < min_height(spec) {
        } else if f.gts.iter().any(|g| {
            let ix = (d.object.bbox.xmax.min(g.bbox.xmax) - d.object.bbox.xmin.max(g.bbox.xmin)).max(0.0);
            let iy = (d.object.bbox.ymax.min(g.bbox.ymax) - d.object.bbox.ymin.max(g.bbox.ymin)).max(0.0);
            let area = (d.object.bbox.xmax - d.object.bbox.xmin) * (d.object.bbox.ymax - d.object.bbox.ymin);
            g.kind == "DontCare" && ix * iy > 0.5 * area
        }) {
        } else {
            fp += 1;
        }
    }
    (tp, fp)
}

fn random_object<R: Rng>(rng: &mut R, kind: &str) -> GtObject {
    let x = rng.random_range(-15.0..15.0);
    let z = rng.random_range(5.0..50.0);
    let h_px = rng.random_range(15.0..90.0);
    let u = 600.0 + 700.0 * x / z;
    GtObject {
        kind: kind.to_string(),
        truncated: [0.0, 0.1, 0.2, 0.4, 0.7][rng.random_range(0..5)],
        occluded: rng.random_range(0..4),
        alpha: 0.0,
        bbox: Rect2 { xmin: u - h_px, ymin: 150.0, xmax: u + h_px, ymax: 150.0 + h_px },
        dims: Dimensions::new(rng.random_range(1.4..1.8), rng.random_range(1.5..1.9), rng.random_range(3.5..4.5)),
        location: [x, 1.6, z],
        rotation_y: rng.random_range(-3.0..3.0),
    }
}

fn jitter<R: Rng>(rng: &mut R, g: &GtObject, scale: f64) -> GtObject {
    let mut d = g.clone();
    if d.kind != "Car" {
        d.kind = "Car".into();
    }
    let j = |rng: &mut R| rng.random_range(-1.0..1.0) * scale;
    d.location[0] += j(rng);
    d.location[1] += 0.5 * j(rng);
    d.location[2] += 2.0 * j(rng);
    d.rotation_y += 0.5 * j(rng);
    d.dims.l *= 1.0 + 0.2 * j(rng);
    let (dx, dy) = (20.0 * j(rng), 10.0 * j(rng));
    d.bbox = Rect2 { xmin: d.bbox.xmin + dx, ymin: d.bbox.ymin + dy, xmax: d.bbox.xmax + dx, ymax: d.bbox.ymax + dy };
    d
}

/// A miniature evaluation set with ties, near-threshold overlaps, Vans,
/// DontCare regions and out-of-level objects.
pub fn random_frames<R: Rng>(rng: &mut R) -> Vec<EvalFrame> {
    let n_frames = rng.random_range(1..6);
    (0..n_frames)
        .map(|i| {
            let mut gts = Vec::new();
            for _ in 0..rng.random_range(0..5) {
                let kind = ["Car", "Car", "Car", "Van", "Pedestrian"][rng.random_range(0..5)];
                gts.push(random_object(rng, kind));
            }
            if rng.random_bool(0.4) {
                let mut dc = random_object(rng, "DontCare");
                dc.occluded = -1;
                dc.truncated = -1.0;
                gts.push(dc);
            }
            let mut dets = Vec::new();
            let score = |rng: &mut R| (rng.random_range(1..=10) as f64) / 10.0;
            for g in &gts {
                for _ in 0..rng.random_range(0..3) {
                    let s = score(rng);
                    let scale = rng.random_range(0.0..0.6);
                    dets.push(DetectionRecord { object: jitter(rng, g, scale), score: s });
                }
            }
            for _ in 0..rng.random_range(0..3) {
                let s = score(rng);
                dets.push(DetectionRecord { object: random_object(rng, "Car"), score: s });
            }
            EvalFrame { id: format!("{i:06}"), gts, dets }
        })
        .collect()
}

/// Finite-difference check of one object's regression loss. Coordinates where
/// the analytic gradient is exactly zero (flat regions of the corner L1 sum)
/// are checked separately (analytic |g| <= 1e-12): there the central difference must stay below
/// `flat_tol` in absolute value. Returns the relative report over the rest.
pub fn regression_grad_error(
    raw: [f64; 8],
    ctx: &mono3d_core::losses::ObjectContext,
    variant: mono3d_core::losses::LossVariant,
    flat_tol: f64,
) -> mono3d_core::losses::GradCheckReport {
    use mono3d_core::losses::{grad_check_coords, object_loss_with_grad, DEFAULT_EPS};
    let f = |x: &[f64]| {
        let raw: [f64; 8] = x.try_into().unwrap();
        let (terms, g) = object_loss_with_grad(raw, ctx, variant)?;
        Ok((terms.iter().sum::<f64>(), g.to_vec()))
    };
    let (_, g) = object_loss_with_grad(raw, ctx, variant).unwrap();
    let (live, flat): (Vec<usize>, Vec<usize>) = (0..8).partition(|&i| g[i].abs() > 1e-12);
    let flat_report = grad_check_coords(f, &raw, &flat, DEFAULT_EPS).unwrap();
    assert!(flat_report.numeric.abs() <= flat_tol, "flat coordinate moved: {flat_report:?}");
    for &i in &flat {
        let h = DEFAULT_EPS;
        let mut p = raw;
        p[i] += h;
        let mut m = raw;
        m[i] -= h;
        let s = |r: [f64; 8]| mono3d_core::losses::object_loss(r, ctx, variant).unwrap().iter().sum::<f64>();
        let d = (s(p) - s(m)) / (2.0 * h);
        assert!(d.abs() <= flat_tol, "coordinate {i} flat analytically but numeric {d}");
    }
    grad_check_coords(f, &raw, &live, DEFAULT_EPS).unwrap()
}
