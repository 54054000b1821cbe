//! Synthetic road scenes: boxes on a flat ground plane seen from an elevated
//! pinhole camera, painted face by face with fog.
//!
//! Appearance carries the quantities the network has to regress. The base
//! color is keyed to the yaw quadrant, each face has its own shade (the head
//! face is whitened) and distance fades everything toward the fog color.

use std::f64::consts::PI;

use mono3d_core::codec::{keep_object, ClassPrior};
use mono3d_core::geometry::{box_corners, rotate_y, wrap_angle, Point2, Point3};
use mono3d_core::metrics::bev_iou;
use mono3d_core::{Box3D, CameraProjection, CodecConfig, Dimensions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ToyError;

const FOG: [f64; 3] = [0.78, 0.80, 0.84];
const GROUND: [f64; 3] = [0.30, 0.31, 0.28];
/// Base colors by yaw quadrant.
const PALETTE: [[f64; 3]; 4] = [[0.85, 0.15, 0.12], [0.15, 0.65, 0.20], [0.12, 0.25, 0.85], [0.80, 0.70, 0.10]];
/// Corner indices of the five faces that can face the camera, with their
/// shading factor. The head face (+x in the object frame) comes first.
const FACES: [([usize; 4], f64); 5] = [
    ([0, 3, 7, 4], 1.0),
    ([1, 2, 6, 5], 0.45),
    ([0, 1, 5, 4], 0.75),
    ([3, 2, 6, 7], 0.60),
    ([4, 5, 6, 7], 0.90),
];
const MAX_ROUNDS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    /// Height of the camera above the ground plane (meters, +y is down).
    pub camera_height: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub depth_range: (f64, f64),
    pub mean_dims: Dimensions,
    /// Relative uniform jitter applied to each dimension.
    pub dim_jitter: f64,
    pub yaw_range: (f64, f64),
    /// Distance at which object contrast has fallen to 1/e.
    pub fog_distance: f64,
    /// Minimum fraction of its own silhouette each object must keep after occlusion.
    pub min_visible: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 96,
            height: 96,
            focal: 64.0,
            cx: 48.0,
            cy: 36.0,
            camera_height: 3.0,
            min_objects: 1,
            max_objects: 3,
            depth_range: (6.0, 18.0),
            mean_dims: Dimensions::new(1.5, 1.6, 3.9),
            dim_jitter: 0.1,
            yaw_range: (-PI, PI),
            fog_distance: 20.0,
            min_visible: 0.3,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::InvalidConfig(m.to_string()));
        if self.width == 0 || self.height == 0 || self.width % 4 != 0 || self.height % 4 != 0 {
            return bad("image dimensions must be positive multiples of 4");
        }
        if self.min_objects > self.max_objects {
            return bad("min_objects exceeds max_objects");
        }
        let (lo, hi) = self.depth_range;
        if !(lo > 0.0 && lo < hi) {
            return bad("depth range must satisfy 0 < lo < hi");
        }
        let p = self.prior();
        if hi > p.depth_mean + 3.0 * p.depth_std {
            return bad("depth range exceeds mean + 3 std of the synthetic statistics");
        }
        if !(self.focal > 0.0 && self.camera_height > 0.0 && self.fog_distance > 0.0) {
            return bad("focal, camera height and fog distance must be positive");
        }
        if !self.mean_dims.is_positive() || !(0.0..1.0).contains(&self.dim_jitter) {
            return bad("dimensions must be positive and jitter in [0, 1)");
        }
        if self.yaw_range.0 > self.yaw_range.1 {
            return bad("yaw range is reversed");
        }
        if !(0.0..=1.0).contains(&self.min_visible) {
            return bad("min_visible must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn projection(&self) -> CameraProjection {
        CameraProjection::from_intrinsics(self.focal, self.focal, self.cx, self.cy).expect("positive focal length")
    }

    /// Dataset statistics of the generator: mean dimensions, and the mean and
    /// standard deviation of a uniform depth.
    pub fn prior(&self) -> ClassPrior {
        let (lo, hi) = self.depth_range;
        ClassPrior {
            mean_dims: self.mean_dims,
            depth_mean: (lo + hi) / 2.0,
            depth_std: (hi - lo) / 12f64.sqrt(),
        }
    }

    pub fn codec(&self) -> CodecConfig {
        CodecConfig::new(self.width, self.height, vec![self.prior()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub width: usize,
    pub height: usize,
    /// Row-major `H x W x 3`, values in [0, 1].
    pub image: Vec<f64>,
    pub objects: Vec<Box3D>,
    pub projection: CameraProjection,
    /// Per-pixel index of the object painted there, if any.
    pub owner: Vec<Option<usize>>,
}

impl SyntheticScene {
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = 3 * (row * self.width + col);
        [self.image[i], self.image[i + 1], self.image[i + 2]]
    }

    /// Channel-major copy of the image.
    pub fn chw(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for (p, rgb) in self.image.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n + p] = rgb[c];
            }
        }
        out
    }
}

/// Seed of scene `index` in the stream identified by `seed`.
pub fn scene_seed(seed: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the pair.
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<SyntheticScene, ToyError> {
    cfg.validate()?;
    let proj = cfg.projection();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ROUNDS {
        let n = rng.random_range(cfg.min_objects..=cfg.max_objects);
        let Some(objects) = place_objects(cfg, &proj, n, &mut rng) else {
            continue;
        };
        let scene = render(cfg, &proj, objects);
        if visible_enough(cfg, &proj, &scene) {
            return Ok(scene);
        }
    }
    Err(ToyError::GenerationExhausted { seed, rounds: MAX_ROUNDS })
}

fn place_objects(cfg: &SceneConfig, proj: &CameraProjection, n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Box3D>> {
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let mut placed: Vec<Box3D> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ok = false;
        for _ in 0..100 {
            let j = |rng: &mut ChaCha8Rng| 1.0 + cfg.dim_jitter * rng.random_range(-1.0..=1.0);
            let m = cfg.mean_dims;
            let dims = Dimensions::new(m.h * j(rng), m.w * j(rng), m.l * j(rng));
            let z = rng.random_range(cfg.depth_range.0..=cfg.depth_range.1);
            let u = rng.random_range(2.0..w - 2.0);
            let x = (u - cfg.cx) * z / cfg.focal;
            let yaw = if cfg.yaw_range.0 < cfg.yaw_range.1 {
                rng.random_range(cfg.yaw_range.0..cfg.yaw_range.1)
            } else {
                cfg.yaw_range.0
            };
            let b = Box3D::new(0, dims, [x, cfg.camera_height, z], wrap_angle(yaw)).ok()?;
            if !keep_object(proj, &b, w, h) || box_corners(&b).corners.iter().any(|c| c[2] < 1.0) {
                continue;
            }
            if placed.iter().any(|p| bev_iou(p, &b).map_or(true, |iou| iou >= 0.1)) {
                continue;
            }
            placed.push(b);
            ok = true;
            break;
        }
        if !ok {
            return None;
        }
    }
    Some(placed)
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] * t + b[0] * (1.0 - t), a[1] * t + b[1] * (1.0 - t), a[2] * t + b[2] * (1.0 - t)]
}

fn background(cfg: &SceneConfig, row: usize) -> [f64; 3] {
    let v = row as f64 + 0.5 - cfg.cy;
    if v <= 0.0 {
        return FOG;
    }
    let z = cfg.focal * cfg.camera_height / v;
    mix(GROUND, FOG, (-z / cfg.fog_distance).exp())
}

/// Base color keyed to the yaw quadrant.
pub fn object_color(b: &Box3D) -> [f64; 3] {
    let q = ((wrap_angle(b.yaw) + PI) / (PI / 2.0)).floor() as usize;
    PALETTE[q.min(3)]
}

/// Outward normal of face `f` in camera coordinates.
fn face_normal(b: &Box3D, f: usize) -> Point3 {
    let local = match f {
        0 => [1.0, 0.0, 0.0],
        1 => [-1.0, 0.0, 0.0],
        2 => [0.0, 0.0, 1.0],
        3 => [0.0, 0.0, -1.0],
        _ => [0.0, -1.0, 0.0],
    };
    rotate_y(local, b.yaw)
}

fn face_color(b: &Box3D, f: usize, fog_distance: f64) -> [f64; 3] {
    let base = object_color(b);
    let (_, shade) = FACES[f];
    let lit = if f == 0 { mix(base, [1.0; 3], 0.5) } else { base.map(|c| c * shade) };
    mix(lit, FOG, (-b.location[2] / fog_distance).exp())
}

fn inside_convex(poly: &[Point2], p: Point2) -> bool {
    let n = poly.len();
    let mut sign = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Pixels (row, col) whose centers fall inside the projection of face `f`.
fn face_pixels(cfg: &SceneConfig, proj: &CameraProjection, b: &Box3D, f: usize) -> Vec<(usize, usize)> {
    let corners = box_corners(b).corners;
    let (idx, _) = FACES[f];
    let mut quad = [[0.0; 2]; 4];
    for (k, &i) in idx.iter().enumerate() {
        match proj.project(corners[i]) {
            Ok(p) => quad[k] = p,
            Err(_) => return Vec::new(),
        }
    }
    let lo_u = quad.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let hi_u = quad.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min(cfg.width as f64) as usize;
    let lo_v = quad.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
    let hi_v = quad.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min(cfg.height as f64) as usize;
    let mut out = Vec::new();
    for r in lo_v..hi_v {
        for c in lo_u..hi_u {
            if inside_convex(&quad, [c as f64 + 0.5, r as f64 + 0.5]) {
                out.push((r, c));
            }
        }
    }
    out
}

fn visible_faces(b: &Box3D) -> Vec<usize> {
    let corners = box_corners(b).corners;
    (0..FACES.len())
        .filter(|&f| {
            let (idx, _) = FACES[f];
            let mut center = [0.0; 3];
            for &i in &idx {
                for k in 0..3 {
                    center[k] += corners[i][k] / 4.0;
                }
            }
            let n = face_normal(b, f);
            // Camera at the origin: visible when the normal points back toward it.
            n[0] * center[0] + n[1] * center[1] + n[2] * center[2] < 0.0
        })
        .collect()
}

fn silhouette(cfg: &SceneConfig, proj: &CameraProjection, b: &Box3D) -> Vec<(usize, usize, usize)> {
    visible_faces(b).into_iter().flat_map(|f| face_pixels(cfg, proj, b, f).into_iter().map(move |(r, c)| (r, c, f))).collect()
}

fn render(cfg: &SceneConfig, proj: &CameraProjection, objects: Vec<Box3D>) -> SyntheticScene {
    let (w, h) = (cfg.width, cfg.height);
    let mut image = vec![0.0; w * h * 3];
    for r in 0..h {
        let bg = background(cfg, r);
        for c in 0..w {
            image[3 * (r * w + c)..3 * (r * w + c) + 3].copy_from_slice(&bg);
        }
    }
    let mut owner = vec![None; w * h];
    let mut order: Vec<usize> = (0..objects.len()).collect();
    let dist = |b: &Box3D| b.location[0].hypot(b.location[2]);
    order.sort_by(|&a, &b| dist(&objects[b]).total_cmp(&dist(&objects[a])));
    for i in order {
        let b = &objects[i];
        for (r, c, f) in silhouette(cfg, proj, b) {
            let color = face_color(b, f, cfg.fog_distance);
            image[3 * (r * w + c)..3 * (r * w + c) + 3].copy_from_slice(&color);
            owner[r * w + c] = Some(i);
        }
    }
    SyntheticScene { width: w, height: h, image, objects, projection: *proj, owner }
}

fn visible_enough(cfg: &SceneConfig, proj: &CameraProjection, scene: &SyntheticScene) -> bool {
    scene.objects.iter().enumerate().all(|(i, b)| {
        let full = silhouette(cfg, proj, b).len();
        let kept = scene.owner.iter().filter(|o| **o == Some(i)).count();
        kept > 0 && kept as f64 >= cfg.min_visible * full as f64
    })
}
