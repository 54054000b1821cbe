use std::str::FromStr;

use rand::Rng;

use super::CodecError;
use crate::geometry::{box_corners, Box3D, CameraProjection};
use crate::raster::Raster;

/// Nine uniform scale ratios over `[0.6, 1.4]`.
pub const SCALE_STEPS: [f64; 9] = [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3, 1.4];
/// Five uniform shift ratios over `[-0.2, 0.2]` (fraction of the image size).
pub const SHIFT_STEPS: [f64; 5] = [-0.2, -0.1, 0.0, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentPolicy {
    None,
    Flip,
    Scale,
    Shift,
}

impl FromStr for AugmentPolicy {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "flip" => Ok(Self::Flip),
            "scale" => Ok(Self::Scale),
            "shift" => Ok(Self::Shift),
            other => Err(CodecError::UnknownPolicy(other.to_string())),
        }
    }
}

/// One training sample before encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: Option<Raster>,
    pub objects: Vec<Box3D>,
    pub projection: CameraProjection,
    pub image_w: usize,
    pub image_h: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedScene {
    pub scene: Scene,
    /// Per object; false means the sample only supervises the heatmap.
    pub regression_valid: Vec<bool>,
}

/// Applies one augmentation.
///
/// Flip mirrors the image and the scene (`x -> -x`), adjusting the projection
/// so every projected point lands at `W - u`; the yaw is re-derived from the
/// mirrored corners. Scale and shift act on the image plane only (the
/// projection is left-multiplied by the affine map), which leaves the 3D
/// labels inconsistent with the pixels, so regression is masked out.
pub fn augment<R: Rng + ?Sized>(
    scene: &Scene,
    rng: &mut R,
    policy: AugmentPolicy,
) -> Result<AugmentedScene, CodecError> {
    let n = scene.objects.len();
    let (w, h) = (scene.image_w as f64, scene.image_h as f64);
    match policy {
        AugmentPolicy::None => Ok(AugmentedScene {
            scene: scene.clone(),
            regression_valid: vec![true; n],
        }),
        AugmentPolicy::Flip => Ok(AugmentedScene {
            scene: flip(scene)?,
            regression_valid: vec![true; n],
        }),
        AugmentPolicy::Scale => {
            let s = SCALE_STEPS[rng.random_range(0..SCALE_STEPS.len())];
            let (tx, ty) = (w / 2.0 * (1.0 - s), h / 2.0 * (1.0 - s));
            Ok(affine(scene, s, tx, ty)?)
        }
        AugmentPolicy::Shift => {
            let sx = SHIFT_STEPS[rng.random_range(0..SHIFT_STEPS.len())];
            let sy = SHIFT_STEPS[rng.random_range(0..SHIFT_STEPS.len())];
            Ok(affine(scene, 1.0, sx * w, sy * h)?)
        }
    }
}

fn affine(scene: &Scene, s: f64, tx: f64, ty: f64) -> Result<AugmentedScene, CodecError> {
    let projection = scene.projection.warped(s, s, tx, ty)?;
    let image = scene.image.as_ref().map(|im| im.warped(s, s, tx, ty, [0.0; 3]));
    Ok(AugmentedScene {
        scene: Scene {
            image,
            projection,
            ..scene.clone()
        },
        regression_valid: vec![false; scene.objects.len()],
    })
}

fn flip(scene: &Scene) -> Result<Scene, CodecError> {
    let w = scene.image_w as f64;
    let proj = &scene.projection;
    let mirrored_proj = proj.mirrored(w)?;
    let mut objects = Vec::with_capacity(scene.objects.len());
    for b in &scene.objects {
        // Location from the mirrored keypoint at unchanged depth.
        let center = b.center();
        let location = match proj.project(center) {
            Ok([u, v]) => {
                let [x, yc, z] = mirrored_proj.unproject(w - u, v, center[2])?;
                [x, yc + b.dims.h / 2.0, z]
            }
            Err(_) => [-b.location[0], b.location[1], b.location[2]],
        };
        // Local +x edge (corner 1 -> corner 0) after mirroring x.
        let c = box_corners(b).corners;
        let dx = -(c[0][0] - c[1][0]);
        let dz = c[0][2] - c[1][2];
        let yaw = (-dz).atan2(dx);
        objects.push(Box3D::new(b.class_id, b.dims, location, yaw)?);
    }
    Ok(Scene {
        image: scene.image.as_ref().map(Raster::flipped_horizontally),
        objects,
        projection: mirrored_proj,
        image_w: scene.image_w,
        image_h: scene.image_h,
    })
}
