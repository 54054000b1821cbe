//! Closed-form 3D <-> 2D transforms.
//!
//! Camera frame: x right, y down, z forward, meters. A [`Box3D`] location is
//! the center of the bottom face (KITTI label convention), so the geometric
//! center sits `h / 2` above it (at smaller y).

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use thiserror::Error;

/// Homogeneous depths at or below this value are treated as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("non-positive dimension {0}")]
    NonPositiveDimension(f64),
    #[error("degenerate orientation vector ({0}, {1})")]
    DegenerateVector(f64, f64),
    #[error("box corner {0} is behind the camera")]
    BehindCamera(usize),
    #[error("invalid projection matrix: {0}")]
    InvalidProjection(String),
}

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// A 3x4 pinhole projection `P = [K | t]` with upper-triangular intrinsics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraProjection {
    m: [[f64; 4]; 3],
}

impl CameraProjection {
    pub fn new(m: [[f64; 4]; 3]) -> Result<Self, GeometryError> {
        const TOL: f64 = 1e-12;
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidProjection("non-finite entry".into()));
        }
        if (m[2][2] - 1.0).abs() > TOL {
            return Err(GeometryError::InvalidProjection(format!(
                "K[2][2] = {} (expected 1)",
                m[2][2]
            )));
        }
        if m[0][0] <= 0.0 || m[1][1] <= 0.0 {
            return Err(GeometryError::InvalidProjection(
                "focal lengths must be positive".into(),
            ));
        }
        if m[1][0].abs() > TOL || m[2][0].abs() > TOL || m[2][1].abs() > TOL {
            return Err(GeometryError::InvalidProjection(
                "intrinsics are not upper triangular".into(),
            ));
        }
        Ok(Self { m })
    }

    /// Plain intrinsics with a zero translation column.
    pub fn from_intrinsics(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        Self::new([[fx, 0.0, cx, 0.0], [0.0, fy, cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
    }

    pub fn matrix(&self) -> &[[f64; 4]; 3] {
        &self.m
    }

    pub fn fx(&self) -> f64 {
        self.m[0][0]
    }

    pub fn fy(&self) -> f64 {
        self.m[1][1]
    }

    pub fn cx(&self) -> f64 {
        self.m[0][2]
    }

    pub fn cy(&self) -> f64 {
        self.m[1][2]
    }

    pub fn translation(&self) -> Point3 {
        [self.m[0][3], self.m[1][3], self.m[2][3]]
    }

    /// Homogeneous coordinates `P * [p; 1]`.
    pub fn homogeneous(&self, p: Point3) -> Point3 {
        let mut out = [0.0; 3];
        for (row, o) in self.m.iter().zip(out.iter_mut()) {
            *o = row[0] * p[0] + row[1] * p[1] + row[2] * p[2] + row[3];
        }
        out
    }

    pub fn project(&self, p: Point3) -> Result<Point2, GeometryError> {
        let h = self.homogeneous(p);
        if h[2] <= MIN_DEPTH {
            return Err(GeometryError::NonPositiveDepth(h[2]));
        }
        Ok([h[0] / h[2], h[1] / h[2]])
    }

    /// The point with camera-frame depth `z` whose projection is `(u, v)`.
    ///
    /// Solves `K X = d (u, v, 1) - t` with `d = z + t_z`; back substitution
    /// works because `K` is upper triangular.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Result<Point3, GeometryError> {
        if z <= 0.0 {
            return Err(GeometryError::NonPositiveDepth(z));
        }
        let m = &self.m;
        let d = z + m[2][3];
        let y = (d * v - m[1][3] - m[1][2] * z) / m[1][1];
        let x = (d * u - m[0][3] - m[0][1] * y - m[0][2] * z) / m[0][0];
        Ok([x, y, z])
    }

    /// Left-multiplies by a 2D affine image transform `[[a, 0, tx], [0, b, ty], [0, 0, 1]]`.
    pub fn warped(&self, scale_x: f64, scale_y: f64, tx: f64, ty: f64) -> Result<Self, GeometryError> {
        let mut m = self.m;
        for c in 0..4 {
            m[0][c] = scale_x * self.m[0][c] + tx * self.m[2][c];
            m[1][c] = scale_y * self.m[1][c] + ty * self.m[2][c];
        }
        Self::new(m)
    }

    /// The projection seen through a horizontally mirrored image of width
    /// `image_w`, for points mirrored as `x -> -x`.
    pub fn mirrored(&self, image_w: f64) -> Result<Self, GeometryError> {
        let mut m = self.m;
        // W - u = (W d - row0 . p) / d with p = (-x, y, z).
        m[0][1] = -self.m[0][1];
        m[0][2] = image_w - self.m[0][2];
        m[0][3] = image_w * self.m[2][3] - self.m[0][3];
        Self::new(m)
    }
}

pub fn project_point(proj: &CameraProjection, point: Point3) -> Result<Point2, GeometryError> {
    proj.project(point)
}

pub fn unproject_center(proj: &CameraProjection, u: f64, v: f64, z: f64) -> Result<Point3, GeometryError> {
    proj.unproject(u, v, z)
}

/// Object size in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dimensions {
    pub h: f64,
    pub w: f64,
    pub l: f64,
}

impl Dimensions {
    pub const fn new(h: f64, w: f64, l: f64) -> Self {
        Self { h, w, l }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.h, self.w, self.l]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_positive(&self) -> bool {
        self.h > 0.0 && self.w > 0.0 && self.l > 0.0
    }
}

/// 7-DoF box plus category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub class_id: usize,
    pub dims: Dimensions,
    /// Bottom-face center, camera frame.
    pub location: Point3,
    /// Rotation about the camera y axis, `(-pi, pi]`.
    pub yaw: f64,
}

impl Box3D {
    pub fn new(class_id: usize, dims: Dimensions, location: Point3, yaw: f64) -> Result<Self, GeometryError> {
        for d in dims.to_array() {
            if !(d > 0.0) {
                return Err(GeometryError::NonPositiveDimension(d));
            }
        }
        Ok(Self {
            class_id,
            dims,
            location,
            yaw: wrap_angle(yaw),
        })
    }

    /// Geometric center of the box (the point whose projection is the keypoint).
    pub fn center(&self) -> Point3 {
        let [x, y, z] = self.location;
        [x, y - self.dims.h / 2.0, z]
    }

    pub fn corners(&self) -> CornerSet {
        box_corners(self)
    }

    pub fn orientation(&self) -> Result<OrientationAngles, GeometryError> {
        OrientationAngles::from_theta(self.yaw, self.location[0], self.location[2])
    }
}

pub fn decode_depth(delta_z: f64, mu_z: f64, sigma_z: f64) -> f64 {
    mu_z + delta_z * sigma_z
}

pub fn encode_depth(z: f64, mu_z: f64, sigma_z: f64) -> f64 {
    (z - mu_z) / sigma_z
}

pub fn decode_dims(residuals: [f64; 3], class_mean: Dimensions) -> Dimensions {
    let m = class_mean.to_array();
    Dimensions::new(
        m[0] * residuals[0].exp(),
        m[1] * residuals[1].exp(),
        m[2] * residuals[2].exp(),
    )
}

pub fn encode_dims(dims: Dimensions, class_mean: Dimensions) -> Result<[f64; 3], GeometryError> {
    let d = dims.to_array();
    let m = class_mean.to_array();
    let mut out = [0.0; 3];
    for i in 0..3 {
        if !(d[i] > 0.0) {
            return Err(GeometryError::NonPositiveDimension(d[i]));
        }
        if !(m[i] > 0.0) {
            return Err(GeometryError::NonPositiveDimension(m[i]));
        }
        out[i] = (d[i] / m[i]).ln();
    }
    Ok(out)
}

/// Global yaw from the observation angle and the object's lateral position.
pub fn alpha_to_theta(alpha_z: f64, x: f64, z: f64) -> Result<f64, GeometryError> {
    if z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    Ok(wrap_angle(alpha_z + (x / z).atan()))
}

pub fn theta_to_alpha(theta: f64, x: f64, z: f64) -> Result<f64, GeometryError> {
    if z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(z));
    }
    Ok(wrap_angle(theta - (x / z).atan()))
}

/// KITTI-style observation angle to the head-referenced angle that is regressed.
pub fn alpha_z_to_x(alpha_z: f64) -> f64 {
    wrap_angle(alpha_z + FRAC_PI_2)
}

pub fn alpha_x_to_z(alpha_x: f64) -> f64 {
    wrap_angle(alpha_x - FRAC_PI_2)
}

pub fn sincos_encode(alpha: f64) -> (f64, f64) {
    alpha.sin_cos()
}

pub fn sincos_decode(s: f64, c: f64) -> Result<f64, GeometryError> {
    if s.hypot(c) < 1e-9 {
        return Err(GeometryError::DegenerateVector(s, c));
    }
    Ok(wrap_angle(s.atan2(c)))
}

/// Observation angles (`alpha_z`, as stored in KITTI labels, and the
/// head-referenced `alpha_x = alpha_z + pi/2`) together with the yaw they
/// imply at a given location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationAngles {
    pub alpha_z: f64,
    pub alpha_x: f64,
    pub theta: f64,
}

impl OrientationAngles {
    pub fn from_alpha_z(alpha_z: f64, x: f64, z: f64) -> Result<Self, GeometryError> {
        let theta = alpha_to_theta(alpha_z, x, z)?;
        Ok(Self {
            alpha_z: wrap_angle(alpha_z),
            alpha_x: alpha_z_to_x(alpha_z),
            theta,
        })
    }

    pub fn from_alpha_x(alpha_x: f64, x: f64, z: f64) -> Result<Self, GeometryError> {
        Self::from_alpha_z(alpha_x_to_z(alpha_x), x, z)
    }

    pub fn from_theta(theta: f64, x: f64, z: f64) -> Result<Self, GeometryError> {
        let alpha_z = theta_to_alpha(theta, x, z)?;
        Ok(Self {
            alpha_z,
            alpha_x: alpha_z_to_x(alpha_z),
            theta: wrap_angle(theta),
        })
    }
}

/// Eight box corners in camera coordinates.
///
/// Order: bottom face counterclockwise seen from above (x right, z up in the
/// bird's-eye view), starting at local `(+l/2, 0, +w/2)`, then the top face
/// in the same order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerSet {
    pub corners: [Point3; 8],
}

impl CornerSet {
    pub fn bottom(&self) -> &[Point3] {
        &self.corners[..4]
    }

    pub fn top(&self) -> &[Point3] {
        &self.corners[4..]
    }

    /// Bird's-eye footprint as `(x, z)` pairs, counterclockwise.
    pub fn footprint(&self) -> [Point2; 4] {
        let b = &self.corners;
        [
            [b[0][0], b[0][2]],
            [b[1][0], b[1][2]],
            [b[2][0], b[2][2]],
            [b[3][0], b[3][2]],
        ]
    }

    pub fn flatten(&self) -> [f64; 24] {
        let mut out = [0.0; 24];
        for (i, c) in self.corners.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(c);
        }
        out
    }

    pub fn max_abs_diff(&self, other: &CornerSet) -> f64 {
        self.flatten()
            .iter()
            .zip(other.flatten().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Local corner offsets `(x, y, z)` before rotation, in [`CornerSet`] order.
pub fn corner_offsets(dims: Dimensions) -> [Point3; 8] {
    let (hl, hw, h) = (dims.l / 2.0, dims.w / 2.0, dims.h);
    let footprint = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
    let mut out = [[0.0; 3]; 8];
    for (i, [lx, lz]) in footprint.into_iter().enumerate() {
        out[i] = [lx, 0.0, lz];
        out[i + 4] = [lx, -h, lz];
    }
    out
}

/// Rotates a local offset about the camera y axis.
pub fn rotate_y(p: Point3, yaw: f64) -> Point3 {
    let (s, c) = yaw.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

pub fn box_corners(b: &Box3D) -> CornerSet {
    let mut corners = corner_offsets(b.dims);
    for c in corners.iter_mut() {
        let r = rotate_y(*c, b.yaw);
        *c = [r[0] + b.location[0], r[1] + b.location[1], r[2] + b.location[2]];
    }
    CornerSet { corners }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect2 {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Rect2 {
    pub fn width(&self) -> f64 {
        (self.xmax - self.xmin).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.ymax - self.ymin).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn scaled(&self, factor: f64) -> Rect2 {
        Rect2 {
            xmin: self.xmin * factor,
            ymin: self.ymin * factor,
            xmax: self.xmax * factor,
            ymax: self.ymax * factor,
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.xmin && p[0] <= self.xmax && p[1] >= self.ymin && p[1] <= self.ymax
    }
}

/// Projected corners of a box, failing if any corner is behind the camera.
pub fn projected_corners(proj: &CameraProjection, b: &Box3D) -> Result<[Point2; 8], GeometryError> {
    let corners = box_corners(b);
    let mut out = [[0.0; 2]; 8];
    for (i, c) in corners.corners.iter().enumerate() {
        out[i] = proj.project(*c).map_err(|_| GeometryError::BehindCamera(i))?;
    }
    Ok(out)
}

/// Smallest image rectangle enclosing the projected box, clipped to the image.
pub fn box2d_from_projection(
    proj: &CameraProjection,
    b: &Box3D,
    image_w: f64,
    image_h: f64,
) -> Result<Rect2, GeometryError> {
    let pts = projected_corners(proj, b)?;
    let mut r = Rect2 {
        xmin: f64::INFINITY,
        ymin: f64::INFINITY,
        xmax: f64::NEG_INFINITY,
        ymax: f64::NEG_INFINITY,
    };
    for [u, v] in pts {
        r.xmin = r.xmin.min(u);
        r.ymin = r.ymin.min(v);
        r.xmax = r.xmax.max(u);
        r.ymax = r.ymax.max(v);
    }
    r.xmin = r.xmin.clamp(0.0, image_w);
    r.xmax = r.xmax.clamp(0.0, image_w);
    r.ymin = r.ymin.clamp(0.0, image_h);
    r.ymax = r.ymax.clamp(0.0, image_h);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k234() -> CameraProjection {
        CameraProjection::from_intrinsics(2.0, 2.0, 3.0, 4.0).unwrap()
    }

    #[test]
    fn projection_examples() {
        let p = CameraProjection::from_intrinsics(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(p.project([0.0, 0.0, 5.0]).unwrap(), [0.0, 0.0]);
        assert_eq!(k234().project([1.0, 1.0, 2.0]).unwrap(), [4.0, 5.0]);
        assert!(matches!(
            k234().project([1.0, 1.0, 0.0]),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn unprojection_examples() {
        assert_eq!(k234().unproject(4.0, 5.0, 2.0).unwrap(), [1.0, 1.0, 2.0]);
        assert!(matches!(
            k234().unproject(4.0, 5.0, -1.0),
            Err(GeometryError::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn rejects_non_triangular_intrinsics() {
        let m = [[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0], [9.0, 10.0, 11.0, 12.0]];
        assert!(CameraProjection::new(m).is_err());
        let m = [[1.0, 0.0, 3.0, 0.0], [0.0, -1.0, 7.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        assert!(CameraProjection::new(m).is_err());
    }

    #[test]
    fn depth_and_dimension_codecs() {
        assert_eq!(decode_depth(0.0, 28.01, 16.32), 28.01);
        assert!((decode_depth(1.0, 28.01, 16.32) - 44.33).abs() < 1e-12);
        assert!((decode_depth(-1.0, 28.01, 16.32) - 11.69).abs() < 1e-12);

        let mean = Dimensions::new(1.63, 1.53, 3.88);
        assert_eq!(decode_dims([0.0; 3], mean), mean);
        let d = decode_dims([2f64.ln(), 0.0, -(2f64.ln())], mean);
        assert!((d.h - 3.26).abs() < 1e-12);
        assert!((d.l - 1.94).abs() < 1e-12);

        assert_eq!(encode_dims(mean, mean).unwrap(), [0.0; 3]);
        let r = encode_dims(Dimensions::new(3.26, 1.53, 3.88), mean).unwrap();
        assert!((r[0] - 2f64.ln()).abs() < 1e-12);
        assert!(matches!(
            encode_dims(Dimensions::new(0.0, 1.0, 1.0), mean),
            Err(GeometryError::NonPositiveDimension(_))
        ));
    }

    #[test]
    fn angle_examples() {
        assert_eq!(alpha_to_theta(0.0, 0.0, 10.0).unwrap(), 0.0);
        assert!((alpha_to_theta(0.0, 7.0, 7.0).unwrap() - PI / 4.0).abs() < 1e-15);
        let t = alpha_to_theta(3.0, 7.0, 7.0).unwrap();
        assert!((t - (3.0 + PI / 4.0 - TAU)).abs() < 1e-12);
        assert!((t + 2.4978).abs() < 1e-4);
        assert!(alpha_to_theta(0.0, 1.0, 0.0).is_err());

        assert_eq!(sincos_encode(0.0), (0.0, 1.0));
        assert_eq!(sincos_decode(0.0, 1.0).unwrap(), 0.0);
        assert!((sincos_decode(1.0, 1.0).unwrap() - PI / 4.0).abs() < 1e-15);
        assert_eq!(sincos_decode(2.0, 2.0).unwrap(), sincos_decode(1.0, 1.0).unwrap());
        assert!(sincos_decode(1e-10, 0.0).is_err());
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert_eq!(wrap_angle(0.0), 0.0);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn regressed_angle_offset() {
        let o = OrientationAngles::from_alpha_z(0.3, 1.0, 10.0).unwrap();
        assert!((wrap_angle(o.alpha_x - o.alpha_z) - FRAC_PI_2).abs() < 1e-15);
        let back = OrientationAngles::from_alpha_x(o.alpha_x, 1.0, 10.0).unwrap();
        assert!((back.theta - o.theta).abs() < 1e-15);
    }

    #[test]
    fn corners_by_hand() {
        let zero = Box3D {
            class_id: 0,
            dims: Dimensions::new(0.0, 0.0, 0.0),
            location: [1.0, 2.0, 3.0],
            yaw: 0.7,
        };
        for c in box_corners(&zero).corners {
            assert_eq!(c, [1.0, 2.0, 3.0]);
        }

        let b = Box3D::new(0, Dimensions::new(2.0, 2.0, 4.0), [0.0, 0.0, 10.0], 0.0).unwrap();
        let cs = box_corners(&b);
        for c in cs.corners {
            assert!(c[0] == 2.0 || c[0] == -2.0);
            assert!(c[1] == 0.0 || c[1] == -2.0);
            assert!(c[2] == 9.0 || c[2] == 11.0);
        }
        assert_eq!(cs.corners[0], [2.0, 0.0, 11.0]);
        assert_eq!(cs.corners[4], [2.0, -2.0, 11.0]);

        let r = Box3D { yaw: FRAC_PI_2, ..b };
        for c in box_corners(&r).bottom() {
            assert!((c[0].abs() - 1.0).abs() < 1e-12);
            assert!((c[2] - 8.0).abs() < 1e-12 || (c[2] - 12.0).abs() < 1e-12);
        }
    }

    #[test]
    fn footprint_is_counterclockwise() {
        let b = Box3D::new(0, Dimensions::new(1.5, 1.6, 3.9), [2.0, 1.6, 20.0], 0.4).unwrap();
        let f = box_corners(&b).footprint();
        let mut area2 = 0.0;
        for i in 0..4 {
            let (a, c) = (f[i], f[(i + 1) % 4]);
            area2 += a[0] * c[1] - c[0] * a[1];
        }
        assert!(area2 > 0.0);
        assert!((area2 / 2.0 - 1.6 * 3.9).abs() < 1e-9);
    }

    #[test]
    fn box2d_by_hand() {
        let p = CameraProjection::from_intrinsics(1.0, 1.0, 0.0, 0.0).unwrap();
        let zero = Box3D {
            class_id: 0,
            dims: Dimensions::new(0.0, 0.0, 0.0),
            location: [0.0, 0.0, 10.0],
            yaw: 0.0,
        };
        let r = box2d_from_projection(&p, &zero, 100.0, 100.0).unwrap();
        assert_eq!((r.xmin, r.ymin, r.xmax, r.ymax), (0.0, 0.0, 0.0, 0.0));

        // Corners x in {+-2}, y in {0, -2}, z in {9, 11}, f = 100, c = (200, 150).
        let p = CameraProjection::from_intrinsics(100.0, 100.0, 200.0, 150.0).unwrap();
        let b = Box3D::new(0, Dimensions::new(2.0, 2.0, 4.0), [0.0, 0.0, 10.0], 0.0).unwrap();
        let r = box2d_from_projection(&p, &b, 1000.0, 1000.0).unwrap();
        assert!((r.xmin - (200.0 - 200.0 / 9.0)).abs() < 1e-9);
        assert!((r.xmax - (200.0 + 200.0 / 9.0)).abs() < 1e-9);
        assert!((r.ymin - (150.0 - 200.0 / 9.0)).abs() < 1e-9);
        assert!((r.ymax - 150.0).abs() < 1e-9);

        let behind = Box3D::new(0, Dimensions::new(2.0, 2.0, 4.0), [0.0, 0.0, 1.0], 0.0).unwrap();
        assert!(matches!(
            box2d_from_projection(&p, &behind, 1000.0, 1000.0),
            Err(GeometryError::BehindCamera(_))
        ));
    }

    #[test]
    fn mirrored_projection_mirrors_u() {
        let m = [
            [721.5377, 0.0, 609.5593, 44.85728],
            [0.0, 721.5377, 172.854, 0.2163791],
            [0.0, 0.0, 1.0, 0.002745884],
        ];
        let p = CameraProjection::new(m).unwrap();
        let w = 1242.0;
        let q = p.mirrored(w).unwrap();
        let pt = [3.0, 1.2, 25.0];
        let a = p.project(pt).unwrap();
        let b = q.project([-pt[0], pt[1], pt[2]]).unwrap();
        assert!((b[0] - (w - a[0])).abs() < 1e-9);
        assert!((b[1] - a[1]).abs() < 1e-9);
        assert_eq!(q.mirrored(w).unwrap(), p);
    }
}
