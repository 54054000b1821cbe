//! Ground truth <-> network output codec.
//!
//! Each object becomes a Gaussian bump on a per-class heatmap at stride `R`,
//! centered on the cell containing its projected 3D center, plus an 8-value
//! [`RegressionTuple`] stored at that cell. Decoding reverses the process from
//! heatmap peaks.

mod augment;
pub mod container;
mod decode;
mod encode;
mod heatmap;

use thiserror::Error;

use crate::geometry::{Box3D, Dimensions, GeometryError, Point2, Rect2};

pub use augment::{augment, AugmentPolicy, AugmentedScene, Scene, SCALE_STEPS, SHIFT_STEPS};
pub use decode::{decode_detections, find_peaks, Peak};
pub use encode::{encode_batch, encode_targets, encode_targets_masked, ideal_outputs, keep_object, projected_keypoint};
pub use heatmap::{draw_gaussian, gaussian_radius, gaussian_sigma, MIN_OVERLAP};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("invalid codec configuration: {0}")]
    InvalidConfig(String),
    #[error("cell ({row}, {col}) outside {rows}x{cols} grid")]
    OutOfBounds {
        row: i64,
        col: i64,
        rows: usize,
        cols: usize,
    },
    #[error("unknown class id {0}")]
    UnknownClass(usize),
    #[error("unknown augmentation policy '{0}'")]
    UnknownPolicy(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-class reference dimensions and depth statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassPrior {
    pub mean_dims: Dimensions,
    pub depth_mean: f64,
    pub depth_std: f64,
}

impl ClassPrior {
    /// KITTI car statistics.
    pub const KITTI_CAR: ClassPrior = ClassPrior {
        mean_dims: Dimensions::new(1.63, 1.53, 3.88),
        depth_mean: 28.01,
        depth_std: 16.32,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub stride: usize,
    pub image_w: usize,
    pub image_h: usize,
    pub topk: usize,
    pub score_threshold: f64,
    /// Indexed by `Box3D::class_id`.
    pub class_priors: Vec<ClassPrior>,
}

impl CodecConfig {
    pub fn new(image_w: usize, image_h: usize, class_priors: Vec<ClassPrior>) -> Self {
        Self {
            stride: 4,
            image_w,
            image_h,
            topk: 100,
            score_threshold: 0.25,
            class_priors,
        }
    }

    /// Padded KITTI input with the car prior only.
    pub fn kitti_car() -> Self {
        Self::new(1280, 384, vec![ClassPrior::KITTI_CAR])
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: &str| Err(CodecError::InvalidConfig(m.to_string()));
        if self.stride < 1 {
            return bad("stride must be >= 1");
        }
        if self.image_w == 0 || self.image_h == 0 {
            return bad("image dimensions must be positive");
        }
        if self.image_w % self.stride != 0 || self.image_h % self.stride != 0 {
            return bad("image dimensions must be divisible by the stride");
        }
        if !(0.0..=1.0).contains(&self.score_threshold) {
            return bad("score threshold must lie in [0, 1]");
        }
        if self.topk < 1 {
            return bad("topk must be >= 1");
        }
        if self.class_priors.is_empty() {
            return bad("at least one class prior is required");
        }
        for p in &self.class_priors {
            if !p.mean_dims.is_positive() || !(p.depth_std > 0.0) {
                return bad("class priors must be positive");
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_priors.len()
    }

    pub fn grid_rows(&self) -> usize {
        self.image_h / self.stride
    }

    pub fn grid_cols(&self) -> usize {
        self.image_w / self.stride
    }

    pub fn prior(&self, class_id: usize) -> Result<&ClassPrior, CodecError> {
        self.class_priors
            .get(class_id)
            .ok_or(CodecError::UnknownClass(class_id))
    }
}

/// Per-class score grid; planes are stored class-major, each plane row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub classes: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(classes: usize, rows: usize, cols: usize) -> Self {
        Self {
            classes,
            rows,
            cols,
            data: vec![0.0; classes * rows * cols],
        }
    }

    pub fn for_config(cfg: &CodecConfig) -> Self {
        Self::zeros(cfg.num_classes(), cfg.grid_rows(), cfg.grid_cols())
    }

    #[inline]
    pub fn index(&self, class: usize, row: usize, col: usize) -> usize {
        (class * self.rows + row) * self.cols + col
    }

    #[inline]
    pub fn get(&self, class: usize, row: usize, col: usize) -> f64 {
        self.data[self.index(class, row, col)]
    }

    #[inline]
    pub fn set(&mut self, class: usize, row: usize, col: usize, v: f64) {
        let i = self.index(class, row, col);
        self.data[i] = v;
    }

    pub fn plane(&self, class: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[class * n..(class + 1) * n]
    }

    pub fn same_shape(&self, other: &Heatmap) -> bool {
        self.classes == other.classes && self.rows == other.rows && self.cols == other.cols
    }
}

/// The 8 regressed quantities at one heatmap cell.
///
/// Angles use the head-referenced convention: `(sin_a, cos_a)` encode
/// `alpha_x = alpha_z + pi/2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegressionTuple {
    pub delta_z: f64,
    pub delta_xc: f64,
    pub delta_yc: f64,
    pub delta_h: f64,
    pub delta_w: f64,
    pub delta_l: f64,
    pub sin_a: f64,
    pub cos_a: f64,
}

impl RegressionTuple {
    pub const LEN: usize = 8;

    pub fn to_array(self) -> [f64; 8] {
        [
            self.delta_z,
            self.delta_xc,
            self.delta_yc,
            self.delta_h,
            self.delta_w,
            self.delta_l,
            self.sin_a,
            self.cos_a,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            delta_z: a[0],
            delta_xc: a[1],
            delta_yc: a[2],
            delta_h: a[3],
            delta_w: a[4],
            delta_l: a[5],
            sin_a: a[6],
            cos_a: a[7],
        }
    }

    pub fn dims_residual(&self) -> [f64; 3] {
        [self.delta_h, self.delta_w, self.delta_l]
    }
}

/// Per-cell regression values, 8 planes of `rows x cols` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RegressionMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; RegressionTuple::LEN * rows * cols],
        }
    }

    pub fn for_config(cfg: &CodecConfig) -> Self {
        Self::zeros(cfg.grid_rows(), cfg.grid_cols())
    }

    #[inline]
    pub fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.rows + row) * self.cols + col
    }

    pub fn raw_at(&self, row: usize, col: usize) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.data[self.index(c, row, col)];
        }
        out
    }

    pub fn tuple_at(&self, row: usize, col: usize) -> RegressionTuple {
        RegressionTuple::from_array(self.raw_at(row, col))
    }

    pub fn set_raw(&mut self, row: usize, col: usize, values: [f64; 8]) {
        for (c, v) in values.into_iter().enumerate() {
            let i = self.index(c, row, col);
            self.data[i] = v;
        }
    }

    pub fn set_tuple(&mut self, row: usize, col: usize, t: RegressionTuple) {
        self.set_raw(row, col, t.to_array());
    }
}

/// Heatmap cell address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub class: usize,
    pub row: usize,
    pub col: usize,
}

/// One encoded object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetEntry {
    pub cell: Cell,
    pub tuple: RegressionTuple,
    pub gt: Box3D,
    /// Continuous projected 3D center in input pixels.
    pub keypoint: Point2,
    pub regression_valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub heatmap: Heatmap,
    pub entries: Vec<TargetEntry>,
    /// Indices (into the encoder input) of objects that were not encoded.
    pub dropped: Vec<usize>,
    pub stride: usize,
}

impl TargetSet {
    /// Number of cells holding exactly 1 (the focal-loss normalizer).
    pub fn positive_cells(&self) -> usize {
        self.heatmap.data.iter().filter(|&&v| v == 1.0).count()
    }
}

/// A decoded object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub box3d: Box3D,
    pub score: f64,
    pub cell: Cell,
    /// Enclosing rectangle of the projected box; `None` if a corner is behind the camera.
    pub box2d: Option<Rect2>,
}
