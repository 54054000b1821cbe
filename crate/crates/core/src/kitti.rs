//! KITTI object labels, calibration files and detection output.
//!
//! Label line: `type truncated occluded alpha left top right bottom h w l x y z
//! rotation_y [score]`. Calibration: `KEY: v0 ... v11` lines, of which `P2`
//! (left color camera) is used.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::codec::ClassPrior;
use crate::geometry::{Box3D, CameraProjection, Dimensions, GeometryError, Rect2};

pub const DONT_CARE: &str = "DontCare";

#[derive(Debug, Error)]
pub enum KittiError {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("missing key '{0}'")]
    MissingKey(String),
    #[error("malformed matrix: {0}")]
    MalformedMatrix(String),
    #[error("class '{class}' has {count} samples, need at least 2")]
    InsufficientSamples { class: String, count: usize },
    #[error("unknown class '{0}'")]
    UnknownClass(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl KittiError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        KittiError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub kind: String,
    pub truncated: f64,
    /// 0 visible .. 3 unknown; -1 for DontCare regions.
    pub occluded: i32,
    pub alpha: f64,
    pub bbox: Rect2,
    pub dims: Dimensions,
    pub location: [f64; 3],
    pub rotation_y: f64,
}

impl GtObject {
    pub fn is_dont_care(&self) -> bool {
        self.kind == DONT_CARE
    }

    pub fn to_box3d(&self, class_id: usize) -> Result<Box3D, GeometryError> {
        Box3D::new(class_id, self.dims, self.location, self.rotation_y)
    }

    /// A label for `b`, with the observation angle derived from its location.
    pub fn from_box3d(kind: &str, b: &Box3D, bbox: Rect2) -> Self {
        let alpha = crate::geometry::theta_to_alpha(b.yaw, b.location[0], b.location[2]).unwrap_or(-10.0);
        Self {
            kind: kind.to_string(),
            truncated: 0.0,
            occluded: 0,
            alpha,
            bbox,
            dims: b.dims,
            location: b.location,
            rotation_y: b.yaw,
        }
    }
}

/// A label with a confidence, as written for submission.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub object: GtObject,
    pub score: f64,
}

fn parse_line(line: &str, line_no: usize) -> Result<(GtObject, Option<f64>), KittiError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 15 && fields.len() != 16 {
        return Err(KittiError::MalformedLine {
            line: line_no,
            reason: format!("expected 15 or 16 fields, found {}", fields.len()),
        });
    }
    let num = |i: usize| -> Result<f64, KittiError> {
        fields[i].parse::<f64>().map_err(|_| KittiError::MalformedLine {
            line: line_no,
            reason: format!("field {} ('{}') is not a number", i + 1, fields[i]),
        })
    };
    let occluded = fields[2].parse::<i32>().map_err(|_| KittiError::MalformedLine {
        line: line_no,
        reason: format!("occlusion '{}' is not an integer", fields[2]),
    })?;
    let obj = GtObject {
        kind: fields[0].to_string(),
        truncated: num(1)?,
        occluded,
        alpha: num(3)?,
        bbox: Rect2 {
            xmin: num(4)?,
            ymin: num(5)?,
            xmax: num(6)?,
            ymax: num(7)?,
        },
        dims: Dimensions::new(num(8)?, num(9)?, num(10)?),
        location: [num(11)?, num(12)?, num(13)?],
        rotation_y: num(14)?,
    };
    if obj.bbox.xmax < obj.bbox.xmin || obj.bbox.ymax < obj.bbox.ymin {
        return Err(KittiError::MalformedLine {
            line: line_no,
            reason: "inverted 2D box".into(),
        });
    }
    let score = if fields.len() == 16 { Some(num(15)?) } else { None };
    if score.is_some_and(|s| !s.is_finite()) {
        return Err(KittiError::MalformedLine {
            line: line_no,
            reason: "non-finite score".into(),
        });
    }
    Ok((obj, score))
}

/// Parses a label file. Blank lines are skipped; line numbers start at 1.
pub fn parse_label_file(text: &str) -> Result<Vec<GtObject>, KittiError> {
    numbered_lines(text)
        .map(|(i, l)| parse_line(l, i).map(|(o, _)| o))
        .collect()
}

/// Parses a detection file; every line needs the score field.
pub fn parse_detection_file(text: &str) -> Result<Vec<DetectionRecord>, KittiError> {
    numbered_lines(text)
        .map(|(i, l)| match parse_line(l, i)? {
            (object, Some(score)) => Ok(DetectionRecord { object, score }),
            (_, None) => Err(KittiError::MalformedLine {
                line: i,
                reason: "missing score".into(),
            }),
        })
        .collect()
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads the `P2` projection from a calibration file.
pub fn parse_calib_file(text: &str) -> Result<CameraProjection, KittiError> {
    let line = text
        .lines()
        .find_map(|l| l.trim_start().strip_prefix("P2:"))
        .ok_or_else(|| KittiError::MissingKey("P2".into()))?;
    let values = line
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| KittiError::MalformedMatrix(format!("P2: {e}")))?;
    if values.len() != 12 {
        return Err(KittiError::MalformedMatrix(format!("P2 has {} values, expected 12", values.len())));
    }
    let m: [[f64; 4]; 3] = std::array::from_fn(|r| std::array::from_fn(|c| values[4 * r + c]));
    CameraProjection::new(m).map_err(|e| KittiError::MalformedMatrix(format!("P2: {e}")))
}

fn format_object(out: &mut String, o: &GtObject, score: Option<f64>) {
    let b = &o.bbox;
    let _ = write!(
        out,
        "{} {:.6} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        o.kind,
        o.truncated,
        o.occluded,
        o.alpha,
        b.xmin,
        b.ymin,
        b.xmax,
        b.ymax,
        o.dims.h,
        o.dims.w,
        o.dims.l,
        o.location[0],
        o.location[1],
        o.location[2],
        o.rotation_y
    );
    if let Some(s) = score {
        let _ = write!(out, " {s:.6}");
    }
    out.push('\n');
}

/// One 16-field line per detection, six decimals.
pub fn format_detections(dets: &[DetectionRecord]) -> String {
    let mut out = String::new();
    for d in dets {
        format_object(&mut out, &d.object, Some(d.score));
    }
    out
}

/// 15-field label lines, six decimals.
pub fn format_labels(objects: &[GtObject]) -> String {
    let mut out = String::new();
    for o in objects {
        format_object(&mut out, o, None);
    }
    out
}

/// Writes `<dir>/<frame>.txt` for every frame, creating empty files for
/// frames without detections.
pub fn write_detections(dir: &Path, frames: &BTreeMap<String, Vec<DetectionRecord>>) -> Result<(), KittiError> {
    fs::create_dir_all(dir).map_err(|e| KittiError::io(dir, e))?;
    for (id, dets) in frames {
        let path = dir.join(format!("{id}.txt"));
        fs::write(&path, format_detections(dets)).map_err(|e| KittiError::io(&path, e))?;
    }
    Ok(())
}

/// How the depth spread is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StdKind {
    /// Divide by `n`.
    #[default]
    Population,
    /// Divide by `n - 1`.
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStat {
    pub class: String,
    pub mean_dims: Dimensions,
    pub depth_mean: f64,
    pub depth_std: f64,
    pub count: usize,
}

impl ClassStat {
    pub fn to_prior(&self) -> ClassPrior {
        ClassPrior {
            mean_dims: self.mean_dims,
            depth_mean: self.depth_mean,
            depth_std: self.depth_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub classes: Vec<ClassStat>,
}

impl ClassStats {
    pub fn get(&self, class: &str) -> Option<&ClassStat> {
        self.classes.iter().find(|c| c.class == class)
    }
}

/// Mean dimensions and depth statistics per requested class, over objects
/// with positive depth.
pub fn compute_stats(labels: &[GtObject], classes: &[&str], std_kind: StdKind) -> Result<ClassStats, KittiError> {
    let mut out = Vec::with_capacity(classes.len());
    for &class in classes {
        let objs: Vec<&GtObject> = labels
            .iter()
            .filter(|o| o.kind == class && !o.is_dont_care() && o.location[2] > 0.0)
            .collect();
        let n = objs.len();
        if n < 2 {
            return Err(KittiError::InsufficientSamples {
                class: class.to_string(),
                count: n,
            });
        }
        // Sort each series so the sums do not depend on label order.
        let sorted_mean = |f: &dyn Fn(&GtObject) -> f64| {
            let mut v: Vec<f64> = objs.iter().map(|o| f(o)).collect();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>() / n as f64
        };
        let depth_mean = sorted_mean(&|o| o.location[2]);
        let var_sum = {
            let mut v: Vec<f64> = objs.iter().map(|o| (o.location[2] - depth_mean).powi(2)).collect();
            v.sort_by(f64::total_cmp);
            v.iter().sum::<f64>()
        };
        let denom = match std_kind {
            StdKind::Population => n as f64,
            StdKind::Sample => (n - 1) as f64,
        };
        out.push(ClassStat {
            class: class.to_string(),
            mean_dims: Dimensions::new(sorted_mean(&|o| o.dims.h), sorted_mean(&|o| o.dims.w), sorted_mean(&|o| o.dims.l)),
            depth_mean,
            depth_std: (var_sum / denom).sqrt(),
            count: n,
        });
    }
    Ok(ClassStats { classes: out })
}

/// A frame of a KITTI-layout directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: String,
    pub objects: Vec<GtObject>,
    pub projection: CameraProjection,
}

fn read(path: &Path) -> Result<String, KittiError> {
    fs::read_to_string(path).map_err(|e| KittiError::io(path, e))
}

/// Frame ids (file stems) of `*.txt` files in `dir`, sorted.
pub fn frame_ids(dir: &Path) -> Result<Vec<String>, KittiError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| KittiError::io(dir, e))? {
        let path = entry.map_err(|e| KittiError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "txt") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads `label_2/` and `calib/` under `root`.
pub fn load_frames(root: &Path) -> Result<Vec<Frame>, KittiError> {
    let label_dir = root.join("label_2");
    let calib_dir = root.join("calib");
    frame_ids(&label_dir)?
        .into_iter()
        .map(|id| {
            let objects = parse_label_file(&read(&label_dir.join(format!("{id}.txt")))?).map_err(|e| match e {
                KittiError::MalformedLine { line, reason } => KittiError::MalformedLine {
                    line,
                    reason: format!("{id}.txt: {reason}"),
                },
                e => e,
            })?;
            let projection = parse_calib_file(&read(&calib_dir.join(format!("{id}.txt")))?)?;
            Ok(Frame { id, objects, projection })
        })
        .collect()
}

/// Loads detection files (`<id>.txt`) from `dir`; frames without a file are
/// treated as empty.
pub fn load_detections(dir: &Path, ids: &[String]) -> Result<BTreeMap<String, Vec<DetectionRecord>>, KittiError> {
    let mut out = BTreeMap::new();
    for id in ids {
        let path = dir.join(format!("{id}.txt"));
        let dets = if path.exists() {
            parse_detection_file(&read(&path)?)?
        } else {
            Vec::new()
        };
        out.insert(id.clone(), dets);
    }
    Ok(out)
}
