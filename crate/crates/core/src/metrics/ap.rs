use std::cmp::Ordering;

use super::iou::{bev_iou, iou_2d, iou_3d, rect_intersection};
use crate::exec::Execution;
use crate::kitti::{DetectionRecord, GtObject};

/// KITTI difficulty levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
    Ignored,
}

impl Difficulty {
    pub const LEVELS: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    /// `(min 2D height px, max occlusion, max truncation)`, from the KITTI
    /// object devkit (`eval.cpp`).
    pub fn thresholds(self) -> Option<(f64, i32, f64)> {
        match self {
            Difficulty::Easy => Some((40.0, 0, 0.15)),
            Difficulty::Moderate => Some((25.0, 1, 0.30)),
            Difficulty::Hard => Some((25.0, 2, 0.50)),
            Difficulty::Ignored => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
            Difficulty::Ignored => "ignored",
        }
    }
}

/// True if `gt` meets the thresholds of `level`. Levels are cumulative: an
/// easy object also counts for moderate and hard.
pub fn meets(gt: &GtObject, level: Difficulty) -> bool {
    level.thresholds().is_some_and(|(h, occ, trunc)| {
        gt.bbox.height() >= h && gt.occluded >= 0 && gt.occluded <= occ && gt.truncated <= trunc
    })
}

/// The easiest level whose thresholds `gt` meets.
pub fn assign_difficulty(gt: &GtObject) -> Difficulty {
    Difficulty::LEVELS
        .into_iter()
        .find(|&d| meets(gt, d))
        .unwrap_or(Difficulty::Ignored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IouKind {
    Box2d,
    Bev,
    Box3d,
}

impl IouKind {
    pub const ALL: [IouKind; 3] = [IouKind::Box2d, IouKind::Bev, IouKind::Box3d];

    pub fn name(self) -> &'static str {
        match self {
            IouKind::Box2d => "2d",
            IouKind::Bev => "bev",
            IouKind::Box3d => "3d",
        }
    }

    /// Overlap of a detection with a ground-truth object; invalid 3D boxes
    /// overlap nothing.
    pub fn overlap(self, det: &GtObject, gt: &GtObject) -> f64 {
        if self == IouKind::Box2d {
            return iou_2d(&det.bbox, &gt.bbox);
        }
        let (Ok(a), Ok(b)) = (det.to_box3d(0), gt.to_box3d(0)) else {
            return 0.0;
        };
        let r = match self {
            IouKind::Bev => bev_iou(&a, &b),
            _ => iou_3d(&a, &b),
        };
        r.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecallPoints {
    R11,
    R40,
}

impl RecallPoints {
    /// Sampled recall levels as `(numerator, denominator)`.
    pub fn samples(self) -> Vec<(usize, usize)> {
        match self {
            RecallPoints::R11 => (0..=10).map(|i| (i, 10)).collect(),
            RecallPoints::R40 => (1..=40).map(|i| (i, 40)).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RecallPoints::R11 => "R11",
            RecallPoints::R40 => "R40",
        }
    }
}

/// Ground truth and detections of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalFrame {
    pub id: String,
    pub gts: Vec<GtObject>,
    pub dets: Vec<DetectionRecord>,
}

/// Classes whose objects are neither positives nor false-positive sources
/// for `class`.
fn neighbor_class(class: &str, kind: &str) -> bool {
    matches!((class, kind), ("Car", "Van") | ("Pedestrian", "Person_sitting"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GtRole {
    Valid,
    Ignored,
    DontCare,
    Unrelated,
}

fn gt_role(gt: &GtObject, class: &str, difficulty: Option<Difficulty>) -> GtRole {
    if gt.kind == class {
        match difficulty {
            None => GtRole::Valid,
            Some(d) if meets(gt, d) => GtRole::Valid,
            Some(_) => GtRole::Ignored,
        }
    } else if neighbor_class(class, &gt.kind) {
        GtRole::Ignored
    } else if gt.is_dont_care() {
        GtRole::DontCare
    } else {
        GtRole::Unrelated
    }
}

/// Matching problem shared by the AP evaluator and its checks.
#[derive(Debug, Clone, Copy)]
pub struct MatchSpec<'a> {
    pub class: &'a str,
    pub iou: IouKind,
    pub threshold: f64,
    pub difficulty: Option<Difficulty>,
}

/// Outcome of one detection after matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    /// Matched an ignored object or a DontCare region, or too small for the
    /// difficulty.
    Neutral,
}

/// Number of ground-truth objects that count as positives in `frame`.
pub fn count_valid(frame: &EvalFrame, spec: &MatchSpec) -> usize {
    frame
        .gts
        .iter()
        .filter(|g| gt_role(g, spec.class, spec.difficulty) == GtRole::Valid)
        .count()
}

/// Descending score; ties keep input order.
fn score_order(dets: &[DetectionRecord]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Greedy matching of one frame's detections of `spec.class` with score at
/// least `min_score`, highest score first.
///
/// A detection takes the unmatched valid object it overlaps most (IoU strictly
/// above the threshold); failing that, an unmatched ignored object. Otherwise
/// it is neutral if its 2D box is shorter than the difficulty's minimum height
/// or lies mostly (> 50 % of its area) inside a DontCare region, and a false
/// positive if not.
pub fn match_frame(frame: &EvalFrame, spec: &MatchSpec, min_score: f64) -> Vec<(f64, Outcome)> {
    let roles: Vec<GtRole> = frame.gts.iter().map(|g| gt_role(g, spec.class, spec.difficulty)).collect();
    let mut taken = vec![false; frame.gts.len()];
    let min_height = spec.difficulty.and_then(|d| d.thresholds()).map_or(0.0, |t| t.0);
    let mut out = Vec::new();
    for i in score_order(&frame.dets) {
        let det = &frame.dets[i];
        if det.object.kind != spec.class || det.score < min_score {
            continue;
        }
        let mut best: [Option<(usize, f64)>; 2] = [None, None];
        for (j, gt) in frame.gts.iter().enumerate() {
            let slot = match roles[j] {
                GtRole::Valid => 0,
                GtRole::Ignored => 1,
                _ => continue,
            };
            if taken[j] {
                continue;
            }
            let o = spec.iou.overlap(&det.object, gt);
            if o > spec.threshold && best[slot].is_none_or(|(_, b)| o > b) {
                best[slot] = Some((j, o));
            }
        }
        let outcome = if let Some((j, _)) = best[0] {
            taken[j] = true;
            Outcome::TruePositive
        } else if let Some((j, _)) = best[1] {
            taken[j] = true;
            Outcome::Neutral
        } else if det.object.bbox.height() < min_height {
            Outcome::Neutral
        } else if frame.gts.iter().zip(&roles).any(|(g, r)| {
            *r == GtRole::DontCare && rect_intersection(&det.object.bbox, &g.bbox) > 0.5 * det.object.bbox.area()
        }) {
            Outcome::Neutral
        } else {
            Outcome::FalsePositive
        };
        out.push((det.score, outcome));
    }
    out
}

/// Precision-recall curve and its sampled average.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// `(recall, precision)` at the end of every distinct score.
    pub points: Vec<(f64, f64)>,
    pub recall_points: Vec<f64>,
    /// Interpolated precision at each sampled recall.
    pub precision: Vec<f64>,
    pub ap: f64,
    pub n_gt: usize,
}

/// Cumulative TP/FP counts at the end of each distinct score, descending.
pub fn cumulative_counts(mut outcomes: Vec<(f64, Outcome)>) -> Vec<(f64, usize, usize)> {
    outcomes.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let (mut tp, mut fp) = (0, 0);
    let mut out: Vec<(f64, usize, usize)> = Vec::new();
    for (k, &(score, o)) in outcomes.iter().enumerate() {
        match o {
            Outcome::TruePositive => tp += 1,
            Outcome::FalsePositive => fp += 1,
            Outcome::Neutral => {}
        }
        let group_end = outcomes.get(k + 1).is_none_or(|n| n.0 != score);
        if group_end {
            out.push((score, tp, fp));
        }
    }
    out
}

/// Samples interpolated precision from `(tp, fp)` operating points.
pub fn curve_from_counts(counts: &[(usize, usize)], n_gt: usize, recall: RecallPoints) -> PrCurve {
    let samples = recall.samples();
    let points: Vec<(f64, f64)> = counts
        .iter()
        .filter(|(tp, fp)| tp + fp > 0)
        .map(|&(tp, fp)| (tp as f64 / n_gt.max(1) as f64, tp as f64 / (tp + fp) as f64))
        .collect();
    let precision: Vec<f64> = samples
        .iter()
        .map(|&(i, k)| {
            if n_gt == 0 {
                return 0.0;
            }
            counts
                .iter()
                .filter(|(tp, fp)| tp + fp > 0 && tp * k >= i * n_gt)
                .map(|&(tp, fp)| tp as f64 / (tp + fp) as f64)
                .fold(0.0, f64::max)
        })
        .collect();
    let ap = if n_gt == 0 {
        0.0
    } else {
        precision.iter().sum::<f64>() / precision.len() as f64
    };
    PrCurve {
        points,
        recall_points: samples.iter().map(|&(i, k)| i as f64 / k as f64).collect(),
        precision,
        ap,
        n_gt,
    }
}

/// Average precision over a set of frames. Frames are matched independently
/// (in parallel when `exec` allows) and merged in frame order.
pub fn average_precision(frames: &[EvalFrame], spec: &MatchSpec, recall: RecallPoints, exec: Execution) -> PrCurve {
    let per_frame = exec.map_slice(frames, |f| (count_valid(f, spec), match_frame(f, spec, f64::NEG_INFINITY)));
    let n_gt = per_frame.iter().map(|p| p.0).sum();
    let outcomes: Vec<(f64, Outcome)> = per_frame.into_iter().flat_map(|p| p.1).collect();
    let counts: Vec<(usize, usize)> = cumulative_counts(outcomes).into_iter().map(|(_, tp, fp)| (tp, fp)).collect();
    curve_from_counts(&counts, n_gt, recall)
}
