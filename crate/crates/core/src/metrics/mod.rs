//! Detection quality: rotated-box IoU, KITTI-style average precision and the
//! depth-error breakdown.

use std::fmt::Write as _;

use thiserror::Error;

use crate::exec::Execution;

mod ap;
mod depth;
mod iou;

pub use ap::{
    assign_difficulty, average_precision, count_valid, cumulative_counts, curve_from_counts, match_frame, meets,
    Difficulty, EvalFrame, IouKind, MatchSpec, Outcome, PrCurve, RecallPoints,
};
pub use depth::{depth_error_report, DepthBin, DepthErrorReport, BIN_WIDTH};
pub use iou::{bev_intersection, bev_iou, clip_convex, iou_2d, iou_3d, rect_intersection, signed_area};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub class: String,
    /// IoU thresholds for 2D, BEV and 3D matching, in [`IouKind::ALL`] order.
    pub thresholds: [f64; 3],
    pub recall: RecallPoints,
    /// `None` evaluates every object of the class as valid.
    pub difficulties: Vec<Option<Difficulty>>,
}

impl EvalConfig {
    /// Car at IoU 0.7 for all three tasks, 40 recall points, all levels.
    pub fn kitti_car() -> Self {
        Self {
            class: "Car".into(),
            thresholds: [0.7; 3],
            recall: RecallPoints::R40,
            difficulties: Difficulty::LEVELS.into_iter().map(Some).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApEntry {
    pub iou: IouKind,
    pub threshold: f64,
    pub difficulty: Option<Difficulty>,
    pub curve: PrCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub class: String,
    pub recall: RecallPoints,
    pub entries: Vec<ApEntry>,
}

fn difficulty_name(d: Option<Difficulty>) -> &'static str {
    d.map_or("all", Difficulty::name)
}

impl EvalReport {
    pub fn ap(&self, iou: IouKind, difficulty: Option<Difficulty>) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.iou == iou && e.difficulty == difficulty)
            .map(|e| e.curve.ap)
    }

    /// Aligned table for reading.
    pub fn to_text(&self) -> String {
        let mut s = format!("class {}  AP|{}\n", self.class, self.recall.name());
        let _ = writeln!(s, "{:<6} {:>6} {:>10} {:>10} {:>6}", "task", "iou", "difficulty", "AP (%)", "n_gt");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{:<6} {:>6.2} {:>10} {:>10.4} {:>6}",
                e.iou.name(),
                e.threshold,
                difficulty_name(e.difficulty),
                100.0 * e.curve.ap,
                e.curve.n_gt
            );
        }
        s
    }

    /// One `metric difficulty value` line per entry, e.g.
    /// `ap_3d@0.70_R40 moderate 0.512345`.
    pub fn to_machine(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "ap_{}@{:.2}_{} {} {:.6}",
                e.iou.name(),
                e.threshold,
                self.recall.name(),
                difficulty_name(e.difficulty),
                e.curve.ap
            );
        }
        s
    }
}

/// AP for every task and difficulty in `cfg`.
pub fn evaluate(frames: &[EvalFrame], cfg: &EvalConfig, exec: Execution) -> EvalReport {
    let mut entries = Vec::new();
    for (iou, threshold) in IouKind::ALL.into_iter().zip(cfg.thresholds) {
        for &difficulty in &cfg.difficulties {
            let spec = MatchSpec {
                class: &cfg.class,
                iou,
                threshold,
                difficulty,
            };
            entries.push(ApEntry {
                iou,
                threshold,
                difficulty,
                curve: average_precision(frames, &spec, cfg.recall, exec),
            });
        }
    }
    EvalReport {
        class: cfg.class.clone(),
        recall: cfg.recall,
        entries,
    }
}
