use super::ap::EvalFrame;
use super::iou::iou_2d;

pub const BIN_WIDTH: f64 = 10.0;

/// One depth interval `[lo, hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Mean absolute depth error in meters; `None` without matches.
    pub mean_abs_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthErrorReport {
    pub class: String,
    pub min_iou_2d: f64,
    pub bins: Vec<DepthBin>,
}

impl DepthErrorReport {
    /// `depth_lo depth_hi count mean_abs_error` per line.
    pub fn to_text(&self) -> String {
        let mut s = format!("# class {} | 2D IoU > {} | mean absolute depth error (m)\n", self.class, self.min_iou_2d);
        for b in &self.bins {
            let e = b.mean_abs_error.map_or("-".to_string(), |e| format!("{e:.6}"));
            s.push_str(&format!("{:.0} {:.0} {} {}\n", b.lo, b.hi, b.count, e));
        }
        s
    }
}

/// Per-bin mean absolute depth error of detections matched to ground truth
/// by 2D IoU above `min_iou_2d`.
///
/// Bins are 10 m wide and cover `[0, max ground-truth depth]`. Each detection
/// is matched to the object of `class` it overlaps most; the error lands in
/// that object's bin.
pub fn depth_error_report(frames: &[EvalFrame], class: &str, min_iou_2d: f64) -> DepthErrorReport {
    let max_z = frames
        .iter()
        .flat_map(|f| f.gts.iter())
        .filter(|g| g.kind == class && g.location[2] > 0.0)
        .map(|g| g.location[2])
        .fold(0.0, f64::max);
    let n_bins = (max_z / BIN_WIDTH).floor() as usize + 1;
    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for f in frames {
        for d in f.dets.iter().filter(|d| d.object.kind == class) {
            let best = f
                .gts
                .iter()
                .filter(|g| g.kind == class && g.location[2] > 0.0)
                .map(|g| (iou_2d(&d.object.bbox, &g.bbox), g))
                .filter(|(o, _)| *o > min_iou_2d)
                .max_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((_, g)) = best {
                let bin = ((g.location[2] / BIN_WIDTH).floor() as usize).min(n_bins - 1);
                sums[bin] += (d.object.location[2] - g.location[2]).abs();
                counts[bin] += 1;
            }
        }
    }
    let bins = (0..n_bins)
        .map(|i| DepthBin {
            lo: i as f64 * BIN_WIDTH,
            hi: (i + 1) as f64 * BIN_WIDTH,
            count: counts[i],
            mean_abs_error: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
        })
        .collect();
    DepthErrorReport {
        class: class.to_string(),
        min_iou_2d,
        bins,
    }
}
