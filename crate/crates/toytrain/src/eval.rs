//! Held-out evaluation of a toy model.

use std::fmt;

use mono3d_core::codec::{decode_detections, Detection};
use mono3d_core::geometry::box2d_from_projection;
use mono3d_core::kitti::{DetectionRecord, GtObject};
use mono3d_core::losses::activate_map;
use mono3d_core::metrics::{average_precision, EvalFrame, IouKind, MatchSpec, RecallPoints};
use mono3d_core::{CodecConfig, Execution};

use crate::model::Model;
use crate::scene::{generate_scene, scene_seed, SceneConfig, SyntheticScene};
use crate::ToyError;

/// Held-out scenes come from a stream disjoint from any training seed stream.
const HELDOUT_SALT: u64 = 0x4845_4C44_4F55_5421;

/// AP_3D at the two toy-scale IoU thresholds, 40 recall points, every object valid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ToyMetrics {
    pub ap3d_25: f64,
    pub ap3d_50: f64,
    pub ap_bev_50: f64,
}

impl fmt::Display for ToyMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ap_3d@0.25 {:.6} ap_3d@0.50 {:.6} ap_bev@0.50 {:.6}", self.ap3d_25, self.ap3d_50, self.ap_bev_50)
    }
}

pub fn heldout_scenes(cfg: &SceneConfig, n: usize, exec: Execution) -> Result<Vec<SyntheticScene>, ToyError> {
    exec.map(n, |k| generate_scene(cfg, scene_seed(cfg.seed ^ HELDOUT_SALT, k as u64)))
        .into_iter()
        .collect()
}

pub fn detect(model: &Model, scene: &SyntheticScene, codec: &CodecConfig) -> Result<Vec<Detection>, ToyError> {
    let acts = model.forward(&scene.chw(), scene.height, scene.width)?;
    Ok(decode_detections(&acts.heatmap, &activate_map(&acts.regression), &scene.projection, codec)?)
}

pub fn eval_frame(id: usize, scene: &SyntheticScene, dets: &[Detection]) -> EvalFrame {
    let (w, h) = (scene.width as f64, scene.height as f64);
    let gts = scene
        .objects
        .iter()
        .map(|b| {
            let bbox = box2d_from_projection(&scene.projection, b, w, h).expect("generated boxes are in front of the camera");
            GtObject::from_box3d("Car", b, bbox)
        })
        .collect();
    let dets = dets
        .iter()
        .filter_map(|d| {
            let bbox = d.box2d?;
            Some(DetectionRecord { object: GtObject::from_box3d("Car", &d.box3d, bbox), score: d.score })
        })
        .collect();
    EvalFrame { id: format!("{id:06}"), gts, dets }
}

pub fn metrics_for(frames: &[EvalFrame], exec: Execution) -> ToyMetrics {
    let ap = |iou, threshold| {
        let spec = MatchSpec { class: "Car", iou, threshold, difficulty: None };
        average_precision(frames, &spec, RecallPoints::R40, exec).ap
    };
    ToyMetrics { ap3d_25: ap(IouKind::Box3d, 0.25), ap3d_50: ap(IouKind::Box3d, 0.5), ap_bev_50: ap(IouKind::Bev, 0.5) }
}

pub fn evaluate_model(
    model: &Model,
    scenes: &[SyntheticScene],
    codec: &CodecConfig,
    exec: Execution,
) -> Result<ToyMetrics, ToyError> {
    let frames = exec
        .map(scenes.len(), |i| detect(model, &scenes[i], codec).map(|d| eval_frame(i, &scenes[i], &d)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(metrics_for(&frames, exec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mono3d_core::codec::{encode_targets, ideal_outputs};

    #[test]
    fn ideal_outputs_score_perfectly() {
        let cfg = SceneConfig::default();
        let codec = cfg.codec();
        let scenes = heldout_scenes(&cfg, 20, Execution::Parallel).unwrap();
        let frames: Vec<_> = scenes
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let t = encode_targets(&s.objects, &s.projection, &codec).unwrap();
                assert!(t.dropped.is_empty());
                let (hm, reg) = ideal_outputs(&t);
                eval_frame(i, s, &decode_detections(&hm, &reg, &s.projection, &codec).unwrap())
            })
            .collect();
        let m = metrics_for(&frames, Execution::Sequential);
        assert_eq!(m.ap3d_25, 1.0);
        assert_eq!(m.ap3d_50, 1.0);
    }

    #[test]
    fn untrained_model_scores_in_range() {
        let cfg = SceneConfig::default();
        let model = Model::init(crate::ModelSpec::default(), 0).unwrap();
        let scenes = heldout_scenes(&cfg, 4, Execution::Sequential).unwrap();
        let m = evaluate_model(&model, &scenes, &cfg.codec(), Execution::Sequential).unwrap();
        for v in [m.ap3d_25, m.ap3d_50, m.ap_bev_50] {
            assert!((0.0..=1.0).contains(&v));
        }
    }
}
