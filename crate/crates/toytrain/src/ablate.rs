//! Loss-variant comparison under identical data streams and initializations.

use std::fmt::Write as _;

use mono3d_core::losses::{LossConfig, LossVariant};
use mono3d_core::Execution;

use crate::eval::{evaluate_model, heldout_scenes, ToyMetrics};
use crate::model::{Model, ModelSpec};
use crate::scene::SceneConfig;
use crate::train::{train, SceneStream, TrainConfig};
use crate::ToyError;

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: LossVariant,
    /// `(seed, metrics)` per run.
    pub runs: Vec<(u64, ToyMetrics)>,
}

impl AblationRow {
    pub fn mean(&self) -> ToyMetrics {
        let n = self.runs.len().max(1) as f64;
        let sum = |f: fn(&ToyMetrics) -> f64| self.runs.iter().map(|(_, m)| f(m)).sum::<f64>() / n;
        ToyMetrics { ap3d_25: sum(|m| m.ap3d_25), ap3d_50: sum(|m| m.ap3d_50), ap_bev_50: sum(|m| m.ap_bev_50) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: LossVariant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("variant           seed  ap_3d@0.25  ap_3d@0.50  ap_bev@0.50\n");
        for r in &self.rows {
            for (seed, m) in &r.runs {
                let _ = writeln!(s, "{:<16} {:>5}  {:>10.4}  {:>10.4}  {:>11.4}", r.variant.name(), seed, m.ap3d_25, m.ap3d_50, m.ap_bev_50);
            }
            let m = r.mean();
            let _ = writeln!(s, "{:<16} {:>5}  {:>10.4}  {:>10.4}  {:>11.4}", r.variant.name(), "mean", m.ap3d_25, m.ap3d_50, m.ap_bev_50);
        }
        s
    }
}

/// One training run: init from `seed`, train on the seed's stream, score on
/// the held-out set.
pub fn run_once(
    spec: &ModelSpec,
    scene_cfg: &SceneConfig,
    train_cfg: &TrainConfig,
    heldout: &[crate::SyntheticScene],
    exec: Execution,
) -> Result<(Model, crate::TrainLog, ToyMetrics), ToyError> {
    let mut model = Model::init(spec.clone(), train_cfg.seed)?;
    let mut stream = SceneStream { cfg: scene_cfg.clone(), seed: train_cfg.seed, exec };
    let log = train(&mut model, &mut stream, scene_cfg, train_cfg, exec)?;
    let metrics = evaluate_model(&model, heldout, &scene_cfg.codec(), exec)?;
    Ok((model, log, metrics))
}

pub fn ablate(
    variants: &[LossVariant],
    seeds: &[u64],
    spec: &ModelSpec,
    scene_cfg: &SceneConfig,
    train_cfg: &TrainConfig,
    exec: Execution,
) -> Result<AblationTable, ToyError> {
    if seeds.len() < 3 {
        return Err(ToyError::InvalidConfig(format!("ablation needs at least 3 seeds, got {}", seeds.len())));
    }
    let heldout = heldout_scenes(scene_cfg, train_cfg.eval_scenes, exec)?;
    let mut rows = Vec::new();
    for &variant in variants {
        let mut runs = Vec::new();
        for &seed in seeds {
            let loss = LossConfig { variant, ..train_cfg.loss.clone() };
            let cfg = TrainConfig { seed, loss, ..train_cfg.clone() };
            let (_, _, m) = run_once(spec, scene_cfg, &cfg, &heldout, exec)?;
            runs.push((seed, m));
        }
        rows.push(AblationRow { variant, runs });
    }
    Ok(AblationTable { rows })
}
