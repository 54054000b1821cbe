//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are namespaced
//! (`codec.*`, `loss.*`, `train.*`, `scene.*`, `eval.*`, `ablate.*`,
//! `stats.*`, `render.*`) plus the top-level `seed`. Unknown keys, repeated
//! keys and unparsable values are rejected. [`RunConfig::to_text`] writes
//! every key in a fixed order and parses back to the same configuration.

use std::fmt::Display;
use std::str::FromStr;

use mono3d_core::codec::ClassPrior;
use mono3d_core::kitti::StdKind;
use mono3d_core::losses::{LossConfig, LossVariant};
use mono3d_core::metrics::{Difficulty, EvalConfig, RecallPoints};
use mono3d_core::{CodecConfig, Dimensions};
use mono3d_toytrain::{Optimizer, SceneConfig, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Class decoded as `codec.class_priors[0]` and written into detection files.
    pub class: String,
    pub codec: CodecConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub scene: SceneConfig,
    pub eval: EvalConfig,
    pub depth_min_iou: f64,
    pub ablate_seeds: Vec<u64>,
    pub ablate_variants: Vec<LossVariant>,
    pub stats_classes: Vec<String>,
    pub stats_std: StdKind,
    /// Half-width and depth of the bird's-eye plot, meters.
    pub bev_range: (f64, f64),
    /// Synthetic scenes drawn by `render` when no dataset is given.
    pub render_scenes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            class: "Car".into(),
            codec: CodecConfig::kitti_car(),
            loss: train.loss.clone(),
            train,
            scene: SceneConfig::default(),
            eval: EvalConfig::kitti_car(),
            depth_min_iou: 0.5,
            ablate_seeds: vec![0, 1, 2],
            ablate_variants: LossVariant::ALL.to_vec(),
            stats_classes: vec!["Car".into(), "Pedestrian".into(), "Cyclist".into()],
            stats_std: StdKind::Population,
            bev_range: (40.0, 80.0),
            render_scenes: 4,
        }
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Invalid(format!("{key}: cannot parse '{v}'")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| num(key, s)).collect()
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn recall_name(r: RecallPoints) -> &'static str {
    match r {
        RecallPoints::R11 => "r11",
        RecallPoints::R40 => "r40",
    }
}

fn difficulty_name(d: Option<Difficulty>) -> &'static str {
    d.map_or("all", Difficulty::name)
}

fn parse_difficulty(key: &str, s: &str) -> Result<Option<Difficulty>, CliError> {
    if s == "all" {
        return Ok(None);
    }
    Difficulty::LEVELS
        .into_iter()
        .find(|d| d.name() == s)
        .map(Some)
        .ok_or_else(|| CliError::Invalid(format!("{key}: unknown difficulty '{s}'")))
}

fn optimizer_text(o: &Optimizer) -> String {
    match o {
        Optimizer::Adam { beta1, beta2, eps } => format!("adam:{beta1}:{beta2}:{eps}"),
        Optimizer::Momentum { momentum } => format!("momentum:{momentum}"),
    }
}

fn parse_optimizer(key: &str, v: &str) -> Result<Optimizer, CliError> {
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        ["adam"] => Ok(Optimizer::ADAM),
        ["momentum"] => Ok(Optimizer::MOMENTUM),
        ["adam", b1, b2, e] => Ok(Optimizer::Adam { beta1: num(key, b1)?, beta2: num(key, b2)?, eps: num(key, e)? }),
        ["momentum", m] => Ok(Optimizer::Momentum { momentum: num(key, m)? }),
        _ => Err(CliError::Invalid(format!("{key}: expected adam[:b1:b2:eps] or momentum[:m], got '{v}'"))),
    }
}

fn variant(key: &str, v: &str) -> Result<LossVariant, CliError> {
    v.parse().map_err(|_| CliError::Invalid(format!("{key}: unknown loss variant '{v}'")))
}

impl RunConfig {
    /// Parses `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Invalid(format!("config line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(CliError::Invalid(format!("config line {}: '{k}' set twice", i + 1)));
            }
            cfg.set(k, v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let prior = &mut self.codec.class_priors[0];
        match key {
            "seed" => self.seed = num(key, v)?,
            "codec.class" => self.class = v.to_string(),
            "codec.stride" => self.codec.stride = num(key, v)?,
            "codec.image_w" => self.codec.image_w = num(key, v)?,
            "codec.image_h" => self.codec.image_h = num(key, v)?,
            "codec.topk" => self.codec.topk = num(key, v)?,
            "codec.score_threshold" => self.codec.score_threshold = num(key, v)?,
            "codec.prior.h" => prior.mean_dims.h = num(key, v)?,
            "codec.prior.w" => prior.mean_dims.w = num(key, v)?,
            "codec.prior.l" => prior.mean_dims.l = num(key, v)?,
            "codec.prior.depth_mean" => prior.depth_mean = num(key, v)?,
            "codec.prior.depth_std" => prior.depth_std = num(key, v)?,
            "loss.alpha" => self.loss.alpha = num(key, v)?,
            "loss.beta" => self.loss.beta = num(key, v)?,
            "loss.lambda" => self.loss.lambda = num(key, v)?,
            "loss.variant" => self.loss.variant = variant(key, v)?,
            "train.iterations" => self.train.iterations = num(key, v)?,
            "train.batch_size" => self.train.batch_size = num(key, v)?,
            "train.lr" => self.train.lr = num(key, v)?,
            "train.milestones" => self.train.milestones = list(key, v)?,
            "train.optimizer" => self.train.optimizer = parse_optimizer(key, v)?,
            "train.clip_norm" => self.train.clip_norm = if v == "none" { None } else { Some(num(key, v)?) },
            "train.eval_every" => self.train.eval_every = num(key, v)?,
            "train.eval_scenes" => self.train.eval_scenes = num(key, v)?,
            "train.gate" => self.train.gate = num(key, v)?,
            "scene.width" => self.scene.width = num(key, v)?,
            "scene.height" => self.scene.height = num(key, v)?,
            "scene.focal" => self.scene.focal = num(key, v)?,
            "scene.cx" => self.scene.cx = num(key, v)?,
            "scene.cy" => self.scene.cy = num(key, v)?,
            "scene.camera_height" => self.scene.camera_height = num(key, v)?,
            "scene.min_objects" => self.scene.min_objects = num(key, v)?,
            "scene.max_objects" => self.scene.max_objects = num(key, v)?,
            "scene.depth_min" => self.scene.depth_range.0 = num(key, v)?,
            "scene.depth_max" => self.scene.depth_range.1 = num(key, v)?,
            "scene.dims.h" => self.scene.mean_dims.h = num(key, v)?,
            "scene.dims.w" => self.scene.mean_dims.w = num(key, v)?,
            "scene.dims.l" => self.scene.mean_dims.l = num(key, v)?,
            "scene.dim_jitter" => self.scene.dim_jitter = num(key, v)?,
            "scene.yaw_min" => self.scene.yaw_range.0 = num(key, v)?,
            "scene.yaw_max" => self.scene.yaw_range.1 = num(key, v)?,
            "scene.fog_distance" => self.scene.fog_distance = num(key, v)?,
            "scene.min_visible" => self.scene.min_visible = num(key, v)?,
            "eval.class" => self.eval.class = v.to_string(),
            "eval.iou_2d" => self.eval.thresholds[0] = num(key, v)?,
            "eval.iou_bev" => self.eval.thresholds[1] = num(key, v)?,
            "eval.iou_3d" => self.eval.thresholds[2] = num(key, v)?,
            "eval.recall" => {
                self.eval.recall = match v {
                    "r11" => RecallPoints::R11,
                    "r40" => RecallPoints::R40,
                    _ => return Err(CliError::Invalid(format!("{key}: expected r11 or r40, got '{v}'"))),
                }
            }
            "eval.difficulties" => {
                self.eval.difficulties =
                    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_difficulty(key, s)).collect::<Result<_, _>>()?
            }
            "eval.depth_min_iou" => self.depth_min_iou = num(key, v)?,
            "ablate.seeds" => self.ablate_seeds = list(key, v)?,
            "ablate.variants" => {
                self.ablate_variants =
                    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| variant(key, s)).collect::<Result<_, _>>()?
            }
            "stats.classes" => self.stats_classes = list(key, v)?,
            "stats.std" => {
                self.stats_std = match v {
                    "population" => StdKind::Population,
                    "sample" => StdKind::Sample,
                    _ => return Err(CliError::Invalid(format!("{key}: expected population or sample, got '{v}'"))),
                }
            }
            "render.bev_half_width" => self.bev_range.0 = num(key, v)?,
            "render.bev_depth" => self.bev_range.1 = num(key, v)?,
            "render.scenes" => self.render_scenes = num(key, v)?,
            _ => return Err(CliError::Invalid(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.codec.class_priors[0];
        let (t, s) = (&self.train, &self.scene);
        vec![
            ("seed", self.seed.to_string()),
            ("codec.class", self.class.clone()),
            ("codec.stride", self.codec.stride.to_string()),
            ("codec.image_w", self.codec.image_w.to_string()),
            ("codec.image_h", self.codec.image_h.to_string()),
            ("codec.topk", self.codec.topk.to_string()),
            ("codec.score_threshold", self.codec.score_threshold.to_string()),
            ("codec.prior.h", p.mean_dims.h.to_string()),
            ("codec.prior.w", p.mean_dims.w.to_string()),
            ("codec.prior.l", p.mean_dims.l.to_string()),
            ("codec.prior.depth_mean", p.depth_mean.to_string()),
            ("codec.prior.depth_std", p.depth_std.to_string()),
            ("loss.alpha", self.loss.alpha.to_string()),
            ("loss.beta", self.loss.beta.to_string()),
            ("loss.lambda", self.loss.lambda.to_string()),
            ("loss.variant", self.loss.variant.to_string()),
            ("train.iterations", t.iterations.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.milestones", join(&t.milestones)),
            ("train.optimizer", optimizer_text(&t.optimizer)),
            ("train.clip_norm", t.clip_norm.map_or("none".into(), |c| c.to_string())),
            ("train.eval_every", t.eval_every.to_string()),
            ("train.eval_scenes", t.eval_scenes.to_string()),
            ("train.gate", t.gate.to_string()),
            ("scene.width", s.width.to_string()),
            ("scene.height", s.height.to_string()),
            ("scene.focal", s.focal.to_string()),
            ("scene.cx", s.cx.to_string()),
            ("scene.cy", s.cy.to_string()),
            ("scene.camera_height", s.camera_height.to_string()),
            ("scene.min_objects", s.min_objects.to_string()),
            ("scene.max_objects", s.max_objects.to_string()),
            ("scene.depth_min", s.depth_range.0.to_string()),
            ("scene.depth_max", s.depth_range.1.to_string()),
            ("scene.dims.h", s.mean_dims.h.to_string()),
            ("scene.dims.w", s.mean_dims.w.to_string()),
            ("scene.dims.l", s.mean_dims.l.to_string()),
            ("scene.dim_jitter", s.dim_jitter.to_string()),
            ("scene.yaw_min", s.yaw_range.0.to_string()),
            ("scene.yaw_max", s.yaw_range.1.to_string()),
            ("scene.fog_distance", s.fog_distance.to_string()),
            ("scene.min_visible", s.min_visible.to_string()),
            ("eval.class", self.eval.class.clone()),
            ("eval.iou_2d", self.eval.thresholds[0].to_string()),
            ("eval.iou_bev", self.eval.thresholds[1].to_string()),
            ("eval.iou_3d", self.eval.thresholds[2].to_string()),
            ("eval.recall", recall_name(self.eval.recall).into()),
            ("eval.difficulties", self.eval.difficulties.iter().map(|d| difficulty_name(*d)).collect::<Vec<_>>().join(",")),
            ("eval.depth_min_iou", self.depth_min_iou.to_string()),
            ("ablate.seeds", join(&self.ablate_seeds)),
            ("ablate.variants", join(&self.ablate_variants)),
            ("stats.classes", self.stats_classes.join(",")),
            (
                "stats.std",
                match self.stats_std {
                    StdKind::Population => "population",
                    StdKind::Sample => "sample",
                }
                .into(),
            ),
            ("render.bev_half_width", self.bev_range.0.to_string()),
            ("render.bev_depth", self.bev_range.1.to_string()),
            ("render.scenes", self.render_scenes.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Applies the seed to the trainer and scene generator and checks every
    /// section.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.train.seed = self.seed;
        self.train.loss = self.loss.clone();
        self.scene.seed = self.seed;
        self.codec.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.loss.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        self.scene.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
        let t = &self.eval.thresholds;
        if t.iter().any(|x| !(0.0..=1.0).contains(x)) || self.eval.difficulties.is_empty() {
            return Err(CliError::Invalid("eval thresholds must lie in [0, 1] with at least one difficulty".into()));
        }
        if self.ablate_variants.is_empty() {
            return Err(CliError::Invalid("ablate.variants is empty".into()));
        }
        if !(self.bev_range.0 > 0.0 && self.bev_range.1 > 0.0) {
            return Err(CliError::Invalid("BEV extent must be positive".into()));
        }
        Ok(self)
    }

    pub fn prior(&self) -> ClassPrior {
        self.codec.class_priors[0]
    }
}

/// Mean dims of a prior as a short string.
pub fn dims_text(d: Dimensions) -> String {
    format!("{:.4} {:.4} {:.4}", d.h, d.w, d.l)
}
