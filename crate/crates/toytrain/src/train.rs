//! Deterministic training loop.

use std::fmt::{self, Write as _};

use mono3d_core::codec::{encode_targets, TargetSet};
use mono3d_core::losses::{batch_loss_with_grad, grad_check_coords, LossBreakdown, LossConfig, LossError, SampleRef};
use mono3d_core::{CodecConfig, Execution};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::{evaluate_model, ToyMetrics};
use crate::model::{Activations, Model};
use crate::scene::{generate_scene, scene_seed, SceneConfig, SyntheticScene};
use crate::ToyError;

pub const GATE_LIMIT: f64 = 1e-3;
const GATE_COORDS: usize = 24;
const GATE_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Momentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
    pub const MOMENTUM: Optimizer = Optimizer::Momentum { momentum: 0.9 };

    pub fn name(&self) -> &'static str {
        match self {
            Optimizer::Momentum { .. } => "momentum",
            Optimizer::Adam { .. } => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fractions of `iterations` at which the rate drops by 10x.
    pub milestones: Vec<f64>,
    pub optimizer: Optimizer,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
    /// Focal parameters, regression weight and regression variant.
    pub loss: LossConfig,
    /// Held-out evaluation period in iterations; 0 disables snapshots.
    pub eval_every: usize,
    pub eval_scenes: usize,
    /// Run the finite-difference gate before the first update.
    pub gate: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1500,
            batch_size: 8,
            lr: 1e-3,
            milestones: vec![25.0 / 60.0, 40.0 / 60.0],
            optimizer: Optimizer::ADAM,
            clip_norm: Some(10.0),
            seed: 0,
            loss: LossConfig::default(),
            eval_every: 0,
            eval_scenes: 64,
            gate: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ToyError> {
        let bad = |m: &str| Err(ToyError::InvalidConfig(m.to_string()));
        if self.iterations == 0 || self.batch_size == 0 {
            return bad("iterations and batch size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.milestones.iter().any(|m| !(*m > 0.0 && *m < 1.0)) || self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad("milestones must be strictly increasing in (0, 1)");
        }
        match self.optimizer {
            Optimizer::Momentum { momentum } if !(0.0..1.0).contains(&momentum) => return bad("momentum must lie in [0, 1)"),
            Optimizer::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                return bad("adam betas must lie in [0, 1) and eps be positive")
            }
            _ => {}
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("clip norm must be positive");
        }
        self.loss.validate()?;
        Ok(())
    }

    /// Learning rate at `iteration` after the milestone drops.
    pub fn lr_at(&self, iteration: usize) -> f64 {
        let passed = self
            .milestones
            .iter()
            .filter(|&&m| iteration >= (m * self.iterations as f64).floor() as usize)
            .count();
        self.lr * 0.1f64.powi(passed as i32)
    }
}

/// Supplies training batches.
pub trait SceneSource {
    fn batch(&mut self, iteration: usize, size: usize) -> Result<Vec<SyntheticScene>, ToyError>;
}

/// Fresh scenes every iteration, seeded by `(seed, iteration * size + slot)`.
pub struct SceneStream {
    pub cfg: SceneConfig,
    pub seed: u64,
    pub exec: Execution,
}

impl SceneSource for SceneStream {
    fn batch(&mut self, iteration: usize, size: usize) -> Result<Vec<SyntheticScene>, ToyError> {
        let base = (iteration * size) as u64;
        self.exec
            .map(size, |j| generate_scene(&self.cfg, scene_seed(self.seed, base + j as u64)))
            .into_iter()
            .collect()
    }
}

/// The same scenes every iteration.
pub struct FixedBatch(pub Vec<SyntheticScene>);

impl SceneSource for FixedBatch {
    fn batch(&mut self, _iteration: usize, size: usize) -> Result<Vec<SyntheticScene>, ToyError> {
        Ok(self.0.iter().cycle().take(size).cloned().collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
    pub snapshots: Vec<(usize, ToyMetrics)>,
    pub gate_error: Option<f64>,
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.loss;
        write!(
            f,
            "iter {} lr {:.6e} cls {:.9} orient {:.9} dim {:.9} loc {:.9} total {:.9}",
            self.iteration, self.lr, l.cls, l.reg_per_group[0], l.reg_per_group[1], l.reg_per_group[2], l.total
        )
    }
}

impl TrainLog {
    /// One line per iteration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(s, "{e}");
        }
        s
    }

    pub fn snapshots_text(&self) -> String {
        let mut s = String::new();
        for (it, m) in &self.snapshots {
            let _ = writeln!(s, "iter {it} {m}");
        }
        s
    }
}

pub(crate) struct Prepared {
    pub scenes: Vec<SyntheticScene>,
    pub targets: Vec<TargetSet>,
}

pub(crate) fn prepare(scenes: Vec<SyntheticScene>, codec: &CodecConfig) -> Result<Prepared, ToyError> {
    let targets = scenes
        .iter()
        .map(|s| encode_targets(&s.objects, &s.projection, codec))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared { scenes, targets })
}

fn forward_all(model: &Model, batch: &Prepared, exec: Execution) -> Result<Vec<Activations>, ToyError> {
    exec.map_slice(&batch.scenes, |s| model.forward(&s.chw(), s.height, s.width)).into_iter().collect()
}

fn losses(
    acts: &[Activations],
    batch: &Prepared,
    codec: &CodecConfig,
    loss: &LossConfig,
    exec: Execution,
) -> Result<(LossBreakdown, Vec<mono3d_core::losses::LossGrad>), LossError> {
    let samples: Vec<SampleRef> = acts
        .iter()
        .zip(&batch.targets)
        .zip(&batch.scenes)
        .map(|((a, t), s)| SampleRef { heatmap: &a.heatmap, regression: &a.regression, targets: t, proj: &s.projection })
        .collect();
    batch_loss_with_grad(&samples, codec, loss, exec)
}

/// Batch loss and its gradient w.r.t. every model parameter. Per-sample
/// gradients are summed in sample order.
pub(crate) fn loss_and_grad(
    model: &Model,
    batch: &Prepared,
    codec: &CodecConfig,
    loss: &LossConfig,
    exec: Execution,
) -> Result<(LossBreakdown, Vec<f64>), ToyError> {
    let acts = forward_all(model, batch, exec)?;
    let (breakdown, out_grads) = losses(&acts, batch, codec, loss, exec)?;
    let per_sample = exec.map(acts.len(), |i| model.backward(&acts[i], &out_grads[i].heatmap, &out_grads[i].regression));
    let mut grads = vec![0.0; model.params.len()];
    for g in per_sample {
        grads.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((breakdown, grads))
}

/// Finite-difference check of the full model loss on `batch` at randomly
/// chosen parameters. Coordinates with a vanishing analytic gradient (below
/// 1e-8, where central differences measure roundoff) are not sampled.
pub fn gradient_gate(
    model: &Model,
    scenes: Vec<SyntheticScene>,
    codec: &CodecConfig,
    loss: &LossConfig,
    seed: u64,
) -> Result<f64, ToyError> {
    let batch = prepare(scenes, codec)?;
    let exec = Execution::Sequential;
    let (_, g) = loss_and_grad(model, &batch, codec, loss, exec)?;
    let live: Vec<usize> = (0..g.len()).filter(|&i| g[i].abs() > 1e-8).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<usize> = sample(&mut rng, live.len(), GATE_COORDS.min(live.len())).into_iter().map(|k| live[k]).collect();
    let mut probe = model.clone();
    let report = grad_check_coords(
        |p: &[f64]| {
            probe.params.copy_from_slice(p);
            let (l, g) = loss_and_grad(&probe, &batch, codec, loss, exec).map_err(|e| match e {
                ToyError::Loss(l) => l,
                other => LossError::NonFiniteLoss(other.to_string()),
            })?;
            Ok((l.total, g))
        },
        &model.params,
        &coords,
        GATE_EPS,
    )?;
    Ok(report.max_rel_error)
}

fn clip(grads: &mut [f64], max_norm: Option<f64>) {
    if let Some(max) = max_norm {
        let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > max {
            let k = max / norm;
            grads.iter_mut().for_each(|g| *g *= k);
        }
    }
}

/// Trains `model` in place. Returns the per-iteration log.
pub fn train(
    model: &mut Model,
    source: &mut dyn SceneSource,
    scene_cfg: &SceneConfig,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<TrainLog, ToyError> {
    cfg.validate()?;
    scene_cfg.validate()?;
    let codec = scene_cfg.codec();
    let loss = &cfg.loss;
    let mut log = TrainLog::default();
    if cfg.gate {
        let scenes = source.batch(0, cfg.batch_size.min(2))?;
        let err = gradient_gate(model, scenes, &codec, &loss, cfg.seed)?;
        log.gate_error = Some(err);
        if err > GATE_LIMIT {
            return Err(ToyError::GradientGate { max_rel_error: err, limit: GATE_LIMIT });
        }
    }
    let heldout = if cfg.eval_every > 0 { crate::eval::heldout_scenes(scene_cfg, cfg.eval_scenes, exec)? } else { Vec::new() };
    let n = model.params.len();
    let (mut m1, mut m2) = (vec![0.0; n], vec![0.0; n]);
    for it in 0..cfg.iterations {
        let batch = prepare(source.batch(it, cfg.batch_size)?, &codec)?;
        let (breakdown, mut grads) = match loss_and_grad(model, &batch, &codec, &loss, exec) {
            Ok(v) => v,
            Err(ToyError::Loss(LossError::NonFiniteLoss(detail))) => {
                return Err(ToyError::NonFiniteLoss { iteration: it, detail })
            }
            Err(e) => return Err(e),
        };
        if !breakdown.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(ToyError::NonFiniteLoss { iteration: it, detail: format!("{breakdown:?}") });
        }
        clip(&mut grads, cfg.clip_norm);
        let lr = cfg.lr_at(it);
        match cfg.optimizer {
            Optimizer::Momentum { momentum } => {
                for ((p, v), g) in model.params.iter_mut().zip(&mut m1).zip(&grads) {
                    *v = momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let t = (it + 1) as i32;
                let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
                for (((p, m), v), g) in model.params.iter_mut().zip(&mut m1).zip(&mut m2).zip(&grads) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
        log.entries.push(LogEntry { iteration: it, lr, loss: breakdown });
        if cfg.eval_every > 0 && ((it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations) {
            log.snapshots.push((it + 1, evaluate_model(model, &heldout, &codec, exec)?));
        }
    }
    Ok(log)
}
