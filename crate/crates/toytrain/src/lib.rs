//! Desk-scale end-to-end exercise of the mono3d heads and losses: synthetic
//! scenes, a tiny stride-4 network with hand-written backpropagation, a
//! deterministic trainer and a loss-ablation runner.

pub mod ablate;
pub mod checkpoint;
pub mod eval;
pub mod model;
pub mod nn;
pub mod scene;
pub mod train;

use mono3d_core::codec::CodecError;
use mono3d_core::losses::LossError;
use thiserror::Error;

pub use ablate::{ablate, AblationRow, AblationTable};
pub use eval::{evaluate_model, heldout_scenes, ToyMetrics};
pub use model::{Model, ModelSpec, Stage};
pub use scene::{generate_scene, SceneConfig, SyntheticScene};
pub use train::{gradient_gate, train, LogEntry, Optimizer, SceneSource, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no valid scene for seed {seed} after {rounds} rounds")]
    GenerationExhausted { seed: u64, rounds: usize },
    #[error("non-finite loss at iteration {iteration}: {detail}")]
    NonFiniteLoss { iteration: usize, detail: String },
    #[error("gradient check failed: max relative error {max_rel_error:.3e} above {limit:.0e}")]
    GradientGate { max_rel_error: f64, limit: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
