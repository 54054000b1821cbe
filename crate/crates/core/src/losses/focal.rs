//! Penalty-reduced focal loss on heatmaps.

use super::{LossConfig, LossError};
use crate::codec::Heatmap;

pub const PROB_CLAMP: f64 = 1e-7;

fn check(pred: &Heatmap, target: &Heatmap) -> Result<(), LossError> {
    if !pred.same_shape(target) || pred.data.len() != target.data.len() {
        return Err(LossError::ShapeMismatch(format!(
            "pred {}x{}x{} vs target {}x{}x{}",
            pred.classes, pred.rows, pred.cols, target.classes, target.rows, target.cols
        )));
    }
    Ok(())
}

fn normalizer(target: &Heatmap) -> f64 {
    target.data.iter().filter(|&&y| y == 1.0).count().max(1) as f64
}

/// Per-cell loss and its derivative with respect to the predicted score.
///
/// Positive cells (`y == 1`): `-(1 - s)^a ln s`.
/// Other cells: `-(1 - y)^b s^a ln(1 - s)`.
fn cell_term(s: f64, y: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let clamped = s.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let active = clamped == s;
    if y == 1.0 {
        let q = 1.0 - clamped;
        let loss = -q.powf(alpha) * clamped.ln();
        let grad = if active {
            let dq = if alpha == 0.0 { 0.0 } else { alpha * q.powf(alpha - 1.0) };
            dq * clamped.ln() - q.powf(alpha) / clamped
        } else {
            0.0
        };
        (loss, grad)
    } else {
        let w = (1.0 - y).powf(beta);
        let l1 = (1.0 - clamped).ln();
        let loss = -w * clamped.powf(alpha) * l1;
        let grad = if active {
            let ds = if alpha == 0.0 { 0.0 } else { alpha * clamped.powf(alpha - 1.0) };
            -w * (ds * l1 - clamped.powf(alpha) / (1.0 - clamped))
        } else {
            0.0
        };
        (loss, grad)
    }
}

pub fn focal_loss(pred: &Heatmap, target: &Heatmap, cfg: &LossConfig) -> Result<f64, LossError> {
    check(pred, target)?;
    let sum: f64 = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&s, &y)| cell_term(s, y, cfg.alpha, cfg.beta).0)
        .sum();
    Ok(sum / normalizer(target))
}

/// Loss and its gradient with respect to every predicted score.
pub fn focal_loss_with_grad(pred: &Heatmap, target: &Heatmap, cfg: &LossConfig) -> Result<(f64, Vec<f64>), LossError> {
    check(pred, target)?;
    let n = normalizer(target);
    let mut sum = 0.0;
    let mut grad = Vec::with_capacity(pred.data.len());
    for (&s, &y) in pred.data.iter().zip(&target.data) {
        let (l, g) = cell_term(s, y, cfg.alpha, cfg.beta);
        sum += l;
        grad.push(g / n);
    }
    Ok((sum / n, grad))
}
