//! Central finite-difference check of analytic gradients.

use super::LossError;

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate with the largest error.
    pub worst: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks every coordinate of `inputs`.
///
/// `loss_fn` returns the loss and its analytic gradient; only the loss is used
/// at the perturbed points.
pub fn grad_check<F>(loss_fn: F, inputs: &[f64], eps: f64) -> Result<GradCheckReport, LossError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), LossError>,
{
    let coords: Vec<usize> = (0..inputs.len()).collect();
    grad_check_coords(loss_fn, inputs, &coords, eps)
}

/// Checks only the listed coordinates.
pub fn grad_check_coords<F>(mut loss_fn: F, inputs: &[f64], coords: &[usize], eps: f64) -> Result<GradCheckReport, LossError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), LossError>,
{
    let (l0, grad) = loss_fn(inputs)?;
    if !l0.is_finite() {
        return Err(LossError::NonFiniteLoss(format!("{l0} at the base point")));
    }
    if grad.len() != inputs.len() {
        return Err(LossError::ShapeMismatch(format!(
            "{} gradient entries for {} inputs",
            grad.len(),
            inputs.len()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: coords.first().copied().unwrap_or(0),
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut x = inputs.to_vec();
    for &i in coords {
        let orig = x[i];
        x[i] = orig + eps;
        let (lp, _) = loss_fn(&x)?;
        x[i] = orig - eps;
        let (lm, _) = loss_fn(&x)?;
        x[i] = orig;
        if !(lp.is_finite() && lm.is_finite()) {
            return Err(LossError::NonFiniteLoss(format!("coordinate {i}: {lp}, {lm}")));
        }
        let numeric = (lp - lm) / (2.0 * eps);
        let err = relative_error(grad[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report = GradCheckReport {
                max_rel_error: err.max(report.max_rel_error),
                worst: i,
                analytic: grad[i],
                numeric,
                checked: report.checked,
            };
        }
        report.checked += 1;
    }
    Ok(report)
}
