//! Channel-wise activations applied to raw regression outputs.

use super::dual::Real;
use super::LossError;
use crate::codec::{RegressionMap, RegressionTuple};

/// Largest double strictly below 1/2; keeps saturated outputs inside the open interval.
const HALF_OPEN: f64 = 0.499_999_999_999_999_94;

pub(crate) fn dim_activation_generic<T: Real>(raw: T) -> T {
    let d = T::cst(1.0) / (T::cst(1.0) + (-raw).exp()) - T::cst(0.5);
    if d.value() > HALF_OPEN {
        T::cst(HALF_OPEN)
    } else if d.value() < -HALF_OPEN {
        T::cst(-HALF_OPEN)
    } else {
        d
    }
}

/// `logistic(raw) - 1/2`, in `(-1/2, 1/2)`.
pub fn dim_activation(raw: f64) -> f64 {
    dim_activation_generic(raw)
}

pub(crate) fn orient_activation_generic<T: Real>(s: T, c: T) -> Result<(T, T), LossError> {
    let n = (s * s + c * c).sqrt();
    if !(n.value() > 1e-9) {
        return Err(LossError::DegenerateVector(s.value(), c.value()));
    }
    Ok((s / n, c / n))
}

/// Normalizes `(raw_sin, raw_cos)` to a unit vector.
pub fn orient_activation(raw_sin: f64, raw_cos: f64) -> Result<(f64, f64), LossError> {
    orient_activation_generic(raw_sin, raw_cos)
}

/// Raw 8-channel output to an activated tuple. Depth and offset channels pass through.
pub fn activate_tuple(raw: [f64; 8]) -> Result<RegressionTuple, LossError> {
    let (s, c) = orient_activation(raw[6], raw[7])?;
    Ok(RegressionTuple {
        delta_z: raw[0],
        delta_xc: raw[1],
        delta_yc: raw[2],
        delta_h: dim_activation(raw[3]),
        delta_w: dim_activation(raw[4]),
        delta_l: dim_activation(raw[5]),
        sin_a: s,
        cos_a: c,
    })
}

/// Activates every cell; cells with a degenerate angle vector keep zeros there
/// (the decoder then skips them).
pub fn activate_map(raw: &RegressionMap) -> RegressionMap {
    let mut out = raw.clone();
    for r in 0..raw.rows {
        for c in 0..raw.cols {
            let v = raw.raw_at(r, c);
            let t = activate_tuple(v).unwrap_or_else(|_| RegressionTuple {
                delta_h: dim_activation(v[3]),
                delta_w: dim_activation(v[4]),
                delta_l: dim_activation(v[5]),
                sin_a: 0.0,
                cos_a: 0.0,
                ..RegressionTuple::from_array(v)
            });
            out.set_tuple(r, c, t);
        }
    }
    out
}
