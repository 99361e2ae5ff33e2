//! Elementary differentiable operations and their hand-derived backward passes.

use super::tensor::{dot, Tensor};
use crate::error::{BlancError, Result};

/// Floor applied inside [`stable_log`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Row-wise projection `out[i] = dot(w, x[i]) + b`.
pub fn affine(x: &Tensor, w: &[f64], b: f64) -> Result<Vec<f64>> {
    if x.shape().len() != 2 || x.cols() != w.len() {
        return Err(BlancError::dim(
            "affine",
            format!("[l, {}]", w.len()),
            format!("{:?}", x.shape()),
        ));
    }
    Ok((0..x.rows()).map(|i| dot(x.row(i), w) + b).collect())
}

/// Backward of [`affine`]: accumulates into `dx`, `dw` and returns the bias gradient.
pub fn affine_backward(x: &Tensor, w: &[f64], dout: &[f64], dx: &mut Tensor, dw: &mut [f64]) -> f64 {
    let mut db = 0.0;
    for (i, &g) in dout.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db += g;
        for ((dwj, xj), (dxj, wj)) in dw
            .iter_mut()
            .zip(x.row(i))
            .zip(dx.row_mut(i).iter_mut().zip(w))
        {
            *dwj += g * xj;
            *dxj += g * wj;
        }
    }
    db
}

/// Softmax over the positions where `mask` is true; masked positions get 0.
pub fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if scores.len() != mask.len() {
        return Err(BlancError::dim("masked_softmax", scores.len(), mask.len()));
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(BlancError::InvalidMask);
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

/// Given softmax output `p` and upstream gradient `dp`, returns the gradient
/// with respect to the scores. Masked positions (where `p` is exactly 0 and
/// outside the mask) receive 0.
pub fn masked_softmax_backward(p: &[f64], dp: &[f64], mask: &[bool]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter()
        .zip(dp)
        .zip(mask)
        .map(|((&pi, &gi), &m)| if m { pi * (gi - inner) } else { 0.0 })
        .collect()
}

/// `out[i] = sum_{j <= i} p[j]`, clamped to `[0, 1]`.
pub fn prefix_cumsum(p: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    p.iter()
        .map(|&v| {
            acc += v;
            acc.clamp(0.0, 1.0)
        })
        .collect()
}

/// `out[i] = sum_{j >= i} p[j]`, clamped to `[0, 1]`.
pub fn suffix_cumsum(p: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len()];
    let mut acc = 0.0;
    for i in (0..p.len()).rev() {
        acc += p[i];
        out[i] = acc.clamp(0.0, 1.0);
    }
    out
}

/// Backward of [`prefix_cumsum`]: `dp[j] = sum_{i >= j} dout[i]`.
///
/// The clamp only absorbs rounding drift and is treated as the identity.
pub fn prefix_cumsum_backward(dout: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut dp = vec![0.0; dout.len()];
    for i in (0..dout.len()).rev() {
        acc += dout[i];
        dp[i] = acc;
    }
    dp
}

/// Backward of [`suffix_cumsum`]: `dp[j] = sum_{i <= j} dout[i]`.
pub fn suffix_cumsum_backward(dout: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    dout.iter()
        .map(|&g| {
            acc += g;
            acc
        })
        .collect()
}

/// `ln(max(x, 1e-12))`.
pub fn stable_log(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

/// Derivative of [`stable_log`]; zero where the floor is active.
pub fn stable_log_grad(x: f64) -> f64 {
    if x > LOG_FLOOR {
        1.0 / x
    } else {
        0.0
    }
}
