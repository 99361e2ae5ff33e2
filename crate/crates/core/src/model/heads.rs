//! Membership-reweighted answer head, losses and span decoding.

use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};
use crate::numerics::{affine, affine_backward, masked_softmax, masked_softmax_backward, stable_log, stable_log_grad, Tensor};
use crate::soft_label::AnswerSpan;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerHeadParams {
    /// Start projection.
    pub w: Vec<f64>,
    /// End projection.
    pub v: Vec<f64>,
    pub b_start: f64,
    pub b_end: f64,
}

/// Start/end answer distributions over passage positions.
///
/// Logits are `A_i * (w . h_i) + b`: the membership scales the projection
/// only, never the bias.
pub fn answer_distributions(
    h: &Tensor,
    membership: &[f64],
    params: &AnswerHeadParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if membership.len() != h.rows() {
        return Err(BlancError::dim("answer_distributions", h.rows(), membership.len()));
    }
    let mask = vec![true; h.rows()];
    let zs = affine(h, &params.w, 0.0)?;
    let ze = affine(h, &params.v, 0.0)?;
    let us: Vec<f64> = zs.iter().zip(membership).map(|(z, a)| a * z + params.b_start).collect();
    let ue: Vec<f64> = ze.iter().zip(membership).map(|(z, a)| a * z + params.b_end).collect();
    Ok((masked_softmax(&us, &mask)?, masked_softmax(&ue, &mask)?))
}

/// `-(log p_s(s_a) + log p_e(e_a)) / 2` with floored logs.
pub fn answer_loss(p_start: &[f64], p_end: &[f64], gold: AnswerSpan) -> Result<f64> {
    gold.check_within(p_start.len().min(p_end.len()))?;
    Ok(-0.5 * (stable_log(p_start[gold.start]) + stable_log(p_end[gold.end])))
}

pub fn total_loss(answer: f64, context: f64, lambda: f64) -> f64 {
    (1.0 - lambda) * answer + lambda * context
}

pub struct AnswerHeadGrads {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub b_start: f64,
    pub b_end: f64,
    /// Gradient with respect to the membership values.
    pub membership: Vec<f64>,
}

/// Backward of `scale * answer_loss` through the answer head. Accumulates
/// the encoder-output gradient into `dh`.
pub fn answer_backward(
    h: &Tensor,
    membership: &[f64],
    params: &AnswerHeadParams,
    p_start: &[f64],
    p_end: &[f64],
    gold: AnswerSpan,
    scale: f64,
    dh: &mut Tensor,
) -> AnswerHeadGrads {
    let l = h.rows();
    let mask = vec![true; l];
    let mut dps = vec![0.0; l];
    let mut dpe = vec![0.0; l];
    dps[gold.start] = -0.5 * scale * stable_log_grad(p_start[gold.start]);
    dpe[gold.end] = -0.5 * scale * stable_log_grad(p_end[gold.end]);
    let dus = masked_softmax_backward(p_start, &dps, &mask);
    let due = masked_softmax_backward(p_end, &dpe, &mask);
    let mut d_membership = vec![0.0; l];
    let mut dzs = vec![0.0; l];
    let mut dze = vec![0.0; l];
    for i in 0..l {
        let hi = h.row(i);
        let zs: f64 = hi.iter().zip(&params.w).map(|(a, b)| a * b).sum();
        let ze: f64 = hi.iter().zip(&params.v).map(|(a, b)| a * b).sum();
        d_membership[i] = dus[i] * zs + due[i] * ze;
        dzs[i] = dus[i] * membership[i];
        dze[i] = due[i] * membership[i];
    }
    let mut w = vec![0.0; params.w.len()];
    let mut v = vec![0.0; params.v.len()];
    affine_backward(h, &params.w, &dzs, dh, &mut w);
    affine_backward(h, &params.v, &dze, dh, &mut v);
    AnswerHeadGrads {
        w,
        v,
        b_start: dus.iter().sum(),
        b_end: due.iter().sum(),
        membership: d_membership,
    }
}

/// Highest-scoring `(s, e)` with `s <= e` and at most `max_answer_len`
/// tokens, scored by `p_start[s] * p_end[e]`. Ties go to the lowest start,
/// then the shortest span.
pub fn predict_span(p_start: &[f64], p_end: &[f64], max_answer_len: usize) -> Result<(AnswerSpan, f64)> {
    if p_start.is_empty() {
        return Err(BlancError::Empty("cannot decode a span from an empty passage".into()));
    }
    if p_start.len() != p_end.len() {
        return Err(BlancError::dim("predict_span", p_start.len(), p_end.len()));
    }
    if max_answer_len == 0 {
        return Err(BlancError::Config("max answer length must be positive".into()));
    }
    let l = p_start.len();
    let mut best = (AnswerSpan { start: 0, end: 0 }, f64::NEG_INFINITY);
    for s in 0..l {
        for e in s..l.min(s + max_answer_len) {
            let score = p_start[s] * p_end[e];
            if score > best.1 {
                best = (AnswerSpan { start: s, end: e }, score);
            }
        }
    }
    Ok(best)
}
