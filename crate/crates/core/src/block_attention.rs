//! Block attention: the context head.
//!
//! Two boundary distributions `p(i = s_c)` and `p(i = e_c)` are predicted
//! with independent softmax heads. Their cumulatives give `p(i >= s_c)` and
//! `p(i <= e_c)`, and the product of the two is the probability that token
//! `i` belongs to the context block. Start and end are modeled as
//! independent; there is no joint distribution.
//!
//! The two constructions at the bottom of this module are witnesses that the
//! membership function can represent (a) every soft-label vector exactly and
//! (b) any multi-block step function up to a scale factor.

use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};
use crate::numerics::{
    affine, affine_backward, masked_softmax, masked_softmax_backward, prefix_cumsum,
    prefix_cumsum_backward, stable_log, stable_log_grad, suffix_cumsum, suffix_cumsum_backward,
    Tensor,
};
use crate::soft_label::{AnswerSpan, SoftLabelVector};

/// Weights of the context boundary predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextHeadParams {
    /// Start-boundary projection.
    pub w: Vec<f64>,
    /// End-boundary projection.
    pub v: Vec<f64>,
    pub b_start: f64,
    pub b_end: f64,
}

impl ContextHeadParams {
    pub fn zeros(hidden: usize) -> Self {
        ContextHeadParams {
            w: vec![0.0; hidden],
            v: vec![0.0; hidden],
            b_start: 0.0,
            b_end: 0.0,
        }
    }
}

/// Gradients for [`ContextHeadParams`], plus the gradient w.r.t. the encoder output.
#[derive(Clone, Debug)]
pub struct ContextHeadGrads {
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub b_start: f64,
    pub b_end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextDistributions {
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
    /// `p(i >= s_c)`
    pub cum_start: Vec<f64>,
    /// `p(i <= e_c)`
    pub cum_end: Vec<f64>,
    /// `p(w_i in C) = cum_start[i] * cum_end[i]`
    pub membership: Vec<f64>,
}

pub fn context_boundary_distributions(
    h: &Tensor,
    params: &ContextHeadParams,
    mask: &[bool],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if h.rows() != mask.len() {
        return Err(BlancError::dim("context_boundary_distributions", h.rows(), mask.len()));
    }
    let start_logits = affine(h, &params.w, params.b_start)?;
    let end_logits = affine(h, &params.v, params.b_end)?;
    Ok((
        masked_softmax(&start_logits, mask)?,
        masked_softmax(&end_logits, mask)?,
    ))
}

pub fn membership_probabilities(p_start: &[f64], p_end: &[f64]) -> Result<ContextDistributions> {
    if p_start.len() != p_end.len() {
        return Err(BlancError::dim("membership_probabilities", p_start.len(), p_end.len()));
    }
    let cum_start = prefix_cumsum(p_start);
    let cum_end = suffix_cumsum(p_end);
    let membership = cum_start.iter().zip(&cum_end).map(|(a, b)| a * b).collect();
    Ok(ContextDistributions {
        p_start: p_start.to_vec(),
        p_end: p_end.to_vec(),
        cum_start,
        cum_end,
        membership,
    })
}

/// Binary cross-entropy between predicted membership and soft labels, summed
/// over positions.
pub fn context_loss(membership: &[f64], soft_labels: &[f64]) -> Result<f64> {
    if membership.len() != soft_labels.len() {
        return Err(BlancError::dim("context_loss", soft_labels.len(), membership.len()));
    }
    Ok(membership
        .iter()
        .zip(soft_labels)
        .map(|(&m, &y)| -(y * stable_log(m) + (1.0 - y) * stable_log(1.0 - m)))
        .sum())
}

/// Gradient of [`context_loss`] with respect to each membership value.
pub fn context_loss_grad(membership: &[f64], soft_labels: &[f64]) -> Vec<f64> {
    membership
        .iter()
        .zip(soft_labels)
        .map(|(&m, &y)| -y * stable_log_grad(m) + (1.0 - y) * stable_log_grad(1.0 - m))
        .collect()
}

/// Pulls a membership gradient back to the two boundary distributions.
pub fn membership_backward(dist: &ContextDistributions, d_membership: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_cum_start: Vec<f64> = d_membership.iter().zip(&dist.cum_end).map(|(g, c)| g * c).collect();
    let d_cum_end: Vec<f64> = d_membership.iter().zip(&dist.cum_start).map(|(g, c)| g * c).collect();
    (
        prefix_cumsum_backward(&d_cum_start),
        suffix_cumsum_backward(&d_cum_end),
    )
}

/// Backward through both boundary softmaxes and projections. Accumulates the
/// encoder-output gradient into `dh`.
pub fn boundary_backward(
    h: &Tensor,
    params: &ContextHeadParams,
    mask: &[bool],
    dist: &ContextDistributions,
    d_p_start: &[f64],
    d_p_end: &[f64],
    dh: &mut Tensor,
) -> ContextHeadGrads {
    let d_start_logits = masked_softmax_backward(&dist.p_start, d_p_start, mask);
    let d_end_logits = masked_softmax_backward(&dist.p_end, d_p_end, mask);
    let mut w = vec![0.0; params.w.len()];
    let mut v = vec![0.0; params.v.len()];
    let b_start = affine_backward(h, &params.w, &d_start_logits, dh, &mut w);
    let b_end = affine_backward(h, &params.v, &d_end_logits, dh, &mut v);
    ContextHeadGrads { w, v, b_start, b_end }
}

/// Builds the cumulatives whose product reproduces `soft_labels` exactly,
/// for labels of the windowed geometric form around `span` with window
/// bounds `[s_w, e_w]`.
pub fn theorem1_construct(
    soft_labels: &SoftLabelVector,
    span: AnswerSpan,
    s_w: usize,
    e_w: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let l = soft_labels.len();
    let y = &soft_labels.values;
    let invalid = |msg: String| Err(BlancError::ConstructionInvalid(msg));
    if span.start > span.end || span.end >= l {
        return invalid(format!("span ({}, {}) outside length {l}", span.start, span.end));
    }
    if s_w > span.start || e_w < span.end || e_w >= l {
        return invalid(format!(
            "window [{s_w}, {e_w}] must contain span ({}, {}) within length {l}",
            span.start, span.end
        ));
    }
    for (i, &v) in y.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) {
            return invalid(format!("label {v} at {i} outside [0, 1]"));
        }
        if span.contains(i) && v != 1.0 {
            return invalid(format!("label at {i} inside span is {v}, expected 1"));
        }
        if (i < s_w || i > e_w) && v != 0.0 {
            return invalid(format!("label at {i} outside window is {v}, expected 0"));
        }
    }
    for i in s_w..span.start {
        if y[i] > y[i + 1] {
            return invalid(format!("labels decrease toward the span at {i}"));
        }
    }
    for i in span.end + 1..=e_w {
        if y[i] > y[i - 1] {
            return invalid(format!("labels increase away from the span at {i}"));
        }
    }

    let cum_start = (0..l)
        .map(|i| match i {
            i if i < s_w => 0.0,
            i if i < span.start => y[i],
            _ => 1.0,
        })
        .collect();
    let cum_end = (0..l)
        .map(|i| match i {
            i if i <= span.end => 1.0,
            i if i <= e_w => y[i],
            _ => 0.0,
        })
        .collect();
    Ok((cum_start, cum_end))
}

/// Point distribution `p(i = s_c)` implied by a cumulative `p(i >= s_c)`.
pub fn start_points_from_cumulative(cum_start: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cum_start
        .iter()
        .map(|&c| {
            let p = c - prev;
            prev = c;
            p
        })
        .collect()
}

/// Point distribution `p(i = e_c)` implied by a cumulative `p(i <= e_c)`.
pub fn end_points_from_cumulative(cum_end: &[f64]) -> Vec<f64> {
    let l = cum_end.len();
    (0..l)
        .map(|i| cum_end[i] - if i + 1 < l { cum_end[i + 1] } else { 0.0 })
        .collect()
}

/// An `m`-block step function: `high` on every block, `low` elsewhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSpanSpec {
    pub blocks: Vec<AnswerSpan>,
    pub high: f64,
    pub low: f64,
}

impl MultiSpanSpec {
    pub fn validate(&self, length: usize) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(BlancError::InvalidSpec("at least one block is required".into()));
        }
        if !(self.low > 0.0 && self.low <= self.high && self.high <= 1.0) {
            return Err(BlancError::InvalidSpec(format!(
                "need 0 < low <= high <= 1, got low={} high={}",
                self.low, self.high
            )));
        }
        for (j, b) in self.blocks.iter().enumerate() {
            if b.start > b.end || b.end >= length {
                return Err(BlancError::InvalidSpec(format!(
                    "block {j} ({}, {}) invalid for length {length}",
                    b.start, b.end
                )));
            }
            if j > 0 && self.blocks[j - 1].end >= b.start {
                return Err(BlancError::InvalidSpec(format!(
                    "blocks {} and {j} overlap or are unordered",
                    j - 1
                )));
            }
        }
        Ok(())
    }

    /// The step function itself.
    pub fn target(&self, length: usize) -> Vec<f64> {
        (0..length)
            .map(|i| {
                if self.blocks.iter().any(|b| b.contains(i)) {
                    self.high
                } else {
                    self.low
                }
            })
            .collect()
    }
}

/// Cumulatives and scale `k` such that `k * cum_start[i] * cum_end[i]`
/// equals the multi-block step function at every position.
pub fn theorem2_construct(spec: &MultiSpanSpec, length: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    spec.validate(length)?;
    let m = spec.blocks.len() as i32;
    let ratio = spec.low / spec.high;
    let starts: Vec<usize> = spec.blocks.iter().map(|b| b.start).collect();
    let ends: Vec<usize> = spec.blocks.iter().map(|b| b.end).collect();
    let cum_start = (0..length)
        .map(|i| {
            // number of block starts at or before i
            let j = starts.iter().take_while(|&&s| s <= i).count() as i32;
            ratio.powi(m - j)
        })
        .collect();
    let cum_end = (0..length)
        .map(|i| {
            // number of block ends strictly before i
            let j = ends.iter().take_while(|&&e| e < i).count() as i32;
            ratio.powi(j)
        })
        .collect();
    let k = spec.low * (spec.high / spec.low).powi(m);
    Ok((cum_start, cum_end, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soft_label::{generate_soft_labels, SoftLabelConfig};
    use proptest::prelude::*;

    fn span(s: usize, e: usize) -> AnswerSpan {
        AnswerSpan::new(s, e).unwrap()
    }

    fn one_hot(l: usize, k: usize) -> Vec<f64> {
        (0..l).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn zero_head_is_uniform() {
        let h = Tensor::from_rows(&vec![vec![0.3, -1.0]; 4]).unwrap();
        let (ps, pe) =
            context_boundary_distributions(&h, &ContextHeadParams::zeros(2), &[true; 4]).unwrap();
        assert_eq!(ps, vec![0.25; 4]);
        assert_eq!(pe, vec![0.25; 4]);
    }

    #[test]
    fn forced_ratio_and_mask() {
        let h = Tensor::from_rows(&[vec![2f64.ln()], vec![0.0], vec![5.0]]).unwrap();
        let params = ContextHeadParams {
            w: vec![1.0],
            v: vec![1.0],
            b_start: 0.0,
            b_end: 0.0,
        };
        let (ps, _) = context_boundary_distributions(&h, &params, &[true, true, false]).unwrap();
        assert!((ps[0] - 2.0 / 3.0).abs() < 1e-15 && (ps[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ps[2], 0.0);
        assert!(matches!(
            context_boundary_distributions(&h, &params, &[false; 3]),
            Err(BlancError::InvalidMask)
        ));
    }

    #[test]
    fn membership_examples() {
        let d = membership_probabilities(&one_hot(8, 2), &one_hot(8, 5)).unwrap();
        assert_eq!(d.membership, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);
        let d = membership_probabilities(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert_eq!(d.membership, vec![0.5, 1.0]);
        let d = membership_probabilities(&one_hot(5, 3), &one_hot(5, 3)).unwrap();
        assert_eq!(d.membership, one_hot(5, 3));
        assert!(membership_probabilities(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn context_loss_examples() {
        assert!(context_loss(&[1.0], &[1.0]).unwrap().abs() < 1e-15);
        let ln2 = std::f64::consts::LN_2;
        assert!((context_loss(&[0.5], &[1.0]).unwrap() - ln2).abs() < 1e-15);
        assert!((context_loss(&[0.5], &[0.5]).unwrap() - ln2).abs() < 1e-15);
    }

    #[test]
    fn theorem1_worked_example() {
        let s = span(2, 2);
        let labels = generate_soft_labels(5, s, SoftLabelConfig { q: 0.5, window: 1 }).unwrap();
        let (cs, ce) = theorem1_construct(&labels, s, 1, 3).unwrap();
        assert_eq!(cs, vec![0.0, 0.5, 1.0, 1.0, 1.0]);
        assert_eq!(ce, vec![1.0, 1.0, 1.0, 0.5, 0.0]);
        let product: Vec<f64> = cs.iter().zip(&ce).map(|(a, b)| a * b).collect();
        assert_eq!(product, labels.values);
        assert_eq!(product, vec![0.0, 0.5, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn theorem1_degenerate_cases() {
        let s = span(3, 4);
        let labels = generate_soft_labels(9, s, SoftLabelConfig { q: 1.0, window: 2 }).unwrap();
        let (cs, ce) = theorem1_construct(&labels, s, 1, 6).unwrap();
        let product: Vec<f64> = cs.iter().zip(&ce).map(|(a, b)| a * b).collect();
        assert_eq!(product, vec![0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0]);

        let labels = generate_soft_labels(9, s, SoftLabelConfig { q: 0.7, window: 0 }).unwrap();
        let (cs, ce) = theorem1_construct(&labels, s, 3, 4).unwrap();
        assert_eq!(cs, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let product: Vec<f64> = cs.iter().zip(&ce).map(|(a, b)| a * b).collect();
        assert_eq!(product, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn theorem1_rejects_malformed_labels() {
        let bad = SoftLabelVector {
            values: vec![0.0, 0.9, 0.5, 1.0, 0.0],
        };
        assert!(matches!(
            theorem1_construct(&bad, span(3, 3), 1, 3),
            Err(BlancError::ConstructionInvalid(_))
        ));
        let outside = SoftLabelVector {
            values: vec![0.3, 0.0, 1.0, 0.0, 0.0],
        };
        assert!(theorem1_construct(&outside, span(2, 2), 1, 3).is_err());
    }

    #[test]
    fn theorem2_worked_example() {
        let spec = MultiSpanSpec {
            blocks: vec![span(1, 2), span(5, 6)],
            high: 0.8,
            low: 0.2,
        };
        let (cs, ce, k) = theorem2_construct(&spec, 8).unwrap();
        assert!((k - 3.2).abs() < 1e-15);
        let expected = [0.2, 0.8, 0.8, 0.2, 0.2, 0.8, 0.8, 0.2];
        for i in 0..8 {
            assert!((k * cs[i] * ce[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn theorem2_degenerate_cases() {
        let single = MultiSpanSpec {
            blocks: vec![span(2, 4)],
            high: 0.6,
            low: 0.1,
        };
        let (cs, ce, k) = theorem2_construct(&single, 7).unwrap();
        assert_eq!(k, 0.6);
        let scaled: Vec<f64> = (0..7).map(|i| k * cs[i] * ce[i]).collect();
        for (a, b) in scaled.iter().zip(single.target(7)) {
            assert!((a - b).abs() < 1e-12);
        }

        let flat = MultiSpanSpec {
            blocks: vec![span(0, 1), span(4, 4)],
            high: 0.5,
            low: 0.5,
        };
        let (cs, ce, k) = theorem2_construct(&flat, 6).unwrap();
        assert_eq!(k, 0.5);
        assert!((0..6).all(|i| (k * cs[i] * ce[i] - 0.5).abs() < 1e-15));

        let overlapping = MultiSpanSpec {
            blocks: vec![span(1, 3), span(3, 5)],
            high: 0.8,
            low: 0.2,
        };
        assert!(matches!(
            theorem2_construct(&overlapping, 8),
            Err(BlancError::InvalidSpec(_))
        ));
    }

    #[test]
    fn context_loss_minimized_at_labels() {
        let labels = generate_soft_labels(9, span(3, 4), SoftLabelConfig { q: 0.6, window: 3 })
            .unwrap()
            .values;
        let l_min = context_loss(&labels, &labels).unwrap();
        // start from a perturbed point and descend
        let mut m: Vec<f64> = labels.iter().map(|y| (0.5 * y + 0.25).clamp(1e-6, 1.0 - 1e-6)).collect();
        for _ in 0..5000 {
            let g = context_loss_grad(&m, &labels);
            for (mi, gi) in m.iter_mut().zip(&g) {
                *mi = (*mi - 1e-3 * gi).clamp(1e-9, 1.0 - 1e-9);
            }
            assert!(context_loss(&m, &labels).unwrap() >= l_min - 1e-9);
        }
        // and from the labels themselves, a descent step cannot improve
        let mut m = labels.clone();
        let g = context_loss_grad(&m, &labels);
        for (mi, gi) in m.iter_mut().zip(&g) {
            *mi = (*mi - 1e-4 * gi).clamp(0.0, 1.0);
        }
        assert!(context_loss(&m, &labels).unwrap() >= l_min - 1e-9);
    }

    fn random_distribution(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn membership_bounded_and_monotone(
            raw in prop::collection::vec((0.001f64..1.0, 0.001f64..1.0), 1..48)
        ) {
            let ps = random_distribution(&raw.iter().map(|r| r.0).collect::<Vec<_>>());
            let pe = random_distribution(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
            let d = membership_probabilities(&ps, &pe).unwrap();
            for w in d.cum_start.windows(2) { prop_assert!(w[0] <= w[1]); }
            for w in d.cum_end.windows(2) { prop_assert!(w[0] >= w[1]); }
            for i in 0..ps.len() {
                let m = d.membership[i];
                prop_assert!((0.0..=1.0).contains(&m));
                prop_assert!(m <= d.cum_start[i].min(d.cum_end[i]));
            }
        }
    }
}
