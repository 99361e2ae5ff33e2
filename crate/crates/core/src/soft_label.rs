//! Self-generated context supervision derived from a gold answer span.
//!
//! Tokens inside the answer span are labeled 1. Tokens within `window`
//! positions of the span decay geometrically with ratio `q` per token of
//! distance; everything further away is labeled 0. The window is truncated at
//! passage boundaries without renormalization, since each label is an
//! independent per-position target rather than a distribution.

use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};

/// Inclusive token interval `[start, end]` inside a passage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub start: usize,
    pub end: usize,
}

impl AnswerSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(BlancError::Bounds(format!("span start {start} > end {end}")));
        }
        Ok(AnswerSpan { start, end })
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }

    pub(crate) fn check_within(&self, length: usize) -> Result<()> {
        if self.start > self.end || self.end >= length {
            return Err(BlancError::Bounds(format!(
                "span ({}, {}) outside passage of length {length}",
                self.start, self.end
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelConfig {
    /// Decay ratio per token of distance from the span.
    pub q: f64,
    /// Tokens labeled on each side of the span.
    pub window: usize,
}

impl SoftLabelConfig {
    /// Short-passage setting.
    pub const SHORT_PASSAGE: SoftLabelConfig = SoftLabelConfig { q: 0.7, window: 2 };
    /// Long-passage setting.
    pub const LONG_PASSAGE: SoftLabelConfig = SoftLabelConfig { q: 0.99, window: 3 };

    pub fn new(q: f64, window: usize) -> Result<Self> {
        let cfg = SoftLabelConfig { q, window };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q) {
            return Err(BlancError::Config(format!("q must lie in [0, 1], got {}", self.q)));
        }
        Ok(())
    }
}

impl Default for SoftLabelConfig {
    fn default() -> Self {
        SoftLabelConfig::SHORT_PASSAGE
    }
}

/// Per-token context probabilities for one passage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelVector {
    pub values: Vec<f64>,
}

impl SoftLabelVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Window bounds `(s_w, e_w)` actually covered after boundary truncation.
    pub fn window_bounds(length: usize, span: AnswerSpan, window: usize) -> (usize, usize) {
        (
            span.start.saturating_sub(window),
            (span.end + window).min(length.saturating_sub(1)),
        )
    }
}

pub fn generate_soft_labels(
    length: usize,
    span: AnswerSpan,
    cfg: SoftLabelConfig,
) -> Result<SoftLabelVector> {
    span.check_within(length)?;
    cfg.validate()?;
    let mut values = vec![0.0; length];
    let (lo, hi) = SoftLabelVector::window_bounds(length, span, cfg.window);
    for (i, v) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
        *v = if i < span.start {
            cfg.q.powi((span.start - i) as i32)
        } else if i > span.end {
            cfg.q.powi((i - span.end) as i32)
        } else {
            1.0
        };
    }
    Ok(SoftLabelVector { values })
}
