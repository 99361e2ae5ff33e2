//! Lowercasing word/punctuation tokenizer that keeps character offsets.
//!
//! A token is either a maximal run of alphanumeric characters or a single
//! non-alphanumeric, non-whitespace character. Offsets are `[start, end)`
//! indices in Unicode scalar values (the unit SQuAD uses for `answer_start`).

use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};
use crate::soft_label::AnswerSpan;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
    /// Length of the source text in characters.
    pub char_len: usize,
}

impl Tokenized {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Smallest token interval covering the character span `[start, start + len)`.
    pub fn char_span_to_token_span(&self, start: usize, len: usize) -> Result<AnswerSpan> {
        let end = start + len;
        if len == 0 || end > self.char_len {
            return Err(BlancError::Alignment(format!(
                "char span [{start}, {end}) invalid for text of {} chars",
                self.char_len
            )));
        }
        let first = self.offsets.iter().position(|&(_, e)| e > start);
        let last = self.offsets.iter().rposition(|&(s, _)| s < end);
        match (first, last) {
            (Some(f), Some(l)) if f <= l => Ok(AnswerSpan { start: f, end: l }),
            _ => Err(BlancError::Alignment(format!(
                "char span [{start}, {end}) covers no token"
            ))),
        }
    }

    /// Character interval `[start, end)` covered by a token span.
    pub fn token_span_to_char_span(&self, span: AnswerSpan) -> Result<(usize, usize)> {
        if span.end >= self.offsets.len() || span.start > span.end {
            return Err(BlancError::Bounds(format!(
                "token span ({}, {}) outside {} tokens",
                span.start,
                span.end,
                self.offsets.len()
            )));
        }
        Ok((self.offsets[span.start].0, self.offsets[span.end].1))
    }
}

pub fn tokenize_with_offsets(text: &str) -> Tokenized {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut current = String::new();
    let mut current_start = 0;
    let mut n = 0;
    for (i, ch) in text.chars().enumerate() {
        n = i + 1;
        if ch.is_alphanumeric() {
            if current.is_empty() {
                current_start = i;
            }
            current.extend(ch.to_lowercase());
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
            offsets.push((current_start, i));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_lowercase().collect());
            offsets.push((i, i + 1));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
        offsets.push((current_start, n));
    }
    Tokenized {
        tokens,
        offsets,
        char_len: n,
    }
}

/// Substring by character offsets `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    let mut indices = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let b0 = indices.nth(start).unwrap_or(text.len());
    let b1 = if end > start {
        indices.nth(end - start - 1).unwrap_or(text.len())
    } else {
        b0
    };
    &text[b0..b1]
}
