//! Vocabulary and conversion of examples to model inputs.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::QAExample;
use crate::error::{BlancError, Result};
use crate::numerics::SeededRng;
use crate::soft_label::{generate_soft_labels, AnswerSpan, SoftLabelConfig, SoftLabelVector};

pub const UNK: &str = "[UNK]";
pub const SEP: &str = "[SEP]";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub const UNK_ID: usize = 0;
    pub const SEP_ID: usize = 1;

    /// Reserved tokens first, then every question and passage token of
    /// `examples` in sorted order.
    pub fn build(examples: &[QAExample]) -> Self {
        let mut seen = BTreeSet::new();
        for ex in examples {
            seen.extend(ex.question_tokens().tokens);
            seen.extend(ex.passage_tokens().tokens);
        }
        let mut tokens = vec![UNK.to_string(), SEP.to_string()];
        tokens.extend(seen.into_iter().filter(|t| t != UNK && t != SEP));
        Vocab::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// One example laid out as `[question tokens, SEP, passage tokens]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub id: String,
    pub token_ids: Vec<usize>,
    /// 0 for question and separator, 1 for passage.
    pub segments: Vec<usize>,
    /// Index of the first passage token in `token_ids`.
    pub passage_offset: usize,
    pub passage_len: usize,
    /// Gold span in passage coordinates, when the example has an answer.
    pub span: Option<AnswerSpan>,
    pub soft_labels: Option<SoftLabelVector>,
}

impl EncodedExample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// A batch of encoded examples; each keeps its own length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EncodedBatch {
    pub examples: Vec<EncodedExample>,
}

pub fn encode_example(
    ex: &QAExample,
    vocab: &Vocab,
    max_len: usize,
    soft_label: Option<SoftLabelConfig>,
) -> Result<EncodedExample> {
    let question = ex.question_tokens();
    let passage = ex.passage_tokens();
    if passage.is_empty() {
        return Err(BlancError::Empty(format!("example {} has an empty passage", ex.id)));
    }
    let total = question.len() + 1 + passage.len();
    if total > max_len {
        return Err(BlancError::Length { len: total, max: max_len });
    }
    let mut token_ids: Vec<usize> = question.tokens.iter().map(|t| vocab.id(t)).collect();
    token_ids.push(Vocab::SEP_ID);
    token_ids.extend(passage.tokens.iter().map(|t| vocab.id(t)));
    let passage_offset = question.len() + 1;
    let mut segments = vec![0; passage_offset];
    segments.resize(total, 1);
    let span = if ex.answers.is_empty() {
        None
    } else {
        Some(ex.gold_token_span(&passage)?)
    };
    let soft_labels = match (span, soft_label) {
        (Some(s), Some(cfg)) => Some(generate_soft_labels(passage.len(), s, cfg)?),
        _ => None,
    };
    Ok(EncodedExample {
        id: ex.id.clone(),
        token_ids,
        segments,
        passage_offset,
        passage_len: passage.len(),
        span,
        soft_labels,
    })
}

/// Random input of exactly `length` tokens: `question_len` question tokens
/// (segment 0) followed by the passage (segment 1). Token ids avoid the two
/// reserved ids. Intended for gradient checks and benchmarks.
pub fn random_encoded_example(
    vocab_size: usize,
    length: usize,
    question_len: usize,
    span: AnswerSpan,
    soft_label: SoftLabelConfig,
    seed: u64,
) -> Result<EncodedExample> {
    if vocab_size <= 2 {
        return Err(BlancError::Config(format!("vocabulary of {vocab_size} leaves no ordinary tokens")));
    }
    if question_len >= length {
        return Err(BlancError::Config(format!("question of {question_len} tokens leaves no passage in {length}")));
    }
    let passage_len = length - question_len;
    let mut rng = SeededRng::new(seed);
    let token_ids = (0..length).map(|_| 2 + rng.below(vocab_size - 2)).collect();
    let mut segments = vec![0; question_len];
    segments.resize(length, 1);
    Ok(EncodedExample {
        id: format!("random-{seed}"),
        token_ids,
        segments,
        passage_offset: question_len,
        passage_len,
        span: Some(span),
        soft_labels: Some(generate_soft_labels(passage_len, span, soft_label)?),
    })
}

pub fn encode_batch(
    examples: &[QAExample],
    vocab: &Vocab,
    max_len: usize,
    soft_label: Option<SoftLabelConfig>,
) -> Result<EncodedBatch> {
    Ok(EncodedBatch {
        examples: examples
            .iter()
            .map(|e| encode_example(e, vocab, max_len, soft_label))
            .collect::<Result<_>>()?,
    })
}
