//! Text and span metrics, answer-occurrence bucketing, and supporting-fact
//! accuracy.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::data::{tokenize_with_offsets, QAExample};
use crate::error::{BlancError, Result};
use crate::soft_label::AnswerSpan;

fn articles() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("static regex"))
}

/// Lowercase, drop ASCII punctuation, drop articles, collapse whitespace.
pub fn normalize_text(s: &str) -> String {
    let lower = s.to_lowercase();
    let no_punct: String = lower.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = articles().replace_all(&no_punct, " ");
    no_articles.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn exact_match(pred: &str, golds: &[String]) -> f64 {
    let p = normalize_text(pred);
    if golds.iter().any(|g| normalize_text(g) == p) {
        1.0
    } else {
        0.0
    }
}

fn f1_tokens(pred: &[&str], gold: &[&str]) -> f64 {
    let mut counts: HashMap<&str, isize> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut same = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                same += 1;
            }
        }
    }
    if same == 0 {
        return 0.0;
    }
    let precision = same as f64 / pred.len() as f64;
    let recall = same as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Bag-of-tokens F1 against the best-matching gold answer.
pub fn token_f1(pred: &str, golds: &[String]) -> f64 {
    let p = normalize_text(pred);
    let pt: Vec<&str> = p.split_whitespace().collect();
    golds
        .iter()
        .map(|g| {
            let g = normalize_text(g);
            let gt: Vec<&str> = g.split_whitespace().collect();
            f1_tokens(&pt, &gt)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanPair {
    pub predicted: AnswerSpan,
    pub gold: AnswerSpan,
}

impl SpanPair {
    fn overlap(&self) -> usize {
        let lo = self.predicted.start.max(self.gold.start);
        let hi = self.predicted.end.min(self.gold.end);
        if lo > hi {
            0
        } else {
            hi - lo + 1
        }
    }
}

pub fn span_f1(pair: SpanPair) -> f64 {
    let overlap = pair.overlap();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pair.predicted.len() as f64;
    let recall = overlap as f64 / pair.gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

pub fn span_em(pair: SpanPair) -> f64 {
    if pair.predicted == pair.gold {
        1.0
    } else {
        0.0
    }
}

/// Token normalization used for occurrence counting: lowercase, ASCII
/// punctuation stripped, tokens left empty dropped. Articles are kept so that
/// single-letter answers still count.
fn occurrence_tokens(tokens: &[String]) -> Vec<String> {
    tokens
        .iter()
        .map(|t| t.to_lowercase().chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Number of (possibly overlapping) places where the normalized answer token
/// sequence occurs in the normalized passage token sequence.
pub fn count_answer_occurrences(passage_tokens: &[String], answer_tokens: &[String]) -> usize {
    let p = occurrence_tokens(passage_tokens);
    let a = occurrence_tokens(answer_tokens);
    if a.is_empty() || a.len() > p.len() {
        return 0;
    }
    p.windows(a.len()).filter(|w| *w == a.as_slice()).count()
}

/// Case-folded substring matches of `answer` in `passage`, overlapping
/// matches counted. Ignores word boundaries, so `"art"` also matches inside
/// `"party"`.
pub fn count_raw_occurrences(passage: &str, answer: &str) -> usize {
    let p = passage.to_lowercase();
    let a = answer.to_lowercase();
    if a.is_empty() {
        return 0;
    }
    p.char_indices().filter(|&(i, _)| p[i..].starts_with(&a)).count()
}

/// Counting rule behind the occurrence buckets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccurrenceRule {
    /// [`count_answer_occurrences`] on tokenized text.
    #[default]
    Tokens,
    /// [`count_raw_occurrences`] on the untokenized strings.
    Raw,
}

/// Occurrence buckets: `n = 1, 2, 3, 4` and `n >= 5`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OccurrenceBucket {
    One,
    Two,
    Three,
    Four,
    FivePlus,
}

impl OccurrenceBucket {
    pub const ALL: [OccurrenceBucket; 5] = [
        OccurrenceBucket::One,
        OccurrenceBucket::Two,
        OccurrenceBucket::Three,
        OccurrenceBucket::Four,
        OccurrenceBucket::FivePlus,
    ];

    /// Zero occurrences (inconsistent data) is bucketed with `n = 1`.
    pub fn from_count(n: usize) -> Self {
        match n {
            0 | 1 => OccurrenceBucket::One,
            2 => OccurrenceBucket::Two,
            3 => OccurrenceBucket::Three,
            4 => OccurrenceBucket::Four,
            _ => OccurrenceBucket::FivePlus,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OccurrenceBucket::One => "1",
            OccurrenceBucket::Two => "2",
            OccurrenceBucket::Three => "3",
            OccurrenceBucket::Four => "4",
            OccurrenceBucket::FivePlus => ">=5",
        }
    }
}

/// Gold side of one evaluated example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub gold_texts: Vec<String>,
    pub gold_spans: Vec<AnswerSpan>,
    pub occurrences: usize,
}

impl EvalExample {
    /// Gold spans of every answer and the token-rule occurrence count of the
    /// primary answer.
    pub fn from_example(ex: &QAExample) -> Result<Self> {
        Self::with_rule(ex, OccurrenceRule::Tokens)
    }

    pub fn with_rule(ex: &QAExample, rule: OccurrenceRule) -> Result<Self> {
        let passage = ex.passage_tokens();
        let gold_spans = ex.gold_token_spans(&passage)?;
        let answer = ex
            .answers
            .first()
            .ok_or_else(|| BlancError::Alignment(format!("example {} has no answers", ex.id)))?;
        let occurrences = match rule {
            OccurrenceRule::Tokens => {
                count_answer_occurrences(&passage.tokens, &tokenize_with_offsets(&answer.text).tokens)
            }
            OccurrenceRule::Raw => count_raw_occurrences(&ex.passage, &answer.text),
        };
        Ok(EvalExample { id: ex.id.clone(), gold_texts: ex.answer_texts(), gold_spans, occurrences })
    }
}

/// One predicted answer, as read from or written to prediction JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub text: String,
    pub span: AnswerSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_span: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub count: usize,
    pub em: f64,
    pub f1: f64,
    pub span_em: f64,
    pub span_f1: f64,
}

impl MetricMeans {
    pub fn em_minus_span_em(&self) -> f64 {
        self.em - self.span_em
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub bucket: OccurrenceBucket,
    #[serde(flatten)]
    pub metrics: MetricMeans,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub overall: MetricMeans,
    /// Nonempty buckets in ascending order; empty when bucketing was not requested.
    pub buckets: Vec<BucketReport>,
    /// Examples without a prediction; excluded from every mean.
    pub missing: Vec<String>,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    count: usize,
    em: f64,
    f1: f64,
    span_em: f64,
    span_f1: f64,
}

impl Sums {
    fn add(&mut self, em: f64, f1: f64, sem: f64, sf1: f64) {
        self.count += 1;
        self.em += em;
        self.f1 += f1;
        self.span_em += sem;
        self.span_f1 += sf1;
    }

    fn means(&self) -> MetricMeans {
        let n = self.count.max(1) as f64;
        MetricMeans {
            count: self.count,
            em: self.em / n,
            f1: self.f1 / n,
            span_em: self.span_em / n,
            span_f1: self.span_f1 / n,
        }
    }
}

/// Per-example metric values `(em, f1, span_em, span_f1)`; span metrics take
/// the best gold span.
pub fn score_example(example: &EvalExample, pred: &Prediction) -> (f64, f64, f64, f64) {
    let em = exact_match(&pred.text, &example.gold_texts);
    let f1 = token_f1(&pred.text, &example.gold_texts);
    let pairs = example.gold_spans.iter().map(|&gold| SpanPair {
        predicted: pred.span,
        gold,
    });
    let sem = pairs.clone().map(span_em).fold(0.0, f64::max);
    let sf1 = pairs.map(span_f1).fold(0.0, f64::max);
    (em, f1, sem, sf1)
}

pub fn bucketed_report(examples: &[EvalExample], predictions: &[Prediction], bucketed: bool) -> MetricsReport {
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut overall = Sums::default();
    let mut buckets: [Sums; 5] = Default::default();
    let mut missing = Vec::new();
    for ex in examples {
        let Some(pred) = by_id.get(ex.id.as_str()) else {
            missing.push(ex.id.clone());
            continue;
        };
        if ex.occurrences == 0 {
            log::warn!("example {}: answer text not found in passage; bucketed as n=1", ex.id);
        }
        let (em, f1, sem, sf1) = score_example(ex, pred);
        overall.add(em, f1, sem, sf1);
        let b = OccurrenceBucket::from_count(ex.occurrences) as usize;
        buckets[b].add(em, f1, sem, sf1);
    }
    let buckets = if bucketed {
        OccurrenceBucket::ALL
            .iter()
            .zip(buckets.iter())
            .filter(|(_, s)| s.count > 0)
            .map(|(&bucket, s)| BucketReport {
                bucket,
                metrics: s.means(),
            })
            .collect()
    } else {
        Vec::new()
    };
    MetricsReport {
        overall: overall.means(),
        buckets,
        missing,
    }
}

/// A predicted character interval to be checked against a supporting fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportingFactExample {
    pub id: String,
    /// `[start, end)` in characters.
    pub fact: (usize, usize),
    pub predicted: (usize, usize),
}

/// Fraction of examples whose predicted interval lies inside the fact interval.
pub fn supporting_fact_accuracy(examples: &[SupportingFactExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(BlancError::Empty("no supporting-fact examples".into()));
    }
    let hits = examples
        .iter()
        .filter(|e| e.predicted.0 >= e.fact.0 && e.predicted.1 <= e.fact.1)
        .count();
    Ok(hits as f64 / examples.len() as f64)
}
