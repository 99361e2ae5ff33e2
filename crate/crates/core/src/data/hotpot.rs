//! HotpotQA (distractor setting) ingestion and curation into single-fact
//! passages for zero-shot supporting-fact evaluation.
//!
//! Each record's passages are concatenated. For each of its two supporting
//! facts one triple is emitted whose passage has the *other* fact sentence
//! removed, so every curated passage contains exactly one supporting fact.
//! Sentences are whitespace-trimmed and joined with single spaces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportingFactRef {
    pub passage: usize,
    pub sentence: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HotpotRecord {
    pub id: String,
    pub question: String,
    pub answer: String,
    /// `(title, sentences)` per passage.
    pub passages: Vec<(String, Vec<String>)>,
    pub supporting_facts: Vec<SupportingFactRef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuratedTriple {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub passage: String,
    /// Retained supporting fact as a character interval of `passage`.
    pub fact_char_start: usize,
    pub fact_char_len: usize,
}

#[derive(Deserialize)]
struct RawHotpot {
    #[serde(rename = "_id")]
    id: String,
    question: String,
    #[serde(default)]
    answer: String,
    supporting_facts: Vec<(String, usize)>,
    context: Vec<(String, Vec<String>)>,
}

/// Reads a HotpotQA JSON array. Supporting facts whose title or sentence
/// index cannot be resolved are dropped with a warning (the record then
/// usually fails the two-fact rule during curation).
pub fn load_hotpot_json(path: &Path) -> Result<Vec<HotpotRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let raw: Vec<RawHotpot> = serde_path_to_error::deserialize(&mut de).map_err(|e| BlancError::Parse {
        path: format!("{}:{}", path.display(), e.path()),
        message: e.inner().to_string(),
    })?;
    Ok(raw
        .into_iter()
        .map(|r| {
            let mut facts = Vec::new();
            for (title, sentence) in &r.supporting_facts {
                match r.context.iter().position(|(t, _)| t == title) {
                    Some(p) if *sentence < r.context[p].1.len() => facts.push(SupportingFactRef {
                        passage: p,
                        sentence: *sentence,
                    }),
                    _ => log::warn!("record {}: unresolved supporting fact ({title}, {sentence})", r.id),
                }
            }
            HotpotRecord {
                id: r.id,
                question: r.question,
                answer: r.answer,
                passages: r.context,
                supporting_facts: facts,
            }
        })
        .collect())
}

pub fn curate_hotpot(records: &[HotpotRecord]) -> Vec<CuratedTriple> {
    let mut out = Vec::with_capacity(records.len() * 2);
    for rec in records {
        if rec.supporting_facts.len() != 2 {
            log::warn!(
                "skipping record {}: {} supporting facts (expected 2)",
                rec.id,
                rec.supporting_facts.len()
            );
            continue;
        }
        if rec.supporting_facts[0] == rec.supporting_facts[1] {
            log::warn!("skipping record {}: duplicate supporting fact", rec.id);
            continue;
        }
        for keep in 0..2 {
            let kept = rec.supporting_facts[keep];
            let removed = rec.supporting_facts[1 - keep];
            let mut passage = String::new();
            let mut chars = 0usize;
            let mut fact = None;
            for (pi, (_, sentences)) in rec.passages.iter().enumerate() {
                for (si, s) in sentences.iter().enumerate() {
                    let here = SupportingFactRef { passage: pi, sentence: si };
                    let s = s.trim();
                    if here == removed || s.is_empty() {
                        continue;
                    }
                    if !passage.is_empty() {
                        passage.push(' ');
                        chars += 1;
                    }
                    let len = s.chars().count();
                    if here == kept {
                        fact = Some((chars, len));
                    }
                    passage.push_str(s);
                    chars += len;
                }
            }
            let Some((fact_char_start, fact_char_len)) = fact else {
                log::warn!("record {}: retained fact sentence is empty", rec.id);
                continue;
            };
            out.push(CuratedTriple {
                id: format!("{}_sf{keep}", rec.id),
                question: rec.question.clone(),
                answer: rec.answer.clone(),
                passage,
                fact_char_start,
                fact_char_len,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::char_slice;

    fn record(facts: &[(usize, usize)]) -> HotpotRecord {
        HotpotRecord {
            id: "r".into(),
            question: "q?".into(),
            answer: "a".into(),
            passages: (0..10)
                .map(|p| {
                    (
                        format!("T{p}"),
                        (0..3).map(|s| format!("{}Passage {p} sentence {s}.", if s > 0 { " " } else { "" })).collect(),
                    )
                })
                .collect(),
            supporting_facts: facts
                .iter()
                .map(|&(passage, sentence)| SupportingFactRef { passage, sentence })
                .collect(),
        }
    }

    #[test]
    fn two_triples_each_missing_the_other_fact() {
        let rec = record(&[(2, 1), (7, 0)]);
        let out = curate_hotpot(&[rec]);
        assert_eq!(out.len(), 2);
        let f2 = "Passage 2 sentence 1.";
        let f7 = "Passage 7 sentence 0.";
        assert!(out[0].passage.contains(f2) && !out[0].passage.contains(f7));
        assert!(out[1].passage.contains(f7) && !out[1].passage.contains(f2));
        for (t, fact) in out.iter().zip([f2, f7]) {
            let s = t.fact_char_start;
            assert_eq!(char_slice(&t.passage, s, s + t.fact_char_len), fact);
            assert!(!t.passage.contains("  "));
        }
        // passage-start removal leaves "sentence 2." of passage 6 directly before passage 7's rest
        assert!(out[0].passage.contains("Passage 6 sentence 2. Passage 7 sentence 1."));
    }

    #[test]
    fn wrong_fact_counts_are_skipped() {
        let out = curate_hotpot(&[record(&[(1, 0)]), record(&[(1, 0), (2, 0), (3, 0)]), record(&[(0, 0), (9, 2)])]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn three_records_six_triples() {
        let recs = vec![record(&[(0, 0), (1, 1)]), record(&[(4, 2), (5, 0)]), record(&[(8, 1), (9, 2)])];
        assert_eq!(curate_hotpot(&recs).len(), 6);
    }
}
