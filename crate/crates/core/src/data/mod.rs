//! Dataset types and I/O: the internal JSONL format, SQuAD and HotpotQA
//! readers, the synthetic multi-mention generator, and tokenization.

mod hotpot;
mod squad;
mod synth;
mod tokenize;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{BlancError, Result};
use crate::soft_label::AnswerSpan;

pub use hotpot::{curate_hotpot, load_hotpot_json, CuratedTriple, HotpotRecord, SupportingFactRef};
pub use squad::{load_squad_json, parse_squad_str, split_train_dev};
pub use synth::{generate_synthetic, SynthConfig};
pub use tokenize::{char_slice, tokenize_with_offsets, Tokenized};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    /// Offset of the first answer character in the passage, in characters.
    pub char_start: usize,
}

/// One question/passage/answer triple. Field order is the on-disk JSONL order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub passage: String,
    pub answers: Vec<Answer>,
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl QAExample {
    /// Checks that every answer's text equals the passage slice at its offset.
    pub fn validate(&self) -> Result<()> {
        if self.answers.is_empty() {
            return Err(BlancError::Alignment(format!("example {} has no answers", self.id)));
        }
        let n = self.passage.chars().count();
        for a in &self.answers {
            let len = a.text.chars().count();
            if a.char_start + len > n || char_slice(&self.passage, a.char_start, a.char_start + len) != a.text {
                return Err(BlancError::Alignment(format!(
                    "example {}: answer {:?} does not match passage at {}",
                    self.id, a.text, a.char_start
                )));
            }
        }
        Ok(())
    }

    pub fn passage_tokens(&self) -> Tokenized {
        tokenize_with_offsets(&self.passage)
    }

    pub fn question_tokens(&self) -> Tokenized {
        tokenize_with_offsets(&self.question)
    }

    pub fn answer_texts(&self) -> Vec<String> {
        self.answers.iter().map(|a| a.text.clone()).collect()
    }

    /// Token span of every annotated answer.
    pub fn gold_token_spans(&self, passage: &Tokenized) -> Result<Vec<AnswerSpan>> {
        self.answers
            .iter()
            .map(|a| passage.char_span_to_token_span(a.char_start, a.text.chars().count()))
            .collect()
    }

    /// Token span of the primary (first) answer.
    pub fn gold_token_span(&self, passage: &Tokenized) -> Result<AnswerSpan> {
        let a = self
            .answers
            .first()
            .ok_or_else(|| BlancError::Alignment(format!("example {} has no answers", self.id)))?;
        passage.char_span_to_token_span(a.char_start, a.text.chars().count())
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let rec = serde_path_to_error::deserialize(&mut de).map_err(|e| BlancError::Parse {
            path: format!("{}:{}:{}", path.display(), lineno + 1, e.path()),
            message: e.inner().to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> QAExample {
        QAExample {
            id: "q1".into(),
            question: "Where is it?".into(),
            passage: "It is in the prefrontal cortex, near the front.".into(),
            answers: vec![Answer {
                text: "prefrontal cortex".into(),
                char_start: 13,
            }],
            meta: BTreeMap::new(),
        }
    }

    #[test]
    fn validate_and_span() {
        let ex = example();
        ex.validate().unwrap();
        let toks = ex.passage_tokens();
        let span = ex.gold_token_span(&toks).unwrap();
        assert_eq!(span, AnswerSpan { start: 4, end: 5 });
        let (s, e) = toks.token_span_to_char_span(span).unwrap();
        assert_eq!(char_slice(&ex.passage, s, e), "prefrontal cortex");

        let mut bad = ex.clone();
        bad.answers[0].char_start = 12;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip_and_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        let mut ex = example();
        ex.meta.insert("mentions".into(), serde_json::json!(1));
        write_jsonl(&path, &[ex.clone(), example()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let first = text.lines().next().unwrap();
        let keys: Vec<usize> = ["\"id\"", "\"question\"", "\"passage\"", "\"answers\"", "\"meta\""]
            .iter()
            .map(|k| first.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back: Vec<QAExample> = read_jsonl(&path).unwrap();
        assert_eq!(back, vec![ex, example()]);
    }

    #[test]
    fn jsonl_error_names_line_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"question\":\"q\",\"passage\":\"p\",\"answers\":[{\"text\":1,\"char_start\":0}]}\n").unwrap();
        match read_jsonl::<QAExample>(&path) {
            Err(BlancError::Parse { path, .. }) => {
                assert!(path.contains(":1:answers[0].text"), "{path}")
            }
            other => panic!("{other:?}"),
        }
    }
}
