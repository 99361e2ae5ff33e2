use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Answer, QAExample};
use crate::error::{BlancError, Result};
use crate::numerics::SeededRng;

#[derive(Deserialize)]
struct SquadFile {
    data: Vec<SquadArticle>,
}

#[derive(Deserialize)]
struct SquadArticle {
    #[serde(default)]
    title: String,
    paragraphs: Vec<SquadParagraph>,
}

#[derive(Deserialize)]
struct SquadParagraph {
    context: String,
    qas: Vec<SquadQa>,
}

#[derive(Deserialize)]
struct SquadQa {
    id: String,
    question: String,
    answers: Vec<SquadAnswer>,
}

#[derive(Deserialize)]
struct SquadAnswer {
    text: String,
    answer_start: usize,
}

pub fn load_squad_json(path: &Path) -> Result<Vec<QAExample>> {
    let text = std::fs::read_to_string(path)?;
    parse_squad_str(&text).map_err(|e| match e {
        BlancError::Parse { path: p, message } => BlancError::Parse {
            path: format!("{}:{p}", path.display()),
            message,
        },
        other => other,
    })
}

/// Parses SQuAD v1.1 JSON. Answers whose text does not match the passage at
/// `answer_start` are dropped; questions left without answers are skipped.
pub fn parse_squad_str(text: &str) -> Result<Vec<QAExample>> {
    let mut de = serde_json::Deserializer::from_str(text);
    let file: SquadFile = serde_path_to_error::deserialize(&mut de).map_err(|e| BlancError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let mut ex = QAExample {
                    id: qa.id,
                    question: qa.question,
                    passage: para.context.clone(),
                    answers: Vec::new(),
                    meta: BTreeMap::new(),
                };
                if !article.title.is_empty() {
                    ex.meta.insert("title".into(), article.title.clone().into());
                }
                for a in qa.answers {
                    let candidate = QAExample {
                        answers: vec![Answer {
                            text: a.text,
                            char_start: a.answer_start,
                        }],
                        ..ex.clone()
                    };
                    match candidate.validate() {
                        Ok(()) => ex.answers.extend(candidate.answers),
                        Err(e) => log::warn!("skipping answer: {e}"),
                    }
                }
                if ex.answers.is_empty() {
                    log::warn!("skipping question {}: no valid answer", ex.id);
                    continue;
                }
                out.push(ex);
            }
        }
    }
    Ok(out)
}

/// Deterministic shuffle-then-split; `ratio` is the training fraction.
pub fn split_train_dev<T: Clone>(examples: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(BlancError::Config(format!("split ratio must lie in [0, 1], got {ratio}")));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let n_train = (ratio * examples.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| examples[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{"version": "1.1", "data": [{"title": "Brain", "paragraphs": [
        {"context": "The prefrontal cortex plans. The cortex also senses.",
         "qas": [{"id": "a1", "question": "What plans?",
                  "answers": [{"text": "prefrontal cortex", "answer_start": 4},
                              {"text": "wrong", "answer_start": 0}]}]}]}]}"#;

    #[test]
    fn minimal_fixture() {
        let exs = parse_squad_str(FIXTURE).unwrap();
        assert_eq!(exs.len(), 1);
        assert_eq!(exs[0].answers.len(), 1);
        assert_eq!(exs[0].answers[0].char_start, 4);
        assert_eq!(exs[0].meta["title"], "Brain");
    }

    #[test]
    fn schema_violation_reports_path() {
        let bad = r#"{"data": [{"paragraphs": [{"context": "x", "qas": [{"id": "1", "question": "q", "answers": [{"text": "x"}]}]}]}]}"#;
        match parse_squad_str(bad) {
            Err(BlancError::Parse { path, .. }) => assert_eq!(path, "data[0].paragraphs[0].qas[0].answers[0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_is_ninety_ten_and_deterministic() {
        let items: Vec<u32> = (0..100).collect();
        let (tr, dv) = split_train_dev(&items, 0.9, 5).unwrap();
        assert_eq!((tr.len(), dv.len()), (90, 10));
        let (tr2, dv2) = split_train_dev(&items, 0.9, 5).unwrap();
        assert_eq!((tr.clone(), dv.clone()), (tr2, dv2));
        let mut all: Vec<u32> = tr.into_iter().chain(dv).collect();
        all.sort();
        assert_eq!(all, items);
        assert!(split_train_dev(&items, 1.5, 0).is_err());
    }
}
