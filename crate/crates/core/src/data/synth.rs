//! Synthetic multi-mention reading-comprehension data.
//!
//! Every passage repeats one answer phrase `n` times. Each mention sits inside
//! a small frame of keyword tokens; only the gold mention's frame uses the
//! question's keywords, so the answer text alone does not identify the gold
//! span once `n > 1`. Distractor frames use other keywords, except that with
//! probability `noise_rate` one of their keywords is swapped for a question
//! keyword, producing a partial (misleading) context match.
//!
//! Tokens are drawn from three disjoint vocabularies: filler (`w*`),
//! keyword (`k*`) and entity (`e*`). Entities only ever occur inside answer
//! mentions, which guarantees the occurrence count equals the drawn `n`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Answer, QAExample};
use crate::error::{BlancError, Result};
use crate::numerics::SeededRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of filler words.
    pub vocab_size: usize,
    pub keyword_vocab: usize,
    pub entity_vocab: usize,
    pub examples: usize,
    /// Inclusive passage length range, in tokens.
    pub passage_len: (usize, usize),
    /// Inclusive answer length range, in tokens.
    pub answer_len: (usize, usize),
    /// Keywords on each side of a mention.
    pub context_words: usize,
    /// Probabilities of `n = 1..=6` mentions.
    pub mention_dist: Vec<f64>,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 60,
            keyword_vocab: 40,
            entity_vocab: 30,
            examples: 1000,
            passage_len: (40, 56),
            answer_len: (1, 2),
            context_words: 1,
            mention_dist: vec![0.2, 0.2, 0.2, 0.2, 0.2, 0.0],
            noise_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub const MAX_MENTIONS: usize = 6;

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BlancError::Config(m));
        if self.mention_dist.len() != Self::MAX_MENTIONS {
            return bad(format!(
                "mention distribution needs {} entries (n = 1..=6), got {}",
                Self::MAX_MENTIONS,
                self.mention_dist.len()
            ));
        }
        if self.mention_dist.iter().any(|p| !(*p >= 0.0)) {
            return bad("mention probabilities must be nonnegative".into());
        }
        let total: f64 = self.mention_dist.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("mention probabilities sum to {total}, expected 1"));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise rate {} outside [0, 1]", self.noise_rate));
        }
        let (amin, amax) = self.answer_len;
        if amin == 0 || amin > amax || amax > self.entity_vocab {
            return bad(format!("answer length range {:?} invalid for {} entities", self.answer_len, self.entity_vocab));
        }
        if self.vocab_size == 0 {
            return bad("filler vocabulary must be nonempty".into());
        }
        if self.keyword_vocab < 4 * self.context_words.max(1) {
            return bad(format!(
                "keyword vocabulary {} too small for {} context words per side",
                self.keyword_vocab, self.context_words
            ));
        }
        let max_n = self.mention_dist.iter().rposition(|&p| p > 0.0).map_or(1, |i| i + 1);
        let unit = amax + 2 * self.context_words;
        let needed = max_n * unit + max_n - 1;
        if self.passage_len.0 > self.passage_len.1 || self.passage_len.0 < needed {
            return bad(format!(
                "passage length range {:?} cannot hold {max_n} mentions of {unit} tokens",
                self.passage_len
            ));
        }
        Ok(())
    }
}

fn distinct(rng: &mut SeededRng, pool: usize, k: usize, exclude: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let c = rng.below(pool);
        if !out.contains(&c) && !exclude.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn generate_one(cfg: &SynthConfig, index: usize) -> QAExample {
    let mut rng = SeededRng::new(cfg.seed).fork(index as u64);
    let n = rng.categorical(&cfg.mention_dist) + 1;
    let answer_len = rng.range_inclusive(cfg.answer_len.0, cfg.answer_len.1);
    let answer: Vec<String> = distinct(&mut rng, cfg.entity_vocab, answer_len, &[])
        .into_iter()
        .map(|e| format!("e{e}"))
        .collect();
    let c = cfg.context_words;
    let question_kw = distinct(&mut rng, cfg.keyword_vocab, 2 * c, &[]);
    let gold = rng.below(n);

    let mut units: Vec<Vec<String>> = Vec::with_capacity(n);
    for u in 0..n {
        let mut frame = if u == gold {
            question_kw.clone()
        } else {
            distinct(&mut rng, cfg.keyword_vocab, 2 * c, &question_kw)
        };
        if u != gold && c > 0 && rng.uniform() < cfg.noise_rate {
            let slot = rng.below(2 * c);
            frame[slot] = question_kw[rng.below(2 * c)];
        }
        let mut unit: Vec<String> = frame[..c].iter().map(|k| format!("k{k}")).collect();
        unit.extend(answer.iter().cloned());
        unit.extend(frame[c..].iter().map(|k| format!("k{k}")));
        units.push(unit);
    }

    let length = rng.range_inclusive(cfg.passage_len.0, cfg.passage_len.1);
    let unit_tokens: usize = units.iter().map(Vec::len).sum();
    // n + 1 gaps; interior gaps hold at least one filler
    let mut gaps = vec![0usize; n + 1];
    for g in gaps.iter_mut().take(n).skip(1) {
        *g = 1;
    }
    for _ in 0..length - unit_tokens - (n - 1) {
        gaps[rng.below(n + 1)] += 1;
    }

    let mut tokens: Vec<String> = Vec::with_capacity(length);
    let mut gold_token = 0;
    for (u, unit) in units.iter().enumerate() {
        for _ in 0..gaps[u] {
            tokens.push(format!("w{}", rng.below(cfg.vocab_size)));
        }
        if u == gold {
            gold_token = tokens.len() + c;
        }
        tokens.extend(unit.iter().cloned());
    }
    for _ in 0..gaps[n] {
        tokens.push(format!("w{}", rng.below(cfg.vocab_size)));
    }

    let char_start: usize = tokens[..gold_token].iter().map(|t| t.len() + 1).sum();
    let passage = tokens.join(" ");
    let kw = |ks: &[usize]| ks.iter().map(|k| format!("k{k}")).collect::<Vec<_>>().join(" ");
    let question = format!("what {} {} ?", kw(&question_kw[..c]), kw(&question_kw[c..]));
    let mut meta = BTreeMap::new();
    meta.insert("mentions".to_string(), serde_json::json!(n));
    meta.insert("gold_mention".to_string(), serde_json::json!(gold));
    QAExample {
        id: format!("synth-{}-{index}", cfg.seed),
        question,
        passage,
        answers: vec![Answer {
            text: answer.join(" "),
            char_start,
        }],
        meta,
    }
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<QAExample>> {
    cfg.validate()?;
    Ok((0..cfg.examples).map(|i| generate_one(cfg, i)).collect())
}
