//! `gen-synth` and `label`.

use std::time::Instant;

use blanc_core::data::generate_synthetic;
use blanc_core::{generate_soft_labels, AnswerSpan, SoftLabelConfig, SynthConfig};
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::{GenSynthArgs, LabelArgs};
use crate::error::{CliError, CliResult};
use crate::io::{jsonl_bytes, load_examples, prepare_output, resolve_input};
use crate::manifest::{manifest_path_for, write_atomic, Recorder};
use crate::Ctx;

fn synth_config(a: &GenSynthArgs) -> CliResult<SynthConfig> {
    let d = SynthConfig::default();
    let mention_dist = match &a.mention_dist {
        None => d.mention_dist.clone(),
        Some(p) if p.len() > SynthConfig::MAX_MENTIONS => {
            return Err(CliError::Usage(format!(
                "--mention-dist takes at most {} values, got {}",
                SynthConfig::MAX_MENTIONS,
                p.len()
            )))
        }
        Some(p) => {
            let mut p = p.clone();
            p.resize(SynthConfig::MAX_MENTIONS, 0.0);
            p
        }
    };
    let cfg = SynthConfig {
        vocab_size: a.filler_vocab.unwrap_or(d.vocab_size),
        keyword_vocab: a.keyword_vocab.unwrap_or(d.keyword_vocab),
        entity_vocab: a.entity_vocab.unwrap_or(d.entity_vocab),
        examples: a.n.unwrap_or(d.examples),
        passage_len: (a.min_len.unwrap_or(d.passage_len.0), a.max_len.unwrap_or(d.passage_len.1)),
        answer_len: (a.min_answer_len.unwrap_or(d.answer_len.0), a.max_answer_len.unwrap_or(d.answer_len.1)),
        context_words: a.context_words.unwrap_or(d.context_words),
        mention_dist,
        noise_rate: a.noise.unwrap_or(d.noise_rate),
        seed: a.seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn gen_synth(ctx: &Ctx, a: &GenSynthArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "gen-synth");
    let cfg = synth_config(a)?;
    prepare_output(&a.out)?;
    let t = Instant::now();
    let examples = generate_synthetic(&cfg)?;
    write_atomic(&a.out, &jsonl_bytes(&examples)?)?;
    rec.phase("generate", t);
    rec.config(&cfg)?;
    rec.seeds(&[cfg.seed]);
    rec.output(&a.out)?;
    rec.write(&manifest_path_for(&a.out))?;
    Ok(Outcome {
        summary: json!({ "examples": examples.len(), "out": a.out }),
        human: format!("wrote {} examples to {}", examples.len(), a.out.display()),
    })
}

#[derive(Serialize)]
struct LabelRecord {
    id: String,
    tokens: Vec<String>,
    span: AnswerSpan,
    labels: Vec<f64>,
}

pub fn label(ctx: &Ctx, a: &LabelArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "label");
    let d = SoftLabelConfig::default();
    let cfg = SoftLabelConfig::new(a.q.unwrap_or(d.q), a.window.unwrap_or(d.window))?;
    let input = resolve_input(ctx, &a.input)?;
    prepare_output(&a.out)?;
    let examples = load_examples(&input)?;
    let records = examples
        .iter()
        .map(|ex| {
            let passage = ex.passage_tokens();
            let span = ex.gold_token_span(&passage)?;
            let labels = generate_soft_labels(passage.len(), span, cfg)?.values;
            Ok(LabelRecord { id: ex.id.clone(), tokens: passage.tokens, span, labels })
        })
        .collect::<CliResult<Vec<_>>>()?;
    write_atomic(&a.out, &jsonl_bytes(&records)?)?;
    rec.config(&cfg)?;
    rec.input(&input)?;
    rec.output(&a.out)?;
    rec.write(&manifest_path_for(&a.out))?;
    Ok(Outcome {
        summary: json!({ "examples": records.len(), "q": cfg.q, "window": cfg.window, "out": a.out }),
        human: format!("labeled {} examples (q = {}, window = {}) into {}", records.len(), cfg.q, cfg.window, a.out.display()),
    })
}
