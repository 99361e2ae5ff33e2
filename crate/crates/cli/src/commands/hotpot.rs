//! `curate-hotpot` and `sf-eval`.

use std::collections::HashMap;

use blanc_core::data::{curate_hotpot, load_hotpot_json, read_jsonl, CuratedTriple};
use blanc_core::metrics::{supporting_fact_accuracy, Prediction, SupportingFactExample};
use blanc_core::model::{encode_example, load_checkpoint, TrainConfig};
use blanc_core::{BlancError, QAExample};
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::{CurateArgs, SfEvalArgs};
use crate::error::{CliError, CliResult};
use crate::io::{json_bytes, jsonl_bytes, pct, prepare_output, resolve_input};
use crate::manifest::{manifest_path_for, write_atomic, Recorder};
use crate::Ctx;

pub fn curate(ctx: &Ctx, a: &CurateArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "curate-hotpot");
    let input = resolve_input(ctx, &a.input)?;
    prepare_output(&a.out)?;
    let records = load_hotpot_json(&input)?;
    let triples = curate_hotpot(&records);
    if triples.is_empty() {
        return Err(CliError::Usage(format!("{}: no record has exactly two supporting facts", input.display())));
    }
    write_atomic(&a.out, &jsonl_bytes(&triples)?)?;
    rec.config(&json!({ "records": records.len(), "triples": triples.len() }))?;
    rec.input(&input)?;
    rec.output(&a.out)?;
    rec.write(&manifest_path_for(&a.out))?;
    Ok(Outcome {
        summary: json!({ "records": records.len(), "triples": triples.len(), "out": a.out }),
        human: format!("curated {} records into {} triples at {}", records.len(), triples.len(), a.out.display()),
    })
}

#[derive(Serialize)]
struct SfLine {
    id: String,
    fact: (usize, usize),
    predicted: (usize, usize),
    inside: bool,
}

#[derive(Serialize)]
struct SfReport {
    source: &'static str,
    count: usize,
    /// Percent of predictions lying inside the retained fact.
    accuracy: f64,
    /// Passages too long for the model.
    skipped: Vec<String>,
    missing: Vec<String>,
    examples: Vec<SfLine>,
}

fn fact_interval(t: &CuratedTriple) -> (usize, usize) {
    (t.fact_char_start, t.fact_char_start + t.fact_char_len)
}

pub fn sf_eval(ctx: &Ctx, a: &SfEvalArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "sf-eval");
    let input = resolve_input(ctx, &a.input)?;
    prepare_output(&a.report)?;
    let triples: Vec<CuratedTriple> = read_jsonl(&input)?;
    if triples.is_empty() {
        return Err(CliError::Usage(format!("{} holds no curated passages", input.display())));
    }
    rec.input(&input)?;
    let mut skipped = Vec::new();
    let mut missing = Vec::new();
    let mut scored = Vec::new();
    let source = match (&a.ckpt, &a.predictions) {
        (Some(c), _) => {
            let path = resolve_input(ctx, c)?;
            rec.input(&path)?;
            let ckpt = load_checkpoint(&path)?;
            let default_len = ckpt.train.as_ref().map_or(TrainConfig::default().max_answer_len, |t| t.max_answer_len);
            let max_len = a.max_answer_len.unwrap_or(default_len);
            for t in &triples {
                let ex = QAExample {
                    id: t.id.clone(),
                    question: t.question.clone(),
                    passage: t.passage.clone(),
                    answers: Vec::new(),
                    meta: Default::default(),
                };
                let enc = match encode_example(&ex, &ckpt.vocab, ckpt.model.config.max_len, None) {
                    Err(BlancError::Length { len, max }) => {
                        log::warn!("{}: {len} tokens exceed the model's {max}; skipped", t.id);
                        skipped.push(t.id.clone());
                        continue;
                    }
                    other => other?,
                };
                let (span, _) = ckpt.model.predict(&enc, max_len)?;
                let predicted = ex.passage_tokens().token_span_to_char_span(span)?;
                scored.push(SupportingFactExample { id: t.id.clone(), fact: fact_interval(t), predicted });
            }
            "checkpoint"
        }
        (None, Some(p)) => {
            let path = resolve_input(ctx, p)?;
            rec.input(&path)?;
            let preds: Vec<Prediction> = read_jsonl(&path)?;
            let by_id: HashMap<&str, &Prediction> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
            for t in &triples {
                let Some(p) = by_id.get(t.id.as_str()) else {
                    missing.push(t.id.clone());
                    continue;
                };
                let predicted = p
                    .char_span
                    .ok_or_else(|| CliError::Usage(format!("prediction {} lacks char_span", p.id)))?;
                scored.push(SupportingFactExample { id: t.id.clone(), fact: fact_interval(t), predicted });
            }
            "predictions"
        }
        (None, None) => return Err(CliError::Usage("either --ckpt or --predictions is required".into())),
    };
    let accuracy = pct(supporting_fact_accuracy(&scored)?);
    let report = SfReport {
        source,
        count: scored.len(),
        accuracy,
        skipped,
        missing,
        examples: scored
            .into_iter()
            .map(|e| SfLine {
                inside: e.predicted.0 >= e.fact.0 && e.predicted.1 <= e.fact.1,
                id: e.id,
                fact: e.fact,
                predicted: e.predicted,
            })
            .collect(),
    };
    write_atomic(&a.report, &json_bytes(&report)?)?;
    rec.config(&json!({ "source": source, "max_answer_len": a.max_answer_len }))?;
    rec.output(&a.report)?;
    rec.write(&manifest_path_for(&a.report))?;
    Ok(Outcome {
        summary: json!({
            "count": report.count,
            "accuracy": accuracy,
            "skipped": report.skipped.len(),
            "missing": report.missing.len(),
        }),
        human: format!("supporting-fact accuracy {accuracy:.2} over {} passages", report.count),
    })
}
