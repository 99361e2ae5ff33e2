//! `eval`: dataset EM/F1 and Span-EM/Span-F1, optionally per occurrence bucket.

use std::path::{Path, PathBuf};
use std::time::Instant;

use blanc_core::data::read_jsonl;
use blanc_core::metrics::{bucketed_report, EvalExample, MetricMeans, MetricsReport, Prediction};
use blanc_core::model::{load_checkpoint, predict_examples, Checkpoint, TrainConfig};
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::EvalArgs;
use crate::error::{CliError, CliResult};
use crate::io::{jsonl_bytes, json_bytes, load_examples, pct, prepare_output, resolve_input};
use crate::manifest::{manifest_path_for, write_atomic, Recorder};
use crate::Ctx;

/// Metric means in percent.
#[derive(Clone, Debug, Serialize)]
pub struct Scores {
    pub count: usize,
    pub em: f64,
    pub f1: f64,
    pub span_em: f64,
    pub span_f1: f64,
    pub em_minus_span_em: f64,
}

impl From<&MetricMeans> for Scores {
    fn from(m: &MetricMeans) -> Self {
        Scores {
            count: m.count,
            em: pct(m.em),
            f1: pct(m.f1),
            span_em: pct(m.span_em),
            span_f1: pct(m.span_f1),
            em_minus_span_em: pct(m.em) - pct(m.span_em),
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    n: &'a str,
    count: usize,
    em: f64,
    f1: f64,
    span_em: f64,
    span_f1: f64,
    em_minus_span_em: f64,
}

impl<'a> CsvRow<'a> {
    fn new(n: &'a str, m: &MetricMeans) -> Self {
        let s = Scores::from(m);
        CsvRow { n, count: s.count, em: s.em, f1: s.f1, span_em: s.span_em, span_f1: s.span_f1, em_minus_span_em: s.em_minus_span_em }
    }
}

#[derive(Serialize)]
struct BucketScores {
    n: &'static str,
    #[serde(flatten)]
    scores: Scores,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    source: &'a str,
    #[serde(flatten)]
    overall: Scores,
    buckets: Vec<BucketScores>,
    missing: &'a [String],
}

/// Rows `n,count,em,f1,span_em,span_f1,em_minus_span_em`: one per nonempty
/// bucket, then `all`.
fn csv_bytes(report: &MetricsReport) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for b in &report.buckets {
        w.serialize(CsvRow::new(b.bucket.label(), &b.metrics))?;
    }
    w.serialize(CsvRow::new("all", &report.overall))?;
    w.into_inner().map_err(|e| CliError::Failed(format!("csv output: {e}")))
}

fn load_ckpt(ctx: &Ctx, p: &Path) -> CliResult<(PathBuf, Checkpoint)> {
    let path = resolve_input(ctx, p)?;
    let ckpt = load_checkpoint(&path)?;
    Ok((path, ckpt))
}

pub fn run(ctx: &Ctx, a: &EvalArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "eval");
    let test_path = resolve_input(ctx, &a.test)?;
    let csv_path = a.csv.clone().unwrap_or_else(|| a.report.with_extension("csv"));
    prepare_output(&a.report)?;
    prepare_output(&csv_path)?;
    if let Some(p) = &a.predictions_out {
        prepare_output(p)?;
    }
    let examples = load_examples(&test_path)?;
    if examples.is_empty() {
        return Err(CliError::Usage(format!("{} holds no examples", test_path.display())));
    }
    let rule = a.occurrence_rule.into();
    let gold = examples.iter().map(|e| EvalExample::with_rule(e, rule)).collect::<Result<Vec<_>, _>>()?;
    rec.input(&test_path)?;

    let t = Instant::now();
    let (source, predictions, max_answer_len) = match (&a.ckpt, &a.predictions) {
        (Some(c), _) => {
            let (path, ckpt) = load_ckpt(ctx, c)?;
            rec.input(&path)?;
            let default_len = ckpt.train.as_ref().map_or(TrainConfig::default().max_answer_len, |t| t.max_answer_len);
            let max_len = a.max_answer_len.unwrap_or(default_len);
            let preds = predict_examples(&ckpt.model, &ckpt.vocab, &examples, max_len, a.threads)?;
            ("checkpoint", preds, Some(max_len))
        }
        (None, Some(p)) => {
            let path = resolve_input(ctx, p)?;
            rec.input(&path)?;
            let preds: Vec<Prediction> = read_jsonl(&path)?;
            ("predictions", preds, None)
        }
        (None, None) => return Err(CliError::Usage("either --ckpt or --predictions is required".into())),
    };
    rec.phase("predict", t);

    let report = bucketed_report(&gold, &predictions, a.bucket_by_occurrence);
    if !report.missing.is_empty() {
        log::warn!("{} test examples have no prediction", report.missing.len());
    }
    if report.overall.count == 0 {
        return Err(CliError::Usage("no prediction matches a test example id".into()));
    }
    let out = EvalReport {
        source,
        overall: (&report.overall).into(),
        buckets: report
            .buckets
            .iter()
            .map(|b| BucketScores { n: b.bucket.label(), scores: (&b.metrics).into() })
            .collect(),
        missing: &report.missing,
    };
    write_atomic(&a.report, &json_bytes(&out)?)?;
    write_atomic(&csv_path, &csv_bytes(&report)?)?;
    rec.output(&a.report)?;
    rec.output(&csv_path)?;
    if let Some(p) = &a.predictions_out {
        write_atomic(p, &jsonl_bytes(&predictions)?)?;
        rec.output(p)?;
    }
    rec.config(&json!({
        "source": source,
        "bucket_by_occurrence": a.bucket_by_occurrence,
        "occurrence_rule": rule,
        "max_answer_len": max_answer_len,
        "threads": a.threads,
        "csv": csv_path,
    }))?;
    rec.write(&manifest_path_for(&a.report))?;
    let o = &out.overall;
    Ok(Outcome {
        human: format!(
            "n = {}: EM {:.2}  F1 {:.2}  Span-EM {:.2}  Span-F1 {:.2}; report {}",
            o.count,
            o.em,
            o.f1,
            o.span_em,
            o.span_f1,
            a.report.display()
        ),
        summary: serde_json::to_value(&out)?,
    })
}
