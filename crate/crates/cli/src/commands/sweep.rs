//! `sweep-lambda`: one training run per (lambda, seed) cell.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use blanc_core::model::{evaluate, train, EncoderConfig, TrainConfig};
use blanc_core::QAExample;
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::SweepArgs;
use crate::error::{CliError, CliResult};
use crate::io::{load_examples, pct, prepare_output, resolve_input};
use crate::manifest::{manifest_path_for, write_atomic, Recorder};
use crate::Ctx;

/// CSV row; metrics are percentages, NaN with `error` set when the cell failed.
#[derive(Clone, Debug, Serialize)]
struct Row {
    lambda: f64,
    seed: u64,
    span_f1: f64,
    span_em: f64,
    f1: f64,
    em: f64,
    error: String,
}

fn cell(
    train_set: &[QAExample],
    test_set: &[QAExample],
    encoder: &EncoderConfig,
    base: &TrainConfig,
    lambda: f64,
    seed: u64,
) -> Row {
    let cfg = TrainConfig { lambda, seed, ..base.clone() };
    let enc = EncoderConfig { seed, ..encoder.clone() };
    let result = train(train_set, &[], &enc, &cfg, &mut |_| {})
        .and_then(|out| evaluate(&out.model, &out.vocab, test_set, cfg.max_answer_len, false, 1));
    match result {
        Ok(r) => Row {
            lambda,
            seed,
            span_f1: pct(r.overall.span_f1),
            span_em: pct(r.overall.span_em),
            f1: pct(r.overall.f1),
            em: pct(r.overall.em),
            error: String::new(),
        },
        Err(e) => {
            log::error!("lambda {lambda}, seed {seed}: {e}");
            Row { lambda, seed, span_f1: f64::NAN, span_em: f64::NAN, f1: f64::NAN, em: f64::NAN, error: e.to_string() }
        }
    }
}

pub fn run(ctx: &Ctx, a: &SweepArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "sweep-lambda");
    if let Some(bad) = a.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CliError::Usage(format!("lambda {bad} outside [0, 1]")));
    }
    if a.seeds.is_empty() {
        return Err(CliError::Usage("--seeds needs at least one seed".into()));
    }
    if a.parallel == 0 {
        return Err(CliError::Usage("--parallel must be at least 1".into()));
    }
    let base = a.training.resolve(None, 0)?;
    let encoder = a.encoder.resolve(0);
    let train_path = resolve_input(ctx, &a.train)?;
    let test_path = resolve_input(ctx, &a.test)?;
    prepare_output(&a.out)?;
    let train_set = load_examples(&train_path)?;
    let test_set = load_examples(&test_path)?;

    let cells: Vec<(f64, u64)> = a.values.iter().flat_map(|&l| a.seeds.iter().map(move |&s| (l, s))).collect();
    let t = Instant::now();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Row>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|s| {
        for _ in 0..a.parallel.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(lambda, seed)) = cells.get(i) else { break };
                log::info!("cell {}/{}: lambda {lambda}, seed {seed}", i + 1, cells.len());
                let row = cell(&train_set, &test_set, &encoder, &base, lambda, seed);
                results.lock().expect("results lock")[i] = Some(row);
            });
        }
    });
    rec.phase("sweep", t);
    let rows: Vec<Row> = results.into_inner().expect("results lock").into_iter().map(|r| r.expect("every cell ran")).collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(format!("csv output: {e}")))?;
    write_atomic(&a.out, &bytes)?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    rec.config(&json!({ "values": a.values, "encoder": encoder, "train": base, "parallel": a.parallel }))?;
    rec.seeds(&a.seeds);
    rec.input(&train_path)?;
    rec.input(&test_path)?;
    rec.output(&a.out)?;
    rec.write(&manifest_path_for(&a.out))?;
    Ok(Outcome {
        summary: json!({ "rows": rows.len(), "failed": failed, "out": a.out }),
        human: format!("{} cells ({} failed) written to {}", rows.len(), failed, a.out.display()),
    })
}
