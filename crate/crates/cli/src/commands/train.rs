//! `train`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use blanc_core::data::split_train_dev;
use blanc_core::metrics::MetricMeans;
use blanc_core::model::{save_checkpoint, train, Checkpoint, EpochRecord, LossParts};
use serde::Serialize;
use serde_json::json;

use super::Outcome;
use crate::args::TrainArgs;
use crate::error::{CliError, CliResult};
use crate::io::{load_examples, prepare_dir, resolve_input};
use crate::manifest::Recorder;
use crate::Ctx;

/// One line of `epochs.jsonl`. Wall time lives in the manifest so the log
/// itself is reproducible.
#[derive(Serialize)]
struct EpochLine<'a> {
    epoch: usize,
    train: &'a LossParts,
    #[serde(skip_serializing_if = "Option::is_none")]
    dev: Option<&'a LossParts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dev_metrics: Option<&'a MetricMeans>,
}

pub fn run(ctx: &Ctx, a: &TrainArgs) -> CliResult<Outcome> {
    let mut rec = Recorder::new(ctx, "train");
    let cfg = a.training.resolve(a.lambda, a.seed)?;
    let encoder = a.encoder.resolve(a.seed);
    if let Some(r) = a.dev_split {
        if !(r > 0.0 && r < 1.0) {
            return Err(CliError::Usage(format!("--dev-split must lie in (0, 1), got {r}")));
        }
    }
    let train_path = resolve_input(ctx, &a.train)?;
    let dev_path = a.dev.as_deref().map(|p| resolve_input(ctx, p)).transpose()?;
    prepare_dir(&a.out_dir)?;

    let t = Instant::now();
    let mut train_set = load_examples(&train_path)?;
    let dev_set = match (&dev_path, a.dev_split) {
        (Some(p), _) => load_examples(p)?,
        (None, Some(r)) => {
            // split_train_dev keeps `ratio` for training
            let (tr, dev) = split_train_dev(&train_set, 1.0 - r, a.seed)?;
            train_set = tr;
            dev
        }
        (None, None) => Vec::new(),
    };
    rec.phase("load", t);

    let log_path = a.out_dir.join("epochs.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?);
    let mut log_err = None;
    let mut epoch_secs = Vec::new();
    let mut on_epoch = |r: &EpochRecord| {
        epoch_secs.push(r.wall_time_secs);
        let line = EpochLine { epoch: r.epoch, train: &r.train, dev: r.dev.as_ref(), dev_metrics: r.dev_metrics.as_ref() };
        let res = serde_json::to_writer(&mut log, &line)
            .map_err(std::io::Error::from)
            .and_then(|_| log.write_all(b"\n"))
            .and_then(|_| log.flush());
        if let Err(e) = res {
            log_err.get_or_insert(e);
        }
    };
    let t = Instant::now();
    let outcome = train(&train_set, &dev_set, &encoder, &cfg, &mut on_epoch)?;
    rec.phase("train", t);
    drop(log);
    if let Some(e) = log_err {
        return Err(CliError::io(&log_path, e));
    }

    let ckpt_path = a.out_dir.join("model.ckpt");
    save_checkpoint(
        &ckpt_path,
        &Checkpoint { model: outcome.model, vocab: outcome.vocab, train: Some(cfg.clone()) },
    )?;
    let last = outcome.history.last().map(|r| r.train).unwrap_or_default();
    rec.config(&json!({
        "encoder": outcome.encoder,
        "train": cfg,
        "dev_split": a.dev_split,
        "train_examples": train_set.len(),
        "dev_examples": dev_set.len(),
    }))?;
    rec.seeds(&[a.seed]);
    rec.epoch_times(epoch_secs);
    rec.input(&train_path)?;
    if let Some(p) = &dev_path {
        rec.input(p)?;
    }
    rec.output(&ckpt_path)?;
    rec.output(&log_path)?;
    rec.write(&a.out_dir.join("manifest.json"))?;
    Ok(Outcome {
        summary: json!({
            "checkpoint": ckpt_path,
            "log": log_path,
            "epochs": outcome.history.len(),
            "final_train_loss": last,
        }),
        human: format!(
            "trained {} epochs (final loss {:.5}: answer {:.5}, context {:.5}); checkpoint {}",
            outcome.history.len(),
            last.total,
            last.answer,
            last.context,
            ckpt_path.display()
        ),
    })
}
