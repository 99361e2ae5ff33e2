//! Minibatch training on the mixed loss and dataset-level evaluation.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{EncoderConfig, TrainConfig};
use super::input::{encode_batch, Vocab};
use super::{predict_examples, LossParts, QAModel};
use crate::data::QAExample;
use crate::error::{BlancError, Result};
use crate::metrics::{bucketed_report, EvalExample, MetricMeans, MetricsReport};
use crate::numerics::{OptimizerState, SeededRng};

/// Stream offset separating shuffle streams from dropout streams.
const SHUFFLE_STREAM: u64 = 1 << 63;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training losses over the epoch (with dropout active).
    pub train: LossParts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<LossParts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_metrics: Option<MetricMeans>,
    pub wall_time_secs: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: QAModel,
    pub vocab: Vocab,
    /// The encoder configuration with the vocabulary size filled in.
    pub encoder: EncoderConfig,
    pub history: Vec<EpochRecord>,
}

/// Trains from scratch. The vocabulary is built from `train_set`, and
/// `encoder.vocab_size` is overridden accordingly. `on_epoch` sees each
/// record as soon as the epoch finishes.
pub fn train(
    train_set: &[QAExample],
    dev_set: &[QAExample],
    encoder: &EncoderConfig,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(BlancError::Empty("training set is empty".into()));
    }
    let vocab = Vocab::build(train_set);
    let enc_cfg = EncoderConfig { vocab_size: vocab.len(), ..encoder.clone() };
    enc_cfg.validate()?;
    let data = encode_batch(train_set, &vocab, enc_cfg.max_len, Some(cfg.soft_label))?.examples;
    let dev = encode_batch(dev_set, &vocab, enc_cfg.max_len, Some(cfg.soft_label))?.examples;
    let dev_gold = dev_set.iter().map(EvalExample::from_example).collect::<Result<Vec<_>>>()?;

    let mut model = QAModel::new(enc_cfg.clone())?;
    let mut opt = OptimizerState::new(cfg.optimizer, &model.params.params);
    let base = SeededRng::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..data.len()).collect();
        base.fork(SHUFFLE_STREAM | epoch as u64).shuffle(&mut order);
        let mut sum = LossParts::default();
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads = model.params.zero_grads();
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for (k, &i) in batch.iter().enumerate() {
                let step = (batch_no * cfg.batch_size + k) as u64;
                let mut rng = base.fork(((epoch as u64) << 32) | step);
                let (parts, g) = model.loss_and_grads(&data[i], cfg.lambda, cfg.context_reduction, Some(&mut rng))?;
                batch_loss += parts.total * scale;
                sum.answer += parts.answer;
                sum.context += parts.context;
                sum.total += parts.total;
                for (a, b) in grads.iter_mut().zip(&g) {
                    a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += scale * y);
                }
            }
            let ids = || batch.iter().map(|&i| data[i].id.as_str()).collect::<Vec<_>>();
            if !batch_loss.is_finite() {
                let ids = ids();
                return Err(BlancError::Divergence {
                    epoch,
                    batch: batch_no,
                    detail: format!("loss {batch_loss} on examples {ids:?}"),
                });
            }
            for (p, g) in model.params.params.iter_mut().zip(grads) {
                p.grad = g;
            }
            opt.step(&mut model.params.params).map_err(|e| BlancError::Divergence {
                epoch,
                batch: batch_no,
                detail: e.to_string(),
            })?;
            if let Some(p) = model.params.params.iter().find(|p| p.value.data().iter().any(|v| !v.is_finite())) {
                return Err(BlancError::Divergence {
                    epoch,
                    batch: batch_no,
                    detail: format!("update left {} non-finite after examples {:?}", p.name, ids()),
                });
            }
        }
        let n = data.len() as f64;
        let train_loss = LossParts { answer: sum.answer / n, context: sum.context / n, total: sum.total / n };
        let (dev_loss, dev_metrics) = if dev.is_empty() {
            (None, None)
        } else {
            let mut s = LossParts::default();
            for ex in &dev {
                let l = model.loss(ex, cfg.lambda, cfg.context_reduction)?;
                s.answer += l.answer;
                s.context += l.context;
                s.total += l.total;
            }
            let m = dev.len() as f64;
            let preds = predict_examples(&model, &vocab, dev_set, cfg.max_answer_len, 1)?;
            let report = bucketed_report(&dev_gold, &preds, false);
            (
                Some(LossParts { answer: s.answer / m, context: s.context / m, total: s.total / m }),
                Some(report.overall),
            )
        };
        let record = EpochRecord {
            epoch,
            train: train_loss,
            dev: dev_loss,
            dev_metrics,
            wall_time_secs: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train loss {:.5} (answer {:.5}, context {:.5})",
            train_loss.total,
            train_loss.answer,
            train_loss.context
        );
        on_epoch(&record);
        history.push(record);
    }
    Ok(TrainOutcome { model, vocab, encoder: enc_cfg, history })
}

/// Predicts every example and scores it, optionally bucketed by answer
/// occurrence count.
pub fn evaluate(
    model: &QAModel,
    vocab: &Vocab,
    examples: &[QAExample],
    max_answer_len: usize,
    bucketed: bool,
    threads: usize,
) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(BlancError::Empty("evaluation set is empty".into()));
    }
    let gold = examples.iter().map(EvalExample::from_example).collect::<Result<Vec<_>>>()?;
    let preds = predict_examples(model, vocab, examples, max_answer_len, threads)?;
    Ok(bucketed_report(&gold, &preds, bucketed))
}
