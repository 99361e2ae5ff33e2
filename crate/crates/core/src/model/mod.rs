//! Toy question-answering model: transformer encoder, context head feeding
//! membership weights into the answer head, losses, training and decoding.

mod checkpoint;
mod config;
mod encoder;
mod heads;
mod input;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::block_attention::{
    boundary_backward, context_boundary_distributions, context_loss, context_loss_grad, membership_backward,
    membership_probabilities, ContextDistributions,
};
use crate::data::QAExample;
use crate::error::{BlancError, Result};
use crate::metrics::Prediction;
use crate::numerics::{finite_diff_gradcheck_with, GradCheckReport, Parameter, SeededRng, Stencil, Tensor};

pub use checkpoint::{checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use config::{ContextReduction, EncoderConfig, SoftmaxDomain, TrainConfig};
pub use heads::{answer_backward, answer_distributions, answer_loss, predict_span, total_loss, AnswerHeadGrads, AnswerHeadParams};
pub use input::{encode_batch, encode_example, random_encoded_example, EncodedBatch, EncodedExample, Vocab, SEP, UNK};
pub use params::ModelParams;
pub use train::{evaluate, train, EpochRecord, TrainOutcome};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub answer: f64,
    /// Context loss after the configured reduction.
    pub context: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Encoder output for every input position.
    pub hidden: Tensor,
    /// Context head output over its softmax domain (the passage, or every
    /// input position).
    pub context: ContextDistributions,
    /// Membership probabilities at passage positions.
    pub membership: Vec<f64>,
    pub p_start: Vec<f64>,
    pub p_end: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QAModel {
    pub config: EncoderConfig,
    pub params: ModelParams,
}

fn passage_rows(h: &Tensor, ex: &EncodedExample) -> Tensor {
    let d = h.cols();
    let start = ex.passage_offset * d;
    Tensor::new(
        vec![ex.passage_len, d],
        h.data()[start..start + ex.passage_len * d].to_vec(),
    )
    .expect("passage rows lie inside the encoded sequence")
}

impl QAModel {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        let params = ModelParams::init(&config)?;
        Ok(QAModel { config, params })
    }

    fn check(&self, ex: &EncodedExample) -> Result<()> {
        if ex.passage_len == 0 {
            return Err(BlancError::Empty(format!("example {} has an empty passage", ex.id)));
        }
        if ex.passage_offset + ex.passage_len != ex.len() {
            return Err(BlancError::dim("passage layout", ex.len(), ex.passage_offset + ex.passage_len));
        }
        Ok(())
    }

    /// Encoder output `H`, one row per input position. Dropout is applied
    /// only when an RNG is supplied.
    pub fn encode(&self, ex: &EncodedExample, dropout: Option<&mut SeededRng>) -> Result<Tensor> {
        Ok(encoder::encoder_forward(&self.params, &self.config, ex, dropout)?.0)
    }

    /// Rows the context head reads: the passage rows `hp`, or all of `hidden`.
    fn context_input<'a>(&self, hidden: &'a Tensor, hp: &'a Tensor) -> &'a Tensor {
        match self.config.context_softmax {
            SoftmaxDomain::Passage => hp,
            SoftmaxDomain::All => hidden,
        }
    }

    /// Boundary distributions over the softmax domain and the passage slice
    /// of the membership.
    fn context_forward(&self, hidden: &Tensor, hp: &Tensor, ex: &EncodedExample) -> Result<(ContextDistributions, Vec<f64>)> {
        let h = self.context_input(hidden, hp);
        let mask = vec![true; h.rows()];
        let (ps, pe) = context_boundary_distributions(h, &self.params.context_head(), &mask)?;
        let dist = membership_probabilities(&ps, &pe)?;
        let skip = h.rows() - ex.passage_len;
        let membership = dist.membership[skip..].to_vec();
        Ok((dist, membership))
    }

    pub fn forward(&self, ex: &EncodedExample) -> Result<ForwardOutput> {
        self.check(ex)?;
        let (hidden, _) = encoder::encoder_forward(&self.params, &self.config, ex, None)?;
        let hp = passage_rows(&hidden, ex);
        let (context, membership) = self.context_forward(&hidden, &hp, ex)?;
        let (p_start, p_end) = answer_distributions(&hp, &membership, &self.params.answer_head())?;
        Ok(ForwardOutput { hidden, context, membership, p_start, p_end })
    }

    /// Losses and parameter gradients for one example.
    pub fn loss_and_grads(
        &self,
        ex: &EncodedExample,
        lambda: f64,
        reduction: ContextReduction,
        dropout: Option<&mut SeededRng>,
    ) -> Result<(LossParts, Vec<Tensor>)> {
        self.check(ex)?;
        let span = ex
            .span
            .ok_or_else(|| BlancError::Alignment(format!("example {} has no gold span", ex.id)))?;
        let labels = ex
            .soft_labels
            .as_ref()
            .ok_or_else(|| BlancError::Config(format!("example {} has no soft labels", ex.id)))?;
        let (hidden, cache) = encoder::encoder_forward(&self.params, &self.config, ex, dropout)?;
        let hp = passage_rows(&hidden, ex);
        let ctx_params = self.params.context_head();
        let ans_params = self.params.answer_head();
        let (dist, membership) = self.context_forward(&hidden, &hp, ex)?;
        let (p_start, p_end) = answer_distributions(&hp, &membership, &ans_params)?;

        let norm = match reduction {
            ContextReduction::Sum => 1.0,
            ContextReduction::Mean => 1.0 / ex.passage_len as f64,
        };
        let answer = answer_loss(&p_start, &p_end, span)?;
        let context = context_loss(&membership, &labels.values)? * norm;
        let parts = LossParts { answer, context, total: total_loss(answer, context, lambda) };

        let mut dhp = hp.zeros_like();
        let ans = heads::answer_backward(&hp, &membership, &ans_params, &p_start, &p_end, span, 1.0 - lambda, &mut dhp);
        let mut d_membership = ans.membership;
        if lambda != 0.0 {
            for (g, c) in d_membership.iter_mut().zip(context_loss_grad(&membership, &labels.values)) {
                *g += lambda * norm * c;
            }
        }
        // question positions carry no loss in the `All` domain
        let domain_len = dist.membership.len();
        let mut d_domain = vec![0.0; domain_len - ex.passage_len];
        d_domain.extend_from_slice(&d_membership);
        let (d_ps, d_pe) = membership_backward(&dist, &d_domain);
        let mask = vec![true; domain_len];
        let mut dh = hidden.zeros_like();
        let ctx = match self.config.context_softmax {
            SoftmaxDomain::Passage => boundary_backward(&hp, &ctx_params, &mask, &dist, &d_ps, &d_pe, &mut dhp),
            SoftmaxDomain::All => boundary_backward(&hidden, &ctx_params, &mask, &dist, &d_ps, &d_pe, &mut dh),
        };

        let mut grads = self.params.zero_grads();
        let l = &self.params.layout;
        grads[l.ans_w].data_mut().copy_from_slice(&ans.w);
        grads[l.ans_v].data_mut().copy_from_slice(&ans.v);
        grads[l.ans_bs].data_mut()[0] = ans.b_start;
        grads[l.ans_be].data_mut()[0] = ans.b_end;
        grads[l.ctx_w].data_mut().copy_from_slice(&ctx.w);
        grads[l.ctx_v].data_mut().copy_from_slice(&ctx.v);
        grads[l.ctx_bs].data_mut()[0] = ctx.b_start;
        grads[l.ctx_be].data_mut()[0] = ctx.b_end;

        let d = self.config.hidden;
        for (a, b) in dh.data_mut()[ex.passage_offset * d..].iter_mut().zip(dhp.data()) {
            *a += b;
        }
        encoder::encoder_backward(&self.params, &self.config, &cache, &dh, &mut grads);
        Ok((parts, grads))
    }

    /// Losses without gradients (no dropout).
    pub fn loss(&self, ex: &EncodedExample, lambda: f64, reduction: ContextReduction) -> Result<LossParts> {
        let out = self.forward(ex)?;
        let span = ex
            .span
            .ok_or_else(|| BlancError::Alignment(format!("example {} has no gold span", ex.id)))?;
        let labels = ex
            .soft_labels
            .as_ref()
            .ok_or_else(|| BlancError::Config(format!("example {} has no soft labels", ex.id)))?;
        let norm = match reduction {
            ContextReduction::Sum => 1.0,
            ContextReduction::Mean => 1.0 / ex.passage_len as f64,
        };
        let answer = answer_loss(&out.p_start, &out.p_end, span)?;
        let context = context_loss(&out.membership, &labels.values)? * norm;
        Ok(LossParts { answer, context, total: total_loss(answer, context, lambda) })
    }

    /// Best span in passage coordinates and its score.
    pub fn predict(&self, ex: &EncodedExample, max_answer_len: usize) -> Result<(crate::soft_label::AnswerSpan, f64)> {
        let out = self.forward(ex)?;
        predict_span(&out.p_start, &out.p_end, max_answer_len)
    }

    /// Mean losses and gradients over `examples`, without dropout.
    pub fn batch_gradients(
        &self,
        examples: &[EncodedExample],
        lambda: f64,
        reduction: ContextReduction,
    ) -> Result<(LossParts, Vec<Tensor>)> {
        if examples.is_empty() {
            return Err(BlancError::Empty("no examples".into()));
        }
        let mut total = LossParts::default();
        let mut grads = self.params.zero_grads();
        let scale = 1.0 / examples.len() as f64;
        for ex in examples {
            let (parts, g) = self.loss_and_grads(ex, lambda, reduction, None)?;
            total.answer += parts.answer * scale;
            total.context += parts.context * scale;
            total.total += parts.total * scale;
            for (a, b) in grads.iter_mut().zip(&g) {
                a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += scale * y);
            }
        }
        Ok((total, grads))
    }
}

/// Decodes every example; runs on up to `threads` worker threads, with
/// output in input order regardless of the thread count.
pub fn predict_examples(
    model: &QAModel,
    vocab: &Vocab,
    examples: &[QAExample],
    max_answer_len: usize,
    threads: usize,
) -> Result<Vec<Prediction>> {
    let one = |ex: &QAExample| -> Result<Prediction> {
        let enc = encode_example(ex, vocab, model.config.max_len, None)?;
        let (span, score) = model.predict(&enc, max_answer_len)?;
        let toks = ex.passage_tokens();
        let (cs, ce) = toks.token_span_to_char_span(span)?;
        Ok(Prediction {
            id: ex.id.clone(),
            text: crate::data::char_slice(&ex.passage, cs, ce).to_string(),
            span,
            char_span: Some((cs, ce)),
            score: Some(score),
        })
    };
    let threads = threads.max(1).min(examples.len().max(1));
    if threads == 1 {
        return examples.iter().map(one).collect();
    }
    let chunk = examples.len().div_ceil(threads);
    let parts: Vec<Result<Vec<Prediction>>> = std::thread::scope(|s| {
        let handles: Vec<_> = examples
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(one).collect::<Result<Vec<_>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("prediction worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(examples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Finite-difference check of `analytic` (mean gradients over `examples`)
/// for the parameters whose names match `filter` (exact name or prefix
/// ending in `.`); all parameters when `filter` is empty.
#[allow(clippy::too_many_arguments)]
pub fn gradcheck_model(
    model: &QAModel,
    examples: &[EncodedExample],
    lambda: f64,
    reduction: ContextReduction,
    analytic: &[Tensor],
    filter: &[String],
    epsilon: f64,
    tolerance: f64,
    stencil: Stencil,
) -> Result<GradCheckReport> {
    let selected: Vec<usize> = model
        .params
        .params
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            filter.is_empty()
                || filter.iter().any(|f| p.name == *f || (f.ends_with('.') && p.name.starts_with(f.as_str())))
        })
        .map(|(i, _)| i)
        .collect();
    if selected.is_empty() {
        return Err(BlancError::Config(format!("no parameter matches {filter:?}")));
    }
    let mut subset: Vec<Parameter> = selected
        .iter()
        .map(|&i| {
            let mut p = model.params.params[i].clone();
            p.grad = analytic[i].clone();
            p
        })
        .collect();
    let mut probe = model.clone();
    let mut failure = None;
    let report = finite_diff_gradcheck_with(
        |sub: &[Parameter]| {
            for (&i, p) in selected.iter().zip(sub) {
                probe.params.params[i].value.data_mut().copy_from_slice(p.value.data());
            }
            let mut sum = 0.0;
            for ex in examples {
                match probe.loss(ex, lambda, reduction) {
                    Ok(l) => sum += l.total,
                    Err(e) => {
                        failure.get_or_insert(e);
                    }
                }
            }
            sum / examples.len() as f64
        },
        &mut subset,
        epsilon,
        tolerance,
        stencil,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
