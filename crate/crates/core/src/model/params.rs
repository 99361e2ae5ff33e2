//! Named parameter set of the encoder and both heads.

use crate::block_attention::ContextHeadParams;
use crate::error::{BlancError, Result};
use crate::numerics::{Parameter, SeededRng, Tensor};

use super::config::EncoderConfig;
use super::heads::AnswerHeadParams;

/// Indices of one transformer layer's parameters inside the flat list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct LayerIdx {
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub token: usize,
    pub position: usize,
    pub segment: usize,
    pub layers: Vec<LayerIdx>,
    pub ctx_w: usize,
    pub ctx_v: usize,
    pub ctx_bs: usize,
    pub ctx_be: usize,
    pub ans_w: usize,
    pub ans_v: usize,
    pub ans_bs: usize,
    pub ans_be: usize,
}

/// Initialization rule for one tensor.
#[derive(Clone, Copy)]
enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

struct Builder {
    specs: Vec<(String, Vec<usize>, Init)>,
}

impl Builder {
    fn push(&mut self, name: String, shape: &[usize], init: Init) -> usize {
        self.specs.push((name, shape.to_vec(), init));
        self.specs.len() - 1
    }
}

fn plan(cfg: &EncoderConfig) -> (Layout, Vec<(String, Vec<usize>, Init)>) {
    let d = cfg.hidden;
    let f = cfg.ffn;
    let mut b = Builder { specs: Vec::new() };
    let emb = Init::Normal(1.0);
    let lin = |fan_in: usize| Init::Normal((1.0 / fan_in as f64).sqrt());
    let token = b.push("embed.token".into(), &[cfg.vocab_size, d], emb);
    let position = b.push("embed.position".into(), &[cfg.max_len, d], emb);
    let segment = b.push("embed.segment".into(), &[2, d], emb);
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let n = |s: &str| format!("layer{l}.{s}");
        layers.push(LayerIdx {
            wq: b.push(n("attn.wq"), &[d, d], lin(d)),
            bq: b.push(n("attn.bq"), &[d], Init::Zeros),
            wk: b.push(n("attn.wk"), &[d, d], lin(d)),
            wv: b.push(n("attn.wv"), &[d, d], lin(d)),
            bv: b.push(n("attn.bv"), &[d], Init::Zeros),
            wo: b.push(n("attn.wo"), &[d, d], lin(d)),
            bo: b.push(n("attn.bo"), &[d], Init::Zeros),
            ln1_g: b.push(n("ln1.gamma"), &[d], Init::Ones),
            ln1_b: b.push(n("ln1.beta"), &[d], Init::Zeros),
            w1: b.push(n("ffn.w1"), &[d, f], lin(d)),
            b1: b.push(n("ffn.b1"), &[f], Init::Zeros),
            w2: b.push(n("ffn.w2"), &[f, d], lin(f)),
            b2: b.push(n("ffn.b2"), &[d], Init::Zeros),
            ln2_g: b.push(n("ln2.gamma"), &[d], Init::Ones),
            ln2_b: b.push(n("ln2.beta"), &[d], Init::Zeros),
        });
    }
    let head = lin(d);
    let layout = Layout {
        token,
        position,
        segment,
        layers,
        ctx_w: b.push("context.w".into(), &[d], head),
        ctx_v: b.push("context.v".into(), &[d], head),
        ctx_bs: b.push("context.b_start".into(), &[1], Init::Zeros),
        ctx_be: b.push("context.b_end".into(), &[1], Init::Zeros),
        ans_w: b.push("answer.w".into(), &[d], head),
        ans_v: b.push("answer.v".into(), &[d], head),
        ans_bs: b.push("answer.b_start".into(), &[1], Init::Zeros),
        ans_be: b.push("answer.b_end".into(), &[1], Init::Zeros),
    };
    (layout, b.specs)
}

/// Encoder weights plus context and answer heads, stored as a flat list of
/// named parameters in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub params: Vec<Parameter>,
    pub(crate) layout: Layout,
}

impl ModelParams {
    /// Random initialization from `cfg.seed`.
    pub fn init(cfg: &EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let (layout, specs) = plan(cfg);
        let mut rng = SeededRng::new(cfg.seed);
        let params = specs
            .into_iter()
            .map(|(name, shape, init)| {
                let mut t = Tensor::zeros(&shape);
                match init {
                    Init::Normal(std) => t.data_mut().iter_mut().for_each(|v| *v = std * rng.normal()),
                    Init::Ones => t.fill(1.0),
                    Init::Zeros => {}
                }
                Parameter::new(name, t)
            })
            .collect();
        Ok(ModelParams { params, layout })
    }

    /// Every parameter zero (and layer-norm gains one).
    pub fn zeros(cfg: &EncoderConfig) -> Result<Self> {
        let mut p = Self::init(cfg)?;
        for (param, (_, _, init)) in p.params.iter_mut().zip(plan(cfg).1) {
            param.value.fill(if matches!(init, Init::Ones) { 1.0 } else { 0.0 });
        }
        Ok(p)
    }

    /// Rebuilds from named tensors, checking names and shapes against `cfg`.
    pub fn from_tensors(cfg: &EncoderConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        cfg.validate()?;
        let (layout, specs) = plan(cfg);
        if tensors.len() != specs.len() {
            return Err(BlancError::Checkpoint(format!(
                "expected {} tensors, found {}",
                specs.len(),
                tensors.len()
            )));
        }
        let params = specs
            .into_iter()
            .zip(tensors)
            .map(|((name, shape, _), (got_name, t))| {
                if name != got_name || t.shape() != shape.as_slice() {
                    return Err(BlancError::Checkpoint(format!(
                        "tensor {got_name} {:?} does not match expected {name} {shape:?}",
                        t.shape()
                    )));
                }
                Ok(Parameter::new(name, t))
            })
            .collect::<Result<_>>()?;
        Ok(ModelParams { params, layout })
    }

    pub fn value(&self, i: usize) -> &Tensor {
        &self.params[i].value
    }

    pub fn context_head(&self) -> ContextHeadParams {
        let l = &self.layout;
        ContextHeadParams {
            w: self.value(l.ctx_w).data().to_vec(),
            v: self.value(l.ctx_v).data().to_vec(),
            b_start: self.value(l.ctx_bs).data()[0],
            b_end: self.value(l.ctx_be).data()[0],
        }
    }

    pub fn answer_head(&self) -> AnswerHeadParams {
        let l = &self.layout;
        AnswerHeadParams {
            w: self.value(l.ans_w).data().to_vec(),
            v: self.value(l.ans_v).data().to_vec(),
            b_start: self.value(l.ans_bs).data()[0],
            b_end: self.value(l.ans_be).data()[0],
        }
    }

    /// Zero-filled gradient buffers in parameter order.
    pub fn zero_grads(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.zeros_like()).collect()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }
}
