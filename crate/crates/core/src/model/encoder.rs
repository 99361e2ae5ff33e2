//! Post-norm transformer encoder with hand-written backward pass.
//!
//! Input embedding is token + position + segment. Each layer applies
//! multi-head self-attention and a GELU feed-forward block, each followed by
//! a residual connection and layer normalization. Sequences are processed one
//! at a time, so no padding mask is needed.

use crate::error::{BlancError, Result};
use crate::numerics::{gemm, SeededRng, Tensor};

use super::config::EncoderConfig;
use super::input::EncodedExample;
use super::params::{LayerIdx, ModelParams};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub(crate) struct LayerCache {
    x_in: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities per head, `t x t` each.
    probs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
    attn_drop: Option<Vec<f64>>,
    xhat1: Vec<f64>,
    rstd1: Vec<f64>,
    x1: Vec<f64>,
    f1: Vec<f64>,
    g: Vec<f64>,
    ffn_drop: Option<Vec<f64>>,
    xhat2: Vec<f64>,
    rstd2: Vec<f64>,
}

pub(crate) struct EncoderCache {
    t: usize,
    token_ids: Vec<usize>,
    segments: Vec<usize>,
    emb_drop: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
}

/// `y = x w + b` for row-major `x: t x n`, `w: n x m`.
fn linear(t: usize, n: usize, m: usize, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(t * m);
    for _ in 0..t {
        y.extend_from_slice(b);
    }
    gemm(t, n, m, x, false, w, false, &mut y, 1.0, 1.0);
    y
}

/// Accumulates `dw += x^T dy`, `db += colsum(dy)` and returns `dy w^T`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    t: usize,
    n: usize,
    m: usize,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    gemm(n, t, m, x, true, dy, false, dw, 1.0, 1.0);
    for row in dy.chunks_exact(m) {
        for (a, b) in db.iter_mut().zip(row) {
            *a += b;
        }
    }
    let mut dx = vec![0.0; t * n];
    gemm(t, m, n, dy, false, w, true, &mut dx, 1.0, 0.0);
    dx
}

fn dropout_mask(rng: &mut SeededRng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..len).map(|_| if rng.uniform() < rate { 0.0 } else { keep }).collect()
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }
}

/// Row-wise layer normalization; returns `(y, xhat, rstd)`.
fn layer_norm(x: &[f64], d: usize, gamma: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let t = x.len() / d;
    let mut y = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut rstd = vec![0.0; t];
    for r in 0..t {
        let row = &x[r * d..(r + 1) * d];
        let mu = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let xh = (row[j] - mu) * rs;
            xhat[r * d + j] = xh;
            y[r * d + j] = gamma[j] * xh + beta[j];
        }
    }
    (y, xhat, rstd)
}

fn layer_norm_backward(
    dy: &[f64],
    xhat: &[f64],
    rstd: &[f64],
    d: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; dy.len()];
    for (r, &rs) in rstd.iter().enumerate() {
        let o = r * d;
        let mut mean_g = 0.0;
        let mut mean_gx = 0.0;
        for j in 0..d {
            let g = dy[o + j] * gamma[j];
            dgamma[j] += dy[o + j] * xhat[o + j];
            dbeta[j] += dy[o + j];
            mean_g += g;
            mean_gx += g * xhat[o + j];
        }
        mean_g /= d as f64;
        mean_gx /= d as f64;
        for j in 0..d {
            let g = dy[o + j] * gamma[j];
            dx[o + j] = rs * (g - mean_g - xhat[o + j] * mean_gx);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Copies head `h`'s column block out of a `t x d` matrix.
fn head_block(x: &[f64], t: usize, d: usize, h: usize, dh: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t * dh);
    for r in 0..t {
        out.extend_from_slice(&x[r * d + h * dh..r * d + (h + 1) * dh]);
    }
    out
}

fn add_head_block(x: &mut [f64], block: &[f64], t: usize, d: usize, h: usize, dh: usize) {
    for r in 0..t {
        for (a, b) in x[r * d + h * dh..r * d + (h + 1) * dh].iter_mut().zip(&block[r * dh..(r + 1) * dh]) {
            *a += b;
        }
    }
}

fn softmax_rows(s: &mut [f64], t: usize) {
    for row in s.chunks_exact_mut(t) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
}

pub(crate) fn encoder_forward(
    p: &ModelParams,
    cfg: &EncoderConfig,
    ex: &EncodedExample,
    mut dropout: Option<&mut SeededRng>,
) -> Result<(Tensor, EncoderCache)> {
    let t = ex.len();
    let d = cfg.hidden;
    if t > cfg.max_len {
        return Err(BlancError::Length { len: t, max: cfg.max_len });
    }
    if ex.segments.len() != t {
        return Err(BlancError::dim("encode", t, ex.segments.len()));
    }
    if let Some(&bad) = ex.token_ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(BlancError::Bounds(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size)));
    }
    if let Some(&bad) = ex.segments.iter().find(|&&s| s > 1) {
        return Err(BlancError::Bounds(format!("segment id {bad} outside {{0, 1}}")));
    }
    let l = &p.layout;
    let rate = if dropout.is_some() { cfg.dropout } else { 0.0 };
    let mut draw = |len: usize| -> Option<Vec<f64>> {
        match dropout.as_deref_mut() {
            Some(rng) if rate > 0.0 => Some(dropout_mask(rng, len, rate)),
            _ => None,
        }
    };

    let (tok, pos, seg) = (p.value(l.token), p.value(l.position), p.value(l.segment));
    let mut x = Vec::with_capacity(t * d);
    for i in 0..t {
        let (a, b, c) = (tok.row(ex.token_ids[i]), pos.row(i), seg.row(ex.segments[i]));
        x.extend((0..d).map(|j| a[j] + b[j] + c[j]));
    }
    let emb_drop = draw(t * d);
    apply_mask(&mut x, &emb_drop);

    let heads = cfg.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut layers = Vec::with_capacity(cfg.layers);
    for li in &l.layers {
        let val = |i: usize| p.value(i).data();
        let q = linear(t, d, d, &x, val(li.wq), val(li.bq));
        // no key bias: it adds a per-row constant to the scores, which the softmax removes
        let k = linear(t, d, d, &x, val(li.wk), &vec![0.0; d]);
        let v = linear(t, d, d, &x, val(li.wv), val(li.bv));
        let mut ctx = vec![0.0; t * d];
        let mut probs = Vec::with_capacity(heads);
        for h in 0..heads {
            let (qh, kh, vh) = (head_block(&q, t, d, h, dh), head_block(&k, t, d, h, dh), head_block(&v, t, d, h, dh));
            let mut s = vec![0.0; t * t];
            gemm(t, dh, t, &qh, false, &kh, true, &mut s, scale, 0.0);
            softmax_rows(&mut s, t);
            let mut oh = vec![0.0; t * dh];
            gemm(t, t, dh, &s, false, &vh, false, &mut oh, 1.0, 0.0);
            add_head_block(&mut ctx, &oh, t, d, h, dh);
            probs.push(s);
        }
        let mut attn = linear(t, d, d, &ctx, val(li.wo), val(li.bo));
        let attn_drop = draw(t * d);
        apply_mask(&mut attn, &attn_drop);
        let r1: Vec<f64> = x.iter().zip(&attn).map(|(a, b)| a + b).collect();
        let (x1, xhat1, rstd1) = layer_norm(&r1, d, val(li.ln1_g), val(li.ln1_b));

        let f = cfg.ffn;
        let f1 = linear(t, d, f, &x1, val(li.w1), val(li.b1));
        let g: Vec<f64> = f1.iter().map(|&z| gelu(z)).collect();
        let mut f2 = linear(t, f, d, &g, val(li.w2), val(li.b2));
        let ffn_drop = draw(t * d);
        apply_mask(&mut f2, &ffn_drop);
        let r2: Vec<f64> = x1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let (x2, xhat2, rstd2) = layer_norm(&r2, d, val(li.ln2_g), val(li.ln2_b));

        layers.push(LayerCache {
            x_in: std::mem::replace(&mut x, x2),
            q,
            k,
            v,
            probs,
            ctx,
            attn_drop,
            xhat1,
            rstd1,
            x1,
            f1,
            g,
            ffn_drop,
            xhat2,
            rstd2,
        });
    }
    let cache = EncoderCache {
        t,
        token_ids: ex.token_ids.clone(),
        segments: ex.segments.clone(),
        emb_drop,
        layers,
    };
    Ok((Tensor::new(vec![t, d], x)?, cache))
}

fn layer_backward(
    p: &ModelParams,
    cfg: &EncoderConfig,
    li: &LayerIdx,
    c: &LayerCache,
    t: usize,
    dout: Vec<f64>,
    grads: &mut [Tensor],
) -> Vec<f64> {
    let d = cfg.hidden;
    let f = cfg.ffn;
    let heads = cfg.heads;
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let val = |i: usize| p.value(i).data();

    // second residual block
    let (dg2, db2) = two_mut(grads, li.ln2_g, li.ln2_b);
    let dr2 = layer_norm_backward(&dout, &c.xhat2, &c.rstd2, d, val(li.ln2_g), dg2, db2);
    let mut df2 = dr2.clone();
    apply_mask(&mut df2, &c.ffn_drop);
    let (dw2, dbias2) = two_mut(grads, li.w2, li.b2);
    let dgel = linear_backward(t, f, d, &c.g, val(li.w2), &df2, dw2, dbias2);
    let df1: Vec<f64> = dgel.iter().zip(&c.f1).map(|(g, &z)| g * gelu_grad(z)).collect();
    let (dw1, dbias1) = two_mut(grads, li.w1, li.b1);
    let mut dx1 = linear_backward(t, d, f, &c.x1, val(li.w1), &df1, dw1, dbias1);
    dx1.iter_mut().zip(&dr2).for_each(|(a, b)| *a += b);

    // first residual block
    let (dg1, db1) = two_mut(grads, li.ln1_g, li.ln1_b);
    let dr1 = layer_norm_backward(&dx1, &c.xhat1, &c.rstd1, d, val(li.ln1_g), dg1, db1);
    let mut dattn = dr1.clone();
    apply_mask(&mut dattn, &c.attn_drop);
    let (dwo, dbo) = two_mut(grads, li.wo, li.bo);
    let dctx = linear_backward(t, d, d, &c.ctx, val(li.wo), &dattn, dwo, dbo);

    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    for h in 0..heads {
        let (qh, kh, vh) = (head_block(&c.q, t, d, h, dh), head_block(&c.k, t, d, h, dh), head_block(&c.v, t, d, h, dh));
        let doh = head_block(&dctx, t, d, h, dh);
        let pr = &c.probs[h];
        let mut dp = vec![0.0; t * t];
        gemm(t, dh, t, &doh, false, &vh, true, &mut dp, 1.0, 0.0);
        let mut dvh = vec![0.0; t * dh];
        gemm(t, t, dh, pr, true, &doh, false, &mut dvh, 1.0, 0.0);
        let mut ds = vec![0.0; t * t];
        for r in 0..t {
            let row = r * t..(r + 1) * t;
            let inner: f64 = pr[row.clone()].iter().zip(&dp[row.clone()]).map(|(a, b)| a * b).sum();
            for j in row {
                ds[j] = pr[j] * (dp[j] - inner);
            }
        }
        let mut dqh = vec![0.0; t * dh];
        gemm(t, t, dh, &ds, false, &kh, false, &mut dqh, scale, 0.0);
        let mut dkh = vec![0.0; t * dh];
        gemm(t, t, dh, &ds, true, &qh, false, &mut dkh, scale, 0.0);
        add_head_block(&mut dq, &dqh, t, d, h, dh);
        add_head_block(&mut dk, &dkh, t, d, h, dh);
        add_head_block(&mut dv, &dvh, t, d, h, dh);
    }
    let mut dx = dr1;
    for (w, b, dy) in [(li.wq, li.bq, &dq), (li.wv, li.bv, &dv)] {
        let (dw, db) = two_mut(grads, w, b);
        let part = linear_backward(t, d, d, &c.x_in, val(w), dy, dw, db);
        dx.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    }
    let mut unused_bias = vec![0.0; d];
    let part = linear_backward(t, d, d, &c.x_in, val(li.wk), &dk, grads[li.wk].data_mut(), &mut unused_bias);
    dx.iter_mut().zip(&part).for_each(|(a, b)| *a += b);
    dx
}

/// Mutable data of two distinct gradient tensors.
fn two_mut(grads: &mut [Tensor], a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    assert!(a < b, "layout places weights before their biases");
    let (lo, hi) = grads.split_at_mut(b);
    (lo[a].data_mut(), hi[0].data_mut())
}

/// Accumulates encoder parameter gradients for upstream gradient `dh`.
pub(crate) fn encoder_backward(
    p: &ModelParams,
    cfg: &EncoderConfig,
    cache: &EncoderCache,
    dh: &Tensor,
    grads: &mut [Tensor],
) {
    let t = cache.t;
    let d = cfg.hidden;
    let mut dx = dh.data().to_vec();
    for (li, c) in p.layout.layers.iter().zip(&cache.layers).rev() {
        dx = layer_backward(p, cfg, li, c, t, dx, grads);
    }
    apply_mask(&mut dx, &cache.emb_drop);
    let l = &p.layout;
    for i in 0..t {
        let g = &dx[i * d..(i + 1) * d];
        for (idx, row) in [(l.token, cache.token_ids[i]), (l.position, i), (l.segment, cache.segments[i])] {
            grads[idx].row_mut(row).iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradcheck_with, Parameter, Stencil};

    fn param(name: &str, data: Vec<f64>, grad: Vec<f64>) -> Parameter {
        let mut p = Parameter::new(name, Tensor::from_vec(data));
        p.grad = Tensor::from_vec(grad);
        p
    }

    fn randn(rng: &mut SeededRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.normal()).collect()
    }

    fn dotv(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let (t, n, m) = (3, 4, 5);
        let mut rng = SeededRng::new(8);
        let (x, w, b, c) = (randn(&mut rng, t * n), randn(&mut rng, n * m), randn(&mut rng, m), randn(&mut rng, t * m));
        let (mut dw, mut db) = (vec![0.0; n * m], vec![0.0; m]);
        let dx = linear_backward(t, n, m, &x, &w, &c, &mut dw, &mut db);
        let mut ps = [param("x", x, dx), param("w", w, dw), param("b", b, db)];
        let r = finite_diff_gradcheck_with(
            |p| dotv(&linear(t, n, m, p[0].value.data(), p[1].value.data(), p[2].value.data()), &c),
            &mut ps,
            1e-4,
            1e-6,
            Stencil::Central4,
        );
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn layer_norm_backward_matches_finite_differences() {
        let d = 6;
        let mut rng = SeededRng::new(9);
        let x = randn(&mut rng, 3 * d);
        let gamma: Vec<f64> = (0..d).map(|_| 1.0 + 0.3 * rng.normal()).collect();
        let beta = randn(&mut rng, d);
        let c = randn(&mut rng, 3 * d);
        let (_, xhat, rstd) = layer_norm(&x, d, &gamma, &beta);
        let (mut dg, mut db) = (vec![0.0; d], vec![0.0; d]);
        let dx = layer_norm_backward(&c, &xhat, &rstd, d, &gamma, &mut dg, &mut db);
        let mut ps = [param("x", x, dx), param("gamma", gamma, dg), param("beta", beta, db)];
        let r = finite_diff_gradcheck_with(
            |p| dotv(&layer_norm(p[0].value.data(), d, p[1].value.data(), p[2].value.data()).0, &c),
            &mut ps,
            1e-4,
            1e-6,
            Stencil::Central4,
        );
        assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for &x in &[-3.0, -0.5, 0.0, 0.3, 2.0] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = [1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 0.0, 1.0];
        let (y, _, _) = layer_norm(&x, 4, &[1.0; 4], &[0.0; 4]);
        for row in y.chunks(4) {
            let mu: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / 4.0;
            assert!(mu.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }
}
