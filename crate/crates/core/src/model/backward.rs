//! Reverse-mode gradients of the cross-entropy loss, written out by hand.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix};
use crate::model::forward::{check_params, check_tokens, forward_cached, gelu_grad, Cache, NormCache};
use crate::model::{LayerParams, ModelConfig, NormParams, Parameters};

/// Samples per partial sum when reducing a batch; fixed so the summation order
/// does not depend on the thread pool.
const REDUCE_CHUNK: usize = 8;

/// `log Σ exp(logits) − logits[label]` and its gradient `softmax(logits) − onehot`.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

/// Accumulates `LayerNorm` parameter gradients into `grad` and returns `dL/dx`.
fn layer_norm_backward(dy: &Matrix, cache: &NormCache, norm: &NormParams, grad: &mut NormParams) -> Matrix {
    let (n, dm) = dy.shape();
    let gain = norm.gain.as_slice();
    let mut dx = Matrix::zeros(n, dm);
    for r in 0..n {
        let dyr = dy.row(r);
        let xh = cache.xhat.row(r);
        let gg = grad.gain.as_mut_slice();
        for c in 0..dm {
            gg[c] += dyr[c] * xh[c];
        }
        let gb = grad.bias.as_mut_slice();
        for c in 0..dm {
            gb[c] += dyr[c];
        }
        let mut mean_dxh = 0.0;
        let mut mean_dxh_xh = 0.0;
        for c in 0..dm {
            let dxh = dyr[c] * gain[c];
            mean_dxh += dxh;
            mean_dxh_xh += dxh * xh[c];
        }
        mean_dxh /= dm as f64;
        mean_dxh_xh /= dm as f64;
        let is = cache.inv_std[r];
        let out = dx.row_mut(r);
        for c in 0..dm {
            out[c] = is * (dyr[c] * gain[c] - mean_dxh - xh[c] * mean_dxh_xh);
        }
    }
    dx
}

fn add_column_sums(dst: &mut Matrix, src: &Matrix) {
    let sums = src.column_sums();
    dst.add_assign(&sums);
}

/// Backpropagates `d_out` (gradient w.r.t. the layer output) through one block,
/// accumulating into `grad` and returning the gradient w.r.t. the layer input.
fn layer_backward(
    d_out: Matrix,
    cache: &crate::model::forward::LayerCache,
    layer: &LayerParams,
    grad: &mut LayerParams,
    config: &ModelConfig,
) -> Matrix {
    let d = config.head_dim;
    let scale = config.attention_scale();

    // Y = H + GELU(Z) W2 + b2
    let mut d_hidden = d_out.clone();
    gemm(1.0, &cache.act, true, &d_out, false, 1.0, &mut grad.mlp_w2);
    add_column_sums(&mut grad.mlp_b2, &d_out);
    let mut d_pre = d_out.matmul_t(&layer.mlp_w2);
    for (g, &z) in d_pre.as_mut_slice().iter_mut().zip(cache.pre_act.as_slice()) {
        *g *= gelu_grad(z);
    }
    gemm(1.0, &cache.mlp_in, true, &d_pre, false, 1.0, &mut grad.mlp_w1);
    add_column_sums(&mut grad.mlp_b1, &d_pre);
    let d_mlp_in = d_pre.matmul_t(&layer.mlp_w1);
    match (&cache.norm2, &layer.norm2, &mut grad.norm2) {
        (Some(c), Some(n), Some(g)) => d_hidden.add_assign(&layer_norm_backward(&d_mlp_in, c, n, g)),
        _ => d_hidden.add_assign(&d_mlp_in),
    }

    // H = X + A Wo + bo
    let mut d_input = d_hidden.clone();
    gemm(1.0, &cache.concat, true, &d_hidden, false, 1.0, &mut grad.proj_w);
    add_column_sums(&mut grad.proj_b, &d_hidden);
    let d_concat = d_hidden.matmul_t(&layer.proj_w);

    let mut d_attn_in = Matrix::zeros(cache.attn_in.rows(), cache.attn_in.cols());
    for (i, head) in cache.heads.iter().enumerate() {
        let d_output = d_concat.columns(i * d, d);
        // A_i = P v
        let d_weights = d_output.matmul_t(&head.v);
        let d_v = head.weights.t_matmul(&d_output);
        // P = softmax(S): dS = P ⊙ (dP − rowsum(dP ⊙ P))
        let mut d_scores = d_weights;
        for r in 0..d_scores.rows() {
            let p = head.weights.row(r);
            let dot: f64 = d_scores.row(r).iter().zip(p).map(|(a, b)| a * b).sum();
            for (g, &pv) in d_scores.row_mut(r).iter_mut().zip(p) {
                *g = pv * (*g - dot);
            }
        }
        // S = scale · q kᵀ
        let d_q = d_scores.matmul(&head.k).scaled(scale);
        let d_k = d_scores.t_matmul(&head.q).scaled(scale);
        for (dproj, w, g) in [
            (&d_q, &layer.query[i], &mut grad.query[i]),
            (&d_k, &layer.key[i], &mut grad.key[i]),
            (&d_v, &layer.value[i], &mut grad.value[i]),
        ] {
            gemm(1.0, &cache.attn_in, true, dproj, false, 1.0, g);
            gemm(1.0, dproj, false, w, true, 1.0, &mut d_attn_in);
        }
    }
    match (&cache.norm1, &layer.norm1, &mut grad.norm1) {
        (Some(c), Some(n), Some(g)) => d_input.add_assign(&layer_norm_backward(&d_attn_in, c, n, g)),
        _ => d_input.add_assign(&d_attn_in),
    }
    d_input
}

/// Accumulates the gradient of one sample's loss into `grad`; returns the loss.
fn accumulate(cache: &Cache, label: usize, params: &Parameters, config: &ModelConfig, grad: &mut Parameters) -> f64 {
    let (loss, d_logits) = cross_entropy(&cache.logits, label);
    let d_logits = Matrix::from_raw(1, d_logits.len(), d_logits);
    gemm(1.0, &cache.pooled, true, &d_logits, false, 1.0, &mut grad.head_w);
    grad.head_b.add_assign(&d_logits);
    let d_pooled = d_logits.matmul_t(&params.head_w);

    let n = cache.tokens.len();
    let mut d_features = Matrix::zeros(n, config.embed_dim);
    for r in 0..n {
        for (o, &g) in d_features.row_mut(r).iter_mut().zip(d_pooled.as_slice()) {
            *o = g / n as f64;
        }
    }
    let mut dx = match (&cache.final_norm, &params.final_norm, &mut grad.final_norm) {
        (Some(c), Some(nrm), Some(g)) => layer_norm_backward(&d_features, c, nrm, g),
        _ => d_features,
    };
    for ((lc, lp), lg) in cache
        .layers
        .iter()
        .zip(&params.layers)
        .zip(grad.layers.iter_mut())
        .rev()
    {
        dx = layer_backward(dx, lc, lp, lg, config);
    }
    for (r, &t) in cache.tokens.iter().enumerate() {
        for (g, &v) in grad.token_embed.row_mut(t).iter_mut().zip(dx.row(r)) {
            *g += v;
        }
        for (g, &v) in grad.pos_embed.row_mut(r).iter_mut().zip(dx.row(r)) {
            *g += v;
        }
    }
    loss
}

/// Exact gradient of `cross_entropy(model(tokens), label)` for every parameter,
/// returned in the same structure as `params`, together with the loss.
pub fn backward(tokens: &[usize], label: usize, params: &Parameters, config: &ModelConfig) -> Result<(Parameters, f64)> {
    check_params(params, config)?;
    check_tokens(tokens, config)?;
    check_label(label, config)?;
    let cache = forward_cached(tokens, params, config);
    let mut grad = Parameters::zeros(config);
    let loss = accumulate(&cache, label, params, config, &mut grad);
    Ok((grad, loss))
}

fn check_label(label: usize, config: &ModelConfig) -> Result<()> {
    if label >= config.num_classes {
        return Err(Error::validation(format!(
            "label {label} out of range for {} classes",
            config.num_classes
        )));
    }
    Ok(())
}

/// Mean loss and mean gradient over a batch. Samples are reduced in fixed-size
/// chunks and the chunk sums added in order, so the result is bit-identical
/// for any number of worker threads.
pub fn batch_gradients(
    batch: &[Vec<usize>],
    labels: &[usize],
    params: &Parameters,
    config: &ModelConfig,
) -> Result<(Parameters, f64)> {
    if batch.is_empty() || batch.len() != labels.len() {
        return Err(Error::validation("batch must be non-empty with one label per sample"));
    }
    check_params(params, config)?;
    for (tokens, &label) in batch.iter().zip(labels) {
        check_tokens(tokens, config)?;
        check_label(label, config)?;
    }
    let items: Vec<(&Vec<usize>, usize)> = batch.iter().zip(labels.iter().copied()).collect();
    let partials: Vec<(Parameters, f64)> = items
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut grad = Parameters::zeros(config);
            let mut loss = 0.0;
            for (tokens, label) in chunk {
                let cache = forward_cached(tokens, params, config);
                loss += accumulate(&cache, *label, params, config, &mut grad);
            }
            (grad, loss)
        })
        .collect();
    let mut iter = partials.into_iter();
    let (mut grad, mut loss) = iter.next().expect("non-empty batch");
    for (g, l) in iter {
        grad.axpy(1.0, &g);
        loss += l;
    }
    let inv = 1.0 / batch.len() as f64;
    grad.scale(inv);
    Ok((grad, loss * inv))
}

/// Loss of one sample without gradients.
pub fn sample_loss(tokens: &[usize], label: usize, params: &Parameters, config: &ModelConfig) -> Result<f64> {
    check_params(params, config)?;
    check_tokens(tokens, config)?;
    check_label(label, config)?;
    let cache = forward_cached(tokens, params, config);
    Ok(cross_entropy(&cache.logits, label).0)
}
