//! Forward pass of the toy classifier.
//!
//! Per layer (pre-norm when layer normalization is on):
//!
//! ```text
//! Xn = LN1(X)
//! A_i = softmax(scale · (Xn Wq_i)(Xn Wk_i)ᵀ) (Xn Wv_i)      for each head i
//! A   = [A_1, …, A_h]
//! H   = X + A Wo + bo
//! Y   = H + GELU(LN2(H) W1 + b1) W2 + b2
//! ```
//!
//! followed by a final norm, mean pooling over tokens and a linear classifier.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{HeadParams, LayerParams, ModelConfig, NormParams, Parameters};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // √(2/π)

/// One head's outputs: the `N × N` attention weights and the `N × d` output.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTrace {
    pub weights: Matrix,
    pub output: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub heads: Vec<HeadTrace>,
    /// `[A_1, …, A_h]`, before the output projection.
    pub concat: Matrix,
    /// `A Wo + bo`.
    pub projected: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub logits: Vec<f64>,
}

pub(crate) struct NormCache {
    pub xhat: Matrix,
    pub inv_std: Vec<f64>,
}

pub(crate) struct HeadCache {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    pub weights: Matrix,
    pub output: Matrix,
}

pub(crate) struct LayerCache {
    pub norm1: Option<NormCache>,
    pub attn_in: Matrix,
    pub heads: Vec<HeadCache>,
    pub concat: Matrix,
    pub projected: Matrix,
    pub hidden: Matrix,
    pub norm2: Option<NormCache>,
    pub mlp_in: Matrix,
    pub pre_act: Matrix,
    pub act: Matrix,
}

pub(crate) struct Cache {
    pub tokens: Vec<usize>,
    pub layers: Vec<LayerCache>,
    pub final_norm: Option<NormCache>,
    pub pooled: Matrix,
    pub logits: Vec<f64>,
}

impl Cache {
    pub fn into_trace(self) -> ForwardTrace {
        ForwardTrace {
            layers: self
                .layers
                .into_iter()
                .map(|l| LayerTrace {
                    heads: l
                        .heads
                        .into_iter()
                        .map(|h| HeadTrace {
                            weights: h.weights,
                            output: h.output,
                        })
                        .collect(),
                    concat: l.concat,
                    projected: l.projected,
                })
                .collect(),
            logits: self.logits,
        }
    }
}

pub(crate) fn layer_norm(x: &Matrix, norm: &NormParams) -> (Matrix, NormCache) {
    let (n, dm) = x.shape();
    let mut xhat = Matrix::zeros(n, dm);
    let mut inv_std = Vec::with_capacity(n);
    let mut out = Matrix::zeros(n, dm);
    for r in 0..n {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / dm as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / dm as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std.push(is);
        for c in 0..dm {
            let h = (row[c] - mean) * is;
            xhat[(r, c)] = h;
            out[(r, c)] = h * norm.gain.as_slice()[c] + norm.bias.as_slice()[c];
        }
    }
    (out, NormCache { xhat, inv_std })
}

#[inline]
pub(crate) fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(z: f64) -> f64 {
    let t = (GELU_C * (z + 0.044715 * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
}

/// Numerically stable row softmax in place; masked entries (`j > i` when
/// `causal`) get weight exactly zero.
pub(crate) fn softmax_rows(s: &mut Matrix, causal: bool) {
    for r in 0..s.rows() {
        let row = s.row_mut(r);
        let live = if causal { r + 1 } else { row.len() };
        let max = row[..live].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in &mut row[..live] {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in &mut row[..live] {
            *v /= sum;
        }
        for v in &mut row[live..] {
            *v = 0.0;
        }
    }
}

fn check_head(x: &Matrix, head: HeadParams<'_>, config: &ModelConfig) -> Result<()> {
    let want = (config.embed_dim, config.head_dim);
    for (name, m) in [("query", head.query), ("key", head.key), ("value", head.value)] {
        if m.shape() != want {
            return Err(Error::validation(format!(
                "{name} projection is {:?}, expected {want:?}",
                m.shape()
            )));
        }
    }
    if x.cols() != config.embed_dim {
        return Err(Error::validation(format!(
            "attention input has {} columns, expected {}",
            x.cols(),
            config.embed_dim
        )));
    }
    Ok(())
}

fn head_forward(x: &Matrix, head: HeadParams<'_>, config: &ModelConfig) -> HeadCache {
    let q = x.matmul(head.query);
    let k = x.matmul(head.key);
    let v = x.matmul(head.value);
    let mut weights = q.matmul_t(&k).scaled(config.attention_scale());
    softmax_rows(&mut weights, config.causal);
    let output = weights.matmul(&v);
    HeadCache {
        q,
        k,
        v,
        weights,
        output,
    }
}

/// One attention head on an `N × D` input: returns the head output `A_i` (`N × d`)
/// and the row-stochastic weights `W` (`N × N`) with `A_i = W · v`.
pub fn attention_head_forward(
    x: &Matrix,
    head: HeadParams<'_>,
    config: &ModelConfig,
) -> Result<(Matrix, Matrix)> {
    check_head(x, head, config)?;
    let c = head_forward(x, head, config);
    Ok((c.output, c.weights))
}

fn check_layer(layer: &LayerParams, config: &ModelConfig) -> Result<()> {
    let (dm, hidden) = (config.embed_dim, config.mlp_hidden());
    if layer.num_heads() != config.num_heads
        || layer.key.len() != config.num_heads
        || layer.value.len() != config.num_heads
    {
        return Err(Error::validation("layer head count disagrees with config"));
    }
    let expected = [
        (layer.proj_w.shape(), (dm, dm)),
        (layer.proj_b.shape(), (1, dm)),
        (layer.mlp_w1.shape(), (dm, hidden)),
        (layer.mlp_b1.shape(), (1, hidden)),
        (layer.mlp_w2.shape(), (hidden, dm)),
        (layer.mlp_b2.shape(), (1, dm)),
    ];
    if expected.iter().any(|(got, want)| got != want) {
        return Err(Error::validation("layer projection shapes disagree with config"));
    }
    if layer.norm1.is_some() != config.use_layernorm || layer.norm2.is_some() != config.use_layernorm {
        return Err(Error::validation("layer norm presence disagrees with config"));
    }
    Ok(())
}

pub(crate) fn layer_forward(x: &Matrix, layer: &LayerParams, config: &ModelConfig) -> LayerCache {
    let (attn_in, norm1) = match &layer.norm1 {
        Some(n) => {
            let (y, c) = layer_norm(x, n);
            (y, Some(c))
        }
        None => (x.clone(), None),
    };
    let heads: Vec<HeadCache> = (0..layer.num_heads())
        .map(|i| head_forward(&attn_in, layer.head(i), config))
        .collect();
    let mut concat = Matrix::zeros(x.rows(), config.embed_dim);
    for (i, h) in heads.iter().enumerate() {
        concat.set_columns(i * config.head_dim, &h.output);
    }
    let mut projected = concat.matmul(&layer.proj_w);
    projected.add_row_broadcast(&layer.proj_b);
    let mut hidden = x.clone();
    hidden.add_assign(&projected);

    let (mlp_in, norm2) = match &layer.norm2 {
        Some(n) => {
            let (y, c) = layer_norm(&hidden, n);
            (y, Some(c))
        }
        None => (hidden.clone(), None),
    };
    let mut pre_act = mlp_in.matmul(&layer.mlp_w1);
    pre_act.add_row_broadcast(&layer.mlp_b1);
    let act = Matrix::from_raw(
        pre_act.rows(),
        pre_act.cols(),
        pre_act.as_slice().iter().map(|&z| gelu(z)).collect(),
    );
    LayerCache {
        norm1,
        attn_in,
        heads,
        concat,
        projected,
        hidden,
        norm2,
        mlp_in,
        pre_act,
        act,
    }
}

pub(crate) fn layer_output(cache: &LayerCache, layer: &LayerParams) -> Matrix {
    let mut out = cache.act.matmul(&layer.mlp_w2);
    out.add_row_broadcast(&layer.mlp_b2);
    out.add_assign(&cache.hidden);
    out
}

/// One transformer block on an `N × D` input; output has the same shape.
pub fn block_forward(x: &Matrix, layer: &LayerParams, config: &ModelConfig) -> Result<Matrix> {
    if x.cols() != config.embed_dim {
        return Err(Error::validation(format!(
            "block input has {} columns, expected {}",
            x.cols(),
            config.embed_dim
        )));
    }
    check_layer(layer, config)?;
    let cache = layer_forward(x, layer, config);
    Ok(layer_output(&cache, layer))
}

pub(crate) fn check_params(params: &Parameters, config: &ModelConfig) -> Result<()> {
    config.validate()?;
    let dm = config.embed_dim;
    if params.token_embed.shape() != (config.vocab_size, dm)
        || params.pos_embed.shape() != (config.seq_len, dm)
        || params.head_w.shape() != (dm, config.num_classes)
        || params.head_b.shape() != (1, config.num_classes)
        || params.layers.len() != config.depth
        || params.final_norm.is_some() != config.use_layernorm
    {
        return Err(Error::validation("parameters do not match model config"));
    }
    params.layers.iter().try_for_each(|l| check_layer(l, config))
}

pub(crate) fn check_tokens(tokens: &[usize], config: &ModelConfig) -> Result<()> {
    if tokens.is_empty() || tokens.len() > config.seq_len {
        return Err(Error::validation(format!(
            "sequence length {} outside 1..={}",
            tokens.len(),
            config.seq_len
        )));
    }
    if let Some(t) = tokens.iter().find(|&&t| t >= config.vocab_size) {
        return Err(Error::validation(format!(
            "token {t} out of range for vocab of {}",
            config.vocab_size
        )));
    }
    Ok(())
}

pub(crate) fn forward_cached(tokens: &[usize], params: &Parameters, config: &ModelConfig) -> Cache {
    let n = tokens.len();
    let mut x = Matrix::zeros(n, config.embed_dim);
    for (r, &t) in tokens.iter().enumerate() {
        let row = x.row_mut(r);
        for ((o, e), p) in row
            .iter_mut()
            .zip(params.token_embed.row(t))
            .zip(params.pos_embed.row(r))
        {
            *o = e + p;
        }
    }
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let cache = layer_forward(&x, layer, config);
        x = layer_output(&cache, layer);
        layers.push(cache);
    }
    let (features, final_norm) = match &params.final_norm {
        Some(nrm) => {
            let (y, c) = layer_norm(&x, nrm);
            (y, Some(c))
        }
        None => (x, None),
    };
    let pooled = features.column_sums().scaled(1.0 / n as f64);
    let mut logits = pooled.matmul(&params.head_w);
    logits.add_assign(&params.head_b);
    Cache {
        tokens: tokens.to_vec(),
        layers,
        final_norm,
        pooled,
        logits: logits.into_vec(),
    }
}

/// Embeds `tokens` (at most `seq_len` of them), runs every block, mean-pools and
/// classifies. Returns the logits together with every layer's attention trace.
pub fn model_forward(
    tokens: &[usize],
    params: &Parameters,
    config: &ModelConfig,
) -> Result<(Vec<f64>, ForwardTrace)> {
    check_params(params, config)?;
    check_tokens(tokens, config)?;
    let trace = forward_cached(tokens, params, config).into_trace();
    Ok((trace.logits.clone(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_derivative_matches_difference_quotient() {
        for z in [-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(z + h) - gelu(z - h)) / (2.0 * h);
            assert!((fd - gelu_grad(z)).abs() < 1e-8);
        }
    }

    #[test]
    fn causal_softmax_masks_future() {
        let mut s = Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64);
        softmax_rows(&mut s, true);
        assert_eq!(s.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(s[(1, 2)], 0.0);
        for r in 0..3 {
            assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_large_logits() {
        let mut s = Matrix::from_rows(&[vec![1000.0, 999.0, -1000.0]]).unwrap();
        softmax_rows(&mut s, false);
        assert!(s.is_finite());
        assert!((s.row(0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let x = Matrix::from_fn(2, 6, |r, c| (r as f64 + 1.0) * c as f64);
        let norm = NormParams {
            gain: Matrix::from_fn(1, 6, |_, _| 1.0),
            bias: Matrix::zeros(1, 6),
        };
        let (y, _) = layer_norm(&x, &norm);
        for r in 0..2 {
            let mean = y.row(r).iter().sum::<f64>() / 6.0;
            let var = y.row(r).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn rejects_bad_tokens_and_shapes() {
        let c = ModelConfig::new(1, 2, 2, 1.0, 5, 4, 2);
        let p = Parameters::init(&c, 0);
        assert!(model_forward(&[5], &p, &c).is_err());
        assert!(model_forward(&[], &p, &c).is_err());
        assert!(model_forward(&[0; 5], &p, &c).is_err());
        let mut other = c.clone();
        other.depth = 2;
        assert!(model_forward(&[1, 2], &p, &other).is_err());
        let bad_x = Matrix::zeros(3, 3);
        assert!(block_forward(&bad_x, &p.layers[0], &c).is_err());
        assert!(attention_head_forward(&bad_x, p.layers[0].head(0), &c).is_err());
    }
}
