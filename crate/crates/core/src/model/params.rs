use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::Matrix;
use crate::model::ModelConfig;
use crate::seed::rng_for;

/// LayerNorm gain and bias, each `1 × D`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gain: Matrix,
    pub bias: Matrix,
}

impl NormParams {
    fn identity(dim: usize) -> Self {
        let mut gain = Matrix::zeros(1, dim);
        gain.fill(1.0);
        NormParams {
            gain,
            bias: Matrix::zeros(1, dim),
        }
    }

    fn zeros(dim: usize) -> Self {
        NormParams {
            gain: Matrix::zeros(1, dim),
            bias: Matrix::zeros(1, dim),
        }
    }
}

/// Borrowed projections of one attention head, each `D × d`.
#[derive(Debug, Clone, Copy)]
pub struct HeadParams<'a> {
    pub query: &'a Matrix,
    pub key: &'a Matrix,
    pub value: &'a Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub query: Vec<Matrix>,
    pub key: Vec<Matrix>,
    pub value: Vec<Matrix>,
    pub proj_w: Matrix,
    pub proj_b: Matrix,
    pub mlp_w1: Matrix,
    pub mlp_b1: Matrix,
    pub mlp_w2: Matrix,
    pub mlp_b2: Matrix,
    /// Before attention (pre-norm); present iff `use_layernorm`.
    pub norm1: Option<NormParams>,
    /// Before the MLP.
    pub norm2: Option<NormParams>,
}

impl LayerParams {
    pub fn head(&self, i: usize) -> HeadParams<'_> {
        HeadParams {
            query: &self.query[i],
            key: &self.key[i],
            value: &self.value[i],
        }
    }

    pub fn num_heads(&self) -> usize {
        self.query.len()
    }
}

/// All trainable tensors of the classifier. Gradients use the same type.
///
/// Canonical block order (used by [`Parameters::blocks`], the optimizer and the
/// binary container): `token_embed`, `pos_embed`, then per layer `q.*`, `k.*`,
/// `v.*` (one per head), `proj.w`, `proj.b`, `mlp.w1`, `mlp.b1`, `mlp.w2`,
/// `mlp.b2`, `norm1.gain`, `norm1.bias`, `norm2.gain`, `norm2.bias`; then
/// `final_norm.gain`, `final_norm.bias`, `head.w`, `head.b`. Norm blocks are
/// absent when layer normalization is disabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub token_embed: Matrix,
    pub pos_embed: Matrix,
    pub layers: Vec<LayerParams>,
    pub final_norm: Option<NormParams>,
    pub head_w: Matrix,
    pub head_b: Matrix,
}

impl Parameters {
    /// Zero-filled tensors with the shapes implied by `config` (gradient accumulator).
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::build(config, |r, c, _| Matrix::zeros(r, c), NormParams::zeros)
    }

    /// Truncated Gaussian weights with variance `1/D` (cut at ±3σ), zero biases,
    /// unit norm gains. Each block draws from its own stream keyed by `(seed, block index)`.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let std = 1.0 / (config.embed_dim as f64).sqrt();
        Self::build(
            config,
            |r, c, idx| {
                let mut rng = rng_for(seed, &[idx as u64]);
                Matrix::from_fn(r, c, |_, _| truncated_normal(&mut rng) * std)
            },
            NormParams::identity,
        )
    }

    fn build(
        config: &ModelConfig,
        mut weight: impl FnMut(usize, usize, usize) -> Matrix,
        norm: impl Fn(usize) -> NormParams,
    ) -> Self {
        let (dm, d, hidden) = (config.embed_dim, config.head_dim, config.mlp_hidden());
        let mut idx = 0;
        let mut next = |r: usize, c: usize| {
            idx += 1;
            weight(r, c, idx - 1)
        };
        let token_embed = next(config.vocab_size, dm);
        let pos_embed = next(config.seq_len, dm);
        let layers = (0..config.depth)
            .map(|_| {
                let query = (0..config.num_heads).map(|_| next(dm, d)).collect();
                let key = (0..config.num_heads).map(|_| next(dm, d)).collect();
                let value = (0..config.num_heads).map(|_| next(dm, d)).collect();
                LayerParams {
                    query,
                    key,
                    value,
                    proj_w: next(dm, dm),
                    proj_b: Matrix::zeros(1, dm),
                    mlp_w1: next(dm, hidden),
                    mlp_b1: Matrix::zeros(1, hidden),
                    mlp_w2: next(hidden, dm),
                    mlp_b2: Matrix::zeros(1, dm),
                    norm1: config.use_layernorm.then(|| norm(dm)),
                    norm2: config.use_layernorm.then(|| norm(dm)),
                }
            })
            .collect();
        let final_norm = config.use_layernorm.then(|| norm(dm));
        Parameters {
            token_embed,
            pos_embed,
            layers,
            final_norm,
            head_w: next(dm, config.num_classes),
            head_b: Matrix::zeros(1, config.num_classes),
        }
    }

    /// Named blocks in canonical order.
    pub fn blocks(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = vec![
            ("token_embed".into(), &self.token_embed),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (kind, mats) in [("q", &layer.query), ("k", &layer.key), ("v", &layer.value)] {
                for (h, m) in mats.iter().enumerate() {
                    out.push((format!("layers.{l}.{kind}.{h}"), m));
                }
            }
            for (name, m) in [
                ("proj.w", &layer.proj_w),
                ("proj.b", &layer.proj_b),
                ("mlp.w1", &layer.mlp_w1),
                ("mlp.b1", &layer.mlp_b1),
                ("mlp.w2", &layer.mlp_w2),
                ("mlp.b2", &layer.mlp_b2),
            ] {
                out.push((format!("layers.{l}.{name}"), m));
            }
            for (name, norm) in [("norm1", &layer.norm1), ("norm2", &layer.norm2)] {
                if let Some(n) = norm {
                    out.push((format!("layers.{l}.{name}.gain"), &n.gain));
                    out.push((format!("layers.{l}.{name}.bias"), &n.bias));
                }
            }
        }
        if let Some(n) = &self.final_norm {
            out.push(("final_norm.gain".into(), &n.gain));
            out.push(("final_norm.bias".into(), &n.bias));
        }
        out.push(("head.w".into(), &self.head_w));
        out.push(("head.b".into(), &self.head_b));
        out
    }

    /// Mutable blocks in the same order as [`Parameters::blocks`].
    pub fn blocks_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.token_embed, &mut self.pos_embed];
        for layer in &mut self.layers {
            out.extend(layer.query.iter_mut());
            out.extend(layer.key.iter_mut());
            out.extend(layer.value.iter_mut());
            out.push(&mut layer.proj_w);
            out.push(&mut layer.proj_b);
            out.push(&mut layer.mlp_w1);
            out.push(&mut layer.mlp_b1);
            out.push(&mut layer.mlp_w2);
            out.push(&mut layer.mlp_b2);
            for n in [&mut layer.norm1, &mut layer.norm2].into_iter().flatten() {
                out.push(&mut n.gain);
                out.push(&mut n.bias);
            }
        }
        if let Some(n) = &mut self.final_norm {
            out.push(&mut n.gain);
            out.push(&mut n.bias);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|(_, m)| m.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, m)| m.is_finite())
    }

    /// `self += factor * other`, block by block.
    pub fn axpy(&mut self, factor: f64, other: &Parameters) {
        let src = other.blocks();
        for (dst, (_, s)) in self.blocks_mut().into_iter().zip(src) {
            dst.axpy(factor, s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in self.blocks_mut() {
            m.as_mut_slice().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Shapes of the canonical blocks; used to check compatibility.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.blocks().iter().map(|(_, m)| m.shape()).collect()
    }
}

fn truncated_normal(rng: &mut impl Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 3.0 {
            return z;
        }
    }
}
