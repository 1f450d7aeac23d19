//! Exact parameter counts for ViT-style encoders and depth-versus-heads tables.
//!
//! Accounting follows the usual ViT layout: a patch (or token) embedding, learned
//! positions, an optional class token, `depth` pre-norm blocks, a final norm and a
//! linear head. Inside a block the attention projections map the embedding width
//! `D` to an attention width `I` (normally `I = D`) and back:
//!
//! ```text
//! qkv   = 3 · (D·I + I·[qkv_bias])
//! proj  = I·D + D
//! mlp   = D·hidden + hidden + hidden·D + D
//! norms = 2 · 2·D                      (when layer norm is on)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputSpec {
    Patches {
        image_size: usize,
        patch_size: usize,
        in_channels: usize,
    },
    Tokens {
        vocab_size: usize,
        seq_len: usize,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    #[serde(flatten)]
    pub input: InputSpec,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    /// Defaults to `embed_dim / num_heads`.
    #[serde(default)]
    pub head_dim: Option<usize>,
    pub mlp_hidden: usize,
    pub num_classes: usize,
    #[serde(default = "yes")]
    pub cls_token: bool,
    #[serde(default = "yes")]
    pub qkv_bias: bool,
    #[serde(default = "yes")]
    pub layernorm: bool,
    /// Allows `num_heads · head_dim != embed_dim`: attention runs at width
    /// `num_heads · head_dim` and the output projection maps back to `embed_dim`.
    #[serde(default)]
    pub decoupled_attention: bool,
}

impl ArchSpec {
    /// ViT-B/16 at 224 px with 1000 classes.
    pub fn vit_base() -> Self {
        ArchSpec {
            input: InputSpec::Patches {
                image_size: 224,
                patch_size: 16,
                in_channels: 3,
            },
            embed_dim: 768,
            depth: 12,
            num_heads: 12,
            head_dim: Some(64),
            mlp_hidden: 3072,
            num_classes: 1000,
            cls_token: true,
            qkv_bias: true,
            layernorm: true,
            decoupled_attention: false,
        }
    }

    /// The `ArchSpec` of the toy classifier built for `config` (token mode, no class
    /// token, bias-free q/k/v, mean pooling).
    pub fn from_model_config(config: &ModelConfig) -> Self {
        ArchSpec {
            input: InputSpec::Tokens {
                vocab_size: config.vocab_size,
                seq_len: config.seq_len,
            },
            embed_dim: config.embed_dim,
            depth: config.depth,
            num_heads: config.num_heads,
            head_dim: Some(config.head_dim),
            mlp_hidden: config.mlp_hidden(),
            num_classes: config.num_classes,
            cls_token: false,
            qkv_bias: false,
            layernorm: config.use_layernorm,
            decoupled_attention: false,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim.unwrap_or(self.embed_dim / self.num_heads.max(1))
    }

    pub fn attention_width(&self) -> usize {
        self.num_heads * self.head_dim()
    }

    pub fn num_tokens(&self) -> usize {
        match self.input {
            InputSpec::Patches {
                image_size,
                patch_size,
                ..
            } => (image_size / patch_size).pow(2),
            InputSpec::Tokens { seq_len, .. } => seq_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.num_heads == 0 || self.mlp_hidden == 0 || self.num_classes == 0 {
            return Err(Error::validation(
                "embed_dim, num_heads, mlp_hidden and num_classes must be >= 1",
            ));
        }
        match self.input {
            InputSpec::Patches {
                image_size,
                patch_size,
                in_channels,
            } => {
                if patch_size == 0 || image_size == 0 || in_channels == 0 {
                    return Err(Error::validation("patch geometry must be positive"));
                }
                if image_size % patch_size != 0 {
                    return Err(Error::validation(format!(
                        "patch size {patch_size} does not divide image size {image_size}"
                    )));
                }
            }
            InputSpec::Tokens { vocab_size, seq_len } => {
                if vocab_size == 0 || seq_len == 0 {
                    return Err(Error::validation("vocab_size and seq_len must be >= 1"));
                }
            }
        }
        match self.head_dim {
            Some(0) => return Err(Error::validation("head_dim must be >= 1")),
            Some(d) if !self.decoupled_attention && d * self.num_heads != self.embed_dim => {
                return Err(Error::validation(format!(
                    "embed_dim {} != num_heads {} * head_dim {d}",
                    self.embed_dim, self.num_heads
                )))
            }
            None if !self.embed_dim.is_multiple_of(self.num_heads) => {
                return Err(Error::validation(format!(
                    "num_heads {} does not divide embed_dim {}",
                    self.num_heads, self.embed_dim
                )))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerBreakdown {
    pub qkv: u64,
    pub proj: u64,
    pub mlp: u64,
    pub norms: u64,
}

impl LayerBreakdown {
    pub fn total(&self) -> u64 {
        self.qkv + self.proj + self.mlp + self.norms
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub patch_or_token_embed: u64,
    pub position_embed: u64,
    pub cls: u64,
    pub depth: usize,
    /// Identical for every layer.
    pub per_layer: LayerBreakdown,
    pub final_norm: u64,
    pub head: u64,
    pub total: u64,
}

impl ParamBreakdown {
    pub fn sum_of_parts(&self) -> u64 {
        self.patch_or_token_embed
            + self.position_embed
            + self.cls
            + self.depth as u64 * self.per_layer.total()
            + self.final_norm
            + self.head
    }
}

pub fn count_params(spec: &ArchSpec) -> Result<ParamBreakdown> {
    spec.validate()?;
    let dm = spec.embed_dim as u64;
    let inner = spec.attention_width() as u64;
    let hidden = spec.mlp_hidden as u64;
    let classes = spec.num_classes as u64;
    let patch_or_token_embed = match spec.input {
        InputSpec::Patches {
            patch_size,
            in_channels,
            ..
        } => (patch_size * patch_size * in_channels) as u64 * dm + dm,
        InputSpec::Tokens { vocab_size, .. } => vocab_size as u64 * dm,
    };
    let cls = if spec.cls_token { dm } else { 0 };
    let position_embed = (spec.num_tokens() as u64 + u64::from(spec.cls_token)) * dm;
    let per_layer = LayerBreakdown {
        qkv: 3 * (dm * inner + if spec.qkv_bias { inner } else { 0 }),
        proj: inner * dm + dm,
        mlp: dm * hidden + hidden + hidden * dm + dm,
        norms: if spec.layernorm { 4 * dm } else { 0 },
    };
    let final_norm = if spec.layernorm { 2 * dm } else { 0 };
    let head = dm * classes + classes;
    let mut out = ParamBreakdown {
        patch_or_token_embed,
        position_embed,
        cls,
        depth: spec.depth,
        per_layer,
        final_norm,
        head,
        total: 0,
    };
    out.total = out.sum_of_parts();
    Ok(out)
}

/// How width follows the head count in a trade-off grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMode {
    /// Head dimension fixed, `embed_dim = heads · head_dim`; the MLP keeps the
    /// base hidden-to-embed ratio.
    ScaleEmbed,
    /// Embedding fixed, `head_dim = embed_dim / heads`.
    FixedEmbed,
    /// Embedding and head dimension both fixed; attention width is `heads · head_dim`.
    DecoupledAttention,
}

impl WidthMode {
    /// The `head_dim_fixed` switch: fixed head dimension scales the embedding.
    pub fn from_head_dim_fixed(head_dim_fixed: bool) -> Self {
        if head_dim_fixed {
            WidthMode::ScaleEmbed
        } else {
            WidthMode::FixedEmbed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub depth: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub head_dim: usize,
    pub mlp_hidden: usize,
    pub total_params: u64,
    pub delta_vs_base_percent: f64,
}

/// `base` re-shaped to `depth` layers of `heads` heads under `mode`.
pub fn variant(base: &ArchSpec, depth: usize, heads: usize, mode: WidthMode) -> Result<ArchSpec> {
    base.validate()?;
    if heads == 0 {
        return Err(Error::validation("head count must be >= 1"));
    }
    let d = base.head_dim();
    let mut spec = base.clone();
    spec.depth = depth;
    spec.num_heads = heads;
    match mode {
        WidthMode::ScaleEmbed => {
            spec.embed_dim = heads * d;
            spec.head_dim = Some(d);
            spec.decoupled_attention = false;
            let ratio = base.mlp_hidden as f64 / base.embed_dim as f64;
            spec.mlp_hidden = ((ratio * spec.embed_dim as f64).round() as usize).max(1);
        }
        WidthMode::FixedEmbed => {
            if !base.embed_dim.is_multiple_of(heads) {
                return Err(Error::validation(format!(
                    "{heads} heads do not divide embed_dim {}",
                    base.embed_dim
                )));
            }
            spec.head_dim = Some(base.embed_dim / heads);
            spec.decoupled_attention = false;
        }
        WidthMode::DecoupledAttention => {
            spec.head_dim = Some(d);
            spec.decoupled_attention = true;
        }
    }
    spec.validate()?;
    Ok(spec)
}

/// One row per `(depth, heads)` pair, depth-major, with the change in total
/// parameters relative to `base` in percent.
pub fn tradeoff_table(
    base: &ArchSpec,
    depths: &[usize],
    head_counts: &[usize],
    mode: WidthMode,
) -> Result<Vec<TradeoffRow>> {
    let base_total = count_params(base)?.total as f64;
    let mut rows = Vec::with_capacity(depths.len() * head_counts.len());
    for &depth in depths {
        for &heads in head_counts {
            let spec = variant(base, depth, heads, mode)?;
            let total = count_params(&spec)?.total;
            rows.push(TradeoffRow {
                depth,
                heads,
                embed_dim: spec.embed_dim,
                head_dim: spec.head_dim(),
                mlp_hidden: spec.mlp_hidden,
                total_params: total,
                delta_vs_base_percent: (total as f64 - base_total) / base_total * 100.0,
            });
        }
    }
    Ok(rows)
}
