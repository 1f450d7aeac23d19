use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn yes() -> bool {
    true
}

/// Shape and switches of a toy transformer classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub depth: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    /// Must equal `num_heads * head_dim`.
    pub embed_dim: usize,
    /// MLP hidden width is `round(mlp_ratio * embed_dim)`.
    pub mlp_ratio: f64,
    pub vocab_size: usize,
    pub seq_len: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub causal: bool,
    #[serde(default = "yes")]
    pub use_layernorm: bool,
    /// Divide attention logits by `√head_dim`.
    #[serde(default = "yes")]
    pub attn_scale: bool,
}

impl ModelConfig {
    /// Bidirectional, pre-norm, scaled attention; `embed_dim = num_heads * head_dim`.
    pub fn new(
        depth: usize,
        num_heads: usize,
        head_dim: usize,
        mlp_ratio: f64,
        vocab_size: usize,
        seq_len: usize,
        num_classes: usize,
    ) -> Self {
        ModelConfig {
            depth,
            num_heads,
            head_dim,
            embed_dim: num_heads * head_dim,
            mlp_ratio,
            vocab_size,
            seq_len,
            num_classes,
            causal: false,
            use_layernorm: true,
            attn_scale: true,
        }
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.mlp_ratio * self.embed_dim as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_heads", self.num_heads),
            ("head_dim", self.head_dim),
            ("vocab_size", self.vocab_size),
            ("seq_len", self.seq_len),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("{name} must be >= 1")));
            }
        }
        if self.embed_dim != self.num_heads * self.head_dim {
            return Err(Error::validation(format!(
                "embed_dim {} != num_heads {} * head_dim {}",
                self.embed_dim, self.num_heads, self.head_dim
            )));
        }
        if !(self.mlp_ratio.is_finite() && self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return Err(Error::validation(format!(
                "mlp_ratio {} gives an empty hidden layer",
                self.mlp_ratio
            )));
        }
        Ok(())
    }

    pub fn attention_scale(&self) -> f64 {
        if self.attn_scale {
            1.0 / (self.head_dim as f64).sqrt()
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_inconsistent_width() {
        let mut c = ModelConfig::new(2, 4, 8, 4.0, 11, 6, 3);
        assert!(c.validate().is_ok());
        assert_eq!(c.mlp_hidden(), 128);
        c.embed_dim = 30;
        assert!(c.validate().is_err());
        let c = ModelConfig::new(1, 1, 1, 0.2, 2, 2, 2);
        assert!(c.validate().is_err());
        let c = ModelConfig::new(0, 1, 4, 1.0, 2, 2, 2);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn json_defaults_apply() {
        let c: ModelConfig = serde_json::from_str(
            r#"{"depth":1,"num_heads":2,"head_dim":3,"embed_dim":6,"mlp_ratio":2.0,
                "vocab_size":5,"seq_len":4,"num_classes":2}"#,
        )
        .unwrap();
        assert!(c.use_layernorm && c.attn_scale && !c.causal);
    }
}
