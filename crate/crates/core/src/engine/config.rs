use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Tanh approximation of GELU.
    Gelu,
}

/// Shape and numerics of a decoder-only transformer.
///
/// The FFN intermediate width `d_ffn` is the number of addressable neurons
/// per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub activation: Activation,
    pub precision: Precision,
    /// Variance floor inside every layer norm.
    pub norm_eps: f64,
}

impl ModelConfig {
    pub fn new(
        n_layers: usize,
        d_model: usize,
        n_heads: usize,
        d_ffn: usize,
        vocab_size: usize,
        max_seq: usize,
    ) -> Self {
        Self {
            n_layers,
            d_model,
            n_heads,
            d_ffn,
            vocab_size,
            max_seq,
            activation: Activation::Gelu,
            precision: Precision::F32,
            norm_eps: 1e-5,
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    pub fn with_norm_eps(mut self, eps: f64) -> Self {
        self.norm_eps = eps;
        self
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn total_neurons(&self) -> usize {
        self.n_layers * self.d_ffn
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_layers == 0 {
            return fail("n_layers must be at least 1".into());
        }
        if self.d_model == 0 || self.n_heads == 0 {
            return fail("d_model and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.d_ffn == 0 {
            return fail("d_ffn must be at least 1".into());
        }
        // <unk> plus the four option letters
        if self.vocab_size < 5 {
            return fail(format!("vocab_size {} cannot hold the option letters", self.vocab_size));
        }
        if self.max_seq == 0 {
            return fail("max_seq must be at least 1".into());
        }
        if !(self.norm_eps.is_finite() && self.norm_eps > 0.0) {
            return fail(format!("norm_eps {} must be finite and positive", self.norm_eps));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = ModelConfig::new(2, 30, 4, 8, 10, 16);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn accepts_small_model() {
        let cfg = ModelConfig::new(2, 16, 4, 8, 10, 16);
        cfg.validate().unwrap();
        assert_eq!(cfg.d_head(), 4);
        assert_eq!(cfg.total_neurons(), 16);
    }
}
