use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes of the full network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpnConfig {
    pub acoustic_dim: usize,
    pub phoneme_dim: usize,
    pub output_dim: usize,
    pub conv_channels: usize,
    pub kernel_sizes: Vec<usize>,
    pub model_dim: usize,
    pub heads: usize,
    pub key_dim: usize,
    pub attention_layers: usize,
    pub speech_dense: usize,
    pub phoneme_hidden: usize,
    pub phoneme_layers: usize,
    pub phoneme_dense: usize,
    pub fusion_hidden: usize,
    pub fusion_dense: usize,
    pub inversion_hidden: usize,
    /// When false the inversion head sees only fused speech features and
    /// the phoneme stream does not exist (the SPN-S ablation).
    pub use_phoneme_stream: bool,
}

impl Default for SpnConfig {
    fn default() -> Self {
        SpnConfig {
            acoustic_dim: 39,
            phoneme_dim: 39,
            output_dim: 12,
            conv_channels: 64,
            kernel_sizes: vec![1, 3, 5, 7, 9],
            model_dim: 512,
            heads: 8,
            key_dim: 64,
            attention_layers: 6,
            speech_dense: 300,
            phoneme_hidden: 150,
            phoneme_layers: 3,
            phoneme_dense: 300,
            fusion_hidden: 150,
            fusion_dense: 300,
            inversion_hidden: 150,
            use_phoneme_stream: true,
        }
    }
}

impl SpnConfig {
    /// Reduced widths with the same topology, for single-core experiments.
    pub fn desk() -> Self {
        SpnConfig {
            conv_channels: 8,
            model_dim: 32,
            heads: 4,
            key_dim: 8,
            attention_layers: 2,
            speech_dense: 32,
            phoneme_hidden: 16,
            phoneme_dense: 32,
            fusion_hidden: 16,
            fusion_dense: 32,
            inversion_hidden: 16,
            ..SpnConfig::default()
        }
    }

    /// Same network without the phoneme stream.
    pub fn without_phoneme_stream(mut self) -> Self {
        self.use_phoneme_stream = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("acoustic_dim", self.acoustic_dim),
            ("phoneme_dim", self.phoneme_dim),
            ("output_dim", self.output_dim),
            ("conv_channels", self.conv_channels),
            ("model_dim", self.model_dim),
            ("heads", self.heads),
            ("key_dim", self.key_dim),
            ("speech_dense", self.speech_dense),
            ("phoneme_hidden", self.phoneme_hidden),
            ("phoneme_layers", self.phoneme_layers),
            ("phoneme_dense", self.phoneme_dense),
            ("fusion_hidden", self.fusion_hidden),
            ("fusion_dense", self.fusion_dense),
            ("inversion_hidden", self.inversion_hidden),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("model config: {name} must be positive")));
        }
        if self.kernel_sizes.is_empty() || self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::invalid("model config: kernel sizes must be odd and non-empty"));
        }
        if self.model_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "model config: model_dim {} not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }
}
