use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Slots come from first-frame boxes through a shared MLP.
    Conditional,
    /// Slots start from learned constant vectors.
    Learned,
}

/// Which parts of the network exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Encoder, corrector, predictor, decoder and a readout behind a
    /// gradient barrier.
    Full,
    /// No decoder; the box readout is the training objective and gradients
    /// flow through it into the trunk.
    Supervised,
    /// Initializer, predictor and readout only; never sees pixels.
    Propagation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub channels: usize,
    pub blocks: usize,
    /// Overall downsampling factor; a power of two.
    pub stride: usize,
    pub groups: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectorConfig {
    pub qkv: usize,
    pub iterations: usize,
    pub mlp_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub qkv: usize,
    pub heads: usize,
    pub mlp_hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub channels: usize,
    /// Number of stride-2 transposed convolutions.
    pub stages: usize,
    pub kernel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub height: usize,
    pub width: usize,
    pub slots: usize,
    pub slot_dim: usize,
    pub target_channels: usize,
    pub init: InitMode,
    pub variant: Variant,
    pub encoder: EncoderConfig,
    pub corrector: CorrectorConfig,
    pub predictor: PredictorConfig,
    pub decoder: DecoderConfig,
    pub readout_hidden: usize,
    pub init_hidden: usize,
}

impl Default for ModelConfig {
    /// Desk-scale network for 64×64 clips with eight slots.
    fn default() -> Self {
        ModelConfig {
            height: 64,
            width: 64,
            slots: 8,
            slot_dim: 64,
            target_channels: 1,
            init: InitMode::Conditional,
            variant: Variant::Full,
            encoder: EncoderConfig {
                channels: 32,
                blocks: 4,
                stride: 4,
                groups: 8,
                transformer_layers: 2,
                heads: 4,
                head_dim: 16,
                mlp_hidden: 256,
            },
            corrector: CorrectorConfig {
                qkv: 128,
                iterations: 1,
                mlp_hidden: 256,
            },
            predictor: PredictorConfig {
                qkv: 128,
                heads: 4,
                mlp_hidden: 256,
            },
            decoder: DecoderConfig {
                grid_h: 8,
                grid_w: 8,
                channels: 64,
                stages: 3,
                kernel: 5,
            },
            readout_hidden: 256,
            init_hidden: 256,
        }
    }
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Parameter(msg()))
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("slots", self.slots),
            ("slot_dim", self.slot_dim),
            ("readout_hidden", self.readout_hidden),
            ("init_hidden", self.init_hidden),
            ("predictor.qkv", self.predictor.qkv),
            ("predictor.heads", self.predictor.heads),
            ("predictor.mlp_hidden", self.predictor.mlp_hidden),
        ];
        for (name, v) in positive {
            require(v > 0, || format!("{name} must be positive"))?;
        }
        require(self.predictor.qkv.is_multiple_of(self.predictor.heads), || {
            format!("predictor qkv {} not divisible by {} heads", self.predictor.qkv, self.predictor.heads)
        })?;
        if self.variant == Variant::Propagation {
            return Ok(());
        }
        let e = &self.encoder;
        require(self.height > 0 && self.width > 0, || "resolution must be positive".into())?;
        require(e.stride.is_power_of_two(), || format!("encoder stride {} is not a power of two", e.stride))?;
        require(self.height.is_multiple_of(e.stride) && self.width.is_multiple_of(e.stride), || {
            format!("resolution {}×{} not divisible by stride {}", self.height, self.width, e.stride)
        })?;
        let downs = e.stride.trailing_zeros() as usize;
        require(e.blocks >= downs, || {
            format!("{} encoder blocks cannot reach stride {}", e.blocks, e.stride)
        })?;
        require(e.channels > 0 && e.groups > 0 && e.channels.is_multiple_of(e.groups), || {
            format!("encoder channels {} not divisible into {} groups", e.channels, e.groups)
        })?;
        if e.transformer_layers > 0 {
            require(e.heads > 0 && e.head_dim > 0 && e.mlp_hidden > 0, || {
                "encoder transformer needs positive heads, head_dim and mlp_hidden".into()
            })?;
        }
        let c = &self.corrector;
        require(c.iterations >= 1, || "corrector needs at least one iteration".into())?;
        require(c.qkv > 0 && c.mlp_hidden > 0, || "corrector widths must be positive".into())?;
        if self.variant == Variant::Full {
            let d = &self.decoder;
            require(self.target_channels > 0, || "target_channels must be positive".into())?;
            require(d.channels > 0 && d.kernel >= 2 && d.kernel % 2 == 1, || {
                format!("decoder kernel {} must be odd and at least 3", d.kernel)
            })?;
            let scale = 1usize.checked_shl(d.stages as u32).unwrap_or(0);
            require(d.grid_h * scale == self.height && d.grid_w * scale == self.width, || {
                format!(
                    "decoder grid {}×{} with {} stride-2 stages does not reach {}×{}",
                    d.grid_h, d.grid_w, d.stages, self.height, self.width
                )
            })?;
        }
        Ok(())
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.height / self.encoder.stride, self.width / self.encoder.stride)
    }

    pub fn readout_barrier(&self) -> bool {
        self.variant == Variant::Full
    }

    /// Canonical JSON used for checkpoint digests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_json().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_consistent() {
        ModelConfig::default().validate().unwrap();
        assert_eq!(ModelConfig::default().grid(), (16, 16));
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let mut c = ModelConfig::default();
        c.height = 62;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.decoder.stages = 2;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.corrector.iterations = 0;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.encoder.groups = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_config() {
        let a = ModelConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.slots = 9;
        assert_ne!(a.digest(), b.digest());
    }
}
