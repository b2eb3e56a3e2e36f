//! The slot video model: conditional or learned initializer, residual CNN
//! plus transformer encoder, Slot Attention corrector, transformer
//! predictor, spatial broadcast decoder and box readout.

mod config;
mod forward;
mod params;

pub use config::{CorrectorConfig, DecoderConfig, EncoderConfig, InitMode, ModelConfig, PredictorConfig, Variant};
pub use forward::{grid_coords, hard_masks, Decoded, Forward, FrameOutput, SlotInit, ATTN_EPS, NORM_EPS};
pub use params::{init_params, param_shapes, ParamSet};
