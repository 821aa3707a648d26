//! DP-RGNet and its baselines on the differentiation tape.

mod attention;
mod config;
mod layers;
mod network;
mod params;

pub use attention::{downsample_labels, region_attention, AttentionParams, AttentionPrior};
pub use config::{ModelConfig, Variant};
pub use layers::{conv_block, BiLstm, Linear, Mlp, BN_EPS, BN_MOMENTUM};
pub use network::{Batch, ForwardOutput, ForwardVars, Model};
pub use params::{param_specs, parameter_count, Bound, Init, ParamSpec, ParameterStore};
