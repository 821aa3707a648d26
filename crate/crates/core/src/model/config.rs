use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::NUM_REGIONS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dprgnet,
    PathBOnly,
    CnnLstm,
    Cnn,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Dprgnet, Variant::PathBOnly, Variant::CnnLstm, Variant::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Dprgnet => "dprgnet",
            Variant::PathBOnly => "path_b_only",
            Variant::CnnLstm => "cnn_lstm",
            Variant::Cnn => "cnn",
        }
    }

    pub fn has_path_a(self) -> bool {
        self == Variant::Dprgnet
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Variant::Cnn | Variant::CnnLstm)
    }

    pub fn has_global_lstm(self) -> bool {
        self != Variant::Cnn
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dprgnet" | "dp_rgnet" => Ok(Variant::Dprgnet),
            "path_b_only" | "path_b" => Ok(Variant::PathBOnly),
            "cnn_lstm" => Ok(Variant::CnnLstm),
            "cnn" => Ok(Variant::Cnn),
            other => Err(format!("unknown variant `{other}` (dprgnet, path_b_only, cnn_lstm, cnn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: Variant,
    pub grid_h: usize,
    pub grid_w: usize,
    pub stance_len: usize,
    /// Average-pooling factor applied to the grid before the encoder (1 or 2).
    pub input_pool: usize,
    pub cnn_feature_dim: usize,
    pub pos_dim: usize,
    pub cop_dim: usize,
    pub feature_embed_dim: usize,
    pub bottleneck_dim: usize,
    pub regional_lstm_hidden: usize,
    pub global_lstm_hidden: usize,
    pub lstm_layers: usize,
    pub dropout: f64,
    pub num_regions: usize,
    pub lambda_bias: f64,
    pub bias_value: f64,
    pub learnable_lambda: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::table2(Variant::Dprgnet)
    }
}

impl ModelConfig {
    /// Insole configuration: 64×16 grid, 40-frame stances.
    pub fn table2(variant: Variant) -> Self {
        ModelConfig {
            variant,
            grid_h: 64,
            grid_w: 16,
            stance_len: 40,
            input_pool: 1,
            cnn_feature_dim: 128,
            pos_dim: 128,
            cop_dim: 128,
            feature_embed_dim: 256,
            bottleneck_dim: 128,
            regional_lstm_hidden: 256,
            global_lstm_hidden: 256,
            lstm_layers: 2,
            dropout: if variant.is_baseline() { 0.2 } else { 0.35 },
            num_regions: NUM_REGIONS,
            lambda_bias: 1.0,
            bias_value: 1.0,
            learnable_lambda: false,
        }
    }

    /// Walkway configuration: 75×40 footsteps padded to 80×40, pooled 2×2, 101 frames.
    pub fn table3(variant: Variant) -> Self {
        ModelConfig {
            grid_h: 80,
            grid_w: 40,
            stance_len: 101,
            input_pool: 2,
            cop_dim: 256,
            bottleneck_dim: 256,
            dropout: if variant.is_baseline() { 0.1 } else { 0.3 },
            ..ModelConfig::table2(variant)
        }
    }

    /// Small widths that train in seconds on one CPU core.
    pub fn desk(variant: Variant, grid_h: usize, grid_w: usize, stance_len: usize) -> Self {
        ModelConfig {
            variant,
            grid_h,
            grid_w,
            stance_len,
            input_pool: 1,
            cnn_feature_dim: 8,
            pos_dim: 8,
            cop_dim: 8,
            feature_embed_dim: 12,
            bottleneck_dim: 16,
            regional_lstm_hidden: 16,
            global_lstm_hidden: 16,
            lstm_layers: 2,
            dropout: if variant.is_baseline() { 0.1 } else { 0.15 },
            num_regions: NUM_REGIONS,
            lambda_bias: 1.0,
            bias_value: 1.0,
            learnable_lambda: false,
        }
    }

    pub fn preset(name: &str, variant: Variant) -> Result<Self> {
        match name {
            "table2" => Ok(Self::table2(variant)),
            "table3" => Ok(Self::table3(variant)),
            "desk" => Ok(Self::desk(variant, 32, 16, 20)),
            other => Err(Error::Config(format!("unknown preset `{other}` (table2, table3, desk)"))),
        }
    }

    /// Spatial reduction from the input grid to one attention cell.
    pub fn cell_block(&self) -> usize {
        4 * self.input_pool
    }

    pub fn cells_h(&self) -> usize {
        self.grid_h / self.cell_block()
    }

    pub fn cells_w(&self) -> usize {
        self.grid_w / self.cell_block()
    }

    /// Attention cells N after the encoder.
    pub fn num_cells(&self) -> usize {
        self.cells_h() * self.cells_w()
    }

    /// Width of Z_feat: the embedding dimension for the dual-path variants,
    /// the CNN feature width for the baselines.
    pub fn fused_dim(&self) -> usize {
        if self.variant.is_baseline() {
            self.cnn_feature_dim
        } else {
            self.feature_embed_dim
        }
    }

    /// Channel widths of the three convolution blocks.
    pub fn conv_channels(&self) -> [usize; 3] {
        let c = self.cnn_feature_dim;
        [(c / 4).max(1), (c / 2).max(1), c]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !matches!(self.input_pool, 1 | 2) {
            return bad(format!("input_pool must be 1 or 2, got {}", self.input_pool));
        }
        let block = self.cell_block();
        if self.grid_h == 0 || self.grid_w == 0 || self.grid_h % block != 0 || self.grid_w % block != 0 {
            return bad(format!(
                "grid {}×{} is not divisible by {block} (pool {} × encoder stride 4)",
                self.grid_h, self.grid_w, self.input_pool
            ));
        }
        let dims = [
            self.stance_len,
            self.cnn_feature_dim,
            self.pos_dim,
            self.cop_dim,
            self.feature_embed_dim,
            self.bottleneck_dim,
            self.regional_lstm_hidden,
            self.global_lstm_hidden,
            self.lstm_layers,
        ];
        if dims.contains(&0) {
            return bad("all dimensions must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.num_regions != NUM_REGIONS {
            return bad(format!("num_regions must be {NUM_REGIONS}"));
        }
        Ok(())
    }
}
