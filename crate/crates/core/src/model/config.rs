use serde::{Deserialize, Serialize};

use crate::error::{MatError, Result};
use crate::ssm::ScanMode;

/// Order of the two sublayers inside a hybrid block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockOrder {
    #[default]
    MambaFirst,
    AttentionFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Look-back length `L`.
    pub lookback: usize,
    /// Forecast horizon `T`.
    pub horizon: usize,
    /// Number of channels `M`.
    pub channels: usize,
    /// High-resolution embedding width.
    pub n1: usize,
    /// Low-resolution embedding width, `n2 < n1`.
    pub n2: usize,
    /// Inner width of the selective SSM (`d_inner`), also the lifted token
    /// width of temporal-mode blocks.
    pub dim: usize,
    /// SSM state size `N`.
    pub state: usize,
    pub heads: usize,
    pub conv_width: usize,
    pub dropout: f64,
    pub revin_affine: bool,
    pub positional: bool,
    pub block_order: BlockOrder,
    /// Layers per embedding/projection MLP (1 = linear, 2 = linear-SiLU-linear).
    pub mlp_depth: usize,
    pub parallel_scan: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lookback: 96,
            horizon: 96,
            channels: 21,
            n1: 256,
            n2: 128,
            dim: 256,
            state: 1,
            heads: 8,
            conv_width: 2,
            dropout: 0.1,
            revin_affine: true,
            positional: false,
            block_order: BlockOrder::MambaFirst,
            mlp_depth: 1,
            parallel_scan: false,
            seed: 2024,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by the gradient suite.
    pub fn toy() -> Self {
        ModelConfig {
            lookback: 8,
            horizon: 4,
            channels: 3,
            n1: 8,
            n2: 4,
            dim: 4,
            state: 1,
            heads: 2,
            dropout: 0.0,
            ..ModelConfig::default()
        }
    }

    pub fn scan_mode(&self) -> ScanMode {
        if self.parallel_scan {
            ScanMode::Parallel
        } else {
            ScanMode::Sequential
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("n1", self.n1),
            ("n2", self.n2),
            ("dim", self.dim),
            ("state", self.state),
            ("heads", self.heads),
            ("conv_width", self.conv_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(MatError::Config(format!("model.{name} must be at least 1")));
            }
        }
        if self.n1 <= self.n2 {
            return Err(MatError::Config(format!("model.n1 ({}) must exceed model.n2 ({})", self.n1, self.n2)));
        }
        for (name, w) in [("dim", self.dim), ("n1", self.n1), ("n2", self.n2)] {
            if w % self.heads != 0 {
                return Err(MatError::Config(format!(
                    "model.heads ({}) must divide attention width model.{name} ({w})",
                    self.heads
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MatError::Config(format!("model.dropout {} outside [0, 1)", self.dropout)));
        }
        if !(1..=2).contains(&self.mlp_depth) {
            return Err(MatError::Config(format!("model.mlp_depth must be 1 or 2, got {}", self.mlp_depth)));
        }
        Ok(())
    }
}
