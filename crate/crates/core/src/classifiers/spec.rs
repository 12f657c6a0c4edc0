use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::layers::LayerKind;

/// Fully connected ReLU layers of the given widths, then the output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec { hidden: vec![200; 5] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

/// Convolution / ReLU / average-pool blocks, then dense ReLU layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub blocks: Vec<ConvBlock>,
    pub dense: Vec<usize>,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            blocks: [8, 16, 32, 64].iter().map(|&filters| ConvBlock { filters, kernel: 11, pool: 2 }).collect(),
            dense: vec![512],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Mlp(MlpSpec),
    Cnn(CnnSpec),
}

impl Architecture {
    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Mlp(_) => "mlp",
            Architecture::Cnn(_) => "cnn",
        }
    }

    pub fn layers(&self, input_len: usize, classes: usize) -> Vec<LayerKind> {
        let mut layers = Vec::new();
        let mut channels = 1;
        let mut len = input_len;
        let dense = match self {
            Architecture::Mlp(m) => &m.hidden,
            Architecture::Cnn(c) => {
                for b in &c.blocks {
                    layers.push(LayerKind::Conv1d { in_channels: channels, out_channels: b.filters, kernel: b.kernel });
                    layers.push(LayerKind::Relu);
                    layers.push(LayerKind::AvgPool { size: b.pool });
                    channels = b.filters;
                    len /= b.pool.max(1);
                }
                &c.dense
            }
        };
        let mut width = channels * len;
        for &w in dense {
            layers.push(LayerKind::Dense { inputs: width, outputs: w });
            layers.push(LayerKind::Relu);
            width = w;
        }
        layers.push(LayerKind::Dense { inputs: width, outputs: classes });
        layers
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// RMSprop decay.
    pub rho: f64,
    pub epsilon: f64,
}

impl TrainConfig {
    pub fn mlp_default() -> Self {
        TrainConfig { learning_rate: 1e-5, batch_size: 256, epochs: 20, seed: 0, rho: 0.9, epsilon: 1e-8 }
    }

    pub fn cnn_default() -> Self {
        TrainConfig { learning_rate: 1e-4, batch_size: 256, epochs: 10, ..Self::mlp_default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub train: TrainConfig,
}

impl ModelSpec {
    pub fn mlp() -> Self {
        ModelSpec { architecture: Architecture::Mlp(MlpSpec::default()), train: TrainConfig::mlp_default() }
    }

    pub fn cnn() -> Self {
        ModelSpec { architecture: Architecture::Cnn(CnnSpec::default()), train: TrainConfig::cnn_default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self
    }
}
