use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which input streams feed the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Streams {
    Both,
    ContextOnly,
    MotionOnly,
}

impl Streams {
    pub fn context(self) -> bool {
        matches!(self, Streams::Both | Streams::ContextOnly)
    }

    pub fn motion(self) -> bool {
        matches!(self, Streams::Both | Streams::MotionOnly)
    }
}

/// How a gate's kernel-1 convolution shares its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateLayout {
    /// One `(w, b)` per channel, shared over positions.
    PerChannel,
    /// One `(w, b)` per input element.
    PerPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnBlock {
    pub out_channels: usize,
    pub kernel: usize,
    pub pool: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub context_embed_dim: usize,
    pub motion_embed_dim: usize,
    /// Output widths of the context encoder's dense layers; the last one is
    /// the context embedding.
    pub context_encoder_layers: Vec<usize>,
    pub motion_cnn_blocks: Vec<CnnBlock>,
    pub group_norm_groups: usize,
    pub gru_hidden: usize,
    /// Output widths of the head's dense layers; must end in 1.
    pub head_layers: Vec<usize>,
    pub dropout_rate: f64,
    pub seed: u64,
    pub streams: Streams,
    /// `false` removes both gates (ablation).
    pub gates: bool,
    /// Insert a ReLU between the gate convolution and its sigmoid.
    pub gate_relu: bool,
    pub context_gate_layout: GateLayout,
    pub motion_gate_layout: GateLayout,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context_embed_dim: 64,
            motion_embed_dim: 64,
            context_encoder_layers: vec![128, 64],
            motion_cnn_blocks: vec![
                CnnBlock { out_channels: 8, kernel: 7, pool: 4 },
                CnnBlock { out_channels: 16, kernel: 7, pool: 4 },
                CnnBlock { out_channels: 32, kernel: 7, pool: 4 },
            ],
            group_norm_groups: 1,
            gru_hidden: 64,
            head_layers: vec![64, 1],
            dropout_rate: 0.2,
            seed: 0,
            streams: Streams::Both,
            gates: true,
            gate_relu: false,
            context_gate_layout: GateLayout::PerPosition,
            motion_gate_layout: GateLayout::PerChannel,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.context_encoder_layers.last() != Some(&self.context_embed_dim) {
            return bad("last context encoder width must equal context_embed_dim");
        }
        if self.gru_hidden != self.motion_embed_dim {
            return bad("gru_hidden must equal motion_embed_dim");
        }
        if self.head_layers.last() != Some(&1) {
            return bad("head must end in a single output");
        }
        let widths = self
            .context_encoder_layers
            .iter()
            .chain(&self.head_layers)
            .chain(std::iter::once(&self.gru_hidden))
            .chain(self.motion_cnn_blocks.iter().map(|b| &b.out_channels));
        if widths.into_iter().any(|&w| w == 0) {
            return bad("all widths must be at least 1");
        }
        if self.motion_cnn_blocks.is_empty() {
            return bad("motion encoder needs at least one CNN block");
        }
        for b in &self.motion_cnn_blocks {
            if b.kernel % 2 == 0 || b.pool == 0 {
                return bad("CNN kernels must be odd and pools positive");
            }
        }
        if self.group_norm_groups == 0 {
            return bad("group_norm_groups must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        Ok(())
    }

    /// Width of the concatenated embedding entering the head.
    pub fn head_input(&self) -> usize {
        let mut w = 0;
        if self.streams.context() {
            w += self.context_embed_dim;
        }
        if self.streams.motion() {
            w += self.motion_embed_dim;
        }
        w
    }
}

/// Candidate values searched by cross-validation. An empty list falls back
/// to the corresponding scalar in [`TrainConfig`] / [`ModelConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grid {
    pub learning_rate: Vec<f64>,
    pub dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            learning_rate: vec![1e-3, 3e-4],
            dropout: vec![0.2, 0.5],
            weight_decay: vec![0.0, 1e-4],
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub learning_rate: f64,
    pub dropout: f64,
    pub weight_decay: f64,
}

/// Adam (first/second moment decay 0.9/0.999) with L2 weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Epochs without training-loss improvement before stopping.
    pub early_stopping_patience: usize,
    pub grid: Grid,
    pub folds: usize,
    /// Held-out share of the stratified train/test split.
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            early_stopping_patience: 5,
            grid: Grid::default(),
            folds: 5,
            test_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds != 5 {
            return Err(Error::Config("folds must be 5".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config("test_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Cartesian product of the grid, in learning-rate, dropout,
    /// weight-decay order. Never empty.
    pub fn candidates(&self, model: &ModelConfig) -> Vec<Hyper> {
        let or = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
        let lrs = or(&self.grid.learning_rate, self.learning_rate);
        let drops = or(&self.grid.dropout, model.dropout_rate);
        let wds = or(&self.grid.weight_decay, self.weight_decay);
        let mut out = Vec::new();
        for &learning_rate in &lrs {
            for &dropout in &drops {
                for &weight_decay in &wds {
                    out.push(Hyper {
                        learning_rate,
                        dropout,
                        weight_decay,
                    });
                }
            }
        }
        out
    }
}
