//! The gated two-stream classifier, its training loop and the AUC harness.

mod artifact;
mod config;
pub mod layers;
mod metrics;
mod network;
mod predict;
mod train;

pub use artifact::{HpModel, ARTIFACT_VERSION};
pub use config::{CnnBlock, GateLayout, Grid, Hyper, ModelConfig, Streams, TrainConfig};
pub use metrics::{evaluate_auc, mean_auc};
pub use network::{Dropout, InputDims, Network, ParamGroup, Trace};
pub use predict::{predict_and_normalize, min_max_normalize, PredictionSet};
pub use train::{
    bce_with_logits, fit, predict_samples, stratified_folds, stratified_split, train,
    train_with_progress, Fit, GridRow, Progress, Sample, TrainReport,
};
