//! Anchor-loss autoencoder and its plain-autoencoder baseline.

pub mod anchor;
mod config;
mod matrix;
mod model;
mod network;
mod norm;
pub mod store;

pub use anchor::{anchor_loss, anchor_loss_and_grad, knn_distance};
pub use config::{ModelConfig, ModelKind, INPUT_DIM};
pub use matrix::Matrix;
pub use model::{train, train_series, AnomalyVerdict, ErrorStats, TrainedModel, TrainingMeta};
pub use network::{mse, total_loss, Block, LossParts, Network};
pub use norm::NormStats;
