//! Two-layer graph attention network for graph classification.

pub mod batch;
pub mod model;
pub mod optim;
pub mod params;
pub mod train;

pub use batch::{neighbor_lists, GraphBatch, GraphRef, MessageDirection};
pub use model::{
    backward, batch_loss, forward, forward_batch, gat_layer_forward, loss, mean_pool, predict,
    Activation, ModelError,
};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{GatLayerParams, HeadMerge, ModelParams, ModelShape};
pub use train::{train, BatchPolicy, Example, StreamKey, TrainConfig, TrainError, TrainState};
