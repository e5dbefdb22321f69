//! Graph-classification engine for disinformation detection on social-media
//! propagation graphs.
//!
//! The pipeline runs end to end:
//!
//! * [`data_model`]: propagation graphs, diffusion-tree merging, dataset IO.
//! * [`text_embed`]: static word-vector tables and precomputed contextual stores.
//! * [`features`]: node feature matrices `[propagation ‖ profile? ‖ post?]`.
//! * [`augment`]: minority oversampling and noisy-embedding augmentation.
//! * [`gnn`]: two-layer graph attention network, mean pooling, MLP head,
//!   hand-written reverse-mode gradients, Adam, and the training loop.
//! * [`eval_metrics`]: Macro F1, ROC AUC, average precision, fold aggregation.
//! * [`stats`]: exact/approximate Wilcoxon signed-rank tests with Holm correction.
//! * [`harness`]: splits, folds, the 48-cell experiment grid, synthetic data,
//!   and report emission.

pub mod augment;
pub mod data_model;
pub mod eval_metrics;
pub mod features;
pub mod gnn;
pub mod harness;
pub mod rng;
pub mod stats;
pub mod text_embed;

pub use data_model::{Dataset, Label, NodeKind, PropagationGraph, RawNode};
pub use text_embed::{ContextualStore, Encoder, StaticTable, TextConfig, TextSources};
