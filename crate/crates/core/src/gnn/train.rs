use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::batch::{GraphBatch, GraphRef, MessageDirection};
use super::model::{backward, mean_loss, predict, ModelError};
use super::optim::{adam_step, AdamConfig, AdamState};
use super::params::ModelParams;
use crate::augment::{add_noise_to_rows, NoiseConfig};
use crate::features::FeatureLayout;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BatchPolicy {
    /// One gradient step per epoch over the whole training fold.
    Full,
    /// Shuffled mini-batches of `size` graphs.
    Mini { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub batch: BatchPolicy,
    pub direction: MessageDirection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            adam: AdamConfig::default(),
            batch: BatchPolicy::Full,
            direction: MessageDirection::Downstream,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite loss at epoch {epoch}: train {train_loss}, validation {val_loss}")]
    NonFiniteLoss {
        epoch: usize,
        train_loss: f64,
        val_loss: f64,
    },
    #[error("the {0} set is empty")]
    EmptySet(&'static str),
}

/// A labelled graph ready for training: features, aggregation lists, target.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub x: ArrayView2<'a, f64>,
    pub neighbors: &'a [Vec<usize>],
    pub label: u8,
}

impl<'a> Example<'a> {
    fn graph(&self) -> GraphRef<'a> {
        GraphRef {
            x: self.x,
            neighbors: self.neighbors,
        }
    }
}

/// Stacks examples into one batch plus label vector.
pub fn stack(examples: &[Example<'_>]) -> (GraphBatch, Vec<u8>) {
    let refs: Vec<GraphRef<'_>> = examples.iter().map(Example::graph).collect();
    (
        GraphBatch::new(&refs),
        examples.iter().map(|e| e.label).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub epoch: usize,
    pub best_val_loss: f64,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    pub best_params: ModelParams,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for r in &self.history {
            s.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
        }
        s
    }
}

/// Keys the per-epoch noise and shuffle streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub master: u64,
    pub fold: u64,
}

/// Trains for `cfg.epochs` epochs and keeps the parameters with the lowest
/// validation loss.
///
/// Each epoch draws fresh noise for every training instance (duplicates
/// included), takes the gradient step(s), then scores the clean validation
/// set.
pub fn train(
    init: ModelParams,
    train_set: &[Example<'_>],
    val_set: &[Example<'_>],
    layout: &FeatureLayout,
    cfg: &TrainConfig,
    noise: NoiseConfig,
    key: StreamKey,
) -> Result<TrainState, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptySet("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptySet("validation"));
    }
    let (val_batch, val_labels) = stack(val_set);
    let val_loss_of = |p: &ModelParams| -> Result<f64, ModelError> {
        Ok(mean_loss(&predict(p, &val_batch)?, &val_labels))
    };

    let initial_val = val_loss_of(&init)?;
    let mut state = TrainState {
        adam: AdamState::new(&init),
        best_params: init.clone(),
        params: init,
        epoch: 0,
        best_val_loss: initial_val,
        best_epoch: 0,
        history: Vec::with_capacity(cfg.epochs),
    };

    // the full-batch stack is reused every epoch; noise goes onto a copy
    let full = matches!(cfg.batch, BatchPolicy::Full).then(|| stack(train_set));
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        let mut noise_rng = stream(key.master, Purpose::Noise, &[key.fold, epoch as u64]);
        let mut losses = Vec::new();
        match (&full, cfg.batch) {
            (Some((base, labels)), _) => {
                let mut batch = base.clone();
                add_noise_to_rows(batch.x.view_mut(), layout, &noise, &mut noise_rng);
                let (l, g) = backward(&state.params, &batch, labels)?;
                adam_step(&mut state.params, &mut state.adam, &g, &cfg.adam);
                losses.push((l, labels.len()));
            }
            (None, BatchPolicy::Mini { size }) => {
                let mut shuffle_rng = stream(key.master, Purpose::Shuffle, &[key.fold, epoch as u64]);
                order.shuffle(&mut shuffle_rng);
                for chunk in order.chunks(size.max(1)) {
                    let picked: Vec<Example<'_>> = chunk.iter().map(|&i| train_set[i]).collect();
                    let (mut batch, labels) = stack(&picked);
                    add_noise_to_rows(batch.x.view_mut(), layout, &noise, &mut noise_rng);
                    let (l, g) = backward(&state.params, &batch, &labels)?;
                    adam_step(&mut state.params, &mut state.adam, &g, &cfg.adam);
                    losses.push((l, labels.len()));
                }
            }
            (None, BatchPolicy::Full) => unreachable!(),
        }
        let n: usize = losses.iter().map(|x| x.1).sum();
        let train_loss = losses.iter().map(|(l, k)| l * *k as f64).sum::<f64>() / n as f64;
        let val_loss = val_loss_of(&state.params)?;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                train_loss,
                val_loss,
            });
        }
        state.epoch = epoch;
        state.history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if epoch == 1 || val_loss < state.best_val_loss {
            state.best_val_loss = val_loss;
            state.best_epoch = epoch;
            state.best_params = state.params.clone();
        }
    }
    Ok(state)
}
