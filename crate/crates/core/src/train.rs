//! Adam training with learning-rate reduction on plateau, early stopping
//! and best-validation snapshotting, shared by every model.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::MultiViewSample;
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Parameters};
use crate::rng;

/// The contract every trainable model implements.
pub trait Classifier: Clone {
    type Params: Parameters + Clone;

    fn params(&self) -> &Self::Params;
    fn params_mut(&mut self) -> &mut Self::Params;

    /// Mean training loss on `batch` and its gradient. Dropout masks are a
    /// pure function of `seed`.
    fn loss_and_gradient(
        &self,
        batch: &[MultiViewSample],
        lambda: f64,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<(f64, Self::Params)>;

    /// Mean negative log-likelihood used for model selection (no dropout).
    fn validation_loss(&self, samples: &[MultiViewSample]) -> Result<f64>;

    /// Class distribution for one sample, inference mode.
    fn predict_proba(&self, views: &[Vec<f64>]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the per-view likelihood terms.
    pub lambda: f64,
    pub max_epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1.0,
            max_epochs: 500,
            batch_size: None,
            plateau_patience: 10,
            plateau_factor: 0.5,
            early_stop_patience: 50,
            dropout_rate: 0.5,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("{msg} ({self:?})")));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must be in (0,1)");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0,1)");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be positive");
        }
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }
}

fn check_disjoint(train: &[MultiViewSample], val: &[MultiViewSample]) -> Result<()> {
    let ids: BTreeSet<&str> = train.iter().map(|s| s.id.as_str()).filter(|id| !id.is_empty()).collect();
    if let Some(s) = val.iter().find(|s| !s.id.is_empty() && ids.contains(s.id.as_str())) {
        return Err(Error::InvalidInput(format!(
            "sample {} is in both the training and validation sets",
            s.id
        )));
    }
    Ok(())
}

/// Trains a copy of `model` and returns the snapshot with the lowest
/// validation loss together with the per-epoch history.
///
/// Each epoch runs Adam over the batches, then scores the validation set.
/// After `plateau_patience` epochs without improvement the learning rate is
/// multiplied by `plateau_factor` (and the plateau counter restarts);
/// after `early_stop_patience` epochs without improvement training stops.
pub fn fit<C: Classifier>(
    model: &C,
    train: &[MultiViewSample],
    val: &[MultiViewSample],
    config: &TrainConfig,
) -> Result<(C, TrainHistory)> {
    config.validate()?;
    if val.is_empty() {
        return Err(Error::InvalidInput("validation set is empty".into()));
    }
    if train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    check_disjoint(train, val)?;

    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut history = TrainHistory::default();
    let mut adam = AdamState::new(current.params(), &config.adam);
    let mut since_best = 0;
    let mut since_reduction = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.max_epochs {
        let lr = adam.learning_rate;
        let mut epoch_loss = 0.0;
        let batches: Vec<Vec<usize>> = match config.batch_size {
            Some(size) if size < train.len() => {
                let mut r = rng::rng(rng::derive(config.seed, &[1, epoch as u64]));
                order.shuffle(&mut r);
                order.chunks(size).map(<[usize]>::to_vec).collect()
            }
            _ => Vec::new(),
        };
        if batches.is_empty() {
            let seed = rng::derive(config.seed, &[2, epoch as u64, 0]);
            let (loss, grads) = current
                .loss_and_gradient(train, config.lambda, config.dropout_rate, seed)
                .map_err(|e| at_epoch(e, epoch))?;
            adam.step(current.params_mut(), &grads).map_err(|e| at_epoch(e, epoch))?;
            epoch_loss = loss;
        } else {
            for (b, idx) in batches.iter().enumerate() {
                let batch: Vec<MultiViewSample> = idx.iter().map(|&i| train[i].clone()).collect();
                let seed = rng::derive(config.seed, &[2, epoch as u64, b as u64]);
                let (loss, grads) = current
                    .loss_and_gradient(&batch, config.lambda, config.dropout_rate, seed)
                    .map_err(|e| at_epoch(e, epoch))?;
                adam.step(current.params_mut(), &grads).map_err(|e| at_epoch(e, epoch))?;
                epoch_loss += loss * batch.len() as f64;
            }
            epoch_loss /= train.len() as f64;
        }
        let val_loss = current.validation_loss(val).map_err(|e| at_epoch(e, epoch))?;
        history.train_loss.push(epoch_loss);
        history.val_loss.push(val_loss);
        history.learning_rate.push(lr);

        if val_loss < best_loss {
            best_loss = val_loss;
            best = current.clone();
            history.best_epoch = Some(epoch);
            since_best = 0;
            since_reduction = 0;
        } else {
            since_best += 1;
            since_reduction += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
            if since_reduction >= config.plateau_patience {
                adam.learning_rate *= config.plateau_factor;
                since_reduction = 0;
            }
        }
    }
    Ok((best, history))
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}
