//! Mini-batch training loop with best-validation snapshotting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::backward;
use super::forward::{argmax, predict};
use super::optim::OptimizerState;
use super::params::LstmModel;
use super::{Hyperparameters, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureSequence, FEATURES};
use crate::trackdata::ClassSet;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub features: FeatureSequence,
    /// Index into the class set.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches, with dropout active.
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept, 0 if no epoch ran.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl History {
    pub fn best_val_accuracy(&self) -> Option<f64> {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map(|e| e.val_accuracy)
    }
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(model: &LstmModel, samples: &[TrainingSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        if argmax(&predict(model, &s.features)?) == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

fn check_samples(
    samples: &[TrainingSample],
    seq_len: usize,
    classes: usize,
    what: &str,
) -> Result<()> {
    for s in samples {
        if s.features.len() != seq_len {
            return Err(Error::config(format!(
                "{what} sample {:?} has length {}, expected {seq_len}",
                s.features.clip_id,
                s.features.len()
            )));
        }
        if s.label >= classes {
            return Err(Error::config(format!(
                "{what} sample {:?} has label index {} for {classes} classes",
                s.features.clip_id, s.label
            )));
        }
    }
    Ok(())
}

/// Trains a fresh model.
///
/// The sequence length is taken from the first training sample. Weights are
/// initialized from `config.seed`; each epoch shuffles with its own stream of
/// the same seed, so runs are reproducible. The returned model is the one
/// with the highest validation accuracy (earliest epoch on ties). When `val`
/// is empty the training accuracy is used for selection instead.
pub fn train(
    train: &[TrainingSample],
    val: &[TrainingSample],
    class_set: ClassSet,
    hyper: &Hyperparameters,
    config: &TrainConfig,
) -> Result<(LstmModel, History)> {
    hyper.validate()?;
    config.validate()?;
    let first = train
        .first()
        .ok_or_else(|| Error::config("empty training set"))?;
    let seq_len = first.features.len();
    check_samples(train, seq_len, class_set.len(), "training")?;
    check_samples(val, seq_len, class_set.len(), "validation")?;

    let mut model =
        LstmModel::init_with(class_set, seq_len, hyper.clone(), config.seed, config.init)?;
    let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut opt = OptimizerState::new(hyper.optimizer, config.learning_rate, &shapes);
    let selection = if val.is_empty() { train } else { val };

    let mut history = History::default();
    let mut best: Option<(f64, LstmModel)> = None;
    let mut since_best = 0usize;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<(&[[f64; FEATURES]], usize)> = chunk
                .iter()
                .map(|&i| (train[i].features.values.as_slice(), train[i].label))
                .collect();
            let dropout = (hyper.dropout > 0.0).then_some((hyper.dropout, &mut rng));
            let (loss, grads) = backward(&model, &batch, dropout)?;
            loss_sum += loss * chunk.len() as f64;
            opt.update(&mut model.tensors_mut(), &grads.as_slices())?;
        }
        if model
            .tensors()
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Numerical(format!(
                "parameters diverged in epoch {epoch}"
            )));
        }
        let train_loss = loss_sum / train.len() as f64;
        let val_accuracy = accuracy(&model, selection)?;
        log::debug!("epoch {epoch}: loss {train_loss:.5} val_acc {val_accuracy:.4}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });

        if best.as_ref().is_none_or(|(acc, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, model.clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best.map(|(_, m)| m).unwrap_or(model), history))
}
