//! Mini-batch MSE training with Adam, clipping and early stopping.

mod adam;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, Adam};
pub use crate::model::{load_checkpoint, save_checkpoint};

use crate::data::SequenceWindow;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub shuffle_seed: u64,
    /// Global-norm clip threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            shuffle_seed: 0,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("train.lr", "must be finite and nonnegative"));
        }
        for (key, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(key, format!("{b} not in (0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("train.eps", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("train.max_epochs", "must be at least 1"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("train.grad_clip", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }

    /// Tab-separated `epoch, train_loss, val_loss` with a header row; no
    /// timings, so identical runs give identical text.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\tval_loss\n");
        for e in &self.epochs {
            s.push_str(&format_epoch_line(e));
            s.push('\n');
        }
        s
    }
}

pub fn format_epoch_line(e: &EpochRecord) -> String {
    format!("{}\t{}\t{}", e.epoch, e.train_loss, e.val_loss)
}

/// Mean squared error of two equal-length lists as a 1x1 tensor.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<Tensor> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Usage(format!(
            "mse_loss needs equal nonzero lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    let total: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(Tensor::scalar(total / pred.len() as f64))
}

/// Mean squared error of the model over `windows`, summed in order.
pub fn dataset_mse(model: &Model, windows: &[SequenceWindow]) -> Result<f64> {
    let preds = predict_all(model, windows)?;
    let targets: Vec<f64> = windows.iter().map(|w| w.target).collect();
    mse_loss(&preds, &targets)?.item()
}

/// Predictions in input order; evaluated in parallel.
pub fn predict_all(model: &Model, windows: &[SequenceWindow]) -> Result<Vec<f64>> {
    windows.par_iter().map(|w| model.predict(w)).collect()
}

fn mix_seed(a: u64, b: u64, c: u64) -> u64 {
    // splitmix64 finaliser over a simple combination.
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ c.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn train(
    train: &[SequenceWindow],
    val: &[SequenceWindow],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(Model, TrainHistory)> {
    train_with_observer(train, val, mcfg, tcfg, |_| {})
}

/// Trains from a fresh initialisation, calling `observer` after each epoch.
///
/// Per-window gradients inside a batch are computed in parallel and then
/// summed in window order, so results do not depend on thread count.
pub fn train_with_observer(
    train: &[SequenceWindow],
    val: &[SequenceWindow],
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(Model, TrainHistory)> {
    tcfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage(format!(
            "training needs non-empty splits (train {}, val {})",
            train.len(),
            val.len()
        )));
    }
    let mut model = Model::new(*mcfg)?;
    let sizes: Vec<usize> = model.params().values().iter().map(|t| t.len()).collect();
    let mut opt = Adam::new(tcfg.learning_rate, tcfg.beta1, tcfg.beta2, tcfg.eps, &sizes);

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = {
        use rand::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(tcfg.shuffle_seed)
    };

    let mut history = TrainHistory {
        epochs: Vec::new(),
        best_epoch: 0,
    };
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 0..tcfg.max_epochs {
        let started = Instant::now();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(tcfg.batch_size).enumerate() {
            let results: Vec<(f64, ModelParams)> = batch
                .par_iter()
                .map(|&i| {
                    let seed = mix_seed(mcfg.seed, epoch as u64, i as u64);
                    model.loss_and_grad(&train[i], Some(seed))
                })
                .collect::<Result<_>>()?;

            let mut iter = results.into_iter();
            let (first_loss, mut grad) = iter.next().expect("non-empty batch");
            let mut batch_loss = first_loss;
            for (loss, g) in iter {
                batch_loss += loss;
                for (acc, add) in grad.values_mut().into_iter().zip(g.values()) {
                    acc.data_mut().iter_mut().zip(add.data()).for_each(|(a, b)| *a += b);
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    message: format!("batch loss is {batch_loss}"),
                });
            }
            epoch_loss += batch_loss;
            let inv = 1.0 / batch.len() as f64;
            let mut grads = grad.values_mut();
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|v| *v *= inv));
            if let Some(clip) = tcfg.grad_clip {
                let norm = clip_global_norm(&mut grads, clip);
                if !norm.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: b,
                        message: format!("gradient norm is {norm}"),
                    });
                }
            }
            let grads: Vec<&Tensor> = grads.into_iter().map(|g| &*g).collect();
            let mut params = model.params().clone();
            opt.update(&mut params.values_mut(), &grads);
            model.set_params(params).map_err(|e| Error::Diverged {
                epoch,
                batch: b,
                message: e.to_string(),
            })?;
        }

        let train_loss = epoch_loss / train.len() as f64;
        let val_loss = dataset_mse(&model, val)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                batch: 0,
                message: format!("validation loss is {val_loss}"),
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            wall_s: started.elapsed().as_secs_f64(),
        };
        observer(&record);
        history.epochs.push(record);

        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params().clone()));
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= tcfg.patience {
                break;
            }
        }
    }

    let (_, params) = best.expect("at least one epoch ran");
    model.set_params(params)?;
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().item().unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0], &[2.0]).unwrap().item().unwrap(), 4.0);
        assert_eq!(mse_loss(&[1.0, 2.0], &[3.0, 0.0]).unwrap().item().unwrap(), 4.0);
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(Error::Usage(_))));
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn config_validation_names_keys() {
        let bad = TrainConfig {
            beta2: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("train.beta2"));
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("train.batch_size"));
    }
}
