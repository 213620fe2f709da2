use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Mdhan, Pass, UserInput};
use crate::autodiff::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches (dropout active).
    pub train_loss: f64,
    /// Accuracy over the training set, measured dropout-free after the epoch.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_accuracy)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Mini-batch Adam for `model.config.epochs` epochs over a seeded shuffle.
/// The result depends only on the config seed, not on `exec`.
pub fn train(model: &mut Mdhan, data: &[UserInput], exec: ExecMode) -> Result<History> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let cfg = model.config.clone();
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, &model.params);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, "shuffle", epoch as u64));
        let epoch_seed = rng::derive_seed(cfg.seed, "epoch", epoch as u64);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch).enumerate() {
            let batch: Vec<UserInput> = chunk.iter().map(|&i| data[i].clone()).collect();
            let seed = rng::derive_seed(epoch_seed, "batch", b as u64);
            let (loss, _, grads) = model.batch_grad(&model.params, &batch, Pass::Train(seed), exec)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam.step(&mut model.params, &grads);
            loss_sum += loss;
            batches += 1;
        }
        let preds = model.predict_all(data, exec)?;
        let correct = preds
            .iter()
            .zip(data)
            .filter(|(p, u)| p.positive() == (u.label >= 0.5))
            .count();
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_accuracy: correct as f64 / data.len() as f64,
        };
        log::info!("epoch {epoch}: loss {:.4}, train accuracy {:.3}", rec.train_loss, rec.train_accuracy);
        history.epochs.push(rec);
    }
    Ok(history)
}
