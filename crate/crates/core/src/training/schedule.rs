//! Training hyperparameters and the epoch-level learning-rate schedule.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub epochs_total: usize,
    /// Cosine annealing from `lr0` to `lr_min` over these epochs, then
    /// `lr_min` held constant.
    pub epochs_cosine: usize,
    pub batch_size: usize,
    pub droplead_p: f64,
    pub seed: u64,
    /// Number of cross-validation folds.
    pub k: usize,
    /// How many of the `k` rounds to run; 1 gives a single
    /// train/validation/test split.
    pub rounds: usize,
    pub finetune_epochs: usize,
    pub finetune_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            lr_min: 1e-4,
            weight_decay: 5e-5,
            epochs_total: 70,
            epochs_cosine: 40,
            batch_size: 32,
            droplead_p: 0.5,
            seed: 0,
            k: 10,
            rounds: 10,
            finetune_epochs: 5,
            finetune_lr: 1e-4,
        }
    }
}

impl TrainConfig {
    /// The shortened schedule used for desk-scale runs: 20 epochs with
    /// cosine annealing over the first 12, in batches of 8 so that a few
    /// hundred records still give enough optimizer steps.
    pub fn desk() -> Self {
        Self {
            epochs_total: 20,
            epochs_cosine: 12,
            batch_size: 8,
            rounds: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs_cosine > self.epochs_total {
            return bad(format!(
                "epochs_cosine {} exceeds epochs_total {}",
                self.epochs_cosine, self.epochs_total
            ));
        }
        if !(0.0..=1.0).contains(&self.droplead_p) {
            return bad(format!("droplead_p {} outside [0, 1]", self.droplead_p));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2".into());
        }
        if self.k < 2 || self.rounds == 0 || self.rounds > self.k {
            return bad(format!("need 2 <= k and 1 <= rounds <= k (k={}, rounds={})", self.k, self.rounds));
        }
        if self.lr0 < 0.0 || self.lr_min < 0.0 || self.weight_decay < 0.0 || self.finetune_lr < 0.0 {
            return bad("learning rates and weight decay must be non-negative".into());
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("train.lr0", self.lr0.to_string()),
            ("train.lr_min", self.lr_min.to_string()),
            ("train.weight_decay", self.weight_decay.to_string()),
            ("train.epochs_total", self.epochs_total.to_string()),
            ("train.epochs_cosine", self.epochs_cosine.to_string()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.droplead_p", self.droplead_p.to_string()),
            ("train.seed", self.seed.to_string()),
            ("train.k", self.k.to_string()),
            ("train.rounds", self.rounds.to_string()),
            ("train.finetune_epochs", self.finetune_epochs.to_string()),
            ("train.finetune_lr", self.finetune_lr.to_string()),
        ]
    }

    /// Applies one setting; `false` if the key is not a training key.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<V: std::str::FromStr>(key: &str, v: &str) -> Result<V> {
            v.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid value `{v}` for {key}")))
        }
        match key {
            "train.lr0" => self.lr0 = num(key, value)?,
            "train.lr_min" => self.lr_min = num(key, value)?,
            "train.weight_decay" => self.weight_decay = num(key, value)?,
            "train.epochs_total" => self.epochs_total = num(key, value)?,
            "train.epochs_cosine" => self.epochs_cosine = num(key, value)?,
            "train.batch_size" => self.batch_size = num(key, value)?,
            "train.droplead_p" => self.droplead_p = num(key, value)?,
            "train.seed" => self.seed = num(key, value)?,
            "train.k" => self.k = num(key, value)?,
            "train.rounds" => self.rounds = num(key, value)?,
            "train.finetune_epochs" => self.finetune_epochs = num(key, value)?,
            "train.finetune_lr" => self.finetune_lr = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Learning rate for `epoch`:
/// `lr_min + (lr0 - lr_min) * (1 + cos(pi * epoch / E_cos)) / 2` during the
/// cosine phase, `lr_min` afterwards.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> Result<f64> {
    if epoch >= cfg.epochs_total {
        return Err(Error::invalid(format!(
            "epoch {epoch} outside schedule of {} epochs",
            cfg.epochs_total
        )));
    }
    if epoch >= cfg.epochs_cosine {
        return Ok(cfg.lr_min);
    }
    let phase = std::f64::consts::PI * epoch as f64 / cfg.epochs_cosine as f64;
    Ok(cfg.lr_min + (cfg.lr0 - cfg.lr_min) * (1.0 + phase.cos()) / 2.0)
}
