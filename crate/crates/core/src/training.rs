//! Mini-batch training with Adam, per-epoch mask/scrub resampling and
//! reduce-on-plateau learning-rate decay.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::adam::AdamState;
use crate::autodiff::AutodiffError;
use crate::datagen::{Dataset, Episode};
use crate::evaluation::{evaluate, EvalSummary, MetricError};
use crate::language::sample_mask_config;
use crate::model::{episode_loss_and_grads, Dropout, InputMode, ModelConfig, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    /// Minimum decrease of the validation loss that counts as improvement.
    pub threshold: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub scrub_probability: f64,
    /// Redraw each episode's mask and scrub flag every epoch. When off, the
    /// stored labels are used as they are.
    pub curriculum: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            factor: 0.1,
            patience: 5,
            min_lr: 1e-6,
            threshold: 1e-6,
            batch_size: 16,
            max_epochs: 60,
            scrub_probability: 0.5,
            curriculum: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return fail("plateau factor must lie in (0, 1)");
        }
        if self.patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1");
        }
        if !(self.lr > 0.0) || !(self.min_lr > 0.0) || self.min_lr > self.lr {
            return fail("need 0 < min_lr <= lr");
        }
        if !(0.0..=1.0).contains(&self.scrub_probability) {
            return fail("scrub probability must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Reduce-on-plateau state over a stream of validation losses.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub lr: f64,
    best: f64,
    stale: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64) -> Self {
        Self { lr, best: f64::INFINITY, stale: 0 }
    }

    /// Feeds one epoch's validation loss and returns the learning rate for the
    /// next epoch.
    pub fn observe(&mut self, val_loss: f64, cfg: &TrainConfig) -> f64 {
        if val_loss < self.best - cfg.threshold {
            self.best = val_loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        if self.stale >= cfg.patience {
            self.lr = (self.lr * cfg.factor).max(cfg.min_lr);
            self.stale = 0;
        }
        self.lr
    }
}

/// Learning rate after replaying `val_losses` from `initial_lr`.
pub fn plateau_schedule(val_losses: &[f64], initial_lr: f64, cfg: &TrainConfig) -> f64 {
    let mut s = PlateauScheduler::new(initial_lr);
    for &l in val_losses {
        s.observe(l, cfg);
    }
    s.lr
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_sentence_acc: f64,
    /// Learning rate in effect during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,val_loss,val_sentence_acc,lr";

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for e in &self.epochs {
            writeln!(w, "{},{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.val_sentence_acc, e.lr)?;
        }
        Ok(())
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.get(self.best_epoch)
    }
}

fn stream(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Epoch permutation of `0..n`, determined by (seed, epoch).
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5348_5546_464c_4500);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Mask and scrub redrawn for this epoch, plus the dropout stream.
fn relabel_for_epoch(ep: &Episode, cfg: &TrainConfig, epoch: usize, index: usize) -> (Episode, ChaCha8Rng) {
    let mut rng = stream(cfg.seed, epoch + 1, index);
    if !cfg.curriculum {
        return (ep.clone(), rng);
    }
    let mask = sample_mask_config(&mut rng);
    let scrub = rng.gen_bool(cfg.scrub_probability);
    (ep.relabeled(mask, scrub), rng)
}

/// One averaged gradient step over `batch`. Returns the mean batch loss.
pub fn train_batch(
    episodes: &[Episode],
    batch: &[usize],
    params: &mut ModelParams,
    adam: &mut AdamState,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64, TrainError> {
    let results: Vec<(f64, Vec<Vec<f64>>)> = batch
        .par_iter()
        .map(|&i| {
            let (ep, mut rng) = relabel_for_epoch(&episodes[i], cfg, epoch, i);
            episode_loss_and_grads(&ep, params, InputMode::Recorded, Dropout::On(&mut rng))
        })
        .collect::<Result<_, _>>()?;
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    let mut grads: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
    for (loss, g) in &results {
        total += loss;
        for (acc, gi) in grads.iter_mut().zip(g) {
            for (a, v) in acc.iter_mut().zip(gi) {
                *a += v * scale;
            }
        }
    }
    let loss = total * scale;
    if !loss.is_finite() {
        return Err(TrainError::NonFinite { epoch, batch: 0 });
    }
    let mut refs: Vec<&mut crate::autodiff::Tensor> = params.tensors.iter_mut().collect();
    adam.step(&mut refs, &grads)?;
    Ok(loss)
}

/// Trains from a seeded initialization; returns the best-validation weights.
pub fn train_run(
    train: &Dataset,
    val: &Dataset,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory), TrainError> {
    train_run_with(train, val, model_cfg, cfg, |_| {})
}

/// [`train_run`] with a per-epoch callback (progress reporting).
pub fn train_run_with(
    train: &Dataset,
    val: &Dataset,
    model_cfg: ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams, TrainHistory), TrainError> {
    cfg.validate()?;
    if train.episodes.is_empty() || val.episodes.is_empty() {
        return Err(TrainError::Config("training and validation sets must be non-empty".into()));
    }
    if train.condition.joint_width() != val.condition.joint_width() {
        return Err(TrainError::Config("training and validation modalities differ".into()));
    }
    if model_cfg.joint_dim != train.condition.joint_width() {
        return Err(TrainError::Config(format!(
            "model expects {} joint inputs, dataset records {}",
            model_cfg.joint_dim,
            train.condition.joint_width()
        )));
    }
    let mut params = ModelParams::init(model_cfg, cfg.seed)?;
    let mut adam = AdamState::for_params(cfg.lr, &params.tensors.iter().collect::<Vec<_>>());
    let mut sched = PlateauScheduler::new(cfg.lr);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..cfg.max_epochs {
        let lr = sched.lr;
        adam.lr = lr;
        let order = epoch_order(train.episodes.len(), cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        for (b, batch) in batches.iter().enumerate() {
            let loss = train_batch(&train.episodes, batch, &mut params, &mut adam, cfg, epoch)
                .map_err(|e| match e {
                    TrainError::NonFinite { .. } => TrainError::NonFinite { epoch, batch: b },
                    other => other,
                })?;
            loss_sum += loss;
        }
        let summary: EvalSummary = evaluate(&val.episodes, &params)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            val_loss: summary.loss,
            val_sentence_acc: summary.sentence_accuracy,
            lr,
        };
        if best.as_ref().map_or(true, |(b, _)| summary.loss < *b) {
            best = Some((summary.loss, params.clone()));
            history.best_epoch = epoch;
        }
        on_epoch(&record);
        history.epochs.push(record);
        sched.observe(summary.loss, cfg);
    }
    let params = best.map_or(params, |(_, p)| p);
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn five_stale_epochs_decay_once() {
        let c = cfg();
        let hist = [1.0, 0.9, 0.9, 0.95, 0.91, 0.92, 0.9];
        assert_eq!(plateau_schedule(&hist[..6], 1e-3, &c), 1e-3);
        let lr = plateau_schedule(&hist, 1e-3, &c);
        assert!((lr - 1e-4).abs() < 1e-18, "{lr}");
    }

    #[test]
    fn improvement_inside_window_resets() {
        let c = cfg();
        let hist = [1.0, 1.0, 1.0, 1.0, 0.5, 0.6, 0.6, 0.6, 0.6];
        assert_eq!(plateau_schedule(&hist, 1e-3, &c), 1e-3);
    }

    #[test]
    fn sub_threshold_gain_is_not_improvement() {
        let c = cfg();
        let hist = [1.0, 1.0 - 1e-7, 1.0 - 2e-7, 1.0 - 3e-7, 1.0 - 4e-7, 1.0 - 5e-7];
        assert!((plateau_schedule(&hist, 1e-3, &c) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn repeated_decay_clamps() {
        let c = cfg();
        let hist = vec![1.0; 1 + 5 * 10];
        assert_eq!(plateau_schedule(&hist, 1e-3, &c), 1e-6);
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(50, 3, 7);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(50, 3, 7));
        assert_ne!(a, epoch_order(50, 3, 8));
    }

    #[test]
    fn invalid_configs() {
        assert!(TrainConfig { factor: 1.0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { patience: 0, ..cfg() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }
}
