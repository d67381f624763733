//! Surrogate-task training: datasets, the synthetic generator, the
//! mini-batch loop and per-variant epoch timing.

mod data;
mod synthetic;

use std::io::Write;
use std::time::Instant;

use highlighter_nn::optim::{Adam, AdamConfig};
use highlighter_nn::{NormMode, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use data::{
    ingest_dataset, prepare_examples, split_examples, write_dataset, write_manifest, ClipSource, Dataset,
    DatasetDescriptor, Example, LabeledClip, Split, DESCRIPTOR_FILE, MANIFEST_FILE,
};
pub use synthetic::{generate_synthetic, synthetic_dataset, SyntheticClip, SyntheticSpec};

use crate::models::{LossKind, Model, ModelConfig, Variant};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_songs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_songs: 16, epochs: 20, lr: 1e-4, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the highest validation accuracy
    /// (earliest on ties); the initialization when no epoch ran.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Writes `epoch,train_loss,val_accuracy,seconds` rows.
pub fn write_log_csv<W: Write>(log: &[EpochLog], mut w: W) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_accuracy,seconds")?;
    for e in log {
        writeln!(w, "{},{:.6},{:.6},{:.3}", e.epoch, e.train_loss, e.val_accuracy, e.seconds)?;
    }
    Ok(())
}

fn check_examples(examples: &[Example], config: &ModelConfig) -> Result<()> {
    for ex in examples {
        if ex.target.len() != config.n_classes {
            return Err(Error::invalid(format!(
                "clip `{}` has {} label slots, model has {} classes",
                ex.clip_id,
                ex.target.len(),
                config.n_classes
            )));
        }
        if ex.chunks.len() != config.chunks_per_clip {
            return Err(Error::invalid(format!(
                "clip `{}` has {} chunks, training needs {}",
                ex.clip_id,
                ex.chunks.len(),
                config.chunks_per_clip
            )));
        }
        let positives = ex.target.iter().filter(|&&v| v > 0.5).count();
        let ok = match config.loss_kind {
            LossKind::Bce => positives >= 1,
            LossKind::Cce => positives == 1,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "clip `{}` has {positives} positive labels, invalid for {:?} loss",
                ex.clip_id, config.loss_kind
            )));
        }
    }
    Ok(())
}

/// One model, its optimizer and the shuffling/dropout stream.
pub struct Trainer {
    model: Model,
    adam: Option<Adam<f32>>,
    rng: ChaCha8Rng,
    batch_songs: usize,
    epoch: usize,
}

impl Trainer {
    /// `lr == 0` is accepted and turns every step into a no-op.
    pub fn new(model: Model, config: &TrainConfig) -> Result<Self> {
        if config.batch_songs < 2 {
            return Err(Error::invalid("batch norm needs at least 2 songs per batch"));
        }
        if !(config.lr >= 0.0 && config.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {}", config.lr)));
        }
        let adam = if config.lr > 0.0 {
            Some(Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() })?)
        } else {
            None
        };
        Ok(Trainer {
            model,
            adam,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            batch_songs: config.batch_songs,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    /// Songs per batch for `n` songs: full batches, with a trailing single
    /// song folded into the previous batch.
    fn batches(&self, order: &[usize]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = order.chunks(self.batch_songs).map(<[usize]>::to_vec).collect();
        if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
            let tail = out.pop().expect("checked above");
            out.last_mut().expect("checked above").extend(tail);
        }
        out
    }

    /// One shuffled pass; returns the mean batch loss.
    pub fn train_epoch(&mut self, data: &[Example]) -> Result<f64> {
        if data.len() < self.batch_songs {
            return Err(Error::invalid(format!(
                "{} training clips is smaller than one batch of {}",
                data.len(),
                self.batch_songs
            )));
        }
        check_examples(data, self.model.config())?;
        self.epoch += 1;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let c = self.model.config().n_classes;
        let mut total = 0.0;
        let batches = self.batches(&order);
        for (b, batch) in batches.iter().enumerate() {
            let chunks: Vec<_> = batch.iter().flat_map(|&i| data[i].chunks.iter()).collect();
            let target: Vec<f32> = batch.iter().flat_map(|&i| data[i].target.iter().copied()).collect();
            let target = Tensor::new(&[batch.len(), c], target)?;
            let mut tape = Tape::new();
            let input = tape.constant(self.model.input_tensor(&chunks)?);
            let mut updates = Vec::new();
            let out =
                self.model.record(&mut tape, input, batch.len(), NormMode::Train, Some(&mut self.rng), &mut updates)?;
            let loss = match self.model.config().loss_kind {
                LossKind::Bce => tape.binary_cross_entropy(out.song_prediction, &target)?,
                LossKind::Cce => tape.categorical_cross_entropy(out.song_prediction, &target)?,
            };
            let value = tape.value(loss)[0] as f64;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: self.epoch, batch: b + 1 });
            }
            total += value;
            if let Some(adam) = &mut self.adam {
                let grads = tape.backward(loss)?;
                adam.step(self.model.params_mut(), &grads)?;
                self.model.params_mut().apply_running_stats(&updates);
            }
        }
        Ok(total / batches.len() as f64)
    }
}

/// Trains from a seeded initialization and keeps the best validation epoch.
pub fn train(train: &[Example], val: &[Example], config: ModelConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    if train.len() < tc.batch_songs {
        return Err(Error::invalid(format!(
            "{} training clips is smaller than one batch of {}",
            train.len(),
            tc.batch_songs
        )));
    }
    if val.is_empty() && tc.epochs > 0 {
        return Err(Error::invalid("validation set is empty"));
    }
    check_examples(train, &config)?;
    check_examples(val, &config)?;
    let mut trainer = Trainer::new(Model::new(config, tc.seed)?, tc)?;
    let mut log = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    for epoch in 1..=tc.epochs {
        let start = Instant::now();
        let train_loss = trainer.train_epoch(train)?;
        let val_accuracy = evaluate_classifier(trainer.model(), val)?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!("epoch {epoch}: loss {train_loss:.5}, val accuracy {val_accuracy:.4}, {seconds:.1} s");
        log.push(EpochLog { epoch, train_loss, val_accuracy, seconds });
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, trainer.model().clone()));
        }
    }
    Ok(match best {
        Some((_, best_epoch, model)) => TrainOutcome { model, log, best_epoch },
        None => TrainOutcome { model: trainer.into_model(), log, best_epoch: 0 },
    })
}

/// Top-1 accuracy of the song-level argmax against each clip's first
/// positive label. NaN for an empty set.
pub fn evaluate_classifier(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut hits = 0usize;
    for ex in examples {
        let (pred, _) = model.predict(&ex.chunks)?;
        if argmax(&pred.song_level) == ex.label() {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochTiming {
    pub variant: Variant,
    /// Wall-clock seconds of each measured epoch.
    pub seconds: Vec<f64>,
}

impl EpochTiming {
    pub fn mean(&self) -> f64 {
        self.seconds.iter().sum::<f64>() / self.seconds.len().max(1) as f64
    }
}

/// Times training epochs of each variant on the same data, seed and batch
/// schedule, after `warmup` untimed epochs.
pub fn epoch_timer(
    variants: &[Variant],
    data: &[Example],
    base: &ModelConfig,
    tc: &TrainConfig,
    warmup: usize,
    measured: usize,
) -> Result<Vec<EpochTiming>> {
    let mut out = Vec::with_capacity(variants.len());
    for &variant in variants {
        let config = ModelConfig { variant, ..base.clone() };
        let mut trainer = Trainer::new(Model::new(config, tc.seed)?, tc)?;
        for _ in 0..warmup {
            trainer.train_epoch(data)?;
        }
        let mut seconds = Vec::with_capacity(measured);
        for _ in 0..measured {
            let start = Instant::now();
            trainer.train_epoch(data)?;
            seconds.push(start.elapsed().as_secs_f64());
        }
        out.push(EpochTiming { variant, seconds });
    }
    Ok(out)
}
