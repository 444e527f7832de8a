//! Reconstruction pretraining, position finetuning and evaluation.
//!
//! Both training loops evaluate the validation split before the first update
//! (logged as epoch 0), run Adam over seeded mini-batches, keep the weights
//! with the lowest validation loss and stop after `patience` epochs without
//! an improvement larger than `min_delta`. On a non-finite loss or gradient
//! the model is rolled back to the best weights and a numeric error is
//! returned.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{config_hash, Checkpoint};
use crate::data::{batches, Batch, Dataset, LabeledDataset, SplitTag, Standardizer, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::models::{Autoencoder, Localizer};
use crate::nn::Parameter;
use crate::optim::Adam;
use crate::tensor::Tensor;

/// Samples per forward pass when computing full-split losses or predictions.
pub const EVAL_CHUNK: usize = 256;
pub const THREADS_ENV: &str = "CSILOC_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub encoder_frozen: bool,
    /// A validation loss counts as an improvement when it is lower than the
    /// last improvement by more than this.
    pub min_delta: f64,
    pub standardize_inputs: bool,
    pub standardize_targets: bool,
    /// Fill the `seconds` column of the log; off keeps logs reproducible.
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            encoder_frozen: true,
            min_delta: 1e-7,
            standardize_inputs: false,
            standardize_targets: false,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1".into());
        }
        if self.patience == 0 || self.patience > self.max_epochs {
            return fail(format!("patience must be in 1..=max_epochs, got {}", self.patience));
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return fail(format!("min_delta must be >= 0, got {}", self.min_delta));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch].val_loss
    }

    pub fn initial_val_loss(&self) -> f64 {
        self.epochs[0].val_loss
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,seconds\n");
        for r in &self.epochs {
            writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.seconds).unwrap();
        }
        out
    }
}

/// Model-specific parts of the shared training loop.
trait Trainee {
    type Data: Dataset;
    fn step(&mut self, batch: &Batch) -> Result<f64>;
    fn update(&mut self, adam: &Adam) -> Result<()>;
    fn loss(&self, data: &Self::Data) -> Result<f64>;
    fn snapshot(&self) -> Vec<(String, Tensor<f32>)>;
    fn restore(&mut self, snapshot: &[(String, Tensor<f32>)]) -> Result<()>;
}

/// Sample-weighted mean of per-chunk losses over a whole dataset.
fn chunked_loss<D: Dataset>(data: &D, mut loss: impl FnMut(&Batch) -> Result<f64>) -> Result<f64> {
    let n = data.len();
    let mut total = 0.0;
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        let batch = data.batch(&idx)?;
        total += loss(&batch)? * idx.len() as f64;
    }
    Ok(total / n as f64)
}

fn adam_step<'a>(adam: &Adam, params: impl IntoIterator<Item = &'a mut Parameter<f32>>) -> Result<()> {
    adam.step(params)
}

impl Trainee for Autoencoder<f32> {
    type Data = UnlabeledDataset;

    fn step(&mut self, batch: &Batch) -> Result<f64> {
        self.train_batch(&batch.features)
    }

    fn update(&mut self, adam: &Adam) -> Result<()> {
        adam_step(adam, self.parameters_mut())
    }

    fn loss(&self, data: &UnlabeledDataset) -> Result<f64> {
        chunked_loss(data, |b| self.reconstruction_loss(&b.features))
    }

    fn snapshot(&self) -> Vec<(String, Tensor<f32>)> {
        self.named_tensors()
    }

    fn restore(&mut self, snapshot: &[(String, Tensor<f32>)]) -> Result<()> {
        self.load_named(snapshot)
    }
}

impl Trainee for Localizer<f32> {
    type Data = LabeledDataset;

    fn step(&mut self, batch: &Batch) -> Result<f64> {
        let positions = batch.positions.as_ref().ok_or_else(|| Error::State("batch carries no positions".into()))?;
        self.train_batch(&batch.features, positions)
    }

    fn update(&mut self, adam: &Adam) -> Result<()> {
        adam_step(adam, self.trainable_parameters_mut())
    }

    fn loss(&self, data: &LabeledDataset) -> Result<f64> {
        chunked_loss(data, |b| self.loss(&b.features, b.positions.as_ref().expect("labeled batch")))
    }

    fn snapshot(&self) -> Vec<(String, Tensor<f32>)> {
        self.named_tensors()
    }

    fn restore(&mut self, snapshot: &[(String, Tensor<f32>)]) -> Result<()> {
        self.load_named(snapshot)
    }
}

fn non_finite(what: &str, epoch: usize, value: f64) -> Error {
    Error::Numeric(format!("{what} became {value} in epoch {epoch}; weights rolled back to the best epoch"))
}

fn run<M: Trainee>(
    model: &mut M,
    train: &M::Data,
    val: &M::Data,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Batch),
) -> Result<TrainLog> {
    let adam = Adam::with_lr(cfg.learning_rate);
    let clock = Instant::now();
    let seconds = |c: &Instant| if cfg.record_time { c.elapsed().as_secs_f64() } else { 0.0 };

    let train0 = model.loss(train)?;
    let val0 = model.loss(val)?;
    if !val0.is_finite() || !train0.is_finite() {
        return Err(Error::Numeric(format!("initial loss is not finite (train {train0}, validation {val0})")));
    }
    let mut log = TrainLog {
        epochs: vec![EpochRecord { epoch: 0, train_loss: train0, val_loss: val0, seconds: seconds(&clock) }],
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best = model.snapshot();
    let mut reference = val0;
    let mut stale = 0;

    for epoch in 1..=cfg.max_epochs {
        let outcome = (|| -> Result<(f64, f64)> {
            let mut sum = 0.0;
            let mut seen = 0usize;
            for batch in batches(train, cfg.batch_size, cfg.seed, epoch as u64)? {
                let batch = batch?;
                observer(&batch);
                let loss = model.step(&batch)?;
                if !loss.is_finite() {
                    return Err(non_finite("training loss", epoch, loss));
                }
                model.update(&adam)?;
                sum += loss * batch.origin.len() as f64;
                seen += batch.origin.len();
            }
            let val = model.loss(val)?;
            if !val.is_finite() {
                return Err(non_finite("validation loss", epoch, val));
            }
            Ok((sum / seen as f64, val))
        })();
        let (train_loss, val_loss) = match outcome {
            Ok(v) => v,
            Err(e) => {
                model.restore(&best)?;
                return Err(e);
            }
        };
        log.epochs.push(EpochRecord { epoch, train_loss, val_loss, seconds: seconds(&clock) });
        if val_loss < log.best_val_loss() {
            log.best_epoch = epoch;
            best = model.snapshot();
        }
        if val_loss < reference - cfg.min_delta {
            reference = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    model.restore(&best)?;
    Ok(log)
}

fn expect_tag<D: Dataset>(data: &D, want: SplitTag, role: &str) -> Result<()> {
    if data.tag() != want {
        return Err(Error::config(format!("{role} data is tagged `{}`, expected `{want}`", data.tag())));
    }
    Ok(())
}

fn expect_disjoint<D: Dataset>(a: &D, b: &D) -> Result<()> {
    let seen: HashSet<usize> = a.provenance().origin.iter().copied().collect();
    if let Some(i) = b.provenance().origin.iter().find(|i| seen.contains(i)) {
        return Err(Error::config(format!("sample {i} appears in both the training and validation split")));
    }
    Ok(())
}

/// Trains `ae` to reconstruct its input. `ae` ends up holding the weights of
/// the best validation epoch, which are also returned as a checkpoint.
pub fn pretrain(
    ae: &mut Autoencoder<f32>,
    train: &UnlabeledDataset,
    val: &UnlabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Checkpoint<f32>, TrainLog)> {
    cfg.validate()?;
    expect_tag(train, SplitTag::Train, "training")?;
    expect_tag(val, SplitTag::Validation, "validation")?;
    expect_disjoint(train, val)?;
    if cfg.standardize_inputs {
        ae.input_norm = Standardizer::fit(train.features())?;
    }
    let log = run(ae, train, val, cfg, &mut |_| {})?;
    let ckpt = Checkpoint::of_autoencoder(ae, log.best_epoch, log.best_val_loss(), config_hash(cfg));
    Ok((ckpt, log))
}

/// Trains the position head (and the encoder when unfrozen) on labeled data.
pub fn finetune(
    loc: &mut Localizer<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Checkpoint<f32>, TrainLog)> {
    finetune_with_observer(loc, train, val, cfg, &mut |_| {})
}

/// [`finetune`] with a callback that sees every batch before it is used for
/// a gradient step.
pub fn finetune_with_observer(
    loc: &mut Localizer<f32>,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&Batch),
) -> Result<(Checkpoint<f32>, TrainLog)> {
    cfg.validate()?;
    expect_tag(train, SplitTag::Train, "training")?;
    expect_tag(val, SplitTag::Validation, "validation")?;
    expect_disjoint(train, val)?;
    loc.encoder_frozen = loc.has_encoder() && cfg.encoder_frozen;
    if cfg.standardize_inputs && !loc.has_encoder() {
        loc.input_norm = Standardizer::fit(train.features())?;
    }
    if cfg.standardize_targets {
        loc.target_norm = Standardizer::fit(train.positions())?;
    }
    let mut guard = |b: &Batch| {
        debug_assert_eq!(b.tag, SplitTag::Train);
        observer(b)
    };
    let log = run(loc, train, val, cfg, &mut guard)?;
    let ckpt = Checkpoint::of_localizer(loc, log.best_epoch, log.best_val_loss(), config_hash(cfg));
    Ok((ckpt, log))
}

/// Worker count from `CSILOC_THREADS` (default 1).
pub fn evaluation_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Forward-only predictions `[n, 3]` in sample order. Chunks are fanned out
/// over `threads` workers and reassembled in order, so the result does not
/// depend on the thread count.
pub fn evaluate(loc: &Localizer<f32>, data: &LabeledDataset, threads: usize) -> Result<Tensor<f32>> {
    let n = data.len();
    let chunks: Vec<Vec<usize>> = (0..n)
        .step_by(EVAL_CHUNK)
        .map(|s| (s..(s + EVAL_CHUNK).min(n)).collect())
        .collect();
    let predict = |idx: &Vec<usize>| -> Result<Tensor<f32>> {
        loc.predict_position(&data.features().select_rows(idx)?)
    };
    let parts: Vec<Result<Tensor<f32>>> = if threads <= 1 || chunks.len() <= 1 {
        chunks.iter().map(predict).collect()
    } else {
        let workers = threads.min(chunks.len());
        let mut slots: Vec<Option<Result<Tensor<f32>>>> = (0..chunks.len()).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let chunks = &chunks;
                    let predict = &predict;
                    s.spawn(move || {
                        (w..chunks.len())
                            .step_by(workers)
                            .map(|i| (i, predict(&chunks[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("evaluation worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every chunk evaluated")).collect()
    };
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Tensor::concat_rows(&parts)
}
