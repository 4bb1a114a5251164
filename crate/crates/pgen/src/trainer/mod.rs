//! Training: cross-entropy loss, backpropagation through time, Adam with
//! global-norm gradient clipping, the epoch loop, and checkpoints.
//!
//! Training is bit-reproducible given the corpus bytes, configs, and
//! seeds: shuffles derive from an epoch-indexed seed, dropout masks come
//! from the trainer RNG stream in window order, and gradients accumulate
//! in a fixed serial order.

mod adam;
mod backward;
mod checkpoint;
mod gradcheck;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use backward::backward_window;
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use gradcheck::{finite_difference_gradients, gradient_check, GradCheckReport, TensorCheck};

use std::time::Instant;

use crate::corpus::PatternDataset;
use crate::error::{Error, Result};
use crate::network::{forward_window, predict, NetworkConfig, NetworkParams, Phase};
use crate::numerics::{argmax, child_seed, Rng};

/// Epoch count, batching, optimizer hyperparameters, and reproducibility
/// seeds for a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub clip_norm: f64,
    pub shuffle_seed: u64,
    /// Save a checkpoint every this many epochs; 0 saves only at the end.
    pub checkpoint_every: usize,
    /// Fraction of windows held out from training, taken from the tail of
    /// the dataset. When positive, epoch accuracy is measured on the
    /// holdout instead of the training windows.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 5.0,
            shuffle_seed: 0,
            checkpoint_every: 0,
            holdout_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::InvalidArgument("clip norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::InvalidArgument("holdout fraction must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("Adam betas must be in [0, 1)".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidArgument("Adam epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// One epoch's outcome: mean training loss in nats per character,
/// accuracy as a fraction, and wall-clock time.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch_index: u64,
    pub mean_loss: f64,
    pub accuracy: f64,
    pub wall_seconds: f64,
}

/// Mutable state carried across epochs: optimizer moments, the epoch
/// counter, and the RNG stream that feeds dropout masks.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub adam: AdamState,
    pub epoch_index: u64,
    pub rng: Rng,
}

impl TrainerState {
    pub fn new(params: &NetworkParams, rng_seed: u64) -> Self {
        TrainerState {
            adam: AdamState::new(params),
            epoch_index: 0,
            rng: Rng::new(rng_seed),
        }
    }
}

/// One gradient tensor per parameter tensor, in the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub NetworkParams);

impl Gradients {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        Gradients(params.zeros_like())
    }

    pub fn reset(&mut self) {
        for (_, t) in self.0.tensors_mut() {
            t.data_mut().fill(0.0);
        }
    }

    /// Element-wise accumulation; shapes must be congruent.
    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        let mut mine = self.0.tensors_mut();
        let theirs = other.0.tensors();
        if mine.len() != theirs.len() {
            return Err(Error::shape("Gradients::add_assign", "tensor count mismatch"));
        }
        for ((_, a), (_, b)) in mine.iter_mut().zip(theirs.iter()) {
            if a.rows() != b.rows() || a.cols() != b.cols() {
                return Err(Error::shape("Gradients::add_assign", "tensor shape mismatch"));
            }
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.0.tensors_mut() {
            for x in t.data_mut() {
                *x *= factor;
            }
        }
    }

    /// Joint L2 norm over all tensors, summed in tensor order.
    pub fn global_norm(&self) -> f64 {
        let mut sum = 0.0;
        for (_, t) in self.0.tensors() {
            for &x in t.data() {
                sum += x * x;
            }
        }
        sum.sqrt()
    }
}

/// `-ln(max(probs[target], 1e-300))` in nats.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64> {
    if target >= probs.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            vocab_size: probs.len(),
        });
    }
    Ok(-probs[target].max(1e-300).ln())
}

/// Scales all tensors jointly so the global L2 norm does not exceed
/// `clip_norm`; direction is preserved. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut Gradients, clip_norm: f64) -> Result<f64> {
    if clip_norm <= 0.0 {
        return Err(Error::InvalidArgument("clip norm must be positive".into()));
    }
    let norm = grads.global_norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    Ok(norm)
}

/// How many tail windows a holdout fraction reserves.
fn holdout_len(total: usize, fraction: f64) -> usize {
    (total as f64 * fraction).floor() as usize
}

/// One pass over every training window: shuffles with an epoch-derived
/// seed, accumulates per-batch mean gradients in window order, clips,
/// applies Adam, and reports mean training loss plus accuracy measured
/// with a dropout-free inference pass at the end of the epoch.
pub fn train_epoch(
    dataset: &PatternDataset,
    params: &mut NetworkParams,
    config: &NetworkConfig,
    train_cfg: &TrainConfig,
    state: &mut TrainerState,
) -> Result<EpochReport> {
    let started = Instant::now();
    train_cfg.validate()?;
    check_dataset(dataset, config)?;

    let total = dataset.len();
    let holdout = holdout_len(total, train_cfg.holdout_fraction);
    let n_train = total - holdout;
    if n_train == 0 {
        return Err(Error::InvalidArgument(
            "holdout fraction leaves no training windows".into(),
        ));
    }
    if train_cfg.batch_size > n_train {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds the {} training windows",
            train_cfg.batch_size, n_train
        )));
    }

    // Epoch-derived shuffle, independent of the dropout stream.
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut shuffle_rng = Rng::new(child_seed(train_cfg.shuffle_seed, state.epoch_index));
    for i in (1..order.len()).rev() {
        let j = shuffle_rng.uniform_range(i as u64 + 1) as usize;
        order.swap(i, j);
    }

    let hyper = train_cfg.hyper();
    let mut batch_grads = Gradients::zeros_like(params);
    let mut window_grads = Gradients::zeros_like(params);
    let mut loss_sum = 0.0;
    for batch in order.chunks(train_cfg.batch_size) {
        batch_grads.reset();
        for &i in batch {
            // Fresh mask stream per window, drawn from the trainer RNG.
            let mut window_rng = Rng::new(state.rng.next_u64());
            let (probs, tape) =
                forward_window(params, config, dataset.window(i), Phase::Train, &mut window_rng)?;
            loss_sum += cross_entropy(&probs, dataset.target(i) as usize)?;
            // Batch gradient = mean of per-window gradients, summed in
            // window order.
            window_grads.reset();
            backward::backward_into(params, config, &tape, dataset.target(i), &mut window_grads)?;
            batch_grads.add_assign(&window_grads)?;
        }
        batch_grads.scale(1.0 / batch.len() as f64);
        clip_global_norm(&mut batch_grads, train_cfg.clip_norm)?;
        adam_step(params, &batch_grads, &mut state.adam, &hyper)?;
    }

    // Accuracy on the holdout tail when one is configured, otherwise on
    // the training windows.
    let eval_range = if holdout > 0 { n_train..total } else { 0..n_train };
    let mut correct = 0usize;
    let eval_count = eval_range.len();
    for i in eval_range {
        let probs = predict(params, config, dataset.window(i))?;
        if argmax(&probs) == dataset.target(i) as usize {
            correct += 1;
        }
    }

    state.epoch_index += 1;
    Ok(EpochReport {
        epoch_index: state.epoch_index,
        mean_loss: loss_sum / n_train as f64,
        accuracy: correct as f64 / eval_count as f64,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Fraction of windows whose argmax next-character prediction equals the
/// target, in inference mode (no dropout).
pub fn evaluate_accuracy(
    dataset: &PatternDataset,
    params: &NetworkParams,
    config: &NetworkConfig,
) -> Result<f64> {
    check_dataset(dataset, config)?;
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        let probs = predict(params, config, dataset.window(i))?;
        if argmax(&probs) == dataset.target(i) as usize {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

fn check_dataset(dataset: &PatternDataset, config: &NetworkConfig) -> Result<()> {
    if dataset.len() == 0 {
        return Err(Error::InvalidArgument("dataset has no windows".into()));
    }
    if dataset.vocab_size() != config.vocab_size {
        return Err(Error::shape(
            "train",
            format!(
                "dataset vocabulary {} vs network {}",
                dataset.vocab_size(),
                config.vocab_size
            ),
        ));
    }
    if dataset.window_len() != config.window {
        return Err(Error::shape(
            "train",
            format!("dataset window {} vs network {}", dataset.window_len(), config.window),
        ));
    }
    Ok(())
}
