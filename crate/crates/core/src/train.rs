//! Minibatch Adam training with per-minibatch latent statistics.

use crate::data::{minibatches, Dataset};
use crate::error::{Error, Result};
use crate::model::{LatentControl, Objective, PenaltyMode, VaeModel};
use crate::nn::{adam_step, AdamConfig, AdamState};
use crate::rng::{Rng, Stream};
use crate::tensor::Tensor;

pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_MNIST_EPOCHS: usize = 10;
pub const DEFAULT_TILES_EPOCHS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lambda: f64,
    pub sampling_enabled: bool,
    pub penalty_mode: PenaltyMode,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_MNIST_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            lambda: 1.0,
            sampling_enabled: true,
            penalty_mode: PenaltyMode::Kl,
            seed: 0,
            learning_rate: AdamConfig::default().lr,
        }
    }
}

impl TrainConfig {
    pub fn objective(&self) -> Objective {
        Objective {
            lambda: self.lambda,
            sampling: self.sampling_enabled,
            penalty: self.penalty_mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.objective().validate()
    }
}

/// Statistics of one processed minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub reconstruction: f64,
    pub kl: f64,
    /// Per latent variable: mean over the batch of `σ²(X)`.
    pub mean_variance: Vec<f64>,
    /// Per latent variable: variance over the batch of `μ(X)`.
    pub mu_variance: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<BatchRecord>,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean reconstruction loss of the records belonging to `epoch`.
    pub fn epoch_reconstruction(&self, epoch: usize) -> Option<f64> {
        let rs: Vec<f64> = self
            .records
            .iter()
            .filter(|r| r.epoch == epoch)
            .map(|r| r.reconstruction)
            .collect();
        (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
    }
}

/// Additive Gaussian noise on one latent coordinate during training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Injection {
    pub index: usize,
    pub amplitude: f64,
}

/// Stateful trainer: optimizer moments and random streams survive across
/// [`Trainer::epoch`] calls.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    states: Vec<(AdamState, AdamState)>,
    names: Vec<String>,
    shuffle_rng: Rng,
    noise_rng: Rng,
    injection_rng: Rng,
    epochs_done: usize,
    batches_done: usize,
}

impl Trainer {
    pub fn new(model: &VaeModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamConfig {
            lr: config.learning_rate,
            ..AdamConfig::default()
        };
        let states = model
            .layers()
            .iter()
            .map(|l| {
                (
                    AdamState::new(l.weights().shape(), adam),
                    AdamState::new(l.bias().shape(), adam),
                )
            })
            .collect();
        Ok(Trainer {
            shuffle_rng: Rng::stream(config.seed, Stream::Shuffle),
            noise_rng: Rng::stream(config.seed, Stream::Noise),
            injection_rng: Rng::stream(config.seed, Stream::Injection),
            names: model.layer_names(),
            states,
            config,
            epochs_done: 0,
            batches_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Runs one pass over `data`. On a non-finite loss or gradient the model
    /// and `log` are rolled back to their state at the start of the epoch.
    pub fn epoch(
        &mut self,
        model: &mut VaeModel,
        data: &Dataset,
        frozen: &[usize],
        injection: Option<Injection>,
        log: &mut TrainLog,
    ) -> Result<()> {
        if data.pixels() != model.input_dim() {
            return Err(Error::Dimension {
                context: "train dataset",
                expected: vec![data.len(), model.input_dim()],
                actual: vec![data.len(), data.pixels()],
            });
        }
        let snapshot = model.clone();
        let log_len = log.records.len();
        let epoch = self.epochs_done;
        let last_good_epoch = epoch.checked_sub(1);
        let objective = self.config.objective();
        let latent = model.latent_dim();
        let batches = minibatches(data.len(), self.config.batch_size, &mut self.shuffle_rng)?;
        for (i, idx) in batches.iter().enumerate() {
            let x = data.batch(idx);
            let eps = objective.sampling.then(|| {
                let mut e = Tensor::zeros(&[idx.len(), latent]);
                self.noise_rng.fill_normal(e.data_mut());
                e
            });
            let shift: Option<Vec<f64>> = injection.map(|inj| {
                (0..idx.len())
                    .map(|_| inj.amplitude * self.injection_rng.normal())
                    .collect()
            });
            let control = LatentControl {
                frozen,
                shift: injection.zip(shift.as_deref()).map(|(inj, s)| (inj.index, s)),
            };
            let diverged = || Error::Divergence {
                epoch,
                batch: i,
                last_good_epoch,
            };
            let (parts, grads) = model.loss_and_gradients(&x, &objective, eps.as_ref(), &control)?;
            if !parts.loss.is_finite() {
                *model = snapshot;
                log.records.truncate(log_len);
                return Err(diverged());
            }
            let step = self.apply(model, &grads.blocks);
            if let Err(e) = step {
                *model = snapshot;
                log.records.truncate(log_len);
                return Err(match e {
                    Error::NonFiniteGradient { .. } => diverged(),
                    other => other,
                });
            }
            log.records.push(BatchRecord {
                epoch,
                batch: self.batches_done,
                loss: parts.loss,
                reconstruction: parts.reconstruction,
                kl: parts.kl.total,
                mean_variance: parts.mean_variance,
                mu_variance: parts.mu_variance,
            });
            self.batches_done += 1;
        }
        self.epochs_done += 1;
        Ok(())
    }

    fn apply(&mut self, model: &mut VaeModel, grads: &[(Tensor, Tensor)]) -> Result<()> {
        for (((layer, (gw, gb)), (sw, sb)), name) in model
            .layers_mut()
            .into_iter()
            .zip(grads)
            .zip(self.states.iter_mut())
            .zip(&self.names)
        {
            adam_step(layer.weights_mut(), gw, sw, &format!("{name}.weight"))?;
            adam_step(layer.bias_mut(), gb, sb, &format!("{name}.bias"))?;
        }
        Ok(())
    }
}

/// Trains `model` in place for `config.epochs` epochs.
pub fn train(model: &mut VaeModel, data: &Dataset, config: &TrainConfig) -> Result<TrainLog> {
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut log = TrainLog::default();
    for _ in 0..config.epochs {
        trainer.epoch(model, data, &[], None, &mut log)?;
    }
    Ok(log)
}
