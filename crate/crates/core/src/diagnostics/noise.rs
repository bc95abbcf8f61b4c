//! Collapse of an active latent variable under progressively noisier codes.
//!
//! Gaussian noise of growing amplitude is added to the sampled value of one
//! active coordinate while training continues, one epoch per amplitude step.
//! Variables that are already inactive are pinned to the prior so the
//! network cannot revive them as a substitute. Once the variable's
//! reconstruction gain drops below its KL contribution the amplitude stops
//! growing; training continues at that amplitude until the variable
//! classifies inactive (or a cap is reached), then the noise is removed to
//! observe whether the variable comes back.

use super::stats::{
    classify_pair, classify_variables, latent_stats_with, stats_from_encodings, Status, Thresholds,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{gaussian_kl, per_row_sse, zero_coordinates, EncoderOutput, VaeModel};
use crate::parallel::{map_chunks, EVAL_CHUNK};
use crate::train::{Injection, TrainConfig, TrainLog, Trainer};

pub const DEFAULT_NOISE_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    /// Amplitude increment per epoch.
    pub step: f64,
    /// Amplitude cap; the ramp ends here even without a trigger.
    pub max_amplitude: f64,
    /// Upper bound on epochs at the final amplitude after the ramp ends.
    /// The hold stops early once the probed variable classifies inactive.
    pub hold_epochs: usize,
    /// Epochs with the noise removed.
    pub recovery_epochs: usize,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            step: DEFAULT_NOISE_STEP,
            max_amplitude: 8.0,
            hold_epochs: 10,
            recovery_epochs: 20,
        }
    }
}

impl NoiseSchedule {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.max_amplitude >= 0.0) || !self.max_amplitude.is_finite() {
            return Err(Error::Config(format!(
                "noise schedule needs step > 0 and a finite max amplitude >= 0, got {} / {}",
                self.step, self.max_amplitude
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Baseline,
    Ramp,
    Hold,
    Recovery,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Baseline => "baseline",
            Phase::Ramp => "ramp",
            Phase::Hold => "hold",
            Phase::Recovery => "recovery",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub step: usize,
    pub phase: Phase,
    pub amplitude: f64,
    pub kl_contribution: f64,
    pub reconstruction_gain: f64,
    pub global_mu_variance: f64,
    pub mean_local_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub probed: usize,
    pub frozen: Vec<usize>,
    pub records: Vec<ProbeRecord>,
    /// Step at which the gain first fell below the KL contribution.
    pub trigger_step: Option<usize>,
    pub train_log: TrainLog,
}

impl ExperimentLog {
    pub fn baseline(&self) -> &ProbeRecord {
        &self.records[0]
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &ProbeRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }
}

/// Dataset mean of each coordinate's closed-form KL, with `pinned`
/// coordinates at the prior (contributing 0).
pub fn dataset_kl(model: &VaeModel, data: &Dataset, pinned: &[usize]) -> Result<Vec<f64>> {
    let latent = model.latent_dim();
    let images = data.images();
    let partials = map_chunks(data.len(), EVAL_CHUNK, |r| -> Result<Vec<f64>> {
        let idx: Vec<usize> = r.collect();
        Ok(kl_sums(&model.encode(&images.select_rows(&idx))?, latent))
    });
    let mut total = vec![0.0; latent];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    for t in &mut total {
        *t /= data.len() as f64;
    }
    for &i in pinned {
        total[i] = 0.0;
    }
    Ok(total)
}

fn kl_sums(enc: &EncoderOutput, latent: usize) -> Vec<f64> {
    let mut acc = vec![0.0; latent];
    for row in 0..enc.mu.rows() {
        for (j, a) in acc.iter_mut().enumerate() {
            *a += gaussian_kl(enc.mu.get(row, j), enc.logvar.get(row, j));
        }
    }
    acc
}

/// Statistics, KL contribution and reconstruction gain of `index` from a
/// single encoder pass. Agrees with [`latent_stats_with`], [`dataset_kl`]
/// and [`reconstruction_gain_with`](super::reconstruction_gain_with) up to
/// summation order.
fn probe(
    model: &VaeModel,
    data: &Dataset,
    index: usize,
    frozen: &[usize],
    step: usize,
    phase: Phase,
    amplitude: f64,
) -> Result<ProbeRecord> {
    let latent = model.latent_dim();
    let images = data.images();
    let parts = map_chunks(data.len(), EVAL_CHUNK, |r| -> Result<(EncoderOutput, f64, f64)> {
        let idx: Vec<usize> = r.collect();
        let x = images.select_rows(&idx);
        let enc = model.encode(&x)?;
        let kl = kl_sums(&enc, latent)[index];
        let mu = zero_coordinates(&enc.mu, frozen)?;
        let full = per_row_sse(&x, &model.decode(&mu)?);
        let ablated = per_row_sse(&x, &model.decode(&zero_coordinates(&mu, &[index])?)?);
        let gain = ablated.iter().zip(&full).map(|(a, b)| a - b).sum();
        Ok((enc, kl, gain))
    });
    let (mut encodings, mut kl, mut gain) = (Vec::with_capacity(parts.len()), 0.0, 0.0);
    for p in parts {
        let (e, k, g) = p?;
        encodings.push(e);
        kl += k;
        gain += g;
    }
    let n = data.len() as f64;
    let frozen_here = frozen.contains(&index);
    let stats = stats_from_encodings(&encodings, latent, frozen);
    Ok(ProbeRecord {
        step,
        phase,
        amplitude,
        kl_contribution: if frozen_here { 0.0 } else { kl / n },
        reconstruction_gain: gain / n,
        global_mu_variance: stats.global_mu_variance[index],
        mean_local_variance: stats.mean_local_variance[index],
    })
}

/// Runs the experiment on `model` in place. `var_index` must be active under
/// `thresholds` at the start.
pub fn noise_injection_experiment(
    model: &mut VaeModel,
    data: &Dataset,
    var_index: usize,
    schedule: &NoiseSchedule,
    config: &TrainConfig,
    thresholds: Thresholds,
) -> Result<ExperimentLog> {
    schedule.validate()?;
    if var_index >= model.latent_dim() {
        return Err(Error::Range {
            what: "latent",
            index: var_index,
            limit: model.latent_dim(),
        });
    }
    let report = classify_variables(&latent_stats_with(model, data, &[])?, thresholds);
    if report.variables[var_index].status == Status::Inactive {
        return Err(Error::Precondition(format!(
            "latent variable {var_index} is already inactive"
        )));
    }
    let frozen = report.inactive();
    let mut trainer = Trainer::new(model, config.clone())?;
    let mut train_log = TrainLog::default();
    let mut records = vec![probe(model, data, var_index, &frozen, 0, Phase::Baseline, 0.0)?];
    let mut trigger_step = None;

    let mut run = |model: &mut VaeModel,
                   records: &mut Vec<ProbeRecord>,
                   phase: Phase,
                   amplitude: f64|
     -> Result<ProbeRecord> {
        let injection = (amplitude > 0.0).then_some(Injection {
            index: var_index,
            amplitude,
        });
        trainer.epoch(model, data, &frozen, injection, &mut train_log)?;
        let r = probe(model, data, var_index, &frozen, records.len(), phase, amplitude)?;
        records.push(r.clone());
        Ok(r)
    };

    let mut amplitude = 0.0;
    let ramp_steps = (schedule.max_amplitude / schedule.step).ceil() as usize;
    for k in 1..=ramp_steps {
        amplitude = (k as f64 * schedule.step).min(schedule.max_amplitude);
        let r = run(model, &mut records, Phase::Ramp, amplitude)?;
        if r.reconstruction_gain < r.kl_contribution {
            trigger_step = Some(r.step);
            break;
        }
    }
    for _ in 0..schedule.hold_epochs {
        let r = run(model, &mut records, Phase::Hold, amplitude)?;
        if classify_pair(r.global_mu_variance, r.mean_local_variance, thresholds) == Status::Inactive {
            break;
        }
    }
    for _ in 0..schedule.recovery_epochs {
        run(model, &mut records, Phase::Recovery, 0.0)?;
    }
    Ok(ExperimentLog {
        probed: var_index,
        frozen,
        records,
        trigger_step,
        train_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_tiles, TileSpec};
    use crate::diagnostics::reconstruction_gain_with;
    use crate::model::Architecture;
    use crate::rng::{Rng, Stream};

    fn setup() -> (VaeModel, Dataset) {
        let data = gen_tiles(96, &TileSpec::default(), &mut Rng::stream(4, Stream::Data)).unwrap();
        let model = VaeModel::new(&Architecture::new(&[784, 12, 3]).unwrap(), &mut Rng::new(4));
        (model, data)
    }

    fn config() -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            ..TrainConfig::default()
        }
    }

    /// Pins latent `index` at μ = 0, σ² = 1 for every input.
    fn kill(model: &mut VaeModel, index: usize) {
        let heads = model.encoder_body().len();
        for l in &mut model.layers_mut()[heads..heads + 2] {
            for c in 0..l.weights().cols() {
                l.weights_mut().set(index, c, 0.0);
            }
            l.bias_mut().data_mut()[index] = 0.0;
        }
    }

    #[test]
    fn fused_probe_matches_separate_passes() {
        let (model, data) = setup();
        let frozen = [2];
        let r = probe(&model, &data, 0, &frozen, 0, Phase::Baseline, 0.0).unwrap();
        let stats = latent_stats_with(&model, &data, &frozen).unwrap();
        let kl = dataset_kl(&model, &data, &frozen).unwrap()[0];
        let gain = reconstruction_gain_with(&model, &data, 0, &frozen).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(1.0);
        assert!(close(r.kl_contribution, kl));
        assert!(close(r.reconstruction_gain, gain));
        assert_eq!(r.global_mu_variance, stats.global_mu_variance[0]);
        assert_eq!(r.mean_local_variance, stats.mean_local_variance[0]);
    }

    #[test]
    fn zero_amplitude_never_injects() {
        let (mut model, data) = setup();
        let schedule = NoiseSchedule {
            max_amplitude: 0.0,
            hold_epochs: 2,
            recovery_epochs: 2,
            ..NoiseSchedule::default()
        };
        let log =
            noise_injection_experiment(&mut model, &data, 0, &schedule, &config(), Thresholds::default())
                .unwrap();
        assert!(log.records.iter().all(|r| r.amplitude == 0.0));
        assert_eq!(log.phase(Phase::Ramp).count(), 0);
        assert!(log.records.len() >= 3);
        assert_eq!(log.trigger_step, None);
        for (i, r) in log.records.iter().enumerate() {
            assert_eq!(r.step, i);
        }
    }

    #[test]
    fn inactive_variable_is_rejected() {
        let (mut model, data) = setup();
        kill(&mut model, 1);
        let before = model.clone();
        let err = noise_injection_experiment(
            &mut model,
            &data,
            1,
            &NoiseSchedule::default(),
            &config(),
            Thresholds::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
        assert!(err.to_string().contains("variable 1"));
        assert_eq!(model, before);
        assert!(matches!(
            noise_injection_experiment(&mut model, &data, 3, &NoiseSchedule::default(), &config(), Thresholds::default()),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn ramp_is_monotone_and_capped() {
        let (mut model, data) = setup();
        let schedule = NoiseSchedule {
            step: 0.4,
            max_amplitude: 1.0,
            hold_epochs: 1,
            recovery_epochs: 1,
        };
        let log =
            noise_injection_experiment(&mut model, &data, 0, &schedule, &config(), Thresholds::default())
                .unwrap();
        let ramp: Vec<f64> = log.phase(Phase::Ramp).map(|r| r.amplitude).collect();
        assert!(!ramp.is_empty() && ramp.len() <= 3);
        assert!(ramp.windows(2).all(|w| w[1] > w[0]));
        assert!(ramp.iter().all(|&a| a <= 1.0));
        if log.trigger_step.is_none() {
            assert_eq!(ramp, vec![0.4, 0.8, 1.0]);
        }
        let last = *ramp.last().unwrap();
        assert!(log.phase(Phase::Hold).all(|r| r.amplitude == last));
        assert!(log.phase(Phase::Recovery).all(|r| r.amplitude == 0.0));
        assert_eq!(log.phase(Phase::Recovery).count(), 1);
        let phases: Vec<Phase> = log.records.iter().map(|r| r.phase).collect();
        let mut sorted = phases.clone();
        sorted.sort_by_key(|p| *p as u8);
        assert_eq!(phases, sorted);
    }
}
