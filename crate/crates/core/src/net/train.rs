//! Mini-batch training loop.
//!
//! Stream layout under `SeededStream::from_seed(seed)`: child 1 holds the
//! per-image noise realizations (drawn once, before the first epoch), child 2
//! the per-epoch shuffles, child 3 the per-step probes and child 4 the
//! validation noise. Parameters are initialized from the same seed.

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::psnr;
use crate::noise::{self, NoiseSpec, Observation};
use crate::report::{sig9, CsvWriter};
use crate::risk::{Probe, DEFAULT_EPSILON};
use crate::rng::SeededStream;

use super::loss::{loss_and_grad, LossKind, TrainingSample};
use super::optim::{adam_step, sgd_step, AdamState, Optimizer};
use super::{net_init, NetConfig, NetDenoiser, NetParams};
use crate::denoiser::Denoiser;

/// Step-wise learning rate: `initial` until `drop_epoch`, then
/// `initial · drop_factor`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub drop_factor: f64,
    /// Zero-based epoch from which the dropped rate applies.
    pub drop_epoch: usize,
}

impl LrSchedule {
    /// `1e-3`, dropped tenfold at 60% of the run.
    pub fn scaled_to(epochs: usize) -> Self {
        Self {
            initial: 1e-3,
            drop_factor: 0.1,
            drop_epoch: (0.6 * epochs as f64).round() as usize,
        }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        if epoch < self.drop_epoch {
            self.initial
        } else {
            self.initial * self.drop_factor
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub epsilon: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub probe: Probe,
}

impl TrainConfig {
    /// Desk defaults: batch 4, Adam, `ε = 1e-3`, Rademacher probes.
    pub fn new(loss: LossKind, epochs: usize) -> Self {
        Self {
            loss,
            epochs,
            batch_size: 4,
            schedule: LrSchedule::scaled_to(epochs),
            epsilon: DEFAULT_EPSILON,
            seed: 0,
            optimizer: Optimizer::Adam,
            probe: Probe::Rademacher,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be >= 1"));
        }
        let lr = self.schedule.initial;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::param("learning_rate", format!("must be > 0, got {lr}")));
        }
        let f = self.schedule.drop_factor;
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::param("lr_drop_factor", format!("must be > 0, got {f}")));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::param("epsilon", format!("must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub validation_psnr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Batch loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

pub const TRAIN_LOG_HEADER: [&str; 4] = ["epoch", "learning_rate", "mean_loss", "validation_psnr_db"];

impl TrainLog {
    /// CSV with one row per epoch; the PSNR field is empty without validation data.
    pub fn to_csv(&self) -> String {
        let mut w = CsvWriter::with_header(&TRAIN_LOG_HEADER);
        for r in &self.epochs {
            w.row(&[
                r.epoch.to_string(),
                sig9(r.learning_rate),
                sig9(r.mean_loss),
                r.validation_psnr.map(sig9).unwrap_or_default(),
            ]);
        }
        w.into_string()
    }
}

/// The single-observation noise a network trained under `noise` is evaluated
/// on: the distribution of its training input.
pub fn evaluation_noise(noise: &NoiseSpec) -> NoiseSpec {
    match *noise {
        NoiseSpec::GaussianPair { sigma1, sigma_z } => NoiseSpec::Gaussian {
            sigma: sigma1.hypot(sigma_z),
        },
        NoiseSpec::GaussianIndependentPair { sigma } => NoiseSpec::Gaussian { sigma },
        NoiseSpec::PoissonPair { peak } => NoiseSpec::Poisson { peak },
        single => single,
    }
}

/// Corrupts `x` and packages the result for `kind`.
pub fn make_sample(kind: LossKind, x: &Image, noise: &NoiseSpec, stream: &SeededStream) -> Result<TrainingSample> {
    let obs = noise::corrupt(x, noise, stream)?;
    Ok(match (kind, obs) {
        (LossKind::Mse, Observation::Single(y)) => TrainingSample::Supervised { y, x: x.clone() },
        (LossKind::N2n, Observation::Pair(y, target))
        | (LossKind::N2n, Observation::PoissonPair(y, target, _)) => TrainingSample::NoisyTarget { y, target },
        (LossKind::McSure, Observation::Single(y)) => TrainingSample::Single { y },
        (LossKind::Esure, Observation::Pair(y1, y2)) => TrainingSample::GaussianPair { y1, y2 },
        (LossKind::Epure, Observation::PoissonPair(y1, _, z)) => TrainingSample::PoissonPair { y1, z },
        _ => {
            return Err(Error::Incompatible(format!(
                "loss {} cannot be trained with {} noise",
                kind.name(),
                noise.kind()
            )))
        }
    })
}

/// Noisy validation inputs paired with their clean images.
fn validation_set(validation: &Dataset, noise: &NoiseSpec, root: &SeededStream) -> Result<Vec<(Image, Image)>> {
    let eval = evaluation_noise(noise);
    let stream = root.child(4);
    validation
        .images
        .iter()
        .enumerate()
        .map(|(i, x)| match noise::corrupt(x, &eval, &stream.child(i as u64))? {
            Observation::Single(y) => Ok((x.clone(), y)),
            _ => unreachable!("evaluation noise is a single observation"),
        })
        .collect()
}

/// Mean PSNR (peak 1) of the network over `(clean, noisy)` pairs.
pub fn mean_psnr(params: &NetParams, pairs: &[(Image, Image)]) -> Result<f64> {
    let h = NetDenoiser::new(params)?;
    let values = pairs
        .iter()
        .map(|(x, y)| psnr(x, &h.denoise(y)?, 1.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(crate::stats::mean(&values))
}

/// Trains a freshly initialized network on noisy versions of `dataset`.
///
/// Each training image gets one fixed noise realization. When `validation`
/// is given, its clean images are corrupted with [`evaluation_noise`] and the
/// mean PSNR after each epoch is logged.
pub fn train(
    config: &NetConfig,
    tc: &TrainConfig,
    dataset: &Dataset,
    noise: &NoiseSpec,
    validation: Option<&Dataset>,
) -> Result<(NetParams, TrainLog)> {
    tc.validate()?;
    tc.loss.check_noise(noise)?;
    if dataset.is_empty() {
        return Err(Error::param("dataset", "must not be empty"));
    }
    let root = SeededStream::from_seed(tc.seed);
    let mut params = net_init(config, tc.seed)?;
    let mut log = TrainLog::default();
    if tc.epochs == 0 {
        return Ok((params, log));
    }

    let noise_stream = root.child(1);
    let samples = dataset
        .images
        .iter()
        .enumerate()
        .map(|(i, x)| make_sample(tc.loss, x, noise, &noise_stream.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let val_pairs = validation
        .map(|v| validation_set(v, noise, &root))
        .transpose()?;

    let mut adam = AdamState::new(&params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step: u64 = 0;
    for epoch in 0..tc.epochs {
        let lr = tc.schedule.rate(epoch);
        order.shuffle(&mut root.child(2).child(epoch as u64).rng());
        let mut batch_losses = Vec::new();
        for (batch_index, chunk) in order.chunks(tc.batch_size).enumerate() {
            let batch: Vec<TrainingSample> = chunk.iter().map(|&i| samples[i].clone()).collect();
            let probe_stream = root.child(3).child(step);
            let (loss, grads) =
                loss_and_grad(&params, &batch, tc.loss, noise, tc.epsilon, &probe_stream, tc.probe)?;
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_index,
                });
            }
            match tc.optimizer {
                Optimizer::Adam => adam_step(&mut params, &grads, &mut adam, lr)?,
                Optimizer::Sgd => sgd_step(&mut params, &grads, lr)?,
            }
            batch_losses.push(loss.total);
            log.step_losses.push(loss.total);
            step += 1;
        }
        let validation_psnr = val_pairs
            .as_deref()
            .map(|pairs| mean_psnr(&params, pairs))
            .transpose()?;
        log.epochs.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            mean_loss: crate::stats::mean(&batch_losses),
            validation_psnr,
        });
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{phantom_generate, PhantomSpec, Split};

    fn toy(count: usize) -> Dataset {
        let spec = PhantomSpec {
            size: 16,
            seed: 3,
            ..PhantomSpec::default()
        };
        let ds = phantom_generate(&spec, count).unwrap();
        Dataset::new(ds.images, Split::Train, "toy").unwrap()
    }

    fn small() -> NetConfig {
        NetConfig {
            depth: 3,
            channels: 4,
            kernel: 3,
            residual: true,
        }
    }

    #[test]
    fn schedule_drops_at_sixty_percent() {
        let s = LrSchedule::scaled_to(40);
        assert_eq!(s.drop_epoch, 24);
        assert_eq!(s.rate(23), 1e-3);
        assert!((s.rate(24) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let tc = TrainConfig::new(LossKind::Mse, 0);
        let (p, log) = train(&small(), &tc, &toy(2), &NoiseSpec::Gaussian { sigma: 0.1 }, None).unwrap();
        assert_eq!(p, net_init(&small(), tc.seed).unwrap());
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn incompatible_loss_is_rejected_before_training() {
        let tc = TrainConfig::new(LossKind::Epure, 1);
        let r = train(&small(), &tc, &toy(2), &NoiseSpec::Gaussian { sigma: 0.1 }, None);
        assert!(matches!(r, Err(Error::Incompatible(_))));
    }

    #[test]
    fn mse_loss_decreases_and_is_deterministic() {
        let mut tc = TrainConfig::new(LossKind::Mse, 4);
        tc.batch_size = 2;
        let data = toy(10);
        let noise = NoiseSpec::Gaussian { sigma: 0.1 };
        let (p1, log) = train(&small(), &tc, &data, &noise, Some(&toy(2))).unwrap();
        let first = log.epochs.first().unwrap().mean_loss;
        let last = log.epochs.last().unwrap().mean_loss;
        assert!(last < first, "{first} -> {last}");
        assert!(log.epochs.iter().all(|r| r.validation_psnr.is_some()));
        let (p2, _) = train(&small(), &tc, &data, &noise, Some(&toy(2))).unwrap();
        assert_eq!(p1, p2);
        let csv = log.to_csv();
        assert!(csv.starts_with("epoch,learning_rate,mean_loss,validation_psnr_db\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn esure_with_degenerate_pair_reproduces_mc_sure_steps() {
        let sigma = 0.1;
        let data = toy(4);
        let mut tc = TrainConfig::new(LossKind::McSure, 2);
        tc.batch_size = 2;
        let (pa, la) = train(&small(), &tc, &data, &NoiseSpec::Gaussian { sigma }, None).unwrap();
        tc.loss = LossKind::Esure;
        let pair = NoiseSpec::GaussianPair {
            sigma1: sigma,
            sigma_z: 0.0,
        };
        let (pb, lb) = train(&small(), &tc, &data, &pair, None).unwrap();
        assert_eq!(la.step_losses, lb.step_losses);
        assert_eq!(pa, pb);
    }
}
