//! Training losses and their parameter gradients.
//!
//! Loss values reuse the risk functionals' arithmetic, so a training loss on a
//! batch equals the corresponding estimator evaluated on the same network
//! bit for bit. Monte-Carlo losses differentiate through both `h(y)` and
//! `h(y + εb)`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::noise::NoiseSpec;
use crate::risk::{self, Probe, RiskValue};
use crate::rng::SeededStream;
use crate::stats::squared_distance;

use super::{backward_single, forward_single, Gradients, NetParams};

/// Which risk functional is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Supervised mean squared error against the clean image.
    Mse,
    /// Noise2Noise: squared error against an independent noisy copy.
    N2n,
    /// SURE with a single-probe Monte-Carlo divergence.
    McSure,
    /// eSURE on a correlated pair, divergence at `y2`.
    Esure,
    /// ePURE on a pair of Poisson observations.
    Epure,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Mse,
        LossKind::N2n,
        LossKind::McSure,
        LossKind::Esure,
        LossKind::Epure,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::N2n => "n2n",
            LossKind::McSure => "sure",
            LossKind::Esure => "esure",
            LossKind::Epure => "epure",
        }
    }

    pub fn accepts(&self, noise: &NoiseSpec) -> bool {
        matches!(
            (self, noise),
            (LossKind::Mse, NoiseSpec::Gaussian { .. } | NoiseSpec::Poisson { .. })
                | (
                    LossKind::N2n,
                    NoiseSpec::GaussianIndependentPair { .. } | NoiseSpec::PoissonPair { .. }
                )
                | (LossKind::McSure, NoiseSpec::Gaussian { .. })
                | (LossKind::Esure, NoiseSpec::GaussianPair { .. })
                | (LossKind::Epure, NoiseSpec::PoissonPair { .. })
        )
    }

    pub fn check_noise(&self, noise: &NoiseSpec) -> Result<()> {
        noise.validate()?;
        if self.accepts(noise) {
            Ok(())
        } else {
            Err(Error::Incompatible(format!(
                "loss {} cannot be trained with {} noise",
                self.name(),
                noise.kind()
            )))
        }
    }

    fn uses_probe(&self) -> bool {
        matches!(self, LossKind::McSure | LossKind::Esure | LossKind::Epure)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "mse" => LossKind::Mse,
            "n2n" => LossKind::N2n,
            "sure" | "mc_sure" | "mcsure" | "mc-sure" => LossKind::McSure,
            "esure" => LossKind::Esure,
            "epure" => LossKind::Epure,
            other => return Err(Error::Config(format!("unknown loss `{other}`"))),
        })
    }
}

/// One training example, shaped by what its loss needs.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingSample {
    /// Noisy input and clean target.
    Supervised { y: Image, x: Image },
    /// Noisy input and an independent noisy target.
    NoisyTarget { y: Image, target: Image },
    /// A single noisy observation.
    Single { y: Image },
    /// Correlated Gaussian pair; the network sees `y2`.
    GaussianPair { y1: Image, y2: Image },
    /// Poisson observation `y1` and the pair average `z`.
    PoissonPair { y1: Image, z: Image },
}

impl TrainingSample {
    pub fn input(&self) -> &Image {
        match self {
            TrainingSample::Supervised { y, .. }
            | TrainingSample::NoisyTarget { y, .. }
            | TrainingSample::Single { y } => y,
            TrainingSample::GaussianPair { y2, .. } => y2,
            TrainingSample::PoissonPair { y1, .. } => y1,
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            TrainingSample::Supervised { .. } => "supervised",
            TrainingSample::NoisyTarget { .. } => "noisy-target",
            TrainingSample::Single { .. } => "single",
            TrainingSample::GaussianPair { .. } => "gaussian-pair",
            TrainingSample::PoissonPair { .. } => "poisson-pair",
        }
    }
}

/// Scalars the loss needs from the noise model.
fn noise_scale(kind: LossKind, noise: &NoiseSpec) -> f64 {
    match (kind, *noise) {
        (LossKind::McSure, NoiseSpec::Gaussian { sigma }) => sigma * sigma,
        (LossKind::Esure, NoiseSpec::GaussianPair { sigma1, .. }) => sigma1 * sigma1,
        (LossKind::Epure, NoiseSpec::PoissonPair { peak }) => risk::averaged_peak(peak),
        _ => 0.0,
    }
}

/// Loss and gradient of one sample, accumulated into `grads`.
#[allow(clippy::too_many_arguments)]
fn sample_loss(
    params: &NetParams,
    sample: &TrainingSample,
    kind: LossKind,
    scale: f64,
    epsilon: f64,
    stream: &SeededStream,
    probe: Probe,
    grads: &mut Gradients,
) -> Result<RiskValue> {
    let input = sample.input();
    let (w, h) = input.dims();
    let n_pix = input.len() as f64;
    let trace = forward_single(params, input.data(), h, w);
    let out = &trace.output;

    // (reference the fidelity term is measured against, is MC)
    let reference: &Image = match (kind, sample) {
        (LossKind::Mse, TrainingSample::Supervised { y, x }) => {
            y.check_same_dims(x)?;
            x
        }
        (LossKind::N2n, TrainingSample::NoisyTarget { y, target }) => {
            y.check_same_dims(target)?;
            target
        }
        (LossKind::McSure, TrainingSample::Single { y }) => y,
        (LossKind::Esure, TrainingSample::GaussianPair { y1, y2 }) => {
            y1.check_same_dims(y2)?;
            y1
        }
        (LossKind::Epure, TrainingSample::PoissonPair { y1, z }) => {
            y1.check_same_dims(z)?;
            z
        }
        _ => {
            return Err(Error::Incompatible(format!(
                "loss {} cannot use a {} sample",
                kind.name(),
                sample.kind_name()
            )))
        }
    };
    let r = reference.data();

    if !kind.uses_probe() {
        let value = RiskValue::from_terms(squared_distance(r, out) / n_pix, 0.0, 0.0);
        let upstream: Vec<f64> = out.iter().zip(r).map(|(o, t)| 2.0 * (o - t) / n_pix).collect();
        backward_single(params, &trace, &upstream, grads, false);
        return Ok(value);
    }

    let b = probe.draw(input.len(), &stream.child(0));
    let perturbed: Vec<f64> = input
        .data()
        .iter()
        .zip(&b)
        .map(|(v, bi)| v + epsilon * bi)
        .collect();
    let trace_p = forward_single(params, &perturbed, h, w);
    let out_p = &trace_p.output;

    let (value, weight) = match kind {
        LossKind::Epure => {
            let value = risk::epure_from_outputs(r, out, out_p, &b, epsilon, scale);
            // d/d out_p of (2/(εTN))·(n⊙z)ᵀ(out_p − out)
            let c = 2.0 / (epsilon * scale * n_pix);
            let weight: Vec<f64> = b.iter().zip(r).map(|(ni, zi)| c * ni * zi).collect();
            (value, weight)
        }
        _ => {
            let value = risk::stein_from_outputs(r, out, out_p, &b, epsilon, scale);
            // d/d out_p of (2σ²/(εN))·bᵀ(out_p − out)
            let c = 2.0 * scale / (epsilon * n_pix);
            let weight: Vec<f64> = b.iter().map(|bi| c * bi).collect();
            (value, weight)
        }
    };
    let upstream: Vec<f64> = out
        .iter()
        .zip(r)
        .zip(&weight)
        .map(|((o, t), wt)| 2.0 * (o - t) / n_pix - wt)
        .collect();
    backward_single(params, &trace, &upstream, grads, false);
    backward_single(params, &trace_p, &weight, grads, false);
    Ok(value)
}

/// Mean loss over `samples` and its gradient with respect to every parameter.
///
/// Sample `j` draws its probe from `stream.child(j).child(0)`, the same
/// stream layout the batch estimators in [`crate::risk`] use. `epsilon` and
/// `probe` are ignored by the non-Monte-Carlo losses.
pub fn loss_and_grad(
    params: &NetParams,
    samples: &[TrainingSample],
    kind: LossKind,
    noise: &NoiseSpec,
    epsilon: f64,
    stream: &SeededStream,
    probe: Probe,
) -> Result<(RiskValue, Gradients)> {
    kind.check_noise(noise)?;
    if samples.is_empty() {
        return Err(Error::param("batch", "must not be empty"));
    }
    if kind.uses_probe() && !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::param("epsilon", format!("must be finite and > 0, got {epsilon}")));
    }
    let dims = samples[0].input().dims();
    let scale = noise_scale(kind, noise);
    let mut grads = params.zero_gradients();
    let mut values = Vec::with_capacity(samples.len());
    for (j, sample) in samples.iter().enumerate() {
        if sample.input().dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: sample.input().dims(),
            });
        }
        values.push(sample_loss(
            params,
            sample,
            kind,
            scale,
            epsilon,
            &stream.child(j as u64),
            probe,
            &mut grads,
        )?);
    }
    grads.scale(1.0 / samples.len() as f64);
    Ok((RiskValue::mean_of(&values)?, grads))
}
