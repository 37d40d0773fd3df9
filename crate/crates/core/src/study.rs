//! Monte-Carlo unbiasedness studies: repeated corruption of a known image,
//! comparing an estimator's mean against the mean of the true MSE.

use std::fmt;
use std::str::FromStr;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::noise::{self, NoiseSpec, Observation};
use crate::report::{sig9, CsvWriter};
use crate::risk::{self, DivergenceEstimate, Probe, RiskValue};
use crate::rng::SeededStream;
use crate::stats;

/// Minimum number of draws a study accepts.
pub const MIN_DRAWS: usize = 100;

/// A risk functional together with the parameters it needs beyond the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    /// SURE with the denoiser's analytic divergence.
    Sure,
    /// SURE with a single Gaussian-probe divergence per draw.
    McSure { epsilon: f64 },
    /// eSURE with the analytic divergence at `y2`.
    Esure,
    /// eSURE with a single Gaussian-probe divergence at `y2`.
    EsureMc { epsilon: f64 },
    /// PURE on a single Poisson observation.
    Pure { epsilon: f64, probe: Probe },
    /// ePURE on an independent Poisson pair.
    Epure { epsilon: f64, probe: Probe },
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Sure => "sure",
            Estimator::McSure { .. } => "mc_sure",
            Estimator::Esure => "esure",
            Estimator::EsureMc { .. } => "esure_mc",
            Estimator::Pure { .. } => "pure",
            Estimator::Epure { .. } => "epure",
        }
    }

    /// Whether `noise` produces the observations this estimator consumes.
    pub fn accepts(&self, noise: &NoiseSpec) -> bool {
        matches!(
            (self, noise),
            (Estimator::Sure | Estimator::McSure { .. }, NoiseSpec::Gaussian { .. })
                | (Estimator::Esure | Estimator::EsureMc { .. }, NoiseSpec::GaussianPair { .. })
                | (Estimator::Pure { .. }, NoiseSpec::Poisson { .. })
                | (Estimator::Epure { .. }, NoiseSpec::PoissonPair { .. })
        )
    }

    /// Whether the estimator needs an analytic divergence from the denoiser.
    pub fn needs_analytic_divergence(&self) -> bool {
        matches!(self, Estimator::Sure | Estimator::Esure)
    }

    /// Evaluates the estimator on one observation. Returns the risk and the
    /// image the true MSE is measured on (`h` of the network input).
    pub fn evaluate<D: Denoiser + ?Sized>(
        &self,
        h: &D,
        obs: &Observation,
        noise: &NoiseSpec,
        probe_stream: &SeededStream,
    ) -> Result<(RiskValue, Image)> {
        if !self.accepts(noise) {
            return Err(Error::Incompatible(format!(
                "estimator {} cannot use {} noise",
                self.name(),
                noise.kind()
            )));
        }
        match (*self, obs, *noise) {
            (Estimator::Sure, Observation::Single(y), NoiseSpec::Gaussian { sigma }) => {
                let h_y = h.denoise(y)?;
                let div = DivergenceEstimate::of(h, y)?;
                Ok((risk::sure_analytic(y, &h_y, &div, sigma)?, h_y))
            }
            (Estimator::McSure { epsilon }, Observation::Single(y), NoiseSpec::Gaussian { sigma }) => {
                let h_y = h.denoise(y)?;
                let div = risk::mc_divergence_from(h, y, &h_y, epsilon, probe_stream, 1)?;
                Ok((risk::sure_analytic(y, &h_y, &div, sigma)?, h_y))
            }
            (Estimator::Esure, Observation::Pair(y1, y2), NoiseSpec::GaussianPair { sigma1, .. }) => {
                let h_y2 = h.denoise(y2)?;
                let div = DivergenceEstimate::of(h, y2)?;
                Ok((risk::esure(y1, y2, &h_y2, &div, sigma1)?, h_y2))
            }
            (
                Estimator::EsureMc { epsilon },
                Observation::Pair(y1, y2),
                NoiseSpec::GaussianPair { sigma1, .. },
            ) => {
                let h_y2 = h.denoise(y2)?;
                let div = risk::mc_divergence_from(h, y2, &h_y2, epsilon, probe_stream, 1)?;
                Ok((risk::esure(y1, y2, &h_y2, &div, sigma1)?, h_y2))
            }
            (Estimator::Pure { epsilon, probe }, Observation::Single(y), NoiseSpec::Poisson { peak }) => {
                let h_y = h.denoise(y)?;
                let r = risk::epure_terms(y, y, &h_y, h, peak, epsilon, probe_stream, probe)?;
                Ok((r, h_y))
            }
            (
                Estimator::Epure { epsilon, probe },
                Observation::PoissonPair(y1, _, z),
                NoiseSpec::PoissonPair { peak },
            ) => {
                let h_y1 = h.denoise(y1)?;
                let r = risk::epure_terms(
                    y1,
                    z,
                    &h_y1,
                    h,
                    risk::averaged_peak(peak),
                    epsilon,
                    probe_stream,
                    probe,
                )?;
                Ok((r, h_y1))
            }
            _ => Err(Error::Incompatible(format!(
                "observation shape does not match {} noise",
                noise.kind()
            ))),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    /// Parses a name with default parameters (`epsilon = 1e-3`, Rademacher probe).
    fn from_str(s: &str) -> Result<Self> {
        let epsilon = risk::DEFAULT_EPSILON;
        let probe = Probe::Rademacher;
        Ok(match s.trim() {
            "sure" => Estimator::Sure,
            "mc_sure" | "mcsure" => Estimator::McSure { epsilon },
            "esure" => Estimator::Esure,
            "esure_mc" => Estimator::EsureMc { epsilon },
            "pure" => Estimator::Pure { epsilon, probe },
            "epure" => Estimator::Epure { epsilon, probe },
            other => return Err(Error::Config(format!("unknown estimator `{other}`"))),
        })
    }
}

/// Outcome of an unbiasedness study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub estimator_name: String,
    pub denoiser_name: String,
    pub noise: NoiseSpec,
    pub draws: usize,
    pub estimator_mean: f64,
    pub estimator_stderr: f64,
    pub true_mse_mean: f64,
    pub true_mse_stderr: f64,
    /// `(estimator_mean − true_mse_mean) / sqrt(se_est² + se_true²)`.
    pub bias_in_stderr_units: f64,
}

pub const STUDY_CSV_HEADER: [&str; 9] = [
    "estimator",
    "denoiser",
    "noise",
    "draws",
    "estimator_mean",
    "estimator_stderr",
    "true_mse_mean",
    "true_mse_stderr",
    "bias_in_stderr_units",
];

impl StudyReport {
    pub fn combined_stderr(&self) -> f64 {
        self.estimator_stderr.hypot(self.true_mse_stderr)
    }

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.estimator_name.clone(),
            self.denoiser_name.clone(),
            self.noise.to_string(),
            self.draws.to_string(),
            sig9(self.estimator_mean),
            sig9(self.estimator_stderr),
            sig9(self.true_mse_mean),
            sig9(self.true_mse_stderr),
            sig9(self.bias_in_stderr_units),
        ]
    }
}

/// Serializes reports with the mandatory header row.
pub fn reports_to_csv(reports: &[StudyReport]) -> String {
    let mut w = CsvWriter::with_header(&STUDY_CSV_HEADER);
    for r in reports {
        w.row(r.csv_fields());
    }
    w.into_string()
}

/// Per-draw samples behind a [`StudyReport`].
#[derive(Debug, Clone)]
pub struct StudySamples {
    pub estimates: Vec<f64>,
    pub true_mse: Vec<f64>,
}

/// Draws `draws` observations of `x`; draw `d` corrupts with
/// `stream.child(d).child(0)` and probes with `stream.child(d).child(1)`.
pub fn study_samples<D: Denoiser + ?Sized>(
    estimator: &Estimator,
    h: &D,
    x: &Image,
    noise: &NoiseSpec,
    draws: usize,
    stream: &SeededStream,
) -> Result<StudySamples> {
    noise.validate()?;
    if !estimator.accepts(noise) {
        return Err(Error::Incompatible(format!(
            "estimator {} cannot use {} noise",
            estimator.name(),
            noise.kind()
        )));
    }
    if estimator.needs_analytic_divergence() && h.analytic_divergence(x).is_none() {
        return Err(Error::Incompatible(format!(
            "estimator {} needs an analytic divergence, {} has none",
            estimator.name(),
            h.name()
        )));
    }
    let mut estimates = Vec::with_capacity(draws);
    let mut true_mse = Vec::with_capacity(draws);
    for d in 0..draws {
        let s = stream.child(d as u64);
        let obs = noise::corrupt(x, noise, &s.child(0))?;
        let (risk, estimate) = estimator.evaluate(h, &obs, noise, &s.child(1))?;
        estimates.push(risk.total);
        true_mse.push(risk::mse(x, &estimate)?.total);
    }
    Ok(StudySamples {
        estimates,
        true_mse,
    })
}

/// Runs an unbiasedness study with at least [`MIN_DRAWS`] draws.
pub fn unbiasedness_study<D: Denoiser + ?Sized>(
    estimator: &Estimator,
    h: &D,
    x: &Image,
    noise: &NoiseSpec,
    draws: usize,
    stream: &SeededStream,
) -> Result<StudyReport> {
    if draws < MIN_DRAWS {
        return Err(Error::param(
            "draws",
            format!("must be >= {MIN_DRAWS}, got {draws}"),
        ));
    }
    let samples = study_samples(estimator, h, x, noise, draws, stream)?;
    Ok(summarize(estimator.name(), &h.name(), noise, &samples))
}

pub fn summarize(estimator: &str, denoiser: &str, noise: &NoiseSpec, s: &StudySamples) -> StudyReport {
    let estimator_mean = stats::mean(&s.estimates);
    let estimator_stderr = stats::std_error(&s.estimates);
    let true_mse_mean = stats::mean(&s.true_mse);
    let true_mse_stderr = stats::std_error(&s.true_mse);
    let combined = estimator_stderr.hypot(true_mse_stderr);
    let gap = estimator_mean - true_mse_mean;
    let bias_in_stderr_units = if combined > 0.0 {
        gap / combined
    } else if gap == 0.0 {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    };
    StudyReport {
        estimator_name: estimator.to_string(),
        denoiser_name: denoiser.to_string(),
        noise: *noise,
        draws: s.estimates.len(),
        estimator_mean,
        estimator_stderr,
        true_mse_mean,
        true_mse_stderr,
        bias_in_stderr_units,
    }
}
