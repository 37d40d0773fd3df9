//! Corruption processes: additive white Gaussian noise (single, correlated
//! pair, independent pair) and scaled Poisson noise (single, pair).
//!
//! Outputs are never clamped. Gaussian draws use the Ziggurat standard normal
//! from `rand_distr`; Poisson draws use sequential inversion for small means
//! and `rand_distr::Poisson` (PTRS) above [`POISSON_INVERSION_LIMIT`].

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{SeededStream, StreamRng};

/// Largest Poisson mean sampled by exact inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// A corruption process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// `y = x + n`, `n ~ N(0, sigma²)`.
    Gaussian { sigma: f64 },
    /// `y1 = x + n1`, `y2 = y1 + z` with `n1 ~ N(0, sigma1²)`, `z ~ N(0, sigma_z²)`.
    GaussianPair { sigma1: f64, sigma_z: f64 },
    /// Two independent corruptions of the same `x`, both with `sigma`.
    GaussianIndependentPair { sigma: f64 },
    /// `y = Poisson(T·x) / T`.
    Poisson { peak: f64 },
    /// Two independent Poisson observations plus their average.
    PoissonPair { peak: f64 },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite and >= 0, got {v}")))
            }
        };
        let positive = |v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param("peak", format!("must be finite and > 0, got {v}")))
            }
        };
        match *self {
            NoiseSpec::Gaussian { sigma } | NoiseSpec::GaussianIndependentPair { sigma } => {
                nonneg("sigma", sigma)
            }
            NoiseSpec::GaussianPair { sigma1, sigma_z } => {
                nonneg("sigma1", sigma1)?;
                nonneg("sigma_z", sigma_z)
            }
            NoiseSpec::Poisson { peak } | NoiseSpec::PoissonPair { peak } => positive(peak),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(
            self,
            NoiseSpec::Gaussian { .. }
                | NoiseSpec::GaussianPair { .. }
                | NoiseSpec::GaussianIndependentPair { .. }
        )
    }

    pub fn is_poisson(&self) -> bool {
        !self.is_gaussian()
    }

    /// Short tag used in file names and reports.
    pub fn kind(&self) -> &'static str {
        match self {
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::GaussianPair { .. } => "gaussian_pair",
            NoiseSpec::GaussianIndependentPair { .. } => "gaussian_independent_pair",
            NoiseSpec::Poisson { .. } => "poisson",
            NoiseSpec::PoissonPair { .. } => "poisson_pair",
        }
    }
}

impl fmt::Display for NoiseSpec {
    /// Comma-free rendering, safe inside a CSV field.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use crate::report::sig9;
        match *self {
            NoiseSpec::Gaussian { sigma } => write!(f, "gaussian:sigma={}", sig9(sigma)),
            NoiseSpec::GaussianPair { sigma1, sigma_z } => write!(
                f,
                "gaussian_pair:sigma1={};sigma_z={}",
                sig9(sigma1),
                sig9(sigma_z)
            ),
            NoiseSpec::GaussianIndependentPair { sigma } => {
                write!(f, "gaussian_independent_pair:sigma={}", sig9(sigma))
            }
            NoiseSpec::Poisson { peak } => write!(f, "poisson:peak={}", sig9(peak)),
            NoiseSpec::PoissonPair { peak } => write!(f, "poisson_pair:peak={}", sig9(peak)),
        }
    }
}

/// What a corruption process hands back.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Single(Image),
    /// `(y1, y2)` for correlated and independent Gaussian pairs.
    Pair(Image, Image),
    /// `(y1, y2, z)` with `z = (y1 + y2) / 2`.
    PoissonPair(Image, Image, Image),
}

impl Observation {
    /// The member a denoiser is evaluated on when the pair is used for
    /// training or estimation: `y2` for correlated Gaussian pairs (the
    /// noisier one), `y1` otherwise.
    pub fn network_input(&self, spec: &NoiseSpec) -> &Image {
        match (self, spec) {
            (Observation::Single(y), _) => y,
            (Observation::Pair(_, y2), NoiseSpec::GaussianPair { .. }) => y2,
            (Observation::Pair(y1, _), _) => y1,
            (Observation::PoissonPair(y1, _, _), _) => y1,
        }
    }
}

/// Applies `spec` to `x` using `stream`.
pub fn corrupt(x: &Image, spec: &NoiseSpec, stream: &SeededStream) -> Result<Observation> {
    spec.validate()?;
    Ok(match *spec {
        NoiseSpec::Gaussian { sigma } => Observation::Single(awgn_corrupt(x, sigma, stream)?),
        NoiseSpec::GaussianPair { sigma1, sigma_z } => {
            let (y1, y2) = awgn_pair_correlated(x, sigma1, sigma_z, stream)?;
            Observation::Pair(y1, y2)
        }
        NoiseSpec::GaussianIndependentPair { sigma } => {
            let (y, z) = awgn_pair_independent(x, sigma, stream)?;
            Observation::Pair(y, z)
        }
        NoiseSpec::Poisson { peak } => Observation::Single(poisson_corrupt(x, peak, stream)?),
        NoiseSpec::PoissonPair { peak } => {
            let (y1, y2, z) = poisson_pair(x, peak, stream)?;
            Observation::PoissonPair(y1, y2, z)
        }
    })
}

fn check_sigma(name: &'static str, sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite and >= 0, got {sigma}")))
    }
}

fn check_peak(peak: f64) -> Result<()> {
    if peak.is_finite() && peak > 0.0 {
        Ok(())
    } else {
        Err(Error::param("peak", format!("must be finite and > 0, got {peak}")))
    }
}

fn add_gaussian(base: &Image, sigma: f64, rng: &mut StreamRng) -> Image {
    let data = base
        .data()
        .iter()
        .map(|&v| {
            let n: f64 = rng.sample(StandardNormal);
            v + sigma * n
        })
        .collect();
    Image::from_vec_unchecked(base.width(), base.height(), data)
}

/// `y = x + n` with `n` i.i.d. `N(0, sigma²)`.
pub fn awgn_corrupt(x: &Image, sigma: f64, stream: &SeededStream) -> Result<Image> {
    check_sigma("sigma", sigma)?;
    x.check_finite()?;
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    Ok(add_gaussian(x, sigma, &mut stream.rng()))
}

/// Correlated pair `y1 = x + n1`, `y2 = y1 + z`.
///
/// `y1` consumes the stream exactly as [`awgn_corrupt`] would, so
/// `awgn_corrupt(x, sigma1, s)` equals the `y1` returned here for the same `s`.
pub fn awgn_pair_correlated(
    x: &Image,
    sigma1: f64,
    sigma_z: f64,
    stream: &SeededStream,
) -> Result<(Image, Image)> {
    check_sigma("sigma1", sigma1)?;
    check_sigma("sigma_z", sigma_z)?;
    x.check_finite()?;
    let mut rng = stream.rng();
    let y1 = if sigma1 == 0.0 {
        x.clone()
    } else {
        add_gaussian(x, sigma1, &mut rng)
    };
    let y2 = if sigma_z == 0.0 {
        y1.clone()
    } else {
        add_gaussian(&y1, sigma_z, &mut rng)
    };
    Ok((y1, y2))
}

/// Two independent corruptions of `x`, drawn from sub-streams 0 and 1.
pub fn awgn_pair_independent(x: &Image, sigma: f64, stream: &SeededStream) -> Result<(Image, Image)> {
    let y = awgn_corrupt(x, sigma, &stream.child(0))?;
    let z = awgn_corrupt(x, sigma, &stream.child(1))?;
    Ok((y, z))
}

/// Draws one Poisson variate with mean `lambda`.
pub fn sample_poisson(lambda: f64, rng: &mut StreamRng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda <= POISSON_INVERSION_LIMIT {
        // Sequential search on the cdf.
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p < f64::MIN_POSITIVE && k as f64 > lambda {
                break;
            }
        }
        k
    } else {
        Poisson::new(lambda)
            .expect("lambda checked positive and finite")
            .sample(rng) as u64
    }
}

/// `y_i = k_i / T` with `k_i ~ Poisson(T·x_i)`, so `E[y] = x` and `Var(y_i) = x_i / T`.
pub fn poisson_corrupt(x: &Image, peak: f64, stream: &SeededStream) -> Result<Image> {
    check_peak(peak)?;
    x.check_finite()?;
    if let Some(i) = x.data().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidImage(format!(
            "Poisson intensity must be >= 0, pixel {i} is {}",
            x.data()[i]
        )));
    }
    let mut rng = stream.rng();
    let data = x
        .data()
        .iter()
        .map(|&v| sample_poisson(peak * v, &mut rng) as f64 / peak)
        .collect();
    Ok(Image::from_vec_unchecked(x.width(), x.height(), data))
}

/// Two independent Poisson observations (sub-streams 0 and 1) and their
/// average `z = (y1 + y2) / 2`.
pub fn poisson_pair(x: &Image, peak: f64, stream: &SeededStream) -> Result<(Image, Image, Image)> {
    let y1 = poisson_corrupt(x, peak, &stream.child(0))?;
    let y2 = poisson_corrupt(x, peak, &stream.child(1))?;
    let z = average(&y1, &y2)?;
    Ok((y1, y2, z))
}

/// `(a + b) / 2` elementwise.
pub fn average(a: &Image, b: &Image) -> Result<Image> {
    a.zip_map(b, |p, q| (p + q) / 2.0)
}
