//! Risk functionals: MSE, Noise2Noise, SURE (analytic and Monte-Carlo),
//! eSURE, PURE and ePURE.
//!
//! Every value is normalized per pixel: the whole bracket of each estimator is
//! divided by the pixel count `N`, so risks compare across image sizes and
//! against [`mse`] directly.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::noise;
use crate::rng::SeededStream;
use crate::stats::{dot, squared_distance};

/// Default finite-difference step for every Monte-Carlo divergence.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// A per-pixel risk and the terms it is made of.
///
/// `total` is always computed as `(fidelity_term + constant_term) + divergence_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub total: f64,
    pub fidelity_term: f64,
    pub constant_term: f64,
    pub divergence_term: f64,
}

impl RiskValue {
    pub fn from_terms(fidelity_term: f64, constant_term: f64, divergence_term: f64) -> Self {
        Self {
            total: fidelity_term + constant_term + divergence_term,
            fidelity_term,
            constant_term,
            divergence_term,
        }
    }

    /// Term-wise mean; `total` is rebuilt from the averaged terms.
    pub fn mean_of(values: &[RiskValue]) -> Result<RiskValue> {
        if values.is_empty() {
            return Err(Error::param("batch", "must not be empty"));
        }
        let n = values.len() as f64;
        let avg = |f: fn(&RiskValue) -> f64| {
            let v: Vec<f64> = values.iter().map(f).collect();
            crate::stats::pairwise_sum(&v) / n
        };
        Ok(RiskValue::from_terms(
            avg(|r| r.fidelity_term),
            avg(|r| r.constant_term),
            avg(|r| r.divergence_term),
        ))
    }
}

/// How a divergence value was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceMethod {
    Analytic,
    MonteCarlo { epsilon: f64, draws: usize },
}

/// Per-pixel divergence `(1/N) Σ ∂h_i/∂y_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub method: DivergenceMethod,
}

impl DivergenceEstimate {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            method: DivergenceMethod::Analytic,
        }
    }

    /// Analytic divergence of `h` at `y`, if it has one.
    pub fn of<D: Denoiser + ?Sized>(h: &D, y: &Image) -> Result<Self> {
        h.analytic_divergence(y)
            .map(Self::analytic)
            .ok_or_else(|| Error::Incompatible(format!("{} has no analytic divergence", h.name())))
    }
}

/// Distribution of the perturbation vector in Monte-Carlo divergence terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Probe {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// i.i.d. ±1 entries.
    #[default]
    Rademacher,
}

impl Probe {
    /// Draws an `n`-vector from the start of `stream`.
    pub fn draw(&self, n: usize, stream: &SeededStream) -> Vec<f64> {
        let mut rng = stream.rng();
        match self {
            Probe::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            Probe::Rademacher => (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::param("epsilon", format!("must be finite and > 0, got {epsilon}")))
    }
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

/// `‖x − xhat‖² / N`.
pub fn mse(x: &Image, xhat: &Image) -> Result<RiskValue> {
    x.check_same_dims(xhat)?;
    let fidelity = squared_distance(x.data(), xhat.data()) / x.len() as f64;
    Ok(RiskValue::from_terms(fidelity, 0.0, 0.0))
}

/// Noise2Noise loss `‖z − h(y)‖² / N`: the MSE functional with a noisy target.
pub fn n2n_loss(z: &Image, h_y: &Image) -> Result<RiskValue> {
    mse(z, h_y)
}

/// Shared Stein form: `‖reference − estimate‖²/N − var + 2·var·div`.
fn stein_form(reference: &Image, estimate: &Image, div: f64, variance: f64) -> Result<RiskValue> {
    reference.check_same_dims(estimate)?;
    if !div.is_finite() {
        return Err(Error::NonFinite(format!("divergence is {div}")));
    }
    let fidelity = squared_distance(reference.data(), estimate.data()) / reference.len() as f64;
    Ok(RiskValue::from_terms(fidelity, -variance, 2.0 * variance * div))
}

/// SURE with a supplied divergence: `‖y − h(y)‖²/N − σ² + 2σ²·div`.
pub fn sure_analytic(y: &Image, h_y: &Image, div: &DivergenceEstimate, sigma: f64) -> Result<RiskValue> {
    check_sigma("sigma", sigma)?;
    stein_form(y, h_y, div.value, sigma * sigma)
}

/// Per-draw Monte-Carlo divergence values `(1/(εN))·bᵀ(h(y + εb) − h(y))`,
/// draw `d` using probe stream `stream.child(d)`.
pub fn mc_divergence_samples<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    h_y: &Image,
    epsilon: f64,
    stream: &SeededStream,
    draws: usize,
    probe: Probe,
) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    if draws == 0 {
        return Err(Error::param("draws", "must be >= 1"));
    }
    y.check_same_dims(h_y)?;
    let n = y.len();
    (0..draws)
        .map(|d| {
            let b = probe.draw(n, &stream.child(d as u64));
            let perturbed = Image::from_vec_unchecked(
                y.width(),
                y.height(),
                y.data().iter().zip(&b).map(|(v, bi)| v + epsilon * bi).collect(),
            );
            let h_p = h.denoise(&perturbed)?;
            h_p.check_same_dims(y)?;
            Ok(probe_divergence(&b, h_p.data(), h_y.data(), epsilon))
        })
        .collect()
}

/// One-probe divergence `(1/(εN))·bᵀ(h_perturbed − h_y)`.
pub(crate) fn probe_divergence(b: &[f64], h_perturbed: &[f64], h_y: &[f64], epsilon: f64) -> f64 {
    let diff: Vec<f64> = h_perturbed.iter().zip(h_y).map(|(a, c)| a - c).collect();
    dot(b, &diff) / (epsilon * b.len() as f64)
}

/// The Stein form with a one-probe divergence, from precomputed outputs.
pub(crate) fn stein_from_outputs(
    reference: &[f64],
    h_y: &[f64],
    h_perturbed: &[f64],
    b: &[f64],
    epsilon: f64,
    variance: f64,
) -> RiskValue {
    let fidelity = squared_distance(reference, h_y) / reference.len() as f64;
    let div = probe_divergence(b, h_perturbed, h_y, epsilon);
    RiskValue::from_terms(fidelity, -variance, 2.0 * variance * div)
}

/// The ePURE bracket from precomputed outputs `h(y1)` and `h(y1 + εn)`.
pub(crate) fn epure_from_outputs(
    z: &[f64],
    h_y1: &[f64],
    h_perturbed: &[f64],
    n: &[f64],
    epsilon: f64,
    peak: f64,
) -> RiskValue {
    let n_pix = z.len() as f64;
    let weighted: Vec<f64> = n.iter().zip(z).map(|(a, b)| a * b).collect();
    let diff: Vec<f64> = h_perturbed.iter().zip(h_y1).map(|(a, b)| a - b).collect();
    let fidelity = squared_distance(h_y1, z) / n_pix;
    let constant = -crate::stats::pairwise_sum(z) / (peak * n_pix);
    let divergence = 2.0 * dot(&weighted, &diff) / (epsilon * peak * n_pix);
    RiskValue::from_terms(fidelity, constant, divergence)
}

/// Monte-Carlo divergence with Gaussian probes, averaged over `draws`.
pub fn mc_divergence<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    epsilon: f64,
    stream: &SeededStream,
    draws: usize,
) -> Result<DivergenceEstimate> {
    let h_y = h.denoise(y)?;
    mc_divergence_from(h, y, &h_y, epsilon, stream, draws)
}

/// As [`mc_divergence`], reusing an already computed `h(y)`.
pub fn mc_divergence_from<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    h_y: &Image,
    epsilon: f64,
    stream: &SeededStream,
    draws: usize,
) -> Result<DivergenceEstimate> {
    let samples = mc_divergence_samples(h, y, h_y, epsilon, stream, draws, Probe::Gaussian)?;
    Ok(DivergenceEstimate {
        value: crate::stats::mean(&samples),
        method: DivergenceMethod::MonteCarlo { epsilon, draws },
    })
}

/// Batch MC-SURE: mean over images of SURE with a single-probe divergence,
/// image `j` drawing its probe from `stream.child(j)`.
pub fn mc_sure_batch<D: Denoiser + ?Sized>(
    h: &D,
    batch: &[Image],
    sigma: f64,
    epsilon: f64,
    stream: &SeededStream,
) -> Result<RiskValue> {
    if batch.is_empty() {
        return Err(Error::param("batch", "must not be empty"));
    }
    check_sigma("sigma", sigma)?;
    let dims = batch[0].dims();
    let values = batch
        .iter()
        .enumerate()
        .map(|(j, y)| {
            if y.dims() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    actual: y.dims(),
                });
            }
            mc_sure_single(h, y, sigma, epsilon, &stream.child(j as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    RiskValue::mean_of(&values)
}

/// MC-SURE on one image with one Gaussian probe from `stream`.
pub fn mc_sure_single<D: Denoiser + ?Sized>(
    h: &D,
    y: &Image,
    sigma: f64,
    epsilon: f64,
    stream: &SeededStream,
) -> Result<RiskValue> {
    let h_y = h.denoise(y)?;
    let div = mc_divergence_from(h, y, &h_y, epsilon, stream, 1)?;
    sure_analytic(y, &h_y, &div, sigma)
}

/// eSURE: `‖y1 − h(y2)‖²/N − σ1² + 2σ1²·div_y2`.
///
/// The divergence is taken with respect to `y2`; only the first member's
/// noise level enters the correction.
pub fn esure(
    y1: &Image,
    y2: &Image,
    h_y2: &Image,
    div_y2: &DivergenceEstimate,
    sigma1: f64,
) -> Result<RiskValue> {
    check_sigma("sigma1", sigma1)?;
    y1.check_same_dims(y2)?;
    stein_form(y1, h_y2, div_y2.value, sigma1 * sigma1)
}

/// eSURE with a single-probe Monte-Carlo divergence at `y2`.
pub fn esure_mc<D: Denoiser + ?Sized>(
    y1: &Image,
    y2: &Image,
    h: &D,
    sigma1: f64,
    epsilon: f64,
    stream: &SeededStream,
) -> Result<RiskValue> {
    y1.check_same_dims(y2)?;
    let h_y2 = h.denoise(y2)?;
    let div = mc_divergence_from(h, y2, &h_y2, epsilon, stream, 1)?;
    esure(y1, y2, &h_y2, &div, sigma1)
}

/// Photon scale of the average of two independent observations at `peak`.
///
/// `z = (y1 + y2)/2` has per-pixel variance `x/(2T)`, i.e. it behaves like a
/// single observation at scale `2T`; pass this to [`epure_pair`] for pairs
/// drawn by [`noise::poisson_pair`].
pub fn averaged_peak(peak: f64) -> f64 {
    2.0 * peak
}

/// ePURE with a Rademacher probe.
///
/// With `z = (y1 + y2)/2` and probe `n`:
/// `(1/N)·[‖h(y1) − z‖² − (1/T)·Σz + (2/(εT))·(n ⊙ z)ᵀ(h(y1 + εn) − h(y1))]`.
///
/// `reference_peak` is the scale `T` of `z`'s noise (`Var z_i = x_i / T`):
/// the observation peak when `y2 = y1`, [`averaged_peak`] of it when `y1`
/// and `y2` are independent draws.
pub fn epure_pair<D: Denoiser + ?Sized>(
    y1: &Image,
    y2: &Image,
    h: &D,
    reference_peak: f64,
    epsilon: f64,
    stream: &SeededStream,
) -> Result<RiskValue> {
    epure_pair_with_probe(y1, y2, h, reference_peak, epsilon, stream, Probe::Rademacher)
}

/// [`epure_pair`] with a selectable probe distribution.
pub fn epure_pair_with_probe<D: Denoiser + ?Sized>(
    y1: &Image,
    y2: &Image,
    h: &D,
    reference_peak: f64,
    epsilon: f64,
    stream: &SeededStream,
    probe: Probe,
) -> Result<RiskValue> {
    check_peak(reference_peak)?;
    check_epsilon(epsilon)?;
    y1.check_same_dims(y2)?;
    let z = noise::average(y1, y2)?;
    let h_y1 = h.denoise(y1)?;
    epure_terms(y1, &z, &h_y1, h, reference_peak, epsilon, stream, probe)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn epure_terms<D: Denoiser + ?Sized>(
    y1: &Image,
    z: &Image,
    h_y1: &Image,
    h: &D,
    peak: f64,
    epsilon: f64,
    stream: &SeededStream,
    probe: Probe,
) -> Result<RiskValue> {
    h_y1.check_same_dims(y1)?;
    let n = probe.draw(y1.len(), &stream.child(0));
    let perturbed = Image::from_vec_unchecked(
        y1.width(),
        y1.height(),
        y1.data().iter().zip(&n).map(|(v, ni)| v + epsilon * ni).collect(),
    );
    let h_p = h.denoise(&perturbed)?;
    h_p.check_same_dims(y1)?;
    Ok(epure_from_outputs(z.data(), h_y1.data(), h_p.data(), &n, epsilon, peak))
}

/// PURE on a single observation: [`epure_pair`] with `y2 = y1`, so `z = y`.
pub fn pure_single<D: Denoiser + ?Sized>(
    y: &Image,
    h: &D,
    peak: f64,
    epsilon: f64,
    stream: &SeededStream,
) -> Result<RiskValue> {
    epure_pair(y, y, h, peak, epsilon, stream)
}

/// [`pure_single`] with a selectable probe distribution.
pub fn pure_single_with_probe<D: Denoiser + ?Sized>(
    y: &Image,
    h: &D,
    peak: f64,
    epsilon: f64,
    stream: &SeededStream,
    probe: Probe,
) -> Result<RiskValue> {
    epure_pair_with_probe(y, y, h, peak, epsilon, stream, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{box3, constant, identity};

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |r, c| ((r * 7 + c * 3) % 13) as f64 / 13.0)
    }

    #[test]
    fn mse_basic_values() {
        let x = ramp(8, 8);
        assert_eq!(mse(&x, &x).unwrap().total, 0.0);
        let z = Image::zeros(4, 4);
        let o = Image::filled(4, 4, 0.1);
        assert!((mse(&z, &o).unwrap().total - 0.01).abs() < 1e-15);
        assert!(mse(&z, &Image::zeros(4, 5)).is_err());
    }

    #[test]
    fn n2n_is_mse() {
        let a = ramp(6, 5);
        let b = a.map(|v| v * v - 0.2);
        assert_eq!(n2n_loss(&a, &b).unwrap(), mse(&a, &b).unwrap());
        assert_eq!(n2n_loss(&a, &a).unwrap().total, 0.0);
    }

    #[test]
    fn sure_identity_is_sigma_squared() {
        let y = ramp(16, 16);
        let sigma = 25.0 / 255.0;
        let r = sure_analytic(&y, &y, &DivergenceEstimate::analytic(1.0), sigma).unwrap();
        assert_eq!(r.total, sigma * sigma);
    }

    #[test]
    fn sure_zero_denoiser_reduction() {
        let y = ramp(16, 16);
        let sigma = 0.2;
        let zero = Image::zeros(16, 16);
        let r = sure_analytic(&y, &zero, &DivergenceEstimate::analytic(0.0), sigma).unwrap();
        let expect = y.data().iter().map(|v| v * v).sum::<f64>() / 256.0 - sigma * sigma;
        assert!((r.total - expect).abs() < 1e-14);
    }

    #[test]
    fn mc_divergence_constant_is_zero() {
        let y = ramp(8, 8);
        let c = constant(0.3).unwrap();
        for eps in [1e-2, 1e-3, 1e-4] {
            let d = mc_divergence(&c, &y, eps, &SeededStream::new(1, 1), 5).unwrap();
            assert_eq!(d.value, 0.0);
            assert_eq!(d.method, DivergenceMethod::MonteCarlo { epsilon: eps, draws: 5 });
        }
    }

    #[test]
    fn mc_divergence_rejects_bad_params() {
        let y = ramp(8, 8);
        let s = SeededStream::from_seed(0);
        assert!(mc_divergence(&identity(), &y, 0.0, &s, 1).is_err());
        assert!(mc_divergence(&identity(), &y, 1e-3, &s, 0).is_err());
    }

    #[test]
    fn mc_sure_batch_rejects_empty_and_mixed() {
        let s = SeededStream::from_seed(0);
        assert!(mc_sure_batch(&identity(), &[], 0.1, 1e-3, &s).is_err());
        let batch = vec![Image::zeros(4, 4), Image::zeros(4, 5)];
        assert!(mc_sure_batch(&identity(), &batch, 0.1, 1e-3, &s).is_err());
    }

    #[test]
    fn esure_reductions() {
        let y1 = ramp(16, 16);
        let h = box3();
        let h_y1 = h.denoise(&y1).unwrap();
        let div = DivergenceEstimate::of(&h, &y1).unwrap();
        let sigma = 0.1;
        let e = esure(&y1, &y1, &h_y1, &div, sigma).unwrap();
        let s = sure_analytic(&y1, &h_y1, &div, sigma).unwrap();
        assert_eq!(e, s);
        let clean = esure(&y1, &y1, &h_y1, &div, 0.0).unwrap();
        assert_eq!(clean.total, mse(&y1, &h_y1).unwrap().total);
    }

    #[test]
    fn epure_identity_same_pair_closed_form() {
        let y = ramp(16, 16).map(|v| v + 0.05);
        let peak = 255.0;
        let r = epure_pair(&y, &y, &identity(), peak, 1e-3, &SeededStream::new(4, 2)).unwrap();
        let expect = y.mean() / peak;
        assert_eq!(r.fidelity_term, 0.0);
        assert!((r.total - expect).abs() <= 1e-9 * expect, "{} vs {expect}", r.total);
    }

    #[test]
    fn epure_zero_denoiser_closed_form() {
        let y = ramp(8, 8);
        let zero = constant(0.0).unwrap();
        let peak = 100.0;
        let r = pure_single(&y, &zero, peak, 1e-3, &SeededStream::new(2, 2)).unwrap();
        let n = y.len() as f64;
        let sum_sq: f64 = y.data().iter().map(|v| v * v).sum();
        let sum: f64 = y.data().iter().sum();
        assert!((r.total - (sum_sq - sum / peak) / n).abs() < 1e-14);
        assert_eq!(r.divergence_term, 0.0);
    }

    #[test]
    fn epure_validates() {
        let y = ramp(8, 8);
        let s = SeededStream::from_seed(1);
        assert!(epure_pair(&y, &y, &identity(), 0.0, 1e-3, &s).is_err());
        assert!(epure_pair(&y, &y, &identity(), 10.0, -1.0, &s).is_err());
        assert!(epure_pair(&y, &ramp(8, 9), &identity(), 10.0, 1e-3, &s).is_err());
    }

    #[test]
    fn rademacher_probe_is_pm_one() {
        let v = Probe::Rademacher.draw(1000, &SeededStream::new(3, 3));
        assert!(v.iter().all(|&x| x == 1.0 || x == -1.0));
        assert!(v.iter().any(|&x| x == 1.0) && v.iter().any(|&x| x == -1.0));
    }
}
