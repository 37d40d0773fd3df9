//! The denoiser interface and the reference denoisers with closed-form
//! divergences that serve as oracles for every estimator.
//!
//! Divergences are reported per pixel: `(1/N) Σ_i ∂h_i(y)/∂y_i`.

use crate::error::{Error, Result};
use crate::image::Image;

/// A deterministic, dimension-preserving map from a noisy image to an estimate.
pub trait Denoiser {
    fn name(&self) -> String;

    fn denoise(&self, y: &Image) -> Result<Image>;

    /// Exact per-pixel divergence at `y`, when the family admits one.
    fn analytic_divergence(&self, _y: &Image) -> Option<f64> {
        None
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn name(&self) -> String {
        (**self).name()
    }
    fn denoise(&self, y: &Image) -> Result<Image> {
        (**self).denoise(y)
    }
    fn analytic_divergence(&self, y: &Image) -> Option<f64> {
        (**self).analytic_divergence(y)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn name(&self) -> String {
        (**self).name()
    }
    fn denoise(&self, y: &Image) -> Result<Image> {
        (**self).denoise(y)
    }
    fn analytic_divergence(&self, y: &Image) -> Option<f64> {
        (**self).analytic_divergence(y)
    }
}

/// `h(y) = y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

pub fn identity() -> Identity {
    Identity
}

impl Denoiser for Identity {
    fn name(&self) -> String {
        "identity".into()
    }
    fn denoise(&self, y: &Image) -> Result<Image> {
        Ok(y.clone())
    }
    fn analytic_divergence(&self, _y: &Image) -> Option<f64> {
        Some(1.0)
    }
}

/// `h(y) = c` everywhere.
#[derive(Debug, Clone, Copy)]
pub struct Constant {
    value: f64,
}

pub fn constant(value: f64) -> Result<Constant> {
    if !value.is_finite() {
        return Err(Error::param("c", format!("must be finite, got {value}")));
    }
    Ok(Constant { value })
}

impl Constant {
    pub fn value(&self) -> f64 {
        self.value
    }
}

impl Denoiser for Constant {
    fn name(&self) -> String {
        "constant".into()
    }
    fn denoise(&self, y: &Image) -> Result<Image> {
        Ok(Image::filled(y.width(), y.height(), self.value))
    }
    fn analytic_divergence(&self, _y: &Image) -> Option<f64> {
        Some(0.0)
    }
}

/// `h(y) = alpha · y`; the scalar shrinkage family.
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    alpha: f64,
}

pub fn scale(alpha: f64) -> Result<Scale> {
    if !alpha.is_finite() {
        return Err(Error::param("alpha", format!("must be finite, got {alpha}")));
    }
    Ok(Scale { alpha })
}

impl Denoiser for Scale {
    fn name(&self) -> String {
        format!("scale({})", self.alpha)
    }
    fn denoise(&self, y: &Image) -> Result<Image> {
        Ok(y.map(|v| self.alpha * v))
    }
    fn analytic_divergence(&self, _y: &Image) -> Option<f64> {
        Some(self.alpha)
    }
}

/// Odd-sized square convolution kernel, row-major taps.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    size: usize,
    taps: Vec<f64>,
}

impl ConvKernel {
    pub fn new(size: usize, taps: Vec<f64>) -> Result<Self> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::param("kernel size", format!("must be odd, got {size}")));
        }
        if taps.len() != size * size {
            return Err(Error::param(
                "kernel taps",
                format!("expected {} taps, got {}", size * size, taps.len()),
            ));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::param("kernel taps", "all taps must be finite"));
        }
        Ok(Self { size, taps })
    }

    /// Uniform `size × size` average.
    pub fn box_filter(size: usize) -> Result<Self> {
        let w = 1.0 / (size * size) as f64;
        Self::new(size, vec![w; size * size])
    }

    /// Truncated Gaussian, normalized to unit sum.
    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
        }
        let half = (size / 2) as f64;
        let mut taps: Vec<f64> = (0..size * size)
            .map(|k| {
                let dr = (k / size) as f64 - half;
                let dc = (k % size) as f64 - half;
                (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= total);
        Self::new(size, taps)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn tap(&self, row: usize, col: usize) -> f64 {
        self.taps[row * self.size + col]
    }

    pub fn center(&self) -> f64 {
        let h = self.size / 2;
        self.tap(h, h)
    }
}

/// Circular (wrap-around) convolution with a fixed kernel.
#[derive(Debug, Clone)]
pub struct ConvFilter {
    kernel: ConvKernel,
    label: String,
}

pub fn conv_filter(kernel: ConvKernel) -> ConvFilter {
    let label = format!("conv{}x{}", kernel.size(), kernel.size());
    ConvFilter { kernel, label }
}

/// The 3×3 box filter used throughout the test suites.
pub fn box3() -> ConvFilter {
    let mut f = conv_filter(ConvKernel::box_filter(3).expect("3 is odd"));
    f.label = "box3".into();
    f
}

impl ConvFilter {
    pub fn kernel(&self) -> &ConvKernel {
        &self.kernel
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.label = name.into();
        self
    }
}

impl Denoiser for ConvFilter {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn denoise(&self, y: &Image) -> Result<Image> {
        let k = self.kernel.size();
        let (w, h) = y.dims();
        if k > w || k > h {
            return Err(Error::param(
                "kernel",
                format!("{k}x{k} kernel larger than {w}x{h} image"),
            ));
        }
        let half = k / 2;
        let src = y.data();
        let mut out = vec![0.0; w * h];
        // out[r, c] = Σ_{i,j} k[i, j] · y[r − (i − half), c − (j − half)] (mod dims)
        for i in 0..k {
            let dr = (h + half - i) % h;
            for j in 0..k {
                let t = self.kernel.tap(i, j);
                if t == 0.0 {
                    continue;
                }
                let dc = (w + half - j) % w;
                for r in 0..h {
                    let sr = (r + dr) % h;
                    let row_out = &mut out[r * w..(r + 1) * w];
                    let row_in = &src[sr * w..(sr + 1) * w];
                    // Split the wrap to keep the inner loops branch-free.
                    let split = w - dc;
                    for (o, s) in row_out[..split].iter_mut().zip(&row_in[dc..]) {
                        *o += t * s;
                    }
                    for (o, s) in row_out[split..].iter_mut().zip(&row_in[..dc]) {
                        *o += t * s;
                    }
                }
            }
        }
        Ok(Image::from_vec_unchecked(w, h, out))
    }

    /// The Jacobian is circulant, so every diagonal entry equals the center tap.
    fn analytic_divergence(&self, _y: &Image) -> Option<f64> {
        Some(self.kernel.center())
    }
}

/// Pixelwise soft threshold `sign(y)·max(|y| − tau, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct SoftThreshold {
    tau: f64,
}

pub fn soft_threshold(tau: f64) -> Result<SoftThreshold> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::param("tau", format!("must be finite and >= 0, got {tau}")));
    }
    Ok(SoftThreshold { tau })
}

impl SoftThreshold {
    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Denoiser for SoftThreshold {
    fn name(&self) -> String {
        "soft_threshold".into()
    }

    fn denoise(&self, y: &Image) -> Result<Image> {
        let tau = self.tau;
        if tau == 0.0 {
            return Ok(y.clone());
        }
        Ok(y.map(|v| v.signum() * (v.abs() - tau).max(0.0)))
    }

    fn analytic_divergence(&self, y: &Image) -> Option<f64> {
        let active = y.data().iter().filter(|v| v.abs() > self.tau).count();
        Some(active as f64 / y.len() as f64)
    }
}
