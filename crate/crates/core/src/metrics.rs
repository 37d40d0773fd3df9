//! PSNR and SSIM.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::stats::squared_distance;

/// SSIM window side.
pub const SSIM_WINDOW: usize = 11;
/// SSIM Gaussian window standard deviation.
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityScore {
    /// `+inf` for identical images.
    pub psnr_db: f64,
    pub ssim: f64,
}

pub fn quality(reference: &Image, test: &Image, peak: f64) -> Result<QualityScore> {
    Ok(QualityScore {
        psnr_db: psnr(reference, test, peak)?,
        ssim: ssim(reference, test, peak)?,
    })
}

/// `10·log10(peak² / mse)`, or `f64::INFINITY` when the images are identical.
pub fn psnr(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    reference.check_same_dims(test)?;
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::param("peak", format!("must be > 0, got {peak}")));
    }
    let mse = squared_distance(reference.data(), test.data()) / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable weighted filter over every fully contained window ("valid" mode).
fn filter_valid(data: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        let src = &data[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = g.iter().zip(&src[c..c + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..k).map(|i| g[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all valid 11×11 Gaussian windows (σ = 1.5) with
/// `C1 = (0.01·peak)²`, `C2 = (0.03·peak)²`.
pub fn ssim(reference: &Image, test: &Image, peak: f64) -> Result<f64> {
    reference.check_same_dims(test)?;
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::param("peak", format!("must be > 0, got {peak}")));
    }
    let (w, h) = reference.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidImage(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let g = gaussian_window();
    let x = reference.data();
    let y = test.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(x, w, h, &g);
    let mu_y = filter_valid(y, w, h, &g);
    let e_xx = filter_valid(&xx, w, h, &g);
    let e_yy = filter_valid(&yy, w, h, &g);
    let e_xy = filter_valid(&xy, w, h, &g);

    let local: Vec<f64> = (0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = e_xx[i] - mx * mx;
            let var_y = e_yy[i] - my * my;
            let cov = e_xy[i] - mx * my;
            let num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
            let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
            num / den
        })
        .collect();
    Ok(crate::stats::mean(&local))
}
