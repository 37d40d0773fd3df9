// PSNR and SSIM on a few hand-checkable image pairs.
//
// cargo run --example metrics

use surekit::metrics::{psnr, ssim};
use surekit::Image;

fn run_example() -> surekit::Result<()> {
    let a = Image::filled(16, 16, 0.5);
    let b = Image::filled(16, 16, 0.6);
    println!("psnr(0.5, 0.6) = {:.4} dB", psnr(&a, &b, 1.0)?);
    println!("psnr(0.5, 0.55) = {:.4} dB", psnr(&a, &Image::filled(16, 16, 0.55), 1.0)?);
    println!("psnr(x, x) = {}", psnr(&a, &a, 1.0)?);
    let checker = Image::from_fn(16, 16, |r, c| ((r / 2 + c / 2) % 2) as f64);
    println!("ssim(x, x) = {}", ssim(&checker, &checker, 1.0)?);
    println!("ssim(x, 1 - x) = {:.4}", ssim(&checker, &checker.map(|v| 1.0 - v), 1.0)?);
    println!("ssim(0.4, 0.6) = {:.6}", ssim(&Image::filled(16, 16, 0.4), &b, 1.0)?);
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
