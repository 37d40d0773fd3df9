// Scalar denoisers h(y) = a*y: the Noise2Noise loss and the true MSE are
// minimized by the same a.
//
// cargo run --example n2n_argmin

use surekit::data::{phantom_generate, PhantomSpec};
use surekit::denoiser::{scale, Denoiser};
use surekit::noise::awgn_pair_independent;
use surekit::risk::{mse, n2n_loss};
use surekit::SeededStream;

fn run_example() -> surekit::Result<()> {
    let x = phantom_generate(&PhantomSpec { size: 32, ..PhantomSpec::default() }, 1)?
        .images
        .remove(0);
    let sigma = 50.0 / 255.0;
    let root = SeededStream::from_seed(5);
    let pairs = (0..200)
        .map(|d| awgn_pair_independent(&x, sigma, &root.child(d)))
        .collect::<surekit::Result<Vec<_>>>()?;
    let grid: Vec<f64> = (50..=100).map(|k| k as f64 / 100.0).collect();
    let mut best = [(f64::INFINITY, 0.0); 2];
    for &a in &grid {
        let h = scale(a)?;
        let (mut n2n, mut truth) = (0.0, 0.0);
        for (y, z) in &pairs {
            let h_y = h.denoise(y)?;
            n2n += n2n_loss(z, &h_y)?.total;
            truth += mse(&x, &h_y)?.total;
        }
        for (slot, v) in best.iter_mut().zip([n2n, truth]) {
            if v < slot.0 {
                *slot = (v, a);
            }
        }
    }
    println!("n2n argmin a = {:.2}, true-MSE argmin a = {:.2}", best[0].1, best[1].1);
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
