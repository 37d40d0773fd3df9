// Trains the small residual network with each Gaussian loss on a toy
// phantom set and reports held-out PSNR.
//
// cargo run --release --example train_denoiser

use surekit::data::{extract_patches, phantom_generate, PhantomSpec};
use surekit::net::{mean_psnr, train, LossKind, NetConfig, TrainConfig};
use surekit::noise::{awgn_corrupt, NoiseSpec};
use surekit::{Image, SeededStream};

fn run_example() -> surekit::Result<()> {
    let spec = PhantomSpec { size: 32, seed: 10, ..PhantomSpec::default() };
    let base = phantom_generate(&spec, 4)?;
    let patches = extract_patches(&base, 16, 8, Some(24), &SeededStream::new(10, 1))?;
    let held_out = phantom_generate(&PhantomSpec { seed: 11, ..spec }, 3)?;
    let sigma = 25.0 / 255.0;
    let pairs: Vec<(Image, Image)> = held_out
        .images
        .iter()
        .enumerate()
        .map(|(i, x)| Ok((x.clone(), awgn_corrupt(x, sigma, &SeededStream::new(11, i as u64))?)))
        .collect::<surekit::Result<_>>()?;
    let net = NetConfig { depth: 3, channels: 8, ..NetConfig::default() };
    let half = sigma / std::f64::consts::SQRT_2;
    let runs = [
        (LossKind::Mse, NoiseSpec::Gaussian { sigma }),
        (LossKind::McSure, NoiseSpec::Gaussian { sigma }),
        (LossKind::Esure, NoiseSpec::GaussianPair { sigma1: half, sigma_z: half }),
        (LossKind::N2n, NoiseSpec::GaussianIndependentPair { sigma }),
    ];
    for (kind, noise) in runs {
        let mut tc = TrainConfig::new(kind, 4);
        tc.seed = 1;
        let (params, log) = train(&net, &tc, &patches, &noise, None)?;
        let last = log.epochs.last().map_or(f64::NAN, |e| e.mean_loss);
        println!("{kind:>5}: final loss {last:.3e}, held-out PSNR {:.2} dB", mean_psnr(&params, &pairs)?);
    }
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
