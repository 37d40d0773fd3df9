// Poisson denoising without clean data: trains with ePURE on pairs of
// photon-count observations, then checks PURE against the true MSE.
//
// cargo run --release --example epure_poisson

use surekit::data::{extract_patches, phantom_generate, PhantomSpec};
use surekit::net::{mean_psnr, train, LossKind, NetConfig, NetDenoiser, TrainConfig};
use surekit::noise::{poisson_corrupt, NoiseSpec};
use surekit::risk::{mse, pure_single};
use surekit::{Denoiser, Image, SeededStream};

fn run_example() -> surekit::Result<()> {
    let peak = 255.0;
    let spec = PhantomSpec { size: 32, seed: 20, ..PhantomSpec::default() };
    let base = phantom_generate(&spec, 4)?;
    let patches = extract_patches(&base, 16, 8, Some(24), &SeededStream::new(20, 1))?;
    let mut tc = TrainConfig::new(LossKind::Epure, 4);
    tc.seed = 2;
    let net = NetConfig { depth: 3, channels: 8, ..NetConfig::default() };
    let (params, _) = train(&net, &tc, &patches, &NoiseSpec::PoissonPair { peak }, None)?;

    let x = phantom_generate(&PhantomSpec { seed: 21, ..spec }, 1)?.images.remove(0);
    let y = poisson_corrupt(&x, peak, &SeededStream::new(21, 0))?;
    let h = NetDenoiser::new(&params)?;
    let estimate = pure_single(&y, &h, peak, 1e-3, &SeededStream::new(21, 1))?;
    let truth = mse(&x, &h.denoise(&y)?)?;
    println!("PURE {:.3e} vs true MSE {:.3e}", estimate.total, truth.total);
    let pairs: Vec<(Image, Image)> = vec![(x.clone(), y.clone())];
    println!(
        "noisy PSNR {:.2} dB, denoised PSNR {:.2} dB",
        surekit::metrics::psnr(&x, &y, 1.0)?,
        mean_psnr(&params, &pairs)?
    );
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
