// Runs a small unbiasedness study: every estimator against the true MSE of a
// 3x3 box filter, reported in combined standard errors.
//
// cargo run --release --example sure_unbiasedness

use surekit::data::{phantom_generate, PhantomSpec};
use surekit::denoiser::box3;
use surekit::noise::NoiseSpec;
use surekit::risk::Probe;
use surekit::study::{reports_to_csv, unbiasedness_study, Estimator};
use surekit::SeededStream;

fn run_example() -> surekit::Result<()> {
    let x = phantom_generate(&PhantomSpec { size: 32, ..PhantomSpec::default() }, 1)?
        .images
        .remove(0);
    let sigma = 25.0 / 255.0;
    let half = sigma / std::f64::consts::SQRT_2;
    let probe = Probe::Rademacher;
    let cases = [
        (Estimator::Sure, NoiseSpec::Gaussian { sigma }),
        (Estimator::McSure { epsilon: 1e-3 }, NoiseSpec::Gaussian { sigma }),
        (Estimator::Esure, NoiseSpec::GaussianPair { sigma1: half, sigma_z: half }),
        (Estimator::EsureMc { epsilon: 1e-3 }, NoiseSpec::GaussianPair { sigma1: half, sigma_z: half }),
        (Estimator::Pure { epsilon: 1e-3, probe }, NoiseSpec::Poisson { peak: 255.0 }),
        (Estimator::Epure { epsilon: 1e-3, probe }, NoiseSpec::PoissonPair { peak: 255.0 }),
    ];
    let root = SeededStream::from_seed(1);
    let mut reports = Vec::new();
    for (i, (estimator, noise)) in cases.iter().enumerate() {
        reports.push(unbiasedness_study(estimator, &box3(), &x, noise, 300, &root.child(i as u64))?);
    }
    print!("{}", reports_to_csv(&reports));
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
