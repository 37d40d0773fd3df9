// Corrupts a phantom with each noise model and prints the empirical noise
// statistics next to their expected values.
//
// cargo run --example noise_models

use surekit::data::{phantom_generate, PhantomSpec};
use surekit::noise::{corrupt, NoiseSpec, Observation};
use surekit::stats::{mean, sample_covariance, sample_variance};
use surekit::{Image, SeededStream};

fn residual(y: &Image, x: &Image) -> Vec<f64> {
    y.data().iter().zip(x.data()).map(|(a, b)| a - b).collect()
}

fn run_example() -> surekit::Result<()> {
    let x = phantom_generate(&PhantomSpec::default(), 1)?.images.remove(0);
    let stream = SeededStream::from_seed(42);
    let sigma = 25.0 / 255.0;
    let peak = 255.0;
    let specs = [
        NoiseSpec::Gaussian { sigma },
        NoiseSpec::GaussianPair { sigma1: sigma, sigma_z: sigma / 2.0 },
        NoiseSpec::GaussianIndependentPair { sigma },
        NoiseSpec::Poisson { peak },
        NoiseSpec::PoissonPair { peak },
    ];
    for (i, spec) in specs.iter().enumerate() {
        match corrupt(&x, spec, &stream.child(i as u64))? {
            Observation::Single(y) => {
                let n = residual(&y, &x);
                let expected = match spec {
                    NoiseSpec::Poisson { peak } => x.mean() / peak,
                    _ => sigma * sigma,
                };
                println!(
                    "{spec}: mean residual {:+.5}, variance {:.3e} (expected {expected:.3e})",
                    mean(&n),
                    sample_variance(&n)
                );
            }
            Observation::Pair(y1, y2) => {
                let (n1, n2) = (residual(&y1, &x), residual(&y2, &x));
                println!(
                    "{spec}: var y1 {:.3e}, var y2 {:.3e}, cov {:.3e}",
                    sample_variance(&n1),
                    sample_variance(&n2),
                    sample_covariance(&n1, &n2)
                );
            }
            Observation::PoissonPair(_, _, z) => {
                let n = residual(&z, &x);
                println!(
                    "{spec}: average has variance {:.3e} (expected {:.3e})",
                    sample_variance(&n),
                    x.mean() / (2.0 * peak)
                );
            }
        }
    }
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
