//! Finite-difference gradient checks shared by the gradient tests and the
//! acceptance target.

use rand::Rng;
use rand_distr::StandardNormal;
use surekit::net::{loss_and_grad, make_sample, net_backward, net_forward, net_init, LossKind, NetConfig, NetParams, Tensor4};
use surekit::noise::NoiseSpec;
use surekit::risk::Probe;
use surekit::{Image, SeededStream};

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-3;

pub fn small_config() -> NetConfig {
    NetConfig {
        depth: 3,
        channels: 4,
        kernel: 3,
        residual: true,
    }
}

/// He-initialized weights with small random biases, so no layer is trivially zero.
pub fn small_net(seed: u64) -> NetParams {
    let mut p = net_init(&small_config(), seed).unwrap();
    let mut rng = SeededStream::new(seed, 77).rng();
    for layer in &mut p.layers {
        for b in &mut layer.bias {
            *b = 0.05 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    p
}

pub fn random_image(seed: u64, size: usize) -> Image {
    let mut rng = SeededStream::new(seed, 5).rng();
    Image::from_fn(size, size, |_, _| rng.random::<f64>())
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max relative error of `analytic` against central differences of `f`
/// with respect to every parameter.
pub fn check_params(params: &NetParams, analytic: &[f64], f: impl Fn(&NetParams) -> f64) -> f64 {
    assert_eq!(analytic.len(), params.param_count());
    let mut worst = 0.0f64;
    let mut p = params.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *p.flat_mut(i);
        *p.flat_mut(i) = orig + STEP;
        let plus = f(&p);
        *p.flat_mut(i) = orig - STEP;
        let minus = f(&p);
        *p.flat_mut(i) = orig;
        worst = worst.max(relative_error(a, (plus - minus) / (2.0 * STEP)));
    }
    worst
}

/// Worst relative errors `(parameters, input)` of `net_backward` for the
/// objective `Σ upstream ⊙ net(x)` on an 8×8 input.
pub fn layer_gradient_errors() -> (f64, f64) {
    let params = small_net(3);
    let x = random_image(4, 8);
    let input = Tensor4::from_images(std::slice::from_ref(&x)).unwrap();
    let upstream_img = random_image(6, 8).map(|v| v - 0.5);
    let upstream = Tensor4::from_images(std::slice::from_ref(&upstream_img)).unwrap();
    let objective = |p: &NetParams, inp: &Tensor4| -> f64 {
        let out = net_forward(p, inp).unwrap();
        out.data().iter().zip(upstream.data()).map(|(o, u)| o * u).sum()
    };
    let (grads, input_grad) = net_backward(&params, &input, &upstream).unwrap();
    let worst = check_params(&params, &grads.flat(), |p| objective(p, &input));

    let mut worst_input = 0.0f64;
    for i in 0..x.len() {
        let mut plus = input.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = input.clone();
        minus.data_mut()[i] -= STEP;
        let numeric = (objective(&params, &plus) - objective(&params, &minus)) / (2.0 * STEP);
        worst_input = worst_input.max(relative_error(input_grad.data()[i], numeric));
    }
    (worst, worst_input)
}

/// Worst relative parameter-gradient error of each loss, with probes frozen
/// by reusing one stream.
pub fn loss_gradient_errors() -> Vec<(LossKind, f64)> {
    let params = small_net(8);
    let sigma = 0.1;
    let cases: [(LossKind, NoiseSpec); 5] = [
        (LossKind::Mse, NoiseSpec::Gaussian { sigma }),
        (LossKind::N2n, NoiseSpec::GaussianIndependentPair { sigma }),
        (LossKind::McSure, NoiseSpec::Gaussian { sigma }),
        (
            LossKind::Esure,
            NoiseSpec::GaussianPair {
                sigma1: sigma,
                sigma_z: sigma,
            },
        ),
        (LossKind::Epure, NoiseSpec::PoissonPair { peak: 50.0 }),
    ];
    let clean: Vec<Image> = (0..2).map(|i| random_image(20 + i, 8)).collect();
    let probe_stream = SeededStream::new(9, 9);
    cases
        .iter()
        .map(|&(kind, noise)| {
            let samples: Vec<_> = clean
                .iter()
                .enumerate()
                .map(|(i, x)| make_sample(kind, x, &noise, &SeededStream::new(10, i as u64)).unwrap())
                .collect();
            let run = |p: &NetParams| loss_and_grad(p, &samples, kind, &noise, 1e-2, &probe_stream, Probe::Rademacher).unwrap();
            let (_, grads) = run(&params);
            (kind, check_params(&params, &grads.flat(), |p| run(p).0.total))
        })
        .collect()
}
