//! Property tests over randomly generated images, parameters and estimator inputs.

use proptest::prelude::*;
use surekit::data::{pgm_decode, pgm_encode};
use surekit::denoiser::{box3, conv_filter, identity, scale, ConvKernel};
use surekit::net::io::{params_from_bytes, params_to_bytes};
use surekit::net::{net_init, NetConfig};
use surekit::report::sig9;
use surekit::risk::{epure_pair, esure, mc_divergence_samples, mse, n2n_loss, pure_single, sure_analytic, DivergenceEstimate, Probe};
use surekit::{Denoiser, Image, SeededStream};

fn image(max_side: usize) -> impl Strategy<Value = Image> {
    (3..=max_side, 3..=max_side).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..1.0, w * h).prop_map(move |d| Image::new(w, h, d).unwrap())
    })
}

fn image_pair(side: usize) -> impl Strategy<Value = (Image, Image)> {
    (
        prop::collection::vec(0.0f64..1.0, side * side),
        prop::collection::vec(0.0f64..1.0, side * side),
    )
        .prop_map(move |(a, b)| (Image::new(side, side, a).unwrap(), Image::new(side, side, b).unwrap()))
}

/// Brute-force circular convolution with the kernel `taps` (row-major, odd size).
fn brute_filter(x: &Image, size: usize, taps: &[f64]) -> Image {
    let half = size / 2;
    let (w, h) = x.dims();
    Image::from_fn(w, h, |row, col| {
        let mut acc = 0.0;
        for i in 0..size {
            for j in 0..size {
                let rr = (row + h * size + half - i) % h;
                let cc = (col + w * size + half - j) % w;
                acc += taps[i * size + j] * x.get(rr, cc);
            }
        }
        acc
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn risk_total_is_sum_of_terms(
        (y, h) in image_pair(8),
        sigma in 0.0f64..0.5,
        div in -1.0f64..2.0,
    ) {
        let r = sure_analytic(&y, &h, &DivergenceEstimate::analytic(div), sigma).unwrap();
        prop_assert_eq!(r.total, r.fidelity_term + r.constant_term + r.divergence_term);
        prop_assert_eq!(r.constant_term, -sigma * sigma);
    }

    #[test]
    fn esure_on_equal_inputs_is_sure(
        (y, h) in image_pair(6),
        sigma in 0.0f64..0.5,
        div in 0.0f64..1.0,
    ) {
        let d = DivergenceEstimate::analytic(div);
        prop_assert_eq!(esure(&y, &y, &h, &d, sigma).unwrap(), sure_analytic(&y, &h, &d, sigma).unwrap());
    }

    #[test]
    fn n2n_is_the_mse_functional((a, b) in image_pair(7)) {
        prop_assert_eq!(n2n_loss(&a, &b).unwrap(), mse(&a, &b).unwrap());
    }

    #[test]
    fn pure_is_epure_on_a_repeated_observation(y in image(8), peak in 1.0f64..500.0, seed in any::<u64>()) {
        let s = SeededStream::from_seed(seed);
        let h = box3();
        prop_assert_eq!(
            pure_single(&y, &h, peak, 1e-3, &s).unwrap(),
            epure_pair(&y, &y, &h, peak, 1e-3, &s).unwrap()
        );
    }

    #[test]
    fn identity_sure_is_sigma_squared(y in image(8), sigma in 0.0f64..0.5) {
        let id = identity();
        let r = sure_analytic(&y, &y, &DivergenceEstimate::of(&id, &y).unwrap(), sigma).unwrap();
        prop_assert!((r.total - sigma * sigma).abs() <= 1e-15);
    }

    #[test]
    fn linear_filters_have_epsilon_invariant_probe_divergence(
        y in image(10),
        alpha in 0.05f64..2.0,
        seed in any::<u64>(),
    ) {
        let s = SeededStream::from_seed(seed);
        let hs: [Box<dyn Denoiser>; 3] = [Box::new(box3()), Box::new(scale(alpha).unwrap()), Box::new(identity())];
        for h in hs {
            let h_y = h.denoise(&y).unwrap();
            let at = |eps: f64| mc_divergence_samples(&h, &y, &h_y, eps, &s, 3, Probe::Gaussian).unwrap();
            let (a, b, c) = (at(1e-2), at(1e-3), at(1e-4));
            for i in 0..3 {
                prop_assert!((a[i] - b[i]).abs() <= 1e-6 && (b[i] - c[i]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn conv_filter_is_linear_and_matches_brute_force(
        (a, b) in image_pair(9),
        taps in prop::collection::vec(-1.0f64..1.0, 9),
        alpha in -2.0f64..2.0,
    ) {
        let f = conv_filter(ConvKernel::new(3, taps.clone()).unwrap());
        let fa = f.denoise(&a).unwrap();
        let brute = brute_filter(&a, 3, &taps);
        for (u, v) in fa.data().iter().zip(brute.data()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
        let combo = a.zip_map(&b, |p, q| alpha * p + q).unwrap();
        let lhs = f.denoise(&combo).unwrap();
        let rhs = fa.zip_map(&f.denoise(&b).unwrap(), |p, q| alpha * p + q).unwrap();
        for (u, v) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((u - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn pgm_round_trip_is_bit_exact(img in image(12), sixteen in any::<bool>()) {
        let depth = if sixteen { 16 } else { 8 };
        let bytes = pgm_encode(&img, depth).unwrap();
        let (decoded, info) = pgm_decode(&bytes).unwrap();
        prop_assert_eq!((info.width, info.height), img.dims());
        prop_assert_eq!(pgm_encode(&decoded, depth).unwrap(), bytes);
        let step = 0.5 / f64::from(info.maxval);
        for (a, b) in img.data().iter().zip(decoded.data()) {
            prop_assert!((a - b).abs() <= step + 1e-12);
        }
    }

    #[test]
    fn weight_file_round_trip_is_bit_exact(
        depth in 2usize..5,
        channels in 1usize..5,
        seed in any::<u64>(),
        residual in any::<bool>(),
    ) {
        let config = NetConfig { depth, channels, kernel: 3, residual };
        let p = net_init(&config, seed).unwrap();
        let bytes = params_to_bytes(&p).unwrap();
        let q = params_from_bytes(&bytes, residual).unwrap();
        prop_assert_eq!(&p.layers, &q.layers);
        prop_assert_eq!(params_to_bytes(&q).unwrap(), bytes);
    }

    #[test]
    fn sig9_round_trips_to_nine_digits(v in prop::num::f64::NORMAL) {
        let s = sig9(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!(((back - v) / v).abs() <= 5e-9, "{} -> {}", v, s);
        prop_assert_eq!(sig9(back), s);
    }
}
