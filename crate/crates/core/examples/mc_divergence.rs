// Monte-Carlo divergence against the closed form for the reference
// denoisers, at three perturbation sizes.
//
// cargo run --example mc_divergence

use surekit::denoiser::{box3, constant, identity, soft_threshold};
use surekit::noise::awgn_corrupt;
use surekit::risk::mc_divergence;
use surekit::{Denoiser, Image, SeededStream};

fn run_example() -> surekit::Result<()> {
    let x = Image::from_fn(48, 48, |r, c| if (r / 12 + c / 12) % 2 == 0 { 0.2 } else { 0.7 });
    let y = awgn_corrupt(&x, 0.1, &SeededStream::from_seed(3))?;
    let denoisers: Vec<Box<dyn Denoiser>> = vec![
        Box::new(identity()),
        Box::new(constant(0.5)?),
        Box::new(box3()),
        Box::new(soft_threshold(0.3)?),
    ];
    for h in &denoisers {
        let analytic = h.analytic_divergence(&y).unwrap_or(f64::NAN);
        print!("{:>16}: analytic {analytic:.5}", h.name());
        for eps in [1e-2, 1e-3, 1e-4] {
            let d = mc_divergence(h, &y, eps, &SeededStream::from_seed(4), 50)?;
            print!(", eps {eps:.0e} -> {:.5}", d.value);
        }
        println!();
    }
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
