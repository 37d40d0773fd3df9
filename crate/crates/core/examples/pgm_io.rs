// Writes a phantom as 8- and 16-bit graymaps and reads it back.
//
// cargo run --example pgm_io

use surekit::data::{payload_sha256, pgm_read, pgm_write, phantom_generate, PhantomSpec};

fn run_example() -> surekit::Result<()> {
    let dir = std::env::temp_dir().join(format!("surekit-pgm-{}", std::process::id()));
    let io = |source| surekit::Error::Io { path: dir.clone(), source };
    std::fs::create_dir_all(&dir).map_err(io)?;
    let x = phantom_generate(&PhantomSpec { size: 32, ..PhantomSpec::default() }, 1)?
        .images
        .remove(0);
    for depth in [8u8, 16] {
        let path = dir.join(format!("phantom_{depth}.pgm"));
        pgm_write(&x, &path, depth)?;
        let back = pgm_read(&path)?;
        let worst = x
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!(
            "{depth}-bit: max quantization error {worst:.2e}, payload sha256 {}",
            payload_sha256(&back, depth)?
        );
    }
    std::fs::remove_dir_all(&dir).map_err(io)?;
    Ok(())
}

fn main() -> surekit::Result<()> {
    run_example()
}
