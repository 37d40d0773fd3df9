use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use surekit::cli::{self, Command, RunConfig};

/// Risk-estimator workbench: gen-data, corrupt, train, denoise, eval, validate.
#[derive(Parser)]
#[command(name = "surekit", version)]
struct Args {
    /// One of: gen-data, corrupt, train, denoise, eval, validate.
    command: String,
    /// key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the `out` key.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn load(args: &Args) -> surekit::Result<(Command, RunConfig)> {
    let command = args.command.parse()?;
    let mut cfg = match &args.config {
        Some(path) => RunConfig::read(path)?,
        None => RunConfig::default(),
    };
    for pair in &args.set {
        cfg.apply_override(pair)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &args.out {
        cfg.set("out", &out.to_string_lossy())?;
    }
    Ok((command, cfg))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = load(&args).and_then(|(command, cfg)| cli::run(command, &cfg));
    match result {
        Ok(outcome) => {
            for path in &outcome.written {
                println!("{}", path.display());
            }
            for reason in &outcome.skipped {
                eprintln!("skipped: {reason}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
