//! Batch workbench behind the `surekit` binary.
//!
//! Every command reads a [`RunConfig`], writes its outputs under the `out`
//! directory and is deterministic given the configuration. Exit codes: 0
//! success, 1 configuration error (or skipped validation cells), 2 data
//! error, 3 numerical failure.

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::data::{self, Dataset, Manifest, ManifestEntry, Split};
use crate::denoiser::{box3, constant, identity, soft_threshold, Denoiser};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics;
use crate::net::{self, NetDenoiser};
use crate::noise::{self, NoiseSpec, Observation};
use crate::report::{sig9, CsvWriter};
use crate::rng::SeededStream;
use crate::study::{self, Estimator, StudyReport};

pub use config::RunConfig;

/// Graymap depth for everything except generated phantoms.
const OUTPUT_BIT_DEPTH: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenData,
    Corrupt,
    Train,
    Denoise,
    Eval,
    Validate,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::GenData,
        Command::Corrupt,
        Command::Train,
        Command::Denoise,
        Command::Eval,
        Command::Validate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Corrupt => "corrupt",
            Command::Train => "train",
            Command::Denoise => "denoise",
            Command::Eval => "eval",
            Command::Validate => "validate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

/// What a command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Files written, in order.
    pub written: Vec<PathBuf>,
    /// Validation cells that could not run, with the reason.
    pub skipped: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.skipped.is_empty() {
            0
        } else {
            1
        }
    }
}

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } | Error::Incompatible(_) => 1,
        Error::NonFinite(_) | Error::NonFiniteLoss { .. } => 3,
        Error::DimensionMismatch { .. }
        | Error::InvalidImage(_)
        | Error::Shape(_)
        | Error::Format(_)
        | Error::Unsupported(_)
        | Error::Io { .. } => 2,
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        Command::GenData => gen_data(cfg),
        Command::Corrupt => corrupt(cfg),
        Command::Train => train(cfg),
        Command::Denoise => denoise(cfg),
        Command::Eval => eval(cfg),
        Command::Validate => validate(cfg),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: PathBuf, text: &str, out: &mut Outcome) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    out.written.push(path);
    Ok(())
}

fn file_stem(entry: &ManifestEntry) -> String {
    Path::new(&entry.path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.path.clone())
}

fn file_name(entry: &ManifestEntry) -> String {
    Path::new(&entry.path)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| entry.path.clone())
}

fn selected<'m>(cfg: &RunConfig, manifest: &'m Manifest) -> Result<Vec<(usize, &'m ManifestEntry)>> {
    let want = match cfg.text("data.split")?.as_str() {
        "all" => None,
        s => Some(s.parse::<Split>().map_err(|_| Error::Config(format!("data.split: unknown split `{s}`")))?),
    };
    Ok(manifest
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| want.is_none_or(|s| e.split == s))
        .collect())
}

/// Phantoms plus `manifest.csv`. With `data.test_fraction > 0` a seeded
/// shuffle tags `round(n · fraction)` images as test.
fn gen_data(cfg: &RunConfig) -> Result<Outcome> {
    let spec = cfg.phantom_spec()?;
    let count = cfg.usize("data.count")?;
    if count == 0 {
        return Err(Error::Config("data.count: must be >= 1".into()));
    }
    let fraction = cfg.real("data.test_fraction")?;
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("data.test_fraction: must lie in [0, 1), got {fraction}")));
    }
    let depth = cfg.bit_depth()?;
    let dir = cfg.out_dir()?;
    create_dir(&dir)?;

    let ds = data::phantom_generate(&spec, count)?;
    let mut splits = vec![Split::Train; count];
    let n_test = (count as f64 * fraction).round() as usize;
    if fraction > 0.0 {
        if n_test == 0 || n_test == count {
            return Err(Error::Config(format!(
                "data.test_fraction: {fraction} of {count} images leaves one side empty"
            )));
        }
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut SeededStream::new(spec.seed, 1).rng());
        for &i in &order[..n_test] {
            splits[i] = Split::Test;
        }
    }

    let mut out = Outcome::default();
    let mut manifest = Manifest::default();
    for (i, (img, split)) in ds.images.iter().zip(splits).enumerate() {
        let rel = format!("images/phantom_{i:04}.pgm");
        manifest.entries.push(data::write_entry(&dir, &rel, img, split, depth)?);
        out.written.push(dir.join(rel));
    }
    write_text(dir.join("manifest.csv"), &manifest.to_csv(), &mut out)?;
    Ok(out)
}

/// Noisy copies of the selected manifest images; image `i` of the manifest
/// uses stream `(seed).child(i)`. Pairs write `_y1` / `_y2` files.
fn corrupt(cfg: &RunConfig) -> Result<Outcome> {
    let manifest_path = cfg.path("data.manifest")?;
    let manifest = Manifest::read(&manifest_path)?;
    let noise = cfg.noise()?;
    let root = SeededStream::from_seed(cfg.seed()?);
    let dir = cfg.out_dir()?;
    create_dir(&dir)?;

    let mut out = Outcome::default();
    let mut noisy = Manifest::default();
    for (i, entry) in selected(cfg, &manifest)? {
        let x = data::load_entries(&manifest_path, &[entry])?.remove(0);
        let stem = file_stem(entry);
        let mut put = |suffix: &str, img: &Image| -> Result<()> {
            let rel = format!("noisy/{stem}{suffix}.pgm");
            noisy
                .entries
                .push(data::write_entry(&dir, &rel, img, entry.split, OUTPUT_BIT_DEPTH)?);
            out.written.push(dir.join(rel));
            Ok(())
        };
        match noise::corrupt(&x, &noise, &root.child(i as u64))? {
            Observation::Single(y) => put("", &y)?,
            Observation::Pair(y1, y2) | Observation::PoissonPair(y1, y2, _) => {
                put("_y1", &y1)?;
                put("_y2", &y2)?;
            }
        }
    }
    write_text(dir.join("noisy_manifest.csv"), &noisy.to_csv(), &mut out)?;
    Ok(out)
}

fn load_split(manifest_path: &Path, manifest: &Manifest, split: Split) -> Result<Option<Dataset>> {
    let entries = manifest.filter(split);
    if entries.is_empty() {
        return Ok(None);
    }
    let images = data::load_entries(manifest_path, &entries)?;
    Dataset::new(images, split, manifest_path.display().to_string()).map(Some)
}

/// Trains on the clean train split of `data.manifest` (corrupted on the fly);
/// the test split, when present, provides validation PSNR.
fn train(cfg: &RunConfig) -> Result<Outcome> {
    let manifest_path = cfg.path("data.manifest")?;
    let noise = cfg.noise()?;
    let net_cfg = cfg.net()?;
    let tc = cfg.train()?;
    tc.loss
        .check_noise(&noise)
        .map_err(|e| Error::Config(e.to_string()))?;
    let manifest = Manifest::read(&manifest_path)?;
    let mut train_set = load_split(&manifest_path, &manifest, Split::Train)?
        .ok_or_else(|| Error::Format(format!("{}: no train images", manifest_path.display())))?;
    let validation = load_split(&manifest_path, &manifest, Split::Test)?;

    let patch = cfg.usize("data.patch_size")?;
    if patch > 0 {
        let limit = match cfg.usize("data.patch_limit")? {
            0 => None,
            n => Some(n),
        };
        let stride = cfg.usize("data.patch_stride")?;
        let stream = SeededStream::new(tc.seed, 2);
        train_set = data::extract_patches(&train_set, patch, stride, limit, &stream)?;
    }

    let dir = cfg.out_dir()?;
    create_dir(&dir)?;
    let (params, log) = net::train(&net_cfg, &tc, &train_set, &noise, validation.as_ref())?;
    let mut out = Outcome::default();
    let weights = dir.join("weights.rdnw");
    net::save_params(&params, &weights)?;
    out.written.push(weights);
    write_text(dir.join("train_log.csv"), &log.to_csv(), &mut out)?;
    Ok(out)
}

/// Applies `net.weights` (default `<out>/weights.rdnw`) to every manifest image.
fn denoise(cfg: &RunConfig) -> Result<Outcome> {
    let manifest_path = cfg.path("data.manifest")?;
    let net_cfg = cfg.net()?;
    let dir = cfg.out_dir()?;
    let weights = if cfg.is_set("net.weights") {
        cfg.path("net.weights")?
    } else {
        dir.join("weights.rdnw")
    };
    let params = net::load_params(&weights, &net_cfg)?;
    let h = NetDenoiser::new(&params)?;
    let manifest = Manifest::read(&manifest_path)?;
    create_dir(&dir)?;

    let mut out = Outcome::default();
    let mut result = Manifest::default();
    for (_, entry) in selected(cfg, &manifest)? {
        let y = data::load_entries(&manifest_path, &[entry])?.remove(0);
        let xhat = h.denoise(&y)?;
        let rel = format!("denoised/{}.pgm", file_stem(entry));
        result
            .entries
            .push(data::write_entry(&dir, &rel, &xhat, entry.split, OUTPUT_BIT_DEPTH)?);
        out.written.push(dir.join(rel));
    }
    write_text(dir.join("denoised_manifest.csv"), &result.to_csv(), &mut out)?;
    Ok(out)
}

pub const METRICS_HEADER: [&str; 3] = ["path", "psnr_db", "ssim"];
pub const SUMMARY_HEADER: [&str; 3] = ["noise_level", "psnr_db", "ssim"];

/// PSNR/SSIM of `eval.test` images against `eval.reference`, matched by file
/// name. Writes per-image `metrics.csv` (with a `MEAN` row) and `summary.csv`.
fn eval(cfg: &RunConfig) -> Result<Outcome> {
    let ref_path = cfg.path("eval.reference")?;
    let test_path = cfg.path("eval.test")?;
    let reference = Manifest::read(&ref_path)?;
    let test = Manifest::read(&test_path)?;
    let dir = cfg.out_dir()?;
    create_dir(&dir)?;

    let mut rows = CsvWriter::with_header(&METRICS_HEADER);
    let (mut psnrs, mut ssims) = (Vec::new(), Vec::new());
    for entry in &reference.entries {
        let name = file_name(entry);
        let other = test
            .entries
            .iter()
            .find(|e| file_name(e) == name)
            .ok_or_else(|| Error::Format(format!("{}: no test image named {name}", test_path.display())))?;
        let x = data::load_entries(&ref_path, &[entry])?.remove(0);
        let y = data::load_entries(&test_path, &[other])?.remove(0);
        let q = metrics::quality(&x, &y, 1.0)?;
        rows.row([entry.path.clone(), sig9(q.psnr_db), sig9(q.ssim)]);
        psnrs.push(q.psnr_db);
        ssims.push(q.ssim);
    }
    if psnrs.is_empty() {
        return Err(Error::Format(format!("{}: no reference images", ref_path.display())));
    }
    let (mp, ms) = (mean_allowing_inf(&psnrs), crate::stats::mean(&ssims));
    rows.row(["MEAN".to_string(), sig9(mp), sig9(ms)]);

    let label = if cfg.is_set("eval.label") {
        cfg.text("eval.label")?
    } else {
        cfg.noise()?.to_string()
    };
    let mut summary = CsvWriter::with_header(&SUMMARY_HEADER);
    summary.row([label, sig9(mp), sig9(ms)]);

    let mut out = Outcome::default();
    write_text(dir.join("metrics.csv"), rows.as_str(), &mut out)?;
    write_text(dir.join("summary.csv"), summary.as_str(), &mut out)?;
    Ok(out)
}

/// Mean that stays `inf` when any term is (identical images).
fn mean_allowing_inf(v: &[f64]) -> f64 {
    if v.iter().any(|x| x.is_infinite()) {
        f64::INFINITY
    } else {
        crate::stats::mean(v)
    }
}

/// Default study levels: σ ∈ {25, 50}/255 and T ∈ {0.5, 1}·255.
pub const GAUSSIAN_LEVELS: [f64; 2] = [25.0 / 255.0, 50.0 / 255.0];
pub const POISSON_PEAKS: [f64; 2] = [0.5 * 255.0, 255.0];
pub const VALIDATE_CONSTANT: f64 = 0.5;

/// The noise each estimator is studied under at level `level`. eSURE pairs
/// split the variance evenly, `sigma1 = sigma_z = sigma/√2`.
fn study_noise(estimator: &Estimator, level: f64) -> NoiseSpec {
    match estimator {
        Estimator::Sure | Estimator::McSure { .. } => NoiseSpec::Gaussian { sigma: level },
        Estimator::Esure | Estimator::EsureMc { .. } => {
            let s = level / std::f64::consts::SQRT_2;
            NoiseSpec::GaussianPair { sigma1: s, sigma_z: s }
        }
        Estimator::Pure { .. } => NoiseSpec::Poisson { peak: level },
        Estimator::Epure { .. } => NoiseSpec::PoissonPair { peak: level },
    }
}

fn make_denoiser(name: &str, sigma: f64) -> Result<Box<dyn Denoiser>> {
    Ok(match name {
        "identity" => Box::new(identity()),
        "constant" => Box::new(constant(VALIDATE_CONSTANT)?),
        "box3" => Box::new(box3()),
        "soft_threshold" => Box::new(soft_threshold(sigma)?),
        other => return Err(Error::Config(format!("validate.denoisers: unknown denoiser `{other}`"))),
    })
}

fn with_epsilon(e: Estimator, epsilon: f64) -> Estimator {
    match e {
        Estimator::McSure { .. } => Estimator::McSure { epsilon },
        Estimator::EsureMc { .. } => Estimator::EsureMc { epsilon },
        Estimator::Pure { probe, .. } => Estimator::Pure { epsilon, probe },
        Estimator::Epure { probe, .. } => Estimator::Epure { epsilon, probe },
        other => other,
    }
}

/// Runs the unbiasedness grid on one phantom and writes `validate.csv`.
///
/// Gaussian estimators run at [`GAUSSIAN_LEVELS`], Poisson estimators at
/// [`POISSON_PEAKS`]; the soft threshold is a Gaussian-only denoiser and is
/// not part of the Poisson grid. A requested estimator whose noise family is
/// excluded by `validate.noise` is skipped and flagged.
fn validate(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed()?;
    let draws = cfg.usize("validate.draws")?;
    let poisson_draws = cfg.usize("validate.poisson_draws")?;
    for (key, d) in [("validate.draws", draws), ("validate.poisson_draws", poisson_draws)] {
        if d < study::MIN_DRAWS {
            return Err(Error::Config(format!("{key}: must be >= {}, got {d}", study::MIN_DRAWS)));
        }
    }
    let (gaussian, poisson) = match cfg.text("validate.noise")?.as_str() {
        "both" => (true, true),
        "gaussian" => (true, false),
        "poisson" => (false, true),
        other => return Err(Error::Config(format!("validate.noise: unknown value `{other}`"))),
    };
    let epsilon = cfg.real("validate.epsilon")?;
    let estimators = cfg
        .list("validate.estimators")?
        .iter()
        .map(|s| {
            s.parse::<Estimator>()
                .map(|e| with_epsilon(e, epsilon))
                .map_err(|_| Error::Config(format!("validate.estimators: unknown estimator `{s}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let denoisers = cfg.list("validate.denoisers")?;
    for d in &denoisers {
        make_denoiser(d, 0.1)?;
    }

    let spec = data::PhantomSpec {
        size: cfg.usize("validate.size")?,
        seed,
        ..data::PhantomSpec::default()
    };
    if spec.size < data::MIN_PHANTOM_SIZE {
        return Err(Error::Config(format!(
            "validate.size: must be >= {}, got {}",
            data::MIN_PHANTOM_SIZE,
            spec.size
        )));
    }
    let x = data::phantom_generate(&spec, 1)?.images.remove(0);
    let root = SeededStream::new(seed, 3);

    let mut out = Outcome::default();
    let mut reports: Vec<StudyReport> = Vec::new();
    let mut cell: u64 = 0;
    for estimator in &estimators {
        let is_gaussian = study_noise(estimator, 1.0).is_gaussian();
        if (is_gaussian && !gaussian) || (!is_gaussian && !poisson) {
            let reason = format!(
                "{}: {} noise excluded by validate.noise",
                estimator.name(),
                if is_gaussian { "gaussian" } else { "poisson" }
            );
            log::warn!("skipped {reason}");
            out.skipped.push(reason);
            continue;
        }
        let (levels, n) = if is_gaussian {
            (GAUSSIAN_LEVELS, draws)
        } else {
            (POISSON_PEAKS, poisson_draws)
        };
        for level in levels {
            let noise = study_noise(estimator, level);
            for name in &denoisers {
                if !is_gaussian && name == "soft_threshold" {
                    continue;
                }
                let h = make_denoiser(name, level)?;
                let stream = root.child(cell);
                cell += 1;
                match study::unbiasedness_study(estimator, &h, &x, &noise, n, &stream) {
                    Ok(r) => reports.push(r),
                    Err(e @ Error::Incompatible(_)) => {
                        let reason = format!("{} x {name} x {noise}: {e}", estimator.name());
                        log::warn!("skipped {reason}");
                        out.skipped.push(reason);
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    let dir = cfg.out_dir()?;
    create_dir(&dir)?;
    write_text(dir.join("validate.csv"), &study::reports_to_csv(&reports), &mut out)?;
    Ok(out)
}
