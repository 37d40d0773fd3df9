//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Every
//! key must appear in [`SCHEMA`]; unknown keys are errors. Real values accept
//! a fraction `a/b`, so `noise.sigma = 25/255` works.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::data::{PhantomSpec, MIN_PHANTOM_SIZE};
use crate::error::{Error, Result};
use crate::net::{LossKind, LrSchedule, NetConfig, Optimizer, TrainConfig};
use crate::noise::NoiseSpec;
use crate::risk::Probe;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Real,
    Bool,
    Text,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Int => "a non-negative integer",
            Kind::Real => "a real number",
            Kind::Bool => "true or false",
            Kind::Text => "text",
        })
    }
}

/// `(key, kind, default)`; an empty default means "unset".
const SCHEMA: &[(&str, Kind, &str)] = &[
    ("seed", Kind::Int, "0"),
    ("out", Kind::Text, "out"),
    // phantoms
    ("data.count", Kind::Int, "20"),
    ("data.size", Kind::Int, "64"),
    ("data.ellipses_min", Kind::Int, "3"),
    ("data.ellipses_max", Kind::Int, "8"),
    ("data.intensity_min", Kind::Real, "0.1"),
    ("data.intensity_max", Kind::Real, "0.9"),
    ("data.test_fraction", Kind::Real, "0"),
    ("data.bit_depth", Kind::Int, "16"),
    // inputs
    ("data.manifest", Kind::Text, ""),
    ("data.split", Kind::Text, "all"),
    ("data.patch_size", Kind::Int, "0"),
    ("data.patch_stride", Kind::Int, "8"),
    ("data.patch_limit", Kind::Int, "0"),
    // noise
    ("noise.kind", Kind::Text, "gaussian"),
    ("noise.sigma", Kind::Real, "25/255"),
    ("noise.sigma1", Kind::Real, ""),
    ("noise.sigma_z", Kind::Real, ""),
    ("noise.peak", Kind::Real, ""),
    ("noise.lambda", Kind::Real, ""),
    // network
    ("net.depth", Kind::Int, "5"),
    ("net.channels", Kind::Int, "16"),
    ("net.kernel", Kind::Int, "3"),
    ("net.residual", Kind::Bool, "true"),
    ("net.weights", Kind::Text, ""),
    // training
    ("train.loss", Kind::Text, "mse"),
    ("train.epochs", Kind::Int, "40"),
    ("train.batch_size", Kind::Int, "4"),
    ("train.learning_rate", Kind::Real, "1e-3"),
    ("train.lr_drop_factor", Kind::Real, "0.1"),
    ("train.lr_drop_epoch", Kind::Int, ""),
    ("train.epsilon", Kind::Real, "1e-3"),
    ("train.optimizer", Kind::Text, "adam"),
    ("train.probe", Kind::Text, "rademacher"),
    // evaluation
    ("eval.reference", Kind::Text, ""),
    ("eval.test", Kind::Text, ""),
    ("eval.label", Kind::Text, ""),
    // estimator validation
    ("validate.noise", Kind::Text, "both"),
    ("validate.estimators", Kind::Text, "sure;mc_sure;esure;esure_mc;pure;epure"),
    ("validate.denoisers", Kind::Text, "identity;constant;box3;soft_threshold"),
    ("validate.draws", Kind::Int, "2000"),
    ("validate.poisson_draws", Kind::Int, "5000"),
    ("validate.size", Kind::Int, "64"),
    ("validate.epsilon", Kind::Real, "1e-3"),
];

fn schema(key: &str) -> Option<(Kind, &'static str)> {
    SCHEMA.iter().find(|(k, ..)| *k == key).map(|&(_, kind, d)| (kind, d))
}

/// Validated configuration values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn parse_real(key: &str, raw: &str) -> Result<f64> {
    let bad = || Error::Config(format!("{key}: `{raw}` is not a real number"));
    let v = match raw.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad())?;
            let b: f64 = b.trim().parse().map_err(|_| bad())?;
            a / b
        }
        None => raw.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

fn check_kind(key: &str, kind: Kind, raw: &str) -> Result<()> {
    let ok = match kind {
        Kind::Int => raw.parse::<u64>().is_ok(),
        Kind::Real => parse_real(key, raw).is_ok(),
        Kind::Bool => matches!(raw, "true" | "false"),
        Kind::Text => !raw.contains(','),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: `{raw}` is not {kind}")))
    }
}

impl RunConfig {
    /// Parses configuration text; `origin` labels line numbers in errors.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{origin}:{}: expected `key = value`", n + 1))
            })?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{origin}:{}: {}", n + 1, strip(&e))))?;
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Sets one key after checking it against the schema.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (kind, _) = schema(key).ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
        check_kind(key, kind, value)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let (_, default) = schema(key).unwrap_or_else(|| panic!("`{key}` missing from schema"));
        let v = self.values.get(key).map(String::as_str).unwrap_or(default);
        (!v.is_empty()).then_some(v)
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| Error::Config(format!("{key} must be set")))
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    pub fn text(&self, key: &str) -> Result<String> {
        self.required(key).map(str::to_string)
    }

    pub fn int(&self, key: &str) -> Result<u64> {
        let raw = self.required(key)?;
        raw.parse()
            .map_err(|_| Error::Config(format!("{key}: `{raw}` is not an integer")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        usize::try_from(self.int(key)?).map_err(|_| Error::Config(format!("{key}: value too large")))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        parse_real(key, self.required(key)?)
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.required(key)? == "true")
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.required(key).map(PathBuf::from)
    }

    pub fn list(&self, key: &str) -> Result<Vec<String>> {
        Ok(self
            .required(key)?
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect())
    }

    pub fn seed(&self) -> Result<u64> {
        self.int("seed")
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.path("out")
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        let size = self.usize("data.size")?;
        if size < MIN_PHANTOM_SIZE {
            return Err(Error::Config(format!(
                "data.size: must be >= {MIN_PHANTOM_SIZE}, got {size}"
            )));
        }
        let spec = PhantomSpec {
            size,
            ellipses_min: self.usize("data.ellipses_min")?,
            ellipses_max: self.usize("data.ellipses_max")?,
            intensity_min: self.real("data.intensity_min")?,
            intensity_max: self.real("data.intensity_max")?,
            seed: self.seed()?,
        };
        spec.validate().map_err(|e| Error::Config(format!("data: {}", strip(&e))))?;
        Ok(spec)
    }

    pub fn bit_depth(&self) -> Result<u8> {
        match self.int("data.bit_depth")? {
            8 => Ok(8),
            16 => Ok(16),
            other => Err(Error::Config(format!("data.bit_depth: must be 8 or 16, got {other}"))),
        }
    }

    /// Photon scale from `noise.peak`, or `noise.lambda · 255`.
    fn peak(&self) -> Result<f64> {
        match (self.is_set("noise.peak"), self.is_set("noise.lambda")) {
            (true, true) => Err(Error::Config("set only one of noise.peak and noise.lambda".into())),
            (true, false) => self.real("noise.peak"),
            (false, true) => Ok(self.real("noise.lambda")? * 255.0),
            (false, false) => Err(Error::Config("noise.peak or noise.lambda must be set".into())),
        }
    }

    /// The configured noise model. Correlated pairs default to
    /// `sigma1 = sigma_z = sigma/√2`, matching the total level `sigma`.
    pub fn noise(&self) -> Result<NoiseSpec> {
        let spec = match self.required("noise.kind")? {
            "gaussian" => NoiseSpec::Gaussian {
                sigma: self.real("noise.sigma")?,
            },
            "gaussian_pair" => {
                let half = self.real("noise.sigma")? / std::f64::consts::SQRT_2;
                let get = |k: &str| if self.is_set(k) { self.real(k) } else { Ok(half) };
                NoiseSpec::GaussianPair {
                    sigma1: get("noise.sigma1")?,
                    sigma_z: get("noise.sigma_z")?,
                }
            }
            "gaussian_independent_pair" => NoiseSpec::GaussianIndependentPair {
                sigma: self.real("noise.sigma")?,
            },
            "poisson" => NoiseSpec::Poisson { peak: self.peak()? },
            "poisson_pair" => NoiseSpec::PoissonPair { peak: self.peak()? },
            other => return Err(Error::Config(format!("noise.kind: unknown kind `{other}`"))),
        };
        spec.validate().map_err(|e| Error::Config(format!("noise: {}", strip(&e))))?;
        Ok(spec)
    }

    pub fn net(&self) -> Result<NetConfig> {
        let c = NetConfig {
            depth: self.usize("net.depth")?,
            channels: self.usize("net.channels")?,
            kernel: self.usize("net.kernel")?,
            residual: self.flag("net.residual")?,
        };
        c.validate().map_err(|e| Error::Config(format!("net: {}", strip(&e))))?;
        Ok(c)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let loss: LossKind = self.required("train.loss")?.parse()?;
        let epochs = self.usize("train.epochs")?;
        let mut schedule = LrSchedule::scaled_to(epochs);
        schedule.initial = self.real("train.learning_rate")?;
        schedule.drop_factor = self.real("train.lr_drop_factor")?;
        if self.is_set("train.lr_drop_epoch") {
            schedule.drop_epoch = self.usize("train.lr_drop_epoch")?;
        }
        let probe = match self.required("train.probe")? {
            "rademacher" => Probe::Rademacher,
            "gaussian" => Probe::Gaussian,
            other => return Err(Error::Config(format!("train.probe: unknown probe `{other}`"))),
        };
        let tc = TrainConfig {
            loss,
            epochs,
            batch_size: self.usize("train.batch_size")?,
            schedule,
            epsilon: self.real("train.epsilon")?,
            seed: self.seed()?,
            optimizer: self.required("train.optimizer")?.parse::<Optimizer>()?,
            probe,
        };
        tc.validate().map_err(|e| Error::Config(format!("train: {}", strip(&e))))?;
        Ok(tc)
    }
}

/// Error text without the variant prefix, for re-wrapping as a config error.
fn strip(e: &Error) -> String {
    match e {
        Error::Config(s) => s.clone(),
        Error::InvalidParameter { name, reason } => format!("{name} {reason}"),
        other => other.to_string(),
    }
}
