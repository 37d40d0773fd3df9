//! Synthetic phantoms, portable graymap I/O, patch extraction, dataset
//! splitting and CSV manifests.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::report::{parse_csv, CsvWriter};
use crate::rng::SeededStream;

/// Randomized multi-ellipse phantom parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhantomSpec {
    /// Pixels per side.
    pub size: usize,
    pub ellipses_min: usize,
    pub ellipses_max: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            size: 64,
            ellipses_min: 3,
            ellipses_max: 8,
            intensity_min: 0.1,
            intensity_max: 0.9,
            seed: 0,
        }
    }
}

pub const MIN_PHANTOM_SIZE: usize = 16;

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < MIN_PHANTOM_SIZE {
            return Err(Error::param(
                "size",
                format!("must be >= {MIN_PHANTOM_SIZE}, got {}", self.size),
            ));
        }
        if self.ellipses_min > self.ellipses_max {
            return Err(Error::param("ellipses", "min exceeds max"));
        }
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !unit(self.intensity_min) || !unit(self.intensity_max) || self.intensity_min > self.intensity_max {
            return Err(Error::param(
                "intensity",
                format!(
                    "range [{}, {}] must be ordered and within [0, 1]",
                    self.intensity_min, self.intensity_max
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split `{other}`"))),
        }
    }
}

/// A list of equally sized images.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub split: Split,
    pub provenance: String,
}

impl Dataset {
    pub fn new(images: Vec<Image>, split: Split, provenance: impl Into<String>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::param("dataset", "must contain at least one image"))?;
        let dims = first.dims();
        if let Some(bad) = images.iter().find(|im| im.dims() != dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                actual: bad.dims(),
            });
        }
        Ok(Self {
            images,
            split,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.images[0].dims()
    }
}

/// Random unit vector via rejection from the square; avoids libm trig so
/// results are identical on every IEEE-754 platform.
fn unit_direction(rng: &mut impl Rng) -> (f64, f64) {
    loop {
        let u: f64 = rng.random_range(-1.0..1.0);
        let v: f64 = rng.random_range(-1.0..1.0);
        let r2 = u * u + v * v;
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return (u / r, v / r);
        }
    }
}

struct Ellipse {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
    intensity: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.cx;
        let dy = y - self.cy;
        let u = (dx * self.cos + dy * self.sin) / self.a;
        let v = (-dx * self.sin + dy * self.cos) / self.b;
        u * u + v * v <= 1.0
    }
}

/// One phantom: a large outer ellipse at a base intensity plus overlapping
/// inner ellipses with additive intensities, clamped to `[0, 1]`.
/// The background outside the outer ellipse sits at `intensity_min`.
pub fn phantom(spec: &PhantomSpec, stream: &SeededStream) -> Result<Image> {
    spec.validate()?;
    let mut rng = stream.rng();
    let (lo, hi) = (spec.intensity_min, spec.intensity_max);
    let span = hi - lo;
    let mut ellipses = Vec::new();

    let (cos, sin) = unit_direction(&mut rng);
    ellipses.push(Ellipse {
        cx: rng.random_range(-0.05..=0.05),
        cy: rng.random_range(-0.05..=0.05),
        a: rng.random_range(0.8..=0.95),
        b: rng.random_range(0.8..=0.95),
        cos,
        sin,
        intensity: rng.random_range(lo..=hi) - lo,
    });
    let count = rng.random_range(spec.ellipses_min..=spec.ellipses_max);
    for _ in 0..count {
        let (cos, sin) = unit_direction(&mut rng);
        ellipses.push(Ellipse {
            cx: rng.random_range(-0.5..=0.5),
            cy: rng.random_range(-0.5..=0.5),
            a: rng.random_range(0.05..=0.4),
            b: rng.random_range(0.05..=0.4),
            cos,
            sin,
            intensity: rng.random_range(-0.5 * span..=0.5 * span),
        });
    }

    let n = spec.size;
    Ok(Image::from_fn(n, n, |r, c| {
        let y = (r as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let x = (c as f64 + 0.5) / n as f64 * 2.0 - 1.0;
        let v: f64 = lo + ellipses
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum::<f64>();
        v.clamp(0.0, 1.0)
    }))
}

/// `count` phantoms; image `i` uses stream `(spec.seed, 0).child(i)`.
pub fn phantom_generate(spec: &PhantomSpec, count: usize) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::param("count", "must be >= 1"));
    }
    let root = SeededStream::from_seed(spec.seed);
    let images = (0..count)
        .map(|i| phantom(spec, &root.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        images,
        Split::Train,
        format!(
            "phantom(size={};ellipses={}..{};intensity={}..{};seed={})",
            spec.size, spec.ellipses_min, spec.ellipses_max, spec.intensity_min, spec.intensity_max, spec.seed
        ),
    )
}

/// Header fields of a binary graymap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PgmInfo {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
}

/// Quantizes `v` to a level: `round(clamp(v) · maxval)`, half away from zero.
pub fn quantize(v: f64, maxval: u16) -> u16 {
    (v.clamp(0.0, 1.0) * f64::from(maxval)).round() as u16
}

/// Encodes `img` as binary graymap ("P5") with maxval 255 or 65535.
/// Pixels are clamped to `[0, 1]` first; 16-bit samples are big-endian.
pub fn pgm_encode(img: &Image, bit_depth: u8) -> Result<Vec<u8>> {
    let maxval: u16 = match bit_depth {
        8 => 255,
        16 => 65535,
        other => return Err(Error::param("bit_depth", format!("must be 8 or 16, got {other}"))),
    };
    let header = format!("P5\n{} {}\n{}\n", img.width(), img.height(), maxval);
    let mut out = header.into_bytes();
    out.extend(pgm_payload(img, maxval));
    Ok(out)
}

fn pgm_payload(img: &Image, maxval: u16) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.len() * if maxval > 255 { 2 } else { 1 });
    for &v in img.data() {
        let q = quantize(v, maxval);
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("graymap header: missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Format(format!("graymap header: {what} out of range")))
    }
}

/// Decodes a binary graymap, returning the image on `[0, 1]` and its header.
pub fn pgm_decode(bytes: &[u8]) -> Result<(Image, PgmInfo)> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::Format("not a netpbm file (missing `P` magic)".into()));
    }
    match bytes[1] {
        b'5' => {}
        b'2' => return Err(Error::Unsupported("ASCII graymap (P2); only binary P5 is supported".into())),
        other => {
            return Err(Error::Unsupported(format!(
                "netpbm variant P{}; only binary P5 is supported",
                other as char
            )))
        }
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("graymap header: zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("graymap header: maxval {maxval} outside 1..=65535")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::Format("graymap header: missing separator before raster".into()));
    }
    let payload = &bytes[cur.pos + 1..];
    let bytes_per = if maxval > 255 { 2 } else { 1 };
    let need = width * height * bytes_per;
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated payload: expected {need} bytes, found {}",
            payload.len()
        )));
    }
    let scale = f64::from(maxval);
    let mut data = Vec::with_capacity(width * height);
    for i in 0..width * height {
        let level = if bytes_per == 2 {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as u32
        } else {
            payload[i] as u32
        };
        if level > maxval {
            return Err(Error::Format(format!("sample {i} = {level} exceeds maxval {maxval}")));
        }
        data.push(f64::from(level) / scale);
    }
    let info = PgmInfo {
        width,
        height,
        maxval: maxval as u16,
    };
    Ok((Image::from_vec_unchecked(width, height, data), info))
}

pub fn pgm_write(img: &Image, path: impl AsRef<Path>, bit_depth: u8) -> Result<()> {
    let path = path.as_ref();
    let bytes = pgm_encode(img, bit_depth)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn pgm_read(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    pgm_decode(&bytes).map(|(img, _)| img)
}

/// SHA-256 (lowercase hex) of the quantized raster of `img` at `bit_depth`.
pub fn payload_sha256(img: &Image, bit_depth: u8) -> Result<String> {
    let maxval = match bit_depth {
        8 => 255,
        16 => 65535,
        other => return Err(Error::param("bit_depth", format!("must be 8 or 16, got {other}"))),
    };
    Ok(hex_digest(&pgm_payload(img, maxval)))
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Number of regular-grid patch positions along one axis.
fn grid_positions(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    (0..=dim - patch).step_by(stride).collect()
}

/// Regular-grid `patch × patch` crops at the given stride, optionally
/// subsampled to `limit` patches (uniformly, in original order).
pub fn extract_patches(
    ds: &Dataset,
    patch: usize,
    stride: usize,
    limit: Option<usize>,
    stream: &SeededStream,
) -> Result<Dataset> {
    if stride == 0 {
        return Err(Error::param("stride", "must be >= 1"));
    }
    let (w, h) = ds.dims();
    if patch == 0 || patch > w || patch > h {
        return Err(Error::param(
            "patch",
            format!("{patch} does not fit a {w}x{h} image"),
        ));
    }
    let rows = grid_positions(h, patch, stride);
    let cols = grid_positions(w, patch, stride);
    let mut pool = Vec::with_capacity(ds.len() * rows.len() * cols.len());
    for img in &ds.images {
        for &r in &rows {
            for &c in &cols {
                pool.push(img.crop(r, c, patch, patch)?);
            }
        }
    }
    let images = match limit {
        Some(limit) if limit < pool.len() => {
            if limit == 0 {
                return Err(Error::param("limit", "must be >= 1"));
            }
            let mut rng = stream.rng();
            let mut picked = index::sample(&mut rng, pool.len(), limit).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| pool[i].clone()).collect()
        }
        _ => pool,
    };
    Dataset::new(
        images,
        ds.split,
        format!("patches(size={patch};stride={stride}) of {}", ds.provenance),
    )
}

/// Seeded-shuffle split into `(train, test)` with `round(n · test_fraction)`
/// test images.
pub fn split(ds: &Dataset, test_fraction: f64, stream: &SeededStream) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::param(
            "test_fraction",
            format!("must lie in (0, 1), got {test_fraction}"),
        ));
    }
    let n = ds.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::param(
            "test_fraction",
            format!("{test_fraction} of {n} images leaves one side empty"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.rng());
    let (test_idx, train_idx) = order.split_at(n_test);
    let pick = |idx: &[usize], split| {
        let mut idx = idx.to_vec();
        idx.sort_unstable();
        Dataset::new(
            idx.into_iter().map(|i| ds.images[i].clone()).collect(),
            split,
            ds.provenance.clone(),
        )
    };
    Ok((pick(train_idx, Split::Train)?, pick(test_idx, Split::Test)?))
}

/// One manifest row. `path` is relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub split: Split,
    pub width: usize,
    pub height: usize,
    pub sha256: String,
}

pub const MANIFEST_HEADER: [&str; 5] = ["path", "split", "width", "height", "sha256"];

/// CSV listing of graymap files.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_csv(&self) -> String {
        let mut w = CsvWriter::with_header(&MANIFEST_HEADER);
        for e in &self.entries {
            w.row([
                e.path.clone(),
                e.split.to_string(),
                e.width.to_string(),
                e.height.to_string(),
                e.sha256.clone(),
            ]);
        }
        w.into_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let rows = parse_csv(text);
        let (header, body) = rows
            .split_first()
            .ok_or_else(|| Error::Format("manifest is empty".into()))?;
        if header.iter().map(String::as_str).ne(MANIFEST_HEADER) {
            return Err(Error::Format(format!("manifest header `{}` unexpected", header.join(","))));
        }
        let entries = body
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != MANIFEST_HEADER.len() {
                    return Err(Error::Format(format!("manifest row {} has {} fields", i + 1, row.len())));
                }
                let num = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::Format(format!("manifest row {}: bad number `{s}`", i + 1)))
                };
                Ok(ManifestEntry {
                    path: row[0].clone(),
                    split: row[1].parse()?,
                    width: num(&row[2])?,
                    height: num(&row[3])?,
                    sha256: row[4].clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Entries tagged `split`.
    pub fn filter(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}

/// Resolves a manifest entry against the manifest's own location.
pub fn entry_path(manifest_path: &Path, entry: &ManifestEntry) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&entry.path)
}

/// Loads the images of `entries`, checking recorded dimensions.
pub fn load_entries(manifest_path: &Path, entries: &[&ManifestEntry]) -> Result<Vec<Image>> {
    entries
        .iter()
        .map(|e| {
            let img = pgm_read(entry_path(manifest_path, e))?;
            if img.dims() != (e.width, e.height) {
                return Err(Error::Format(format!(
                    "{}: manifest says {}x{}, file is {}x{}",
                    e.path,
                    e.width,
                    e.height,
                    img.width(),
                    img.height()
                )));
            }
            Ok(img)
        })
        .collect()
}

/// Writes `img` as a graymap under `dir/rel` and returns its manifest row.
pub fn write_entry(dir: &Path, rel: &str, img: &Image, split: Split, bit_depth: u8) -> Result<ManifestEntry> {
    let bytes = pgm_encode(img, bit_depth)?;
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
    Ok(ManifestEntry {
        path: rel.to_string(),
        split,
        width: img.width(),
        height: img.height(),
        sha256: payload_sha256(img, bit_depth)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_is_deterministic_and_clamped() {
        let spec = PhantomSpec {
            seed: 12,
            ..PhantomSpec::default()
        };
        let a = phantom_generate(&spec, 3).unwrap();
        let b = phantom_generate(&spec, 3).unwrap();
        assert_eq!(a, b);
        for img in &a.images {
            assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_ne!(a.images[0], a.images[1]);
    }

    #[test]
    fn phantom_rejects_small_size() {
        let spec = PhantomSpec {
            size: 8,
            ..PhantomSpec::default()
        };
        assert!(matches!(
            phantom_generate(&spec, 1),
            Err(Error::InvalidParameter { name: "size", .. })
        ));
    }

    #[test]
    fn half_quantizes_to_128() {
        let img = Image::filled(4, 4, 0.5);
        let bytes = pgm_encode(&img, 8).unwrap();
        let header_len = b"P5\n4 4\n255\n".len();
        assert!(bytes[header_len..].iter().all(|&b| b == 128));
        assert_eq!(quantize(-0.2, 255), 0);
        assert_eq!(quantize(1.7, 255), 255);
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(pgm_decode(b"P2\n2 2\n255\n1 2 3 4"), Err(Error::Unsupported(_))));
        assert!(matches!(pgm_decode(b"P5\n2 x\n255\n"), Err(Error::Format(_))));
        assert!(matches!(pgm_decode(b"P5\n2 2\n255\n\x01\x02"), Err(Error::Format(_))));
        assert!(matches!(pgm_decode(b"P5\n1 1\n10\n\x20"), Err(Error::Format(_))));
        assert!(matches!(pgm_decode(b"P5\n1 1\n70000\n\x00\x00"), Err(Error::Format(_))));
    }

    #[test]
    fn decode_handles_comments() {
        let (img, info) = pgm_decode(b"P5\n# made by hand\n2 1 # trailing\n255\n\x00\xff").unwrap();
        assert_eq!(info, PgmInfo { width: 2, height: 1, maxval: 255 });
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn patch_grid_counts() {
        let ds = Dataset::new(vec![Image::zeros(64, 64); 2], Split::Train, "t").unwrap();
        let s = SeededStream::from_seed(0);
        assert_eq!(extract_patches(&ds, 64, 7, None, &s).unwrap().len(), 2);
        assert_eq!(extract_patches(&ds, 32, 32, None, &s).unwrap().len(), 8);
        assert_eq!(extract_patches(&ds, 16, 8, None, &s).unwrap().len(), 2 * 7 * 7);
        assert!(extract_patches(&ds, 65, 1, None, &s).is_err());
    }

    #[test]
    fn patch_limit_is_deterministic() {
        let imgs: Vec<Image> = (0..4)
            .map(|k| Image::from_fn(50, 50, |r, c| (k * 10000 + r * 50 + c) as f64))
            .collect();
        let ds = Dataset::new(imgs, Split::Train, "t").unwrap();
        let s = SeededStream::new(4, 4);
        let a = extract_patches(&ds, 10, 10, Some(10), &s).unwrap();
        let b = extract_patches(&ds, 10, 10, Some(10), &s).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn split_sizes_and_union() {
        let imgs: Vec<Image> = (0..10).map(|k| Image::filled(2, 2, k as f64)).collect();
        let ds = Dataset::new(imgs, Split::Train, "t").unwrap();
        let s = SeededStream::new(1, 2);
        let (train, test) = split(&ds, 0.2, &s).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<f64> = train.images.iter().chain(&test.images).map(|i| i.data()[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(split(&ds, 0.2, &s).unwrap(), (train, test));
        assert!(split(&ds, 0.01, &s).is_err());
        assert!(split(&ds, 1.0, &s).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            entries: vec![ManifestEntry {
                path: "train/img_0000.pgm".into(),
                split: Split::Train,
                width: 64,
                height: 64,
                sha256: "ab".repeat(32),
            }],
        };
        assert_eq!(Manifest::parse(&m.to_csv()).unwrap(), m);
        assert!(Manifest::parse("a,b\n").is_err());
    }
}
