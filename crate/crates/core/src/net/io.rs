//! Weight file: `"RDNW"`, `u16` version, `u16` layer count, then per layer
//! four `u32` dims `(out, in, k, k)`, the weights as `f32`, a `u32` bias
//! length and the biases as `f32`. Everything little-endian.

use std::path::Path;

use crate::error::{Error, Result};

use super::{InitRecord, Layer, NetConfig, NetParams};

pub const MAGIC: &[u8; 4] = b"RDNW";
pub const FORMAT_VERSION: u16 = 1;

/// Serializes parameters. Values are stored as `f32`; parameters produced by
/// this crate are already `f32`-representable, so nothing is lost.
pub fn params_to_bytes(params: &NetParams) -> Result<Vec<u8>> {
    let count = u16::try_from(params.layers.len())
        .map_err(|_| Error::Shape(format!("{} layers exceed the format limit", params.layers.len())))?;
    let mut out = Vec::with_capacity(8 + params.param_count() * 4 + params.layers.len() * 20);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (i, layer) in params.layers.iter().enumerate() {
        for d in [layer.out_channels, layer.in_channels, layer.kernel, layer.kernel] {
            let d = u32::try_from(d).map_err(|_| Error::Shape(format!("layer {i}: dimension {d} too large")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("layer {i} has non-finite parameters")));
        }
        for &v in &layer.weights {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(layer.bias.len() as u32).to_le_bytes());
        for &v in &layer.bias {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!(
                "weight file truncated while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(4)
            .ok_or_else(|| Error::Format(format!("{what}: length overflow")))?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Parses a weight file. The residual flag is not stored and comes from the
/// caller.
pub fn params_from_bytes(bytes: &[u8], residual: bool) -> Result<NetParams> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected \"RDNW\"")));
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!("weight file version {version}")));
    }
    let count = r.u16("layer count")? as usize;
    let mut layers = Vec::with_capacity(count);
    for i in 0..count {
        let what = format!("layer {i}");
        let dims = [r.u32(&what)?, r.u32(&what)?, r.u32(&what)?, r.u32(&what)?];
        if dims[2] != dims[3] {
            return Err(Error::Format(format!("{what}: non-square kernel {}x{}", dims[2], dims[3])));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Format(format!("{what}: dimensions overflow")))?;
        let weights = r.f32s(n, &what)?;
        let bias_len = r.u32(&what)?;
        let bias = r.f32s(bias_len, &what)?;
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{what} has non-finite parameters")));
        }
        layers.push(
            Layer::new(dims[0], dims[1], dims[2], weights, bias)
                .map_err(|e| Error::Format(format!("{what}: {e}")))?,
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    Ok(NetParams {
        layers,
        residual,
        init: InitRecord {
            scheme: "file".into(),
            seed: 0,
        },
    })
}

pub fn save_params(params: &NetParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = params_to_bytes(params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a weight file and checks it against `config`.
pub fn load_params(path: impl AsRef<Path>, config: &NetConfig) -> Result<NetParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = params_from_bytes(&bytes, config.residual)?;
    params.check_config(config)?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::net_init;

    #[test]
    fn round_trip_is_bit_exact() {
        let c = NetConfig::default();
        let p = net_init(&c, 4).unwrap();
        let bytes = params_to_bytes(&p).unwrap();
        let q = params_from_bytes(&bytes, true).unwrap();
        assert_eq!(p.layers, q.layers);
        assert_eq!(params_to_bytes(&q).unwrap(), bytes);
        assert_eq!(&bytes[..4], b"RDNW");
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 5);
    }

    #[test]
    fn bad_magic_and_truncation_are_structured() {
        let p = net_init(&NetConfig::default(), 0).unwrap();
        let mut bytes = params_to_bytes(&p).unwrap();
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(params_from_bytes(short, true), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(params_from_bytes(&bytes, true), Err(Error::Format(_))));
        assert!(matches!(params_from_bytes(&[], true), Err(Error::Format(_))));
    }

    #[test]
    fn depth_mismatch_names_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let deep = NetConfig::default();
        save_params(&net_init(&deep, 0).unwrap(), &path).unwrap();
        let shallow = NetConfig { depth: 3, ..deep };
        let err = load_params(&path, &shallow).unwrap_err().to_string();
        assert!(err.contains("layer 2"), "{err}");
    }

    #[test]
    fn missing_file_is_io_error() {
        let r = load_params("/nonexistent/weights.bin", &NetConfig::default());
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
