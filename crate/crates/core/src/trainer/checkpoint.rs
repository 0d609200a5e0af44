//! Versioned little-endian checkpoint files with a JSON sidecar.
//!
//! Layout: `CSCK`, u32 version, u32 in_channels, u32 input_size,
//! u32 num_classes, f64 leaky_slope, u32 block count and one u32 per block,
//! u32 tensor count, then per tensor a u16-prefixed UTF-8 name, u32 rank and
//! u32 dims, then u64 parameter count followed by the f32 parameters.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::nn::{ArchSpec, Classifier};
use super::train::RunMetrics;

pub const MAGIC: &[u8; 4] = b"CSCK";
pub const VERSION: u32 = 1;

/// Sidecar stored next to a checkpoint as `<name>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub arch: ArchSpec,
    pub seed: u64,
    /// Hex SHA-256 of the little-endian parameter bytes.
    pub params_sha256: String,
    /// Snapshot of the configuration the model was trained with.
    pub config: serde_json::Value,
    pub metrics: Option<RunMetrics>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn param_bytes(params: &[f32]) -> Vec<u8> {
    params.iter().flat_map(|p| p.to_le_bytes()).collect()
}

pub fn params_sha256(params: &[f32]) -> String {
    hex::encode(Sha256::digest(param_bytes(params)))
}

pub fn encode_checkpoint(model: &Classifier<f32>) -> Vec<u8> {
    let arch = model.arch();
    let mut out = Vec::new();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend((v as u32).to_le_bytes());
    out.extend(MAGIC);
    out.extend(VERSION.to_le_bytes());
    u32le(&mut out, arch.in_channels);
    u32le(&mut out, arch.input_size);
    u32le(&mut out, arch.num_classes);
    out.extend(arch.leaky_slope.to_le_bytes());
    u32le(&mut out, arch.channels.len());
    for &c in &arch.channels {
        u32le(&mut out, c);
    }
    u32le(&mut out, model.tensors().len());
    for t in model.tensors() {
        out.extend((t.name.len() as u16).to_le_bytes());
        out.extend(t.name.as_bytes());
        u32le(&mut out, t.shape.len());
        for &d in &t.shape {
            u32le(&mut out, d);
        }
    }
    out.extend((model.num_params() as u64).to_le_bytes());
    out.extend(param_bytes(model.params()));
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn fail(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(self.pos, format!("unexpected end of file reading {what}")));
        }
        let bytes: &'a [u8] = self.bytes;
        let s = &bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Classifier<f32>> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4, "magic")? != MAGIC {
        return Err(c.fail(0, "not a checkpoint (bad magic)"));
    }
    let version = c.u32("version")?;
    if version != VERSION as usize {
        return Err(c.fail(4, format!("unsupported version {version}")));
    }
    let in_channels = c.u32("in_channels")?;
    let input_size = c.u32("input_size")?;
    let num_classes = c.u32("num_classes")?;
    let leaky_slope = c.f64("leaky_slope")?;
    let n_blocks = c.u32("block count")?;
    if n_blocks > 64 {
        return Err(c.fail(c.pos - 4, format!("implausible block count {n_blocks}")));
    }
    let channels = (0..n_blocks).map(|_| c.u32("block channels")).collect::<Result<Vec<_>>>()?;
    let arch = ArchSpec {
        in_channels,
        input_size,
        channels,
        num_classes,
        leaky_slope,
    };
    let arch_end = c.pos;
    let template = Classifier::<f32>::zeros(arch.clone()).map_err(|e| c.fail(8, format!("invalid architecture: {e}")))?;
    let n_tensors = c.u32("tensor count")?;
    if n_tensors != template.tensors().len() {
        return Err(c.fail(arch_end, format!("expected {} tensors, found {n_tensors}", template.tensors().len())));
    }
    for t in template.tensors() {
        let at = c.pos;
        let len = c.u16("tensor name length")? as usize;
        let name = c.take(len, "tensor name")?;
        let rank = c.u32("tensor rank")?;
        if rank > 8 {
            return Err(c.fail(at, format!("implausible tensor rank {rank}")));
        }
        let dims = (0..rank).map(|_| c.u32("tensor dims")).collect::<Result<Vec<_>>>()?;
        if name != t.name.as_bytes() || dims != t.shape {
            return Err(c.fail(
                at,
                format!(
                    "tensor table entry {:?} {dims:?} does not match expected {} {:?}",
                    String::from_utf8_lossy(name),
                    t.name,
                    t.shape
                ),
            ));
        }
    }
    let at = c.pos;
    let n = c.u64("parameter count")?;
    if n != template.num_params() as u64 {
        return Err(c.fail(at, format!("expected {} parameters, found {n}", template.num_params())));
    }
    let data = c.take(template.num_params() * 4, "parameters")?;
    let params: Vec<f32> = data.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    if c.pos != bytes.len() {
        return Err(c.fail(c.pos, "trailing bytes after parameters"));
    }
    Classifier::from_params(arch, params)
}

/// Write the checkpoint and its sidecar. `meta.params_sha256` and
/// `meta.arch` are filled in from the model.
pub fn save_checkpoint(path: &Path, model: &Classifier<f32>, mut meta: CheckpointMeta) -> Result<()> {
    meta.format_version = VERSION;
    meta.arch = model.arch().clone();
    meta.params_sha256 = params_sha256(model.params());
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Json {
        path: side.clone(),
        source: e,
    })?;
    fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Classifier<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

pub fn load_meta(path: &Path) -> Result<CheckpointMeta> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: side, source: e })
}

/// Load both files and check they describe the same parameters.
pub fn load_with_meta(path: &Path) -> Result<(Classifier<f32>, CheckpointMeta)> {
    let model = load_checkpoint(path)?;
    let meta = load_meta(path)?;
    if meta.arch != *model.arch() {
        return Err(Error::InvalidConfig(format!(
            "{}: sidecar architecture does not match the checkpoint",
            path.display()
        )));
    }
    if meta.params_sha256 != params_sha256(model.params()) {
        return Err(Error::InvalidConfig(format!(
            "{}: parameter checksum does not match the sidecar",
            path.display()
        )));
    }
    Ok((model, meta))
}
