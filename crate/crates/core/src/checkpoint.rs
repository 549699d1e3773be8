//! Parameter checkpoint file.
//!
//! Layout: UTF-8 text header of `key: value` lines, with one
//! `tensor: <name> <d0>x<d1>...` line per tensor in payload order, terminated
//! by an empty line. The payload follows as raw little-endian `f64` values,
//! tensors concatenated in manifest order.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::autodiff::Tensor;

pub const PARAMS_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "compgen-params";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported parameter format version {found} (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Free-form metadata echoed into the header (model config and so on).
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "format: {MAGIC} {PARAMS_FORMAT_VERSION}")?;
        for (k, v) in &self.meta {
            writeln!(w, "{k}: {v}")?;
        }
        for (name, t) in &self.tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let dims = if dims.is_empty() { "scalar".to_string() } else { dims.join("x") };
            writeln!(w, "tensor: {name} {dims}")?;
        }
        writeln!(w)?;
        for (_, t) in &self.tensors {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: impl Read) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(r);
        let mut meta = Vec::new();
        let mut manifest: Vec<(String, Vec<usize>)> = Vec::new();
        let mut first = true;
        loop {
            let mut line = String::new();
            if r.read_line(&mut line)? == 0 {
                return Err(CheckpointError::Header("missing blank line after header".into()));
            }
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() {
                break;
            }
            let (key, value) = line
                .split_once(": ")
                .ok_or_else(|| CheckpointError::Header(format!("not a key: value line: {line:?}")))?;
            if first {
                first = false;
                let expected = format!("{MAGIC} {PARAMS_FORMAT_VERSION}");
                if key != "format" || !value.starts_with(MAGIC) {
                    return Err(CheckpointError::Header("missing format line".into()));
                }
                if value != expected {
                    return Err(CheckpointError::Version {
                        found: value.trim_start_matches(MAGIC).trim().to_string(),
                        expected: PARAMS_FORMAT_VERSION,
                    });
                }
                continue;
            }
            if key == "tensor" {
                let (name, dims) = value
                    .rsplit_once(' ')
                    .ok_or_else(|| CheckpointError::Header(format!("bad tensor line {value:?}")))?;
                let shape = if dims == "scalar" {
                    vec![]
                } else {
                    dims.split('x')
                        .map(|d| d.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| CheckpointError::Header(format!("bad dims {dims:?}: {e}")))?
                };
                manifest.push((name.to_string(), shape));
            } else {
                meta.push((key.to_string(), value.to_string()));
            }
        }
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let expected: usize = manifest.iter().map(|(_, s)| s.iter().product::<usize>() * 8).sum();
        if payload.len() != expected {
            return Err(CheckpointError::Truncated { expected, found: payload.len() });
        }
        let mut tensors = Vec::with_capacity(manifest.len());
        let mut offset = 0;
        for (name, shape) in manifest {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = payload[offset..offset + n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            offset += n * 8;
            let t = Tensor::new(shape, data).map_err(|e| CheckpointError::Header(e.to_string()))?;
            tensors.push((name, t));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut f = io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::read_from(std::fs::File::open(path)?)
    }
}
