//! Binary checkpoint: an 8-byte magic, a format version, a JSON header and
//! three little-endian `f64` tensors (parameters, first and second moments).

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{AdamWConfig, OptimizerState, Schedule};
use super::params::{ModelConfig, Parameters};
use super::train::{IntervalAccumulator, LogRecord, RunConfig};
use super::ModelError;

pub const MAGIC: &[u8; 8] = b"ESCOCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub run: RunConfig,
    pub sampler_seed: u64,
    pub strict: bool,
    pub max_retries: usize,
    pub step: usize,
    pub schedule: Schedule,
    pub adamw: AdamWConfig,
    /// Vocabulary in its text form, one token per line.
    pub vocab: String,
    pub logs: Vec<LogRecord>,
    pub interval: IntervalAccumulator,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Parameters,
    pub optimizer: OptimizerState,
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

fn write_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.reserve(xs.len() * 8);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn read_f64s(bytes: &[u8], n: usize) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .take(n)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let header = serde_json::to_vec(&self.header).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        write_f64s(&mut out, &self.params.data);
        write_f64s(&mut out, &self.optimizer.m);
        write_f64s(&mut out, &self.optimizer.v);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(20..)
            .filter(|b| b.len() >= hlen)
            .ok_or_else(|| corrupt("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(e.to_string()))?;
        let n = header.param_count;
        let tensors = &body[hlen..];
        if tensors.len() != 3 * n * 8 {
            return Err(corrupt(format!("expected {} tensor bytes, found {}", 3 * n * 8, tensors.len())));
        }
        let params = Parameters::from_data(header.model, read_f64s(tensors, n))?;
        let optimizer = OptimizerState {
            step: header.step,
            m: read_f64s(&tensors[n * 8..], n),
            v: read_f64s(&tensors[2 * n * 8..], n),
            schedule: header.schedule,
            adamw: header.adamw,
        };
        Ok(Self { header, params, optimizer })
    }

    /// Writes to a sibling temporary file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let io_err = |source: io::Error| ModelError::Io {
            context: format!("writing {}", path.display()),
            source,
        };
        let bytes = self.to_bytes()?;
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp).map_err(io_err)?;
            f.write_all(&bytes).map_err(io_err)?;
            f.sync_all().map_err(io_err)?;
        }
        fs::rename(&tmp, path).map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| ModelError::Io {
                context: format!("reading {}", path.display()),
                source,
            })?;
        Self::from_bytes(&bytes)
    }
}
