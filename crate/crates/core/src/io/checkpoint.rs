//! Checkpoint persistence: versioned header plus little-endian f32 tensors
//! addressed by a name/shape/offset manifest.
//!
//! Layout: 8-byte magic, u64 header length, JSON header, f32 payload. The
//! header carries the denoiser config, schedule length, training step, and
//! the tensor manifest; Adam moments ride along as `adam_m.*` / `adam_v.*`
//! tensors so training can resume on the recorded trajectory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::model::{AdamState, DenoiserConfig, DenoiserParams};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"GDNCKPT1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: u64,
    cols: u64,
    /// Offset into the payload, in f32 units.
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct HeaderDto {
    denoiser: DenoiserConfig,
    n_steps: usize,
    train_step: u64,
    has_adam: bool,
    adam_t: u64,
    tensors: Vec<TensorEntry>,
}

/// Everything a checkpoint stores.
#[derive(Debug)]
pub struct CheckpointData {
    pub denoiser: DenoiserConfig,
    pub n_steps: usize,
    pub train_step: u64,
    pub params: DenoiserParams<f64>,
    pub adam: Option<AdamState<f64>>,
}

fn push_params(
    prefix: &str,
    params: &DenoiserParams<f64>,
    tensors: &mut Vec<TensorEntry>,
    payload: &mut Vec<u8>,
) {
    for (name, linear) in params.linears() {
        for (suffix, rows, cols, data) in [
            (
                "w",
                linear.w.nrows() as u64,
                linear.w.ncols() as u64,
                row_major(&linear.w),
            ),
            ("b", linear.b.len() as u64, 1, linear.b.iter().copied().collect()),
        ] {
            tensors.push(TensorEntry {
                name: format!("{prefix}{name}.{suffix}"),
                rows,
                cols,
                offset: (payload.len() / 4) as u64,
            });
            for v in data {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
}

fn row_major(m: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

pub fn save_checkpoint(
    path: &Path,
    params: &DenoiserParams<f64>,
    denoiser: &DenoiserConfig,
    n_steps: usize,
    train_step: u64,
    adam: Option<&AdamState<f64>>,
) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    push_params("", params, &mut tensors, &mut payload);
    if let Some(state) = adam {
        push_params("adam_m.", &state.m, &mut tensors, &mut payload);
        push_params("adam_v.", &state.v, &mut tensors, &mut payload);
    }
    let header = HeaderDto {
        denoiser: denoiser.clone(),
        n_steps,
        train_step,
        has_adam: adam.is_some(),
        adam_t: adam.map_or(0, |s| s.t),
        tensors,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serializes");
    let mut bytes = Vec::with_capacity(16 + header_bytes.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_bytes);
    bytes.extend_from_slice(&payload);
    super::atomic_write(path, &bytes)
}

struct PayloadReader<'a> {
    floats: &'a [u8],
    n_floats: u64,
}

impl PayloadReader<'_> {
    fn read(&self, entry: &TensorEntry) -> Result<Vec<f64>> {
        let count = entry
            .rows
            .checked_mul(entry.cols)
            .ok_or_else(|| Error::Integrity("tensor size overflows".into()))?;
        let end = entry
            .offset
            .checked_add(count)
            .ok_or_else(|| Error::Integrity("tensor range overflows".into()))?;
        if end > self.n_floats {
            return Err(Error::Integrity(format!(
                "tensor {} range {}..{end} exceeds payload ({} floats)",
                entry.name, entry.offset, self.n_floats
            )));
        }
        let base = (entry.offset * 4) as usize;
        Ok((0..count as usize)
            .map(|k| {
                let raw: [u8; 4] = self.floats[base + 4 * k..base + 4 * k + 4]
                    .try_into()
                    .unwrap();
                f32::from_le_bytes(raw) as f64
            })
            .collect())
    }
}

fn fill_params(
    prefix: &str,
    params: &mut DenoiserParams<f64>,
    entries: &[TensorEntry],
    reader: &PayloadReader<'_>,
) -> Result<()> {
    let by_name: std::collections::HashMap<&str, &TensorEntry> =
        entries.iter().map(|e| (e.name.as_str(), e)).collect();
    for (name, linear) in params.linears_mut() {
        for (suffix, rows, cols) in [
            ("w", linear.w.nrows(), linear.w.ncols()),
            ("b", linear.b.len(), 1usize),
        ] {
            let full = format!("{prefix}{name}.{suffix}");
            let entry = by_name
                .get(full.as_str())
                .ok_or_else(|| Error::Integrity(format!("missing tensor {full}")))?;
            if entry.rows != rows as u64 || entry.cols != cols as u64 {
                return Err(Error::Integrity(format!(
                    "tensor {full}: shape {}x{} does not match config {}x{}",
                    entry.rows, entry.cols, rows, cols
                )));
            }
            let data = reader.read(entry)?;
            if suffix == "w" {
                for r in 0..rows {
                    for c in 0..cols {
                        linear.w[(r, c)] = data[r * cols + c];
                    }
                }
            } else {
                for (r, v) in data.iter().enumerate() {
                    linear.b[r] = *v;
                }
            }
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Integrity(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(Error::Integrity("checkpoint: truncated header".into()));
    }
    let header: HeaderDto = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| Error::Integrity(format!("checkpoint header: {e}")))?;
    let floats = &bytes[16 + header_len..];
    if floats.len() % 4 != 0 {
        return Err(Error::Integrity("checkpoint: truncated payload".into()));
    }
    let reader = PayloadReader {
        floats,
        n_floats: (floats.len() / 4) as u64,
    };
    header.denoiser.validate()?;
    // Shape skeleton from the config, then fill from the manifest.
    let mut seed = rand_chacha::ChaCha12Rng::seed_from_u64(0);
    let mut params = DenoiserParams::<f64>::init(&header.denoiser, &mut seed)?;
    fill_params("", &mut params, &header.tensors, &reader)?;
    let adam = if header.has_adam {
        let mut state = AdamState::new(&params);
        fill_params("adam_m.", &mut state.m, &header.tensors, &reader)?;
        fill_params("adam_v.", &mut state.v, &header.tensors, &reader)?;
        state.t = header.adam_t;
        Some(state)
    } else {
        None
    };
    Ok(CheckpointData {
        denoiser: header.denoiser,
        n_steps: header.n_steps,
        train_step: header.train_step,
        params,
        adam,
    })
}

use rand::SeedableRng;
