//! Versioned JSON model checkpoints: search-space spec, dimensions, and the
//! full parameter registry with optimizer moments.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::ParamRegistry;
use crate::model::{ModelDims, ModelParams};
use crate::space::SearchSpaceSpec;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("parameter {name}: value length {len} does not match shape {rows}x{cols}")]
    ShapeMismatch {
        name: String,
        len: usize,
        rows: usize,
        cols: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    moment1: Vec<f64>,
    moment2: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    spec: SearchSpaceSpec,
    dims: ModelDims,
    step: u64,
    params: Vec<ParamEntry>,
}

pub fn save_model(path: &Path, model: &ModelParams) -> Result<(), CheckpointError> {
    let params = model
        .reg
        .export()
        .into_iter()
        .map(|(name, value, m1, m2)| ParamEntry {
            name,
            rows: value.nrows(),
            cols: value.ncols(),
            value: value.into_iter().collect(),
            moment1: m1.into_iter().collect(),
            moment2: m2.into_iter().collect(),
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        spec: model.spec.clone(),
        dims: model.dims,
        step: model.reg.step_count(),
        params,
    };
    std::fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelParams, CheckpointError> {
    let text = std::fs::read_to_string(path)?;
    load_model_from_str(&text)
}

/// Deserializes a checkpoint from its JSON text, for callers without a
/// filesystem (embedded assets, browser environments).
pub fn load_model_from_str(text: &str) -> Result<ModelParams, CheckpointError> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut entries = Vec::with_capacity(file.params.len());
    for p in file.params {
        let to_mat = |data: Vec<f64>| -> Result<Array2<f64>, CheckpointError> {
            let len = data.len();
            Array2::from_shape_vec((p.rows, p.cols), data).map_err(|_| {
                CheckpointError::ShapeMismatch {
                    name: p.name.clone(),
                    len,
                    rows: p.rows,
                    cols: p.cols,
                }
            })
        };
        let value = to_mat(p.value)?;
        let m1 = to_mat(p.moment1)?;
        let m2 = to_mat(p.moment2)?;
        entries.push((p.name, value, m1, m2));
    }
    let reg = ParamRegistry::restore(entries, file.step);
    Ok(ModelParams::from_registry(file.spec, file.dims, reg))
}
