//! Versioned on-disk model container (JSON, one file per object).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, INPUT_DIM};
use super::matrix::Matrix;
use super::model::{ErrorStats, TrainedModel, TrainingMeta};
use super::network::{Block, Network};
use super::norm::NormStats;
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    /// Row-major.
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    norad_id: Option<u32>,
    config: ModelConfig,
    input_dim: usize,
    norm_stats: NormStats,
    tensors: Vec<Tensor>,
    calibration: Option<ErrorStats>,
    latent_reference: Tensor,
    training: TrainingMeta,
}

/// Only the version is read first so unknown layouts fail cleanly.
#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn to_json(model: &TrainedModel, norad_id: Option<u32>) -> Result<String> {
    let net = &model.network;
    let tensors = Block::ALL
        .iter()
        .map(|&b| {
            let (rows, cols) = b.dims(net.hidden, net.latent);
            Tensor {
                name: b.name().to_string(),
                rows,
                cols,
                data: net.block(b).to_vec(),
            }
        })
        .collect();
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        norad_id,
        config: model.config.clone(),
        input_dim: INPUT_DIM,
        norm_stats: model.norm_stats.clone(),
        tensors,
        calibration: model.calibration.clone(),
        latent_reference: Tensor {
            name: "latent_reference".into(),
            rows: model.latent_reference.rows,
            cols: model.latent_reference.cols,
            data: model.latent_reference.data.clone(),
        },
        training: model.training.clone(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn from_json(text: &str) -> Result<TrainedModel> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    if probe.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            probe.format_version
        )));
    }
    let file: ModelFile = serde_json::from_str(text)?;
    if file.input_dim != INPUT_DIM {
        return Err(Error::Model(format!("input_dim {} is not {INPUT_DIM}", file.input_dim)));
    }
    let (hidden, latent) = (file.config.hidden_dim, file.config.latent_dim);
    let mut network = Network::zeros(hidden, latent, file.config.leaky_slope);
    if file.tensors.len() != Block::ALL.len() {
        return Err(Error::Model("wrong number of tensors".into()));
    }
    for (block, tensor) in Block::ALL.iter().zip(&file.tensors) {
        let dims = block.dims(hidden, latent);
        if tensor.name != block.name() || (tensor.rows, tensor.cols) != dims || tensor.data.len() != dims.0 * dims.1 {
            return Err(Error::Model(format!("tensor {} has unexpected layout", tensor.name)));
        }
        if tensor.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model(format!("tensor {} contains non-finite weights", tensor.name)));
        }
        let range = network.range(*block);
        network.params[range].copy_from_slice(&tensor.data);
    }
    let r = &file.latent_reference;
    let latent_reference = Matrix::from_vec(r.rows, r.cols, r.data.clone())?;
    Ok(TrainedModel {
        config: file.config,
        norm_stats: file.norm_stats,
        network,
        calibration: file.calibration,
        latent_reference,
        training: file.training,
    })
}

/// Writes via a temporary file and rename.
pub fn save(model: &TrainedModel, norad_id: Option<u32>, path: &Path) -> Result<()> {
    crate::util::write_atomic(path, to_json(model, norad_id)?.as_bytes())
}

pub fn load(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
