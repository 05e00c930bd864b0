//! Versioned JSON persistence for ensemble models.
//!
//! The on-disk schema stores every matrix as a flat row-major array next
//! to its dimensions. Floats use shortest round-trip formatting, so a
//! save/load cycle reproduces predictions bit-exactly, and serialization
//! is byte-deterministic for a given model.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{Activation, RandomFeatureMap, SIGMA_FLOOR};
use crate::ridge::LinearModel;
use crate::trainer::{BlockKind, EnsembleModel, FineTuneBlock};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    num_classes: usize,
    num_features: usize,
    node_size: usize,
    lr: f64,
    activation: Activation,
    initial: LinearModelJson,
    blocks: Vec<BlockJson>,
}

#[derive(Serialize, Deserialize)]
struct LinearModelJson {
    outputs: usize,
    inputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    inputs: usize,
    node_size: usize,
    projection: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    activation: Activation,
    seed_tag: u64,
}

#[derive(Serialize, Deserialize)]
struct BlockJson {
    kind: String,
    map: MapJson,
    learners: Vec<LinearModelJson>,
}

fn linear_to_json(m: &LinearModel) -> LinearModelJson {
    LinearModelJson {
        outputs: m.n_outputs(),
        inputs: m.n_inputs(),
        weights: m.weights.iter().cloned().collect(),
        bias: m.bias.to_vec(),
    }
}

fn linear_from_json(j: &LinearModelJson, what: &str) -> Result<LinearModel> {
    let expect = j
        .outputs
        .checked_mul(j.inputs)
        .ok_or_else(|| Error::Model(format!("{what}: dimension overflow")))?;
    if j.weights.len() != expect {
        return Err(Error::Model(format!(
            "{what}: {} weights for {}x{}",
            j.weights.len(),
            j.outputs,
            j.inputs
        )));
    }
    if j.bias.len() != j.outputs {
        return Err(Error::Model(format!(
            "{what}: {} bias entries for {} outputs",
            j.bias.len(),
            j.outputs
        )));
    }
    let weights = Array2::from_shape_vec((j.outputs, j.inputs), j.weights.clone())
        .map_err(|e| Error::Model(format!("{what}: {e}")))?;
    LinearModel::new(weights, Array1::from_vec(j.bias.clone()))
        .map_err(|e| Error::Model(format!("{what}: {e}")))
}

fn model_to_file(model: &EnsembleModel) -> ModelFile {
    ModelFile {
        format_version: FORMAT_VERSION,
        num_classes: model.num_classes(),
        num_features: model.n_features(),
        node_size: model.node_size,
        lr: model.lr,
        activation: model
            .blocks
            .first()
            .map_or(Activation::Tanh, |b| b.map.activation),
        initial: linear_to_json(&model.initial),
        blocks: model
            .blocks
            .iter()
            .map(|b| BlockJson {
                kind: b.kind.name().to_string(),
                map: MapJson {
                    inputs: b.map.input_dim(),
                    node_size: b.map.node_size(),
                    projection: b.map.projection.iter().cloned().collect(),
                    mu: b.map.mu.to_vec(),
                    sigma: b.map.sigma.to_vec(),
                    activation: b.map.activation,
                    seed_tag: b.map.seed_tag,
                },
                learners: b.learners.iter().map(linear_to_json).collect(),
            })
            .collect(),
    }
}

fn model_from_file(file: ModelFile) -> Result<EnsembleModel> {
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    if file.num_classes < 2 {
        return Err(Error::Model("need at least 2 classes".into()));
    }
    if !file.lr.is_finite() || file.lr <= 0.0 {
        return Err(Error::Model("lr must be finite and > 0".into()));
    }
    let initial = linear_from_json(&file.initial, "initial model")?;
    if initial.n_outputs() != file.num_classes || initial.n_inputs() != file.num_features {
        return Err(Error::Model(format!(
            "initial model is {}x{}, header says {}x{}",
            initial.n_outputs(),
            initial.n_inputs(),
            file.num_classes,
            file.num_features
        )));
    }

    let mut blocks = Vec::with_capacity(file.blocks.len());
    for (i, b) in file.blocks.iter().enumerate() {
        let kind = match b.kind.as_str() {
            "da" => BlockKind::Da,
            "ssl" => BlockKind::Ssl,
            other => return Err(Error::Model(format!("block {i}: unknown kind '{other}'"))),
        };
        let expect = b
            .map
            .inputs
            .checked_mul(b.map.node_size)
            .ok_or_else(|| Error::Model(format!("block {i}: dimension overflow")))?;
        if b.map.projection.len() != expect {
            return Err(Error::Model(format!(
                "block {i}: {} projection entries for {}x{}",
                b.map.projection.len(),
                b.map.inputs,
                b.map.node_size
            )));
        }
        if b.map.mu.len() != b.map.node_size || b.map.sigma.len() != b.map.node_size {
            return Err(Error::Model(format!("block {i}: mu/sigma length mismatch")));
        }
        if b.map.inputs != file.num_features {
            return Err(Error::Model(format!(
                "block {i}: map takes {} inputs, model has {} features",
                b.map.inputs, file.num_features
            )));
        }
        let projection =
            Array2::from_shape_vec((b.map.inputs, b.map.node_size), b.map.projection.clone())
                .map_err(|e| Error::Model(format!("block {i}: {e}")))?;
        if projection.iter().any(|v| !v.is_finite())
            || b.map.mu.iter().any(|v| !v.is_finite())
            || b.map.sigma.iter().any(|v| !v.is_finite())
        {
            return Err(Error::Model(format!("block {i}: non-finite map entry")));
        }
        if b.map.sigma.iter().any(|&s| s < SIGMA_FLOOR) {
            return Err(Error::Model(format!("block {i}: sigma below floor")));
        }
        let map = RandomFeatureMap {
            projection,
            mu: Array1::from_vec(b.map.mu.clone()),
            sigma: Array1::from_vec(b.map.sigma.clone()),
            activation: b.map.activation,
            seed_tag: b.map.seed_tag,
        };
        if b.learners.len() != file.num_classes {
            return Err(Error::Model(format!(
                "block {i}: {} learners for {} classes",
                b.learners.len(),
                file.num_classes
            )));
        }
        let mut learners = Vec::with_capacity(b.learners.len());
        for (c, lj) in b.learners.iter().enumerate() {
            let learner = linear_from_json(lj, &format!("block {i} learner {c}"))?;
            if learner.n_outputs() != 1 || learner.n_inputs() != b.map.node_size {
                return Err(Error::Model(format!(
                    "block {i} learner {c}: shape {}x{} does not map {} nodes to one score",
                    learner.n_outputs(),
                    learner.n_inputs(),
                    b.map.node_size
                )));
            }
            learners.push(learner);
        }
        blocks.push(FineTuneBlock { kind, map, learners });
    }
    Ok(EnsembleModel { initial, blocks, lr: file.lr, node_size: file.node_size })
}

/// Serialize to the versioned JSON schema. Byte-deterministic.
pub fn model_to_json(model: &EnsembleModel) -> Result<String> {
    serde_json::to_string(&model_to_file(model))
        .map_err(|e| Error::Model(format!("serialization failed: {e}")))
}

/// Parse and fully validate a model from JSON bytes. Never panics on
/// malformed input.
pub fn parse_model_json(bytes: &[u8]) -> Result<EnsembleModel> {
    let file: ModelFile =
        serde_json::from_slice(bytes).map_err(|e| Error::Model(format!("bad JSON: {e}")))?;
    model_from_file(file)
}

pub fn save_model(path: impl AsRef<Path>, model: &EnsembleModel) -> Result<()> {
    fs::write(path.as_ref(), model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let bytes = fs::read(path.as_ref())?;
    parse_model_json(&bytes)
}
