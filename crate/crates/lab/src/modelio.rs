//! Model and template files.
//!
//! Both share one container:
//!
//! ```text
//! magic (4 bytes) | u32 version | u32 header length | JSON header | payload
//! ```
//!
//! Networks use magic `SCLM`; the payload is every layer's parameter vector
//! (weights then biases) as little-endian `f32`, in layer order, with lengths
//! listed in the header. Templates use magic `SCLT`; the payload is, per
//! class, the mean (`n` values) then the regularized covariance (`n x n`,
//! row major) as little-endian `f64`. Cholesky factors are recomputed on load.
//!
//! The header names the standardization statistics file the model expects
//! its inputs to be scaled with, and that file's SHA-256.

use std::fs;
use std::path::Path;

use scalab_core::classifiers::{LayerKind, ModelSpec, NeuralModel, Network, Shape, TrainingLog};
use scalab_core::dataset::StandardizationStats;
use scalab_core::template::{ClassTemplate, Regularization, TemplateModel};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::manifest::sha256_hex;

pub const MODEL_MAGIC: [u8; 4] = *b"SCLM";
pub const TEMPLATE_MAGIC: [u8; 4] = *b"SCLT";
pub const FORMAT_VERSION: u32 = 1;

/// Pointer from a model to the statistics file next to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRef {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkHeader {
    spec: ModelSpec,
    input: Shape,
    layers: Vec<LayerKind>,
    classes: usize,
    param_lens: Vec<usize>,
    log: TrainingLog,
    stats: Option<StatsRef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateHeader {
    n: usize,
    priors: Vec<f64>,
    regularization: Regularization,
    stats: Option<StatsRef>,
}

fn container(magic: [u8; 4], header: &impl Serialize, payload: Vec<u8>) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("headers serialize");
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend(payload);
    out
}

fn open_container<'a, H: for<'de> Deserialize<'de>>(magic: [u8; 4], bytes: &'a [u8], path: &Path) -> Result<(H, &'a [u8])> {
    let err = |r: &str| LabError::format(path, r);
    if bytes.len() < 12 || bytes[..4] != magic {
        return Err(err("wrong magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(err(&format!("unsupported version {version}")));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let json = bytes.get(12..12 + len).ok_or_else(|| err("truncated header"))?;
    let header = serde_json::from_slice(json).map_err(|e| err(&e.to_string()))?;
    Ok((header, &bytes[12 + len..]))
}

pub fn encode_network(model: &NeuralModel, stats: Option<StatsRef>) -> Vec<u8> {
    let net = &model.network;
    let header = NetworkHeader {
        spec: model.spec.clone(),
        input: net.input,
        layers: net.layers.clone(),
        classes: net.classes,
        param_lens: net.params.iter().map(Vec::len).collect(),
        log: model.log.clone(),
        stats,
    };
    let payload = net.params.iter().flatten().flat_map(|w| w.to_le_bytes()).collect();
    container(MODEL_MAGIC, &header, payload)
}

pub fn decode_network(bytes: &[u8], path: &Path) -> Result<(NeuralModel, Option<StatsRef>)> {
    let (h, mut payload): (NetworkHeader, _) = open_container(MODEL_MAGIC, bytes, path)?;
    if payload.len() != 4 * h.param_lens.iter().sum::<usize>() {
        return Err(LabError::format(path, "weight payload length disagrees with header"));
    }
    let mut params = Vec::with_capacity(h.param_lens.len());
    for len in &h.param_lens {
        let (now, rest) = payload.split_at(4 * len);
        params.push(now.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect());
        payload = rest;
    }
    let network = Network { input: h.input, layers: h.layers, params, classes: h.classes };
    // rebuild through the validating constructor's shape rules
    let check = Network::<f32>::new(network.input_len(), network.layers.clone(), network.classes, 0)
        .map_err(|e| LabError::format(path, e.to_string()))?;
    if check.params.iter().map(Vec::len).ne(network.params.iter().map(Vec::len)) {
        return Err(LabError::format(path, "parameter shapes disagree with the layer list"));
    }
    Ok((NeuralModel { spec: h.spec, network, log: h.log, stats: None }, h.stats))
}

pub fn encode_template(model: &TemplateModel, stats: Option<StatsRef>) -> Vec<u8> {
    let header = TemplateHeader {
        n: model.n,
        priors: model.classes.iter().map(|c| c.prior).collect(),
        regularization: model.regularization,
        stats,
    };
    let mut payload = Vec::with_capacity(model.classes.len() * (model.n + model.n * model.n) * 8);
    for c in &model.classes {
        payload.extend(c.mean.iter().chain(&c.covariance).flat_map(|x| x.to_le_bytes()));
    }
    container(TEMPLATE_MAGIC, &header, payload)
}

pub fn decode_template(bytes: &[u8], path: &Path) -> Result<(TemplateModel, Option<StatsRef>)> {
    let (h, payload): (TemplateHeader, _) = open_container(TEMPLATE_MAGIC, bytes, path)?;
    let per_class = h.n + h.n * h.n;
    if payload.len() != 8 * per_class * h.priors.len() {
        return Err(LabError::format(path, "template payload length disagrees with header"));
    }
    let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let classes = values
        .chunks_exact(per_class)
        .zip(&h.priors)
        .enumerate()
        .map(|(i, (v, &prior))| {
            ClassTemplate::from_covariance(v[..h.n].to_vec(), v[h.n..].to_vec(), prior)
                .ok_or_else(|| LabError::format(path, format!("class {i} covariance is not positive definite")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((TemplateModel { n: h.n, classes, regularization: h.regularization }, h.stats))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LabError::io(path, e))
}

/// Writes `stats` as JSON and returns the reference models store.
pub fn save_stats(path: &Path, stats: &StandardizationStats) -> Result<StatsRef> {
    let bytes = serde_json::to_vec(stats).expect("stats serialize");
    fs::write(path, &bytes).map_err(|e| LabError::io(path, e))?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(StatsRef { path: name, sha256: sha256_hex(&bytes) })
}

/// Loads the statistics a model refers to, resolved next to the model file.
pub fn load_stats(model_path: &Path, r: &StatsRef) -> Result<StandardizationStats> {
    let path = model_path.with_file_name(&r.path);
    let bytes = read(&path)?;
    if sha256_hex(&bytes) != r.sha256 {
        return Err(LabError::format(&path, "content hash differs from the one recorded by the model"));
    }
    serde_json::from_slice(&bytes).map_err(|e| LabError::format(&path, e.to_string()))
}

pub fn save_network(path: &Path, model: &NeuralModel, stats: Option<StatsRef>) -> Result<()> {
    fs::write(path, encode_network(model, stats)).map_err(|e| LabError::io(path, e))
}

/// Loads a network and attaches its statistics when it names any.
pub fn load_network(path: &Path) -> Result<NeuralModel> {
    let (model, stats) = decode_network(&read(path)?, path)?;
    Ok(match stats {
        Some(r) => model.with_stats(load_stats(path, &r)?),
        None => model,
    })
}

pub fn save_template(path: &Path, model: &TemplateModel, stats: Option<StatsRef>) -> Result<()> {
    fs::write(path, encode_template(model, stats)).map_err(|e| LabError::io(path, e))
}

pub fn load_template(path: &Path) -> Result<(TemplateModel, Option<StandardizationStats>)> {
    let (model, stats) = decode_template(&read(path)?, path)?;
    let stats = stats.map(|r| load_stats(path, &r)).transpose()?;
    Ok((model, stats))
}
