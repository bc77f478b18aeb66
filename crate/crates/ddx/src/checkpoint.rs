//! Versioned JSON checkpoints. Each tensor is stored as its shape and a
//! base64 payload of row-major little-endian `f64`s, so a round trip is
//! bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use ddx_core::corpus::ActCatalogue;
use ddx_core::numerics::{ParamStore, Tensor2};
use ddx_core::pipeline::{Model, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::data::{self, DataError};

pub const FORMAT: &str = "ddx-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (format `{0}`)")]
    Format(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("tensor `{name}`: {message}")]
    Tensor { name: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: [usize; 2],
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    /// Config the parameters were built for.
    pub config: PipelineConfig,
    pub tensors: BTreeMap<String, TensorEntry>,
    pub act_thresholds: TensorEntry,
}

pub fn encode_tensor(t: &Tensor2) -> TensorEntry {
    let (rows, cols) = t.shape();
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for x in t.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    TensorEntry {
        shape: [rows, cols],
        data: STANDARD.encode(bytes),
    }
}

pub fn decode_tensor(name: &str, e: &TensorEntry) -> Result<Tensor2, CheckpointError> {
    let fail = |message: String| CheckpointError::Tensor {
        name: name.to_string(),
        message,
    };
    let bytes = STANDARD.decode(&e.data).map_err(|err| fail(err.to_string()))?;
    let [rows, cols] = e.shape;
    if bytes.len() != rows * cols * 8 {
        return Err(fail(format!("payload has {} bytes, shape {rows}x{cols} needs {}", bytes.len(), rows * cols * 8)));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor2::new(rows, cols, data).map_err(|err| fail(err.to_string()))
}

pub fn to_manifest(model: &Model, config: &PipelineConfig) -> Manifest {
    let thresholds = Tensor2::new(1, model.act_thresholds.len(), model.act_thresholds.clone())
        .expect("thresholds are finite");
    Manifest {
        format: FORMAT.into(),
        version: VERSION,
        config: config.clone(),
        tensors: model.params.iter().map(|(k, v)| (k.clone(), encode_tensor(v))).collect(),
        act_thresholds: encode_tensor(&thresholds),
    }
}

pub fn from_manifest(m: &Manifest) -> Result<(Model, PipelineConfig), CheckpointError> {
    if m.format != FORMAT {
        return Err(CheckpointError::Format(m.format.clone()));
    }
    if m.version != VERSION {
        return Err(CheckpointError::Version(m.version));
    }
    let mut params = ParamStore::new();
    for (name, e) in &m.tensors {
        params.insert(name.clone(), decode_tensor(name, e)?);
    }
    let act_thresholds = decode_tensor("act_thresholds", &m.act_thresholds)?.data().to_vec();
    Ok((Model { params, act_thresholds }, m.config.clone()))
}

/// Compact JSON with a trailing newline. Identical models give identical bytes.
pub fn encode(model: &Model, config: &PipelineConfig) -> String {
    let mut s = serde_json::to_string(&to_manifest(model, config)).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn decode(path: &Path, text: &str) -> Result<(Model, PipelineConfig), CheckpointError> {
    from_manifest(&data::parse_json(path, text)?)
}

pub fn save(path: &Path, model: &Model, config: &PipelineConfig) -> Result<(), CheckpointError> {
    Ok(data::write(path, &encode(model, config))?)
}

pub fn load(path: &Path) -> Result<(Model, PipelineConfig), CheckpointError> {
    decode(path, &data::read(path)?)
}

/// `thresholds.json`: tuned act thresholds by act id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub version: u32,
    pub thresholds: BTreeMap<String, f64>,
    /// Acts with no positive validation label; they keep the default.
    #[serde(default)]
    pub absent: Vec<String>,
}

impl Thresholds {
    pub fn from_model(model: &Model, acts: &ActCatalogue, absent: Vec<String>) -> Self {
        Self {
            version: VERSION,
            thresholds: acts.ids().map(str::to_string).zip(model.act_thresholds.iter().copied()).collect(),
            absent,
        }
    }

    /// Thresholds in catalogue order; every act must be present.
    pub fn in_catalogue_order(&self, acts: &ActCatalogue) -> Result<Vec<f64>, String> {
        acts.ids()
            .map(|id| self.thresholds.get(id).copied().ok_or_else(|| format!("no threshold for act `{id}`")))
            .collect()
    }
}
