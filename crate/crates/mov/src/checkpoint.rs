//! MOV1 checkpoints.
//!
//! Layout: the four bytes `MOV1`, a little-endian u64 header length, the
//! header as UTF-8 JSON, then little-endian f64 values: standardization
//! means, standardization stds (both view-major), and the model
//! parameters in block order.

use std::io::Write as _;
use std::path::Path;

use mov_core::baselines::LayerConfig;
use mov_core::data::StandardizationStats;
use mov_core::mov::Gate;
use mov_core::{Model, ModelKind, Parameters, ViewSchema};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"MOV1";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub schema_version: u32,
    pub kind: ModelKind,
    pub model_name: String,
    /// Number of views.
    pub m: usize,
    /// Number of classes.
    pub k: usize,
    pub view_names: Vec<String>,
    pub view_dims: Vec<usize>,
    pub class_names: Vec<String>,
    pub hidden: Vec<usize>,
    pub gate_hidden: Vec<usize>,
    /// Layer sizes of every network: the gate first (mixtures with a
    /// learned gate), then the experts; a single entry for plain networks.
    pub layer_sizes: Vec<Vec<usize>>,
    pub lambda: f64,
    pub dropout: f64,
    pub seed: u64,
    pub freeze_gate: bool,
    pub joint: bool,
    pub gate_dropout: bool,
    pub standardization_values: usize,
    pub param_count: usize,
}

/// A trained model with everything needed to score raw feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub standardization: StandardizationStats,
    pub model: Model,
}

fn flatten(model: &Model) -> Vec<f64> {
    match model {
        Model::Mixture { model, .. } => model.params.flatten(),
        Model::Mlp { model, .. } => model.net.flatten(),
    }
}

fn assign(model: &mut Model, values: &[f64]) -> mov_core::Result<()> {
    match model {
        Model::Mixture { model, .. } => model.params.assign_flat(values),
        Model::Mlp { model, .. } => model.net.assign_flat(values),
    }
}

fn layer_sizes(model: &Model) -> Vec<Vec<usize>> {
    match model {
        Model::Mixture { model, .. } => {
            let mut out = Vec::new();
            if let Gate::Learned(g) = model.params.gate() {
                out.push(g.layer_sizes().to_vec());
            }
            out.extend(model.params.experts().iter().map(|e| e.layer_sizes().to_vec()));
            out
        }
        Model::Mlp { model, .. } => vec![model.net.layer_sizes().to_vec()],
    }
}

fn mixture_flags(model: &Model) -> (bool, bool, bool) {
    match model {
        Model::Mixture { model, .. } => (model.freeze_gate, model.joint, model.gate_dropout),
        Model::Mlp { .. } => (false, true, false),
    }
}

/// Everything about the training run a checkpoint records besides the
/// parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub layers: LayerConfig,
    pub lambda: f64,
    pub dropout: f64,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(schema: &ViewSchema, model: Model, standardization: StandardizationStats, record: TrainingRecord) -> Self {
        let (freeze_gate, joint, gate_dropout) = mixture_flags(&model);
        let kind = model.kind();
        let header = CheckpointHeader {
            schema_version: SCHEMA_VERSION,
            kind,
            model_name: kind.name(&schema.view_names),
            m: schema.num_views(),
            k: schema.num_classes(),
            view_names: schema.view_names.clone(),
            view_dims: schema.view_dims.clone(),
            class_names: schema.class_names.clone(),
            hidden: record.layers.hidden,
            gate_hidden: record.layers.gate_hidden,
            layer_sizes: layer_sizes(&model),
            lambda: record.lambda,
            dropout: record.dropout,
            seed: record.seed,
            freeze_gate,
            joint,
            gate_dropout,
            standardization_values: 2 * schema.total_dim(),
            param_count: flatten(&model).len(),
        };
        Checkpoint {
            header,
            standardization,
            model,
        }
    }

    pub fn schema(&self) -> Result<ViewSchema> {
        Ok(ViewSchema::new(
            self.header.view_names.clone(),
            self.header.view_dims.clone(),
            self.header.class_names.clone(),
        )?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + 8 * (self.header.standardization_values + self.header.param_count));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        let values = self
            .standardization
            .mean
            .iter()
            .flatten()
            .chain(self.standardization.std.iter().flatten())
            .copied()
            .chain(flatten(&self.model));
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err("not a MOV1 checkpoint".into());
        }
        let len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..).unwrap_or_default();
        if body.len() < len {
            return Err("truncated MOV1 header".into());
        }
        let header: CheckpointHeader =
            serde_json::from_slice(&body[..len]).map_err(|e| format!("malformed MOV1 header: {e}"))?;
        if header.schema_version != SCHEMA_VERSION {
            return Err(format!(
                "MOV1 schema version {} is not supported (expected {SCHEMA_VERSION})",
                header.schema_version
            ));
        }
        let payload = &body[len..];
        let expected = header.standardization_values + header.param_count;
        if payload.len() != 8 * expected {
            return Err(format!("expected {expected} stored values, found {} bytes", payload.len()));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let total: usize = header.view_dims.iter().sum();
        if header.standardization_values != 2 * total || header.m != header.view_dims.len() {
            return Err("header sizes are inconsistent".into());
        }
        let split = |flat: &[f64]| {
            let mut it = flat.iter().copied();
            header
                .view_dims
                .iter()
                .map(|&d| it.by_ref().take(d).collect())
                .collect::<Vec<Vec<f64>>>()
        };
        let standardization = StandardizationStats {
            mean: split(&values[..total]),
            std: split(&values[total..2 * total]),
        };
        let layers = LayerConfig {
            hidden: header.hidden.clone(),
            gate_hidden: header.gate_hidden.clone(),
        };
        let mut model = Model::build(header.kind, &header.view_dims, header.k, &layers, 0).map_err(|e| e.to_string())?;
        if layer_sizes(&model) != header.layer_sizes {
            return Err("layer sizes do not match the recorded architecture".into());
        }
        assign(&mut model, &values[2 * total..]).map_err(|e| e.to_string())?;
        if let Model::Mixture { model, .. } = &mut model {
            model.freeze_gate = header.freeze_gate;
            model.joint = header.joint;
            model.gate_dropout = header.gate_dropout;
        }
        Ok(Checkpoint {
            header,
            standardization,
            model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|message| CliError::Checkpoint {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Errors unless `schema` has the views and classes the model was
    /// trained on.
    pub fn check_schema(&self, path: &Path, schema: &ViewSchema) -> Result<()> {
        let h = &self.header;
        if schema.view_names != h.view_names || schema.view_dims != h.view_dims || schema.class_names != h.class_names {
            return Err(CliError::Checkpoint {
                path: path.to_path_buf(),
                message: format!(
                    "MOV1 schema mismatch: checkpoint has views {:?} with sizes {:?} and classes {:?}, data has {:?} {:?} {:?}",
                    h.view_names, h.view_dims, h.class_names, schema.view_names, schema.view_dims, schema.class_names
                ),
            });
        }
        Ok(())
    }
}
