//! Run configuration, loaded from JSON or TOML.

use std::path::{Path, PathBuf};

use mov_core::data::SyntheticConfig;
use mov_core::experiment::Protocol;
use mov_core::{ModelKind, ViewSchema};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: fold plan, carving, initialization and dropout all
    /// derive from it.
    pub seed: u64,
    /// Fold workers for `compare`; defaults to the available parallelism.
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub schema: SchemaConfig,
    /// Models to compare, as `mov`, `avg`, `concat` or `single:<view>`.
    /// Empty means every single view, then avg, concat and mov.
    pub models: Vec<String>,
    /// Model trained by `train`.
    pub model: String,
    pub protocol: Protocol,
    pub delong: DeLongMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: None,
            out: None,
            data: DataConfig::default(),
            schema: SchemaConfig::default(),
            models: Vec::new(),
            model: "mov".into(),
            protocol: Protocol::default(),
            delong: DeLongMode::Pooled,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    /// Seed for the synthetic generator; the master seed when absent.
    pub synthetic_seed: Option<u64>,
    /// Keep only rows whose `group` column equals this value.
    pub group: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaConfig {
    /// Class names in label-index order; `negative, positive` by default.
    pub class_names: Option<Vec<String>>,
    /// Overrides the generic `v0, v1, ...` names of synthetic views.
    pub view_names: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeLongMode {
    /// One test on the predictions pooled over all folds.
    #[default]
    Pooled,
    /// The pooled test plus one test per fold.
    PerFold,
}

/// Where the samples come from, once the config has been checked.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic { config: SyntheticConfig, seed: u64 },
}

impl RunConfig {
    /// Reads a config file. `.toml` files are TOML, anything else JSON. A
    /// run manifest is accepted too, in which case its recorded config is
    /// used. Relative data paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let mut config: RunConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))?
        } else {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let inner = match value.get("config") {
                Some(c) if value.get("tool").is_some() => c.clone(),
                _ => value,
            };
            serde_json::from_value(inner).map_err(|e| bad(e.to_string()))?
        };
        if let (Some(csv), Some(dir)) = (&config.data.csv, path.parent()) {
            let joined = if csv.is_relative() { dir.join(csv) } else { csv.clone() };
            config.data.csv = Some(std::fs::canonicalize(&joined).unwrap_or(joined));
        }
        Ok(config)
    }

    fn invalid(&self, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: PathBuf::from("<config>"),
            message: message.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data_source()?;
        self.protocol.validate()?;
        if self.workers == Some(0) {
            return Err(self.invalid("workers must be at least 1"));
        }
        Ok(())
    }

    pub fn data_source(&self) -> Result<DataSource> {
        match (&self.data.csv, &self.data.synthetic) {
            (Some(p), None) => Ok(DataSource::Csv(p.clone())),
            (None, Some(s)) => Ok(DataSource::Synthetic {
                config: s.clone(),
                seed: self.data.synthetic_seed.unwrap_or(self.seed),
            }),
            _ => Err(self.invalid("exactly one of data.csv and data.synthetic must be set")),
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        self.schema
            .class_names
            .clone()
            .unwrap_or_else(|| vec!["negative".into(), "positive".into()])
    }

    /// Schema for synthetic data with the configured names applied.
    pub fn synthetic_schema(&self, view_dims: &[usize]) -> Result<ViewSchema> {
        let generic = ViewSchema::generic(view_dims);
        let names = self.schema.view_names.clone().unwrap_or(generic.view_names);
        Ok(ViewSchema::new(names, view_dims.to_vec(), self.class_names())?)
    }

    /// Models for `compare`, in report order.
    pub fn model_kinds(&self, schema: &ViewSchema) -> Result<Vec<ModelKind>> {
        if self.models.is_empty() {
            return Ok(ModelKind::lineup(schema.num_views()));
        }
        let mut kinds = Vec::with_capacity(self.models.len());
        for name in &self.models {
            let kind = parse_model(name, schema).map_err(|m| self.invalid(m))?;
            if kinds.contains(&kind) {
                return Err(self.invalid(format!("model {name} listed twice")));
            }
            kinds.push(kind);
        }
        Ok(kinds)
    }

    pub fn train_kind(&self, schema: &ViewSchema) -> Result<ModelKind> {
        parse_model(&self.model, schema).map_err(|m| self.invalid(m))
    }
}

/// `mov`, `avg`, `concat`, or `single:<view name or index>`.
pub fn parse_model(name: &str, schema: &ViewSchema) -> std::result::Result<ModelKind, String> {
    match name {
        "mov" => Ok(ModelKind::Mov),
        "avg" => Ok(ModelKind::Avg),
        "concat" => Ok(ModelKind::Concat),
        _ => {
            let view = name
                .strip_prefix("single:")
                .ok_or_else(|| format!("unknown model {name:?}; expected mov, avg, concat or single:<view>"))?;
            let idx = schema
                .view_names
                .iter()
                .position(|v| v == view)
                .or_else(|| view.parse::<usize>().ok().filter(|&i| i < schema.num_views()))
                .ok_or_else(|| format!("no view named {view:?}"))?;
            Ok(ModelKind::SingleView(idx))
        }
    }
}
