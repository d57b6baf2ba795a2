//! Comparison models: one view alone, decision averaging, and feature
//! concatenation. All of them share the [`Classifier`] contract with the
//! mixture model, and [`Model`] wraps every kind behind one type.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::data::MultiViewSample;
use crate::error::{Error, Result};
use crate::mov::{MixtureModel, MovArchitecture, MovPrediction};
use crate::nn::{self, MlpParams, Mode};
use crate::rng;
use crate::train::{self, Classifier, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Classifier on one view's features only.
    SingleView(usize),
    /// Mixture with the gate fixed to `1/m`.
    Avg,
    /// One network on the concatenated views.
    Concat,
    /// Mixture of views with a learned gate.
    Mov,
}

impl ModelKind {
    /// Short name used in reports and file names.
    pub fn name(&self, view_names: &[String]) -> String {
        match self {
            ModelKind::SingleView(v) => view_names.get(*v).cloned().unwrap_or_else(|| format!("view{v}")),
            ModelKind::Avg => "avg".into(),
            ModelKind::Concat => "concat".into(),
            ModelKind::Mov => "mov".into(),
        }
    }

    /// Every single-view model, then Avg, Concat and MoV.
    pub fn lineup(views: usize) -> Vec<ModelKind> {
        let mut out: Vec<ModelKind> = (0..views).map(ModelKind::SingleView).collect();
        out.extend([ModelKind::Avg, ModelKind::Concat, ModelKind::Mov]);
        out
    }

    pub fn uses_lambda(&self) -> bool {
        matches!(self, ModelKind::Avg | ModelKind::Mov)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::SingleView(v) => write!(f, "single_view({v})"),
            ModelKind::Avg => f.write_str("avg"),
            ModelKind::Concat => f.write_str("concat"),
            ModelKind::Mov => f.write_str("mov"),
        }
    }
}

/// Hidden layer sizes of experts (and of single-view/concat networks)
/// and of the gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub hidden: Vec<usize>,
    pub gate_hidden: Vec<usize>,
}

impl Default for LayerConfig {
    fn default() -> Self {
        LayerConfig {
            hidden: vec![24, 24],
            gate_hidden: vec![3, 3],
        }
    }
}

/// Which part of a sample an [`MlpModel`] reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputSelector {
    View(usize),
    Concat,
}

impl InputSelector {
    fn select(&self, views: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            InputSelector::View(v) => views
                .get(*v)
                .cloned()
                .ok_or_else(|| Error::shape("views", v + 1, views.len())),
            InputSelector::Concat => Ok(views.concat()),
        }
    }
}

/// A plain MLP classifier trained on its own negative log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub net: MlpParams,
    pub input: InputSelector,
}

impl Classifier for MlpModel {
    type Params = MlpParams;

    fn params(&self) -> &MlpParams {
        &self.net
    }

    fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.net
    }

    fn loss_and_gradient(
        &self,
        batch: &[MultiViewSample],
        _lambda: f64,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<(f64, MlpParams)> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut r = rng::stream(seed, 1);
        let mut grads = nn::Parameters::zeroed(&self.net);
        let mut total = 0.0;
        for (t, s) in batch.iter().enumerate() {
            let x = self.input.select(&s.views)?;
            let mode = if dropout_rate > 0.0 {
                Mode::Train {
                    dropout_rate,
                    rng: &mut r,
                }
            } else {
                Mode::Infer
            };
            let cache = self.net.forward(&x, mode)?;
            let logp = nn::log_softmax(cache.logits())?;
            let ll = *logp
                .get(s.label)
                .ok_or_else(|| Error::InvalidInput(format!("label {} out of range", s.label)))?;
            if !ll.is_finite() {
                return Err(Error::NonFinite(format!("log-likelihood at sample {t} ({})", s.id)));
            }
            total += ll;
            let dz: Vec<f64> = logp
                .iter()
                .enumerate()
                .map(|(c, lp)| -scale * (if c == s.label { 1.0 } else { 0.0 } - libm::exp(*lp)))
                .collect();
            self.net.backward_into(&cache, &dz, &mut grads)?;
        }
        Ok((-total * scale, grads))
    }

    fn validation_loss(&self, samples: &[MultiViewSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("empty validation set".into()));
        }
        let mut total = 0.0;
        for s in samples {
            let cache = self.net.forward(&self.input.select(&s.views)?, Mode::Infer)?;
            let logp = nn::log_softmax(cache.logits())?;
            total += logp
                .get(s.label)
                .ok_or_else(|| Error::InvalidInput(format!("label {} out of range", s.label)))?;
        }
        Ok(-total / samples.len() as f64)
    }

    fn predict_proba(&self, views: &[Vec<f64>]) -> Result<Vec<f64>> {
        let cache = self.net.forward(&self.input.select(views)?, Mode::Infer)?;
        nn::softmax(cache.logits())
    }
}

fn mlp_sizes(input: usize, hidden: &[usize], classes: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend(hidden);
    s.push(classes);
    s
}

/// MLP on view `view` only.
pub fn single_view_model(
    view_dims: &[usize],
    classes: usize,
    view: usize,
    layers: &LayerConfig,
    seed: u64,
) -> Result<MlpModel> {
    let dim = *view_dims.get(view).ok_or_else(|| {
        Error::InvalidConfig(format!("view index {view} out of range for {} views", view_dims.len()))
    })?;
    // same seed path as expert `view` of a mixture
    let net = nn::init_mlp(
        &mlp_sizes(dim, &layers.hidden, classes),
        rng::derive(seed, &[view as u64 + 1]),
    )?;
    Ok(MlpModel {
        net,
        input: InputSelector::View(view),
    })
}

/// Mixture whose gate is the constant `1/m`.
pub fn avg_fusion_model(view_dims: &[usize], classes: usize, layers: &LayerConfig, seed: u64) -> Result<MixtureModel> {
    if view_dims.len() < 2 {
        return Err(Error::InvalidConfig("decision averaging needs at least two views".into()));
    }
    let arch = MovArchitecture {
        view_dims: view_dims.to_vec(),
        classes,
        expert_hidden: layers.hidden.clone(),
        gate_hidden: layers.gate_hidden.clone(),
    };
    Ok(MixtureModel::new(arch.init_uniform_gate(seed)?))
}

/// One MLP over the concatenation of all views.
pub fn concat_fusion_model(view_dims: &[usize], classes: usize, layers: &LayerConfig, seed: u64) -> Result<MlpModel> {
    let total = view_dims.iter().sum();
    let net = nn::init_mlp(&mlp_sizes(total, &layers.hidden, classes), rng::derive(seed, &[0x00C0_FFEE]))?;
    Ok(MlpModel {
        net,
        input: InputSelector::Concat,
    })
}

pub fn mov_model(view_dims: &[usize], classes: usize, layers: &LayerConfig, seed: u64) -> Result<MixtureModel> {
    let arch = MovArchitecture {
        view_dims: view_dims.to_vec(),
        classes,
        expert_hidden: layers.hidden.clone(),
        gate_hidden: layers.gate_hidden.clone(),
    };
    Ok(MixtureModel::new(arch.init(seed)?))
}

/// Any of the compared models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Mixture { kind: ModelKind, model: MixtureModel },
    Mlp { kind: ModelKind, model: MlpModel },
}

impl Model {
    pub fn build(kind: ModelKind, view_dims: &[usize], classes: usize, layers: &LayerConfig, seed: u64) -> Result<Self> {
        Ok(match kind {
            ModelKind::SingleView(v) => Model::Mlp {
                kind,
                model: single_view_model(view_dims, classes, v, layers, seed)?,
            },
            ModelKind::Concat => Model::Mlp {
                kind,
                model: concat_fusion_model(view_dims, classes, layers, seed)?,
            },
            ModelKind::Avg => Model::Mixture {
                kind,
                model: avg_fusion_model(view_dims, classes, layers, seed)?,
            },
            ModelKind::Mov => Model::Mixture {
                kind,
                model: mov_model(view_dims, classes, layers, seed)?,
            },
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Mixture { kind, .. } | Model::Mlp { kind, .. } => *kind,
        }
    }

    pub fn train(&self, train: &[MultiViewSample], val: &[MultiViewSample], config: &TrainConfig) -> Result<(Model, TrainHistory)> {
        Ok(match self {
            Model::Mixture { kind, model } => {
                let (m, h) = train::fit(model, train, val, config)?;
                (Model::Mixture { kind: *kind, model: m }, h)
            }
            Model::Mlp { kind, model } => {
                let (m, h) = train::fit(model, train, val, config)?;
                (Model::Mlp { kind: *kind, model: m }, h)
            }
        })
    }

    pub fn predict_proba(&self, views: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Model::Mixture { model, .. } => model.predict_proba(views),
            Model::Mlp { model, .. } => model.predict_proba(views),
        }
    }

    /// Label (ties to the lowest index) and class distribution.
    pub fn predict(&self, views: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
        let p = self.predict_proba(views)?;
        Ok((crate::mov::argmax(&p), p))
    }

    /// Full mixture output, for mixture models only.
    pub fn mixture_prediction(&self, views: &[Vec<f64>]) -> Option<Result<MovPrediction>> {
        match self {
            Model::Mixture { model, .. } => Some(model.predict_full(views)),
            Model::Mlp { .. } => None,
        }
    }

    pub fn validation_loss(&self, samples: &[MultiViewSample]) -> Result<f64> {
        match self {
            Model::Mixture { model, .. } => model.validation_loss(samples),
            Model::Mlp { model, .. } => model.validation_loss(samples),
        }
    }
}
