//! The mixture-of-views model.
//!
//! A gating network reads the concatenation of all views and produces a
//! distribution over views; expert `i` reads view `i` alone and produces a
//! class distribution. The model's class distribution is the
//! gate-weighted average of the expert distributions:
//!
//! ```text
//! p(y = c | x) = Σ_i p(i | x; gate) · p(y = c | x_i; expert_i)
//! ```
//!
//! Training maximizes the mean log-likelihood of that mixture plus `λ`
//! times the sum of the experts' standalone log-likelihoods; internally we
//! minimize the negation. The gradient is assembled from the posterior
//! view weights `w_i ∝ p(i|x) · p(y|x_i)`: expert `i` receives `w_i` times
//! its own log-likelihood gradient (plus `λ` times the same), and the gate
//! logits receive `w − gate_weights`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::MultiViewSample;
use crate::error::{Error, Result};
use crate::nn::{self, ForwardCache, MlpParams, Mode, Parameters};
use crate::rng::{self, Rng};
use crate::train::Classifier;

/// How view weights are produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Gate {
    /// A network over the concatenated views with one logit per view.
    Learned(MlpParams),
    /// Constant `1/m`, the decision-averaging baseline.
    Uniform,
}

/// Gate plus one expert per view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovParams {
    gate: Gate,
    experts: Vec<MlpParams>,
    view_dims: Vec<usize>,
    classes: usize,
}

impl MovParams {
    pub fn new(gate: Gate, experts: Vec<MlpParams>) -> Result<Self> {
        let first = experts
            .first()
            .ok_or_else(|| Error::InvalidConfig("at least one expert is required".into()))?;
        let classes = first.output_size();
        if classes < 2 {
            return Err(Error::InvalidConfig("experts need at least two class outputs".into()));
        }
        for (i, e) in experts.iter().enumerate() {
            if e.output_size() != classes {
                return Err(Error::shape(format!("expert {i} outputs"), classes, e.output_size()));
            }
        }
        let view_dims: Vec<usize> = experts.iter().map(MlpParams::input_size).collect();
        if let Gate::Learned(g) = &gate {
            let total: usize = view_dims.iter().sum();
            if g.input_size() != total {
                return Err(Error::shape("gate input", total, g.input_size()));
            }
            if g.output_size() != experts.len() {
                return Err(Error::shape("gate outputs", experts.len(), g.output_size()));
            }
        }
        Ok(MovParams {
            gate,
            experts,
            view_dims,
            classes,
        })
    }

    pub fn gate(&self) -> &Gate {
        &self.gate
    }

    pub fn gate_mut(&mut self) -> &mut Gate {
        &mut self.gate
    }

    pub fn experts(&self) -> &[MlpParams] {
        &self.experts
    }

    pub fn experts_mut(&mut self) -> &mut [MlpParams] {
        &mut self.experts
    }

    pub fn num_views(&self) -> usize {
        self.experts.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn view_dims(&self) -> &[usize] {
        &self.view_dims
    }

    /// Sets every gate parameter to zero, making the gate uniform.
    pub fn zero_gate(&mut self) {
        if let Gate::Learned(g) = &mut self.gate {
            g.blocks_mut().into_iter().for_each(|b| b.fill(0.0));
        }
    }
}

impl Parameters for MovParams {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut out = match &self.gate {
            Gate::Learned(g) => g.blocks(),
            Gate::Uniform => Vec::new(),
        };
        self.experts.iter().for_each(|e| out.extend(e.blocks()));
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = match &mut self.gate {
            Gate::Learned(g) => g.blocks_mut(),
            Gate::Uniform => Vec::new(),
        };
        self.experts.iter_mut().for_each(|e| out.extend(e.blocks_mut()));
        out
    }

    fn block_names(&self) -> Vec<alloc::string::String> {
        let mut out = Vec::new();
        if let Gate::Learned(g) = &self.gate {
            out.extend(g.block_names().into_iter().map(|n| format!("gate.{n}")));
        }
        for (i, e) in self.experts.iter().enumerate() {
            out.extend(e.block_names().into_iter().map(|n| format!("expert{i}.{n}")));
        }
        out
    }
}

/// Layer layout of a mixture model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovArchitecture {
    pub view_dims: Vec<usize>,
    pub classes: usize,
    pub expert_hidden: Vec<usize>,
    pub gate_hidden: Vec<usize>,
}

impl MovArchitecture {
    /// Expert hidden layers 24/24 and gate hidden layers 3/3.
    pub fn standard(view_dims: &[usize], classes: usize) -> Self {
        MovArchitecture {
            view_dims: view_dims.to_vec(),
            classes,
            expert_hidden: vec![24, 24],
            gate_hidden: vec![3, 3],
        }
    }

    fn expert_sizes(&self, view: usize) -> Vec<usize> {
        let mut s = vec![self.view_dims[view]];
        s.extend(&self.expert_hidden);
        s.push(self.classes);
        s
    }

    fn experts(&self, seed: u64) -> Result<Vec<MlpParams>> {
        (0..self.view_dims.len())
            .map(|i| nn::init_mlp(&self.expert_sizes(i), rng::derive(seed, &[i as u64 + 1])))
            .collect()
    }

    /// Random initialization. Expert `i` is seeded independently of the
    /// gate, so models that differ only in their gate share experts.
    pub fn init(&self, seed: u64) -> Result<MovParams> {
        let mut gate_sizes = vec![self.view_dims.iter().sum()];
        gate_sizes.extend(&self.gate_hidden);
        gate_sizes.push(self.view_dims.len());
        let gate = nn::init_mlp(&gate_sizes, rng::derive(seed, &[0]))?;
        MovParams::new(Gate::Learned(gate), self.experts(seed)?)
    }

    pub fn init_uniform_gate(&self, seed: u64) -> Result<MovParams> {
        MovParams::new(Gate::Uniform, self.experts(seed)?)
    }
}

/// Distributions produced for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovPrediction {
    pub gate_weights: Vec<f64>,
    pub expert_dists: Vec<Vec<f64>>,
    pub mixture_dist: Vec<f64>,
}

/// Posterior over views given the true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorWeights {
    pub w: Vec<f64>,
}

/// Dropout settings for one pass over a batch.
///
/// Network `j` (0 = gate, `i + 1` = expert `i`) draws its masks from ChaCha
/// stream `j` of `seed`, sample after sample in batch order. Repeating a
/// pass with the same spec reproduces the masks exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    pub rate: f64,
    pub seed: u64,
    pub gate: bool,
}

struct MaskSource {
    rate: f64,
    gate: Option<Rng>,
    experts: Vec<Rng>,
}

impl MaskSource {
    fn new(spec: Option<&DropoutSpec>, views: usize) -> Option<Self> {
        spec.filter(|s| s.rate > 0.0).map(|s| MaskSource {
            rate: s.rate,
            gate: s.gate.then(|| rng::stream(s.seed, 0)),
            experts: (0..views).map(|i| rng::stream(s.seed, i as u64 + 1)).collect(),
        })
    }
}

fn mode(rate: f64, rng: Option<&mut Rng>) -> Mode<'_> {
    match rng {
        Some(rng) => Mode::Train {
            dropout_rate: rate,
            rng,
        },
        None => Mode::Infer,
    }
}

/// Everything computed for one sample on the way to the loss.
pub(crate) struct Trace {
    pub gate_cache: Option<ForwardCache>,
    pub expert_caches: Vec<ForwardCache>,
    pub log_gate: Vec<f64>,
    pub log_expert: Vec<Vec<f64>>,
}

fn check_views(params: &MovParams, views: &[Vec<f64>]) -> Result<()> {
    if views.len() != params.num_views() {
        return Err(Error::shape("views", params.num_views(), views.len()));
    }
    for (i, (x, &d)) in views.iter().zip(&params.view_dims).enumerate() {
        if x.len() != d {
            return Err(Error::shape(format!("view {i}"), d, x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature in view {i}")));
        }
    }
    Ok(())
}

fn trace(params: &MovParams, views: &[Vec<f64>], masks: Option<&mut MaskSource>) -> Result<Trace> {
    check_views(params, views)?;
    let (rate, mut gate_rng, mut expert_rngs) = match masks {
        Some(m) => (m.rate, m.gate.as_mut(), Some(&mut m.experts)),
        None => (0.0, None, None),
    };
    let (gate_cache, log_gate) = match &params.gate {
        Gate::Learned(g) => {
            let input = views.concat();
            let cache = g.forward(&input, mode(rate, gate_rng.take()))?;
            let lg = nn::log_softmax(cache.logits())?;
            (Some(cache), lg)
        }
        Gate::Uniform => (None, nn::log_softmax(&vec![0.0; params.num_views()])?),
    };
    let mut expert_caches = Vec::with_capacity(params.num_views());
    let mut log_expert = Vec::with_capacity(params.num_views());
    for (i, (e, x)) in params.experts.iter().zip(views).enumerate() {
        let r = expert_rngs.as_deref_mut().map(|rs| &mut rs[i]);
        let cache = e.forward(x, mode(rate, r))?;
        log_expert.push(nn::log_softmax(cache.logits())?);
        expert_caches.push(cache);
    }
    Ok(Trace {
        gate_cache,
        expert_caches,
        log_gate,
        log_expert,
    })
}

/// Pre-activations of every hidden unit of every network for a batch,
/// under the given dropout. Used to keep finite-difference probes away
/// from ReLU kinks.
pub(crate) fn hidden_pre_activations(
    params: &MovParams,
    batch: &[MultiViewSample],
    dropout: Option<&DropoutSpec>,
) -> Result<Vec<f64>> {
    let mut masks = MaskSource::new(dropout, params.num_views());
    let mut out = Vec::new();
    for s in batch {
        let t = trace(params, &s.views, masks.as_mut())?;
        for cache in t.gate_cache.iter().chain(&t.expert_caches) {
            let n = cache.pre_activations.len();
            cache.pre_activations[..n - 1].iter().for_each(|z| out.extend(z));
        }
    }
    Ok(out)
}

fn exp_all(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| libm::exp(x)).collect()
}

fn prediction(params: &MovParams, t: &Trace) -> Result<MovPrediction> {
    let gate_weights = match &t.gate_cache {
        Some(c) => nn::softmax(c.logits())?,
        None => nn::softmax(&vec![0.0; params.num_views()])?,
    };
    let expert_dists: Vec<Vec<f64>> = t
        .expert_caches
        .iter()
        .map(|c| nn::softmax(c.logits()))
        .collect::<Result<_>>()?;
    let mut mixture_dist = vec![0.0; params.classes];
    for (a, p) in gate_weights.iter().zip(&expert_dists) {
        mixture_dist.iter_mut().zip(p).for_each(|(m, pc)| *m += a * pc);
    }
    Ok(MovPrediction {
        gate_weights,
        expert_dists,
        mixture_dist,
    })
}

/// Mixture prediction for one sample. `dropout` selects train mode.
pub fn forward(params: &MovParams, views: &[Vec<f64>], dropout: Option<&DropoutSpec>) -> Result<MovPrediction> {
    let mut masks = MaskSource::new(dropout, params.num_views());
    let t = trace(params, views, masks.as_mut())?;
    prediction(params, &t)
}

/// `log Σ_i p(i|x) p(y|x_i)` from log-probabilities.
fn log_mixture_likelihood(t: &Trace, label: usize) -> f64 {
    let terms: Vec<f64> = t
        .log_gate
        .iter()
        .zip(&t.log_expert)
        .map(|(lg, le)| lg + le[label])
        .collect();
    nn::log_sum_exp(&terms)
}

fn check_label(params: &MovParams, label: usize) -> Result<()> {
    if label >= params.classes {
        return Err(Error::InvalidInput(format!(
            "label {label} outside 0..{}",
            params.classes
        )));
    }
    Ok(())
}

/// Mean per-sample log-likelihood of the mixture, inference mode.
pub fn log_likelihood(params: &MovParams, dataset: &[MultiViewSample]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::InvalidInput("log-likelihood of an empty dataset".into()));
    }
    let mut total = 0.0;
    for (t, s) in dataset.iter().enumerate() {
        check_label(params, s.label)?;
        let tr = trace(params, &s.views, None)?;
        let ll = log_mixture_likelihood(&tr, s.label);
        if !ll.is_finite() {
            return Err(Error::NonFinite(format!("log-likelihood of sample {t} ({})", s.id)));
        }
        total += ll;
    }
    Ok(total / dataset.len() as f64)
}

/// `w_i = p(i|x) p(y|x_i) / Σ_j p(j|x) p(y|x_j)`.
pub fn posterior_weights(prediction: &MovPrediction, label: usize) -> Result<PosteriorWeights> {
    let k = prediction.mixture_dist.len();
    if label >= k {
        return Err(Error::InvalidInput(format!("label {label} outside 0..{k}")));
    }
    let joint: Vec<f64> = prediction
        .gate_weights
        .iter()
        .zip(&prediction.expert_dists)
        .map(|(a, p)| a * p[label])
        .collect();
    let total: f64 = joint.iter().sum();
    if total == 0.0 {
        return Err(Error::DegeneratePosterior);
    }
    Ok(PosteriorWeights {
        w: joint.into_iter().map(|j| j / total).collect(),
    })
}

/// Weights of the composite objective
/// `mixture_weight · L + λ · Σ_i L_i`, each term a mean per-sample log-likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub lambda: f64,
    pub mixture_weight: f64,
}

impl Objective {
    pub fn composite(lambda: f64) -> Self {
        Objective {
            lambda,
            mixture_weight: 1.0,
        }
    }
}

/// Loss (the negated objective) and its gradient for one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Backward {
    pub loss: f64,
    pub gradients: MovParams,
}

/// Composite objective `L + λ Σ_i L_i` (mean per sample) on a batch.
pub fn composite_objective(
    params: &MovParams,
    batch: &[MultiViewSample],
    objective: &Objective,
    dropout: Option<&DropoutSpec>,
) -> Result<f64> {
    Ok(-run_batch(params, batch, objective, dropout, false)?.loss)
}

/// Negated composite objective and its exact gradient.
///
/// Dropout masks are drawn once per sample and shared by the mixture term,
/// the `λ` terms and the backward pass.
pub fn backward(
    params: &MovParams,
    batch: &[MultiViewSample],
    objective: &Objective,
    dropout: Option<&DropoutSpec>,
) -> Result<Backward> {
    run_batch(params, batch, objective, dropout, true)
}

fn run_batch(
    params: &MovParams,
    batch: &[MultiViewSample],
    objective: &Objective,
    dropout: Option<&DropoutSpec>,
    with_gradient: bool,
) -> Result<Backward> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut masks = MaskSource::new(dropout, params.num_views());
    let mut grads = params.zeroed();
    let mut total = 0.0;
    for (t, s) in batch.iter().enumerate() {
        check_label(params, s.label)?;
        let tr = trace(params, &s.views, masks.as_mut())?;
        let y = s.label;
        let log_q = log_mixture_likelihood(&tr, y);
        let own: f64 = tr.log_expert.iter().map(|le| le[y]).sum();
        let value = objective.mixture_weight * log_q + objective.lambda * own;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("objective at sample {t} ({})", s.id)));
        }
        total += value;
        if !with_gradient {
            continue;
        }
        // posterior view weights, in log space
        let w: Vec<f64> = tr
            .log_gate
            .iter()
            .zip(&tr.log_expert)
            .map(|(lg, le)| libm::exp(lg + le[y] - log_q))
            .collect();
        if let (Some(cache), Gate::Learned(g), Gate::Learned(gg)) =
            (&tr.gate_cache, &params.gate, &mut grads.gate)
        {
            let a = exp_all(&tr.log_gate);
            let dg: Vec<f64> = w
                .iter()
                .zip(&a)
                .map(|(wi, ai)| -scale * objective.mixture_weight * (wi - ai))
                .collect();
            g.backward_into(cache, &dg, gg)?;
        }
        for (i, (cache, le)) in tr.expert_caches.iter().zip(&tr.log_expert).enumerate() {
            let coeff = objective.mixture_weight * w[i] + objective.lambda;
            let p = exp_all(le);
            let dz: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(c, pc)| -scale * coeff * (if c == y { 1.0 } else { 0.0 } - pc))
                .collect();
            if dz.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("expert {i} gradient at sample {t} ({})", s.id)));
            }
            params.experts[i].backward_into(cache, &dz, &mut grads.experts[i])?;
        }
    }
    Ok(Backward {
        loss: -total * scale,
        gradients: grads,
    })
}

/// Argmax of the mixture distribution, ties to the lowest class index.
pub fn predict(params: &MovParams, views: &[Vec<f64>]) -> Result<(usize, Vec<f64>)> {
    let p = forward(params, views, None)?;
    Ok((argmax(&p.mixture_dist), p.mixture_dist))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// A mixture classifier as seen by the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub params: MovParams,
    /// Gate gradients are discarded, so the gate keeps its initial values.
    pub freeze_gate: bool,
    /// When false the experts are trained only on their own likelihoods.
    pub joint: bool,
    /// Whether dropout also applies to the gate network.
    pub gate_dropout: bool,
}

impl MixtureModel {
    pub fn new(params: MovParams) -> Self {
        MixtureModel {
            params,
            freeze_gate: false,
            joint: true,
            gate_dropout: true,
        }
    }

    pub fn objective(&self, lambda: f64) -> Objective {
        if self.joint {
            Objective::composite(lambda)
        } else {
            Objective {
                lambda: 1.0,
                mixture_weight: 0.0,
            }
        }
    }

    pub fn predict_full(&self, views: &[Vec<f64>]) -> Result<MovPrediction> {
        forward(&self.params, views, None)
    }
}

impl Classifier for MixtureModel {
    type Params = MovParams;

    fn params(&self) -> &MovParams {
        &self.params
    }

    fn params_mut(&mut self) -> &mut MovParams {
        &mut self.params
    }

    fn loss_and_gradient(
        &self,
        batch: &[MultiViewSample],
        lambda: f64,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<(f64, MovParams)> {
        let spec = DropoutSpec {
            rate: dropout_rate,
            seed,
            gate: self.gate_dropout,
        };
        let mut out = backward(&self.params, batch, &self.objective(lambda), Some(&spec))?;
        if self.freeze_gate {
            if let Gate::Learned(g) = &mut out.gradients.gate {
                g.blocks_mut().into_iter().for_each(|b| b.fill(0.0));
            }
        }
        Ok((out.loss, out.gradients))
    }

    fn validation_loss(&self, samples: &[MultiViewSample]) -> Result<f64> {
        Ok(-log_likelihood(&self.params, samples)?)
    }

    fn predict_proba(&self, views: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.predict_full(views)?.mixture_dist)
    }
}
