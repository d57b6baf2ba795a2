//! Dense feed-forward networks with hand-written reverse mode.
//!
//! Only the chain the mixture model needs: affine layers, ReLU between
//! them, inverted dropout after each hidden ReLU, and a linear output
//! layer whose logits are turned into distributions by [`softmax`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// One affine layer. Weights are row-major, `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl LayerParams {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LayerParams {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.inputs + inp]
    }

    #[inline]
    pub fn weight_mut(&mut self, out: usize, inp: usize) -> &mut f64 {
        &mut self.weights[out * self.inputs + inp]
    }

    fn affine(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x))
            .collect()
    }
}

/// Weights and biases of a multi-layer perceptron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    layer_sizes: Vec<usize>,
    layers: Vec<LayerParams>,
}

fn check_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "an MLP needs at least input and output sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer sizes must be positive, got {layer_sizes:?}"
        )));
    }
    Ok(())
}

impl MlpParams {
    /// All-zero network with the given shape.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_layer_sizes(layer_sizes)?;
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            layers: layer_sizes
                .windows(2)
                .map(|w| LayerParams::zeros(w[0], w[1]))
                .collect(),
        })
    }

    /// Rebuilds a network from explicit layers, validating shapes and finiteness.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidConfig("an MLP needs at least one layer".into()))?;
        let mut layer_sizes = vec![first.inputs];
        for (i, layer) in layers.iter().enumerate() {
            if layer.inputs != *layer_sizes.last().unwrap() {
                return Err(Error::shape(
                    format!("layer {i} input"),
                    *layer_sizes.last().unwrap(),
                    layer.inputs,
                ));
            }
            if layer.weights.len() != layer.inputs * layer.outputs {
                return Err(Error::shape(
                    format!("layer {i} weights"),
                    layer.inputs * layer.outputs,
                    layer.weights.len(),
                ));
            }
            if layer.biases.len() != layer.outputs {
                return Err(Error::shape(format!("layer {i} biases"), layer.outputs, layer.biases.len()));
            }
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
            layer_sizes.push(layer.outputs);
        }
        check_layer_sizes(&layer_sizes)?;
        Ok(MlpParams { layer_sizes, layers })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Runs the network on one input vector.
    ///
    /// Hidden layers are affine, then ReLU, then (train mode only) inverted
    /// dropout. The output layer is affine with no activation.
    pub fn forward(&self, input: &[f64], mode: Mode<'_>) -> Result<ForwardCache> {
        if input.len() != self.input_size() {
            return Err(Error::shape("mlp input", self.input_size(), input.len()));
        }
        let hidden = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(hidden);
        activations.push(input.to_vec());
        let mut mode = mode;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(activations.last().unwrap());
            if l < hidden {
                let mut a: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                let mask = match &mut mode {
                    Mode::Train { dropout_rate, rng } if *dropout_rate > 0.0 => {
                        let keep = 1.0 / (1.0 - *dropout_rate);
                        let m: Vec<f64> = (0..a.len())
                            .map(|_| if rng.random::<f64>() < *dropout_rate { 0.0 } else { keep })
                            .collect();
                        a.iter_mut().zip(&m).for_each(|(v, s)| *v *= s);
                        Some(m)
                    }
                    _ => None,
                };
                masks.push(mask);
                activations.push(a);
            }
            pre_activations.push(z);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
            masks,
        })
    }

    /// Gradients of the parameters given the gradient at the logits.
    pub fn backward(&self, cache: &ForwardCache, logit_gradient: &[f64]) -> Result<MlpParams> {
        let mut grads = self.zeroed();
        self.backward_into(cache, logit_gradient, &mut grads)?;
        Ok(grads)
    }

    /// Like [`MlpParams::backward`] but accumulates into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        logit_gradient: &[f64],
        grads: &mut MlpParams,
    ) -> Result<()> {
        if logit_gradient.len() != self.output_size() {
            return Err(Error::shape("logit gradient", self.output_size(), logit_gradient.len()));
        }
        if cache.pre_activations.len() != self.layers.len()
            || cache.activations.len() != self.layers.len()
        {
            return Err(Error::shape(
                "forward cache layers",
                self.layers.len(),
                cache.pre_activations.len(),
            ));
        }
        if grads.layer_sizes != self.layer_sizes {
            return Err(Error::InvalidInput("gradient buffer has a different architecture".into()));
        }
        let mut delta = logit_gradient.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                g.biases[o] += d;
                if *d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    row.iter_mut().zip(input).for_each(|(w, x)| *w += d * x);
                }
            }
            if l == 0 {
                break;
            }
            let mut upstream = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    upstream.iter_mut().zip(row).for_each(|(u, w)| *u += d * w);
                }
            }
            let pre = &cache.pre_activations[l - 1];
            let mask = cache.masks[l - 1].as_deref();
            for (j, u) in upstream.iter_mut().enumerate() {
                if pre[j] <= 0.0 {
                    *u = 0.0;
                } else if let Some(m) = mask {
                    *u *= m[j];
                }
            }
            delta = upstream;
        }
        Ok(())
    }
}

/// Forward-pass mode. Inference never draws dropout masks.
pub enum Mode<'a> {
    Infer,
    Train { dropout_rate: f64, rng: &'a mut Rng },
}

/// Intermediate values of one forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `activations[0]` is the network input.
    pub activations: Vec<Vec<f64>>,
    /// Affine output of each layer; the last entry holds the logits.
    pub pre_activations: Vec<Vec<f64>>,
    /// Scaled keep-masks after each hidden layer, `None` when no dropout ran.
    pub masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        self.pre_activations.last().unwrap()
    }
}

/// He-style initialization: weights ~ N(0, 2/fan_in), biases zero.
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(layer_sizes)?;
    let mut rng = rng::rng(seed);
    for layer in &mut params.layers {
        let std = libm::sqrt(2.0 / layer.inputs as f64);
        let normal = Normal::new(0.0, std).expect("positive std");
        layer.weights.iter_mut().for_each(|w| *w = normal.sample(&mut rng));
    }
    Ok(params)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = max_finite(logits)?;
    let exps: Vec<f64> = logits.iter().map(|&z| libm::exp(z - max)).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `log(softmax(logits))` without forming the probabilities.
pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = max_finite(logits)?;
    let log_sum = libm::log(logits.iter().map(|&z| libm::exp(z - max)).sum::<f64>());
    Ok(logits.iter().map(|&z| (z - max) - log_sum).collect())
}

/// `log(Σ exp(v))`, shifted by the maximum. Empty or all `-inf` input gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.iter().map(|&v| libm::exp(v - max)).sum::<f64>())
}

fn max_finite(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("softmax of an empty vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    Ok(logits.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Anything made of named blocks of trainable reals.
///
/// Gradients use the same type as the parameters they belong to.
pub trait Parameters {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
    /// Dotted path of each block, aligned with [`Parameters::blocks`].
    fn block_names(&self) -> Vec<String>;

    fn param_count(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    /// Overwrites every parameter from a flat slice in block order.
    fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(Error::shape("flat parameter vector", expected, values.len()));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            block.copy_from_slice(&values[offset..offset + block.len()]);
            offset += block.len();
        }
        Ok(())
    }

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.blocks_mut().into_iter().for_each(|b| b.fill(0.0));
        z
    }
}

impl Parameters for MlpParams {
    fn blocks(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
            .collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.biases.as_mut_slice()])
            .collect()
    }

    fn block_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| [format!("layer{l}.weights"), format!("layer{l}.biases")])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad Adam hyperparameters {self:?}")))
        }
    }
}

/// Adam moments for one parameter set. Always minimizes.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P, config: &AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.blocks().iter().map(|b| vec![0.0; b.len()]).collect();
        AdamState {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One bias-corrected Adam update, `params -= lr · m̂ / (√v̂ + ε)`.
    ///
    /// Fails without touching anything if a gradient is non-finite or the
    /// shapes disagree.
    pub fn step<P: Parameters>(&mut self, params: &mut P, gradients: &P) -> Result<()> {
        let grads = gradients.blocks();
        if grads.len() != self.first_moment.len() {
            return Err(Error::shape("gradient blocks", self.first_moment.len(), grads.len()));
        }
        for (i, (g, m)) in grads.iter().zip(&self.first_moment).enumerate() {
            if g.len() != m.len() {
                return Err(Error::shape(format!("gradient block {i}"), m.len(), g.len()));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                let name = gradients.block_names().swap_remove(i);
                return Err(Error::NonFinite(format!("gradient {name}[{j}]")));
            }
        }
        self.step_count += 1;
        let t = self.step_count as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let blocks = params.blocks_mut();
        if blocks.len() != grads.len() {
            return Err(Error::shape("parameter blocks", grads.len(), blocks.len()));
        }
        for (((p, g), m), v) in blocks
            .into_iter()
            .zip(&grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Central finite-difference gradient, one scalar parameter at a time.
///
/// The divisor is the realized step `(p+h) − (p−h)` rather than `2h`,
/// which removes the representation error of `p ± h`.
pub fn finite_diff_gradient<P, E, F>(mut loss: F, params: &P, step: f64) -> core::result::Result<P, E>
where
    P: Parameters + Clone,
    F: FnMut(&P) -> core::result::Result<f64, E>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let base = params.flatten();
    let mut grad = vec![0.0; base.len()];
    let mut probe = params.clone();
    let mut values = base.clone();
    for i in 0..base.len() {
        let up = base[i] + step;
        let down = base[i] - step;
        values[i] = up;
        probe.assign_flat(&values).expect("same shape");
        let f_up = loss(&probe)?;
        values[i] = down;
        probe.assign_flat(&values).expect("same shape");
        let f_down = loss(&probe)?;
        values[i] = base[i];
        grad[i] = (f_up - f_down) / (up - down);
    }
    let mut out = params.clone();
    out.assign_flat(&grad).expect("same shape");
    Ok(out)
}
