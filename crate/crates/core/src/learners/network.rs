//! Fully connected network with rectifier hidden layers and a softmax output,
//! trained on cross-entropy by mini-batch gradient descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    /// Input width first, class count last; empty means `[p, 64, 32, 5]`.
    pub layer_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    /// Z-score inputs with constants fitted on the training table.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            layer_sizes: Vec::new(),
            epochs: 75,
            batch_size: 256,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            standardize: true,
            seed: 42,
        }
    }
}

impl MlpConfig {
    pub fn resolved_layers(&self, p: usize) -> Vec<usize> {
        if self.layer_sizes.is_empty() {
            vec![p, 64, 32, super::N_CLASSES]
        } else {
            self.layer_sizes.clone()
        }
    }

    pub(crate) fn validate(&self, p: usize) -> Result<Vec<usize>> {
        let layers = self.resolved_layers(p);
        if layers.len() < 2 || layers[0] != p || *layers.last().unwrap() != super::N_CLASSES {
            return Err(Error::Param(format!(
                "layer sizes {layers:?} must start at p = {p} and end at {}",
                super::N_CLASSES
            )));
        }
        if layers.contains(&0) {
            return Err(Error::Param("layer sizes must be nonzero".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Param("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Param(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        Ok(layers)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs x inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

/// Gradients laid out like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

impl Network {
    /// He-normal weights, zero biases.
    pub fn init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let dist = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs).map(|_| dist.sample(rng)).collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.outputs, l.inputs)).collect()
    }

    /// Activations of every layer for a batch; the last entry holds softmax
    /// probabilities.
    fn forward(&self, x: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let input = &acts[li];
            let mut out = vec![0.0; rows * layer.outputs];
            for b in 0..rows {
                let a = &input[b * layer.inputs..(b + 1) * layer.inputs];
                let o = &mut out[b * layer.outputs..(b + 1) * layer.outputs];
                for (j, oj) in o.iter_mut().enumerate() {
                    let z = layer.bias[j]
                        + dot(&layer.weights[j * layer.inputs..(j + 1) * layer.inputs], a);
                    *oj = if li == last { z } else { z.max(0.0) };
                }
                if li == last {
                    softmax_in_place(o);
                }
            }
            acts.push(out);
        }
        acts
    }

    pub fn predict_proba(&self, x: &[f64], rows: usize) -> Vec<f64> {
        self.forward(x, rows).pop().expect("at least one layer")
    }

    /// Mean cross-entropy of a batch and its gradient w.r.t. every parameter.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[usize]) -> (f64, Gradients) {
        let rows = y.len();
        let acts = self.forward(x, rows);
        let classes = self.layers.last().unwrap().outputs;
        let probs = acts.last().unwrap();

        let mut loss = 0.0;
        let mut delta = probs.clone();
        for (b, &t) in y.iter().enumerate() {
            let pt = probs[b * classes + t];
            loss -= if pt > 0.0 {
                pt.ln()
            } else if pt == 0.0 {
                f64::MIN_POSITIVE.ln()
            } else {
                f64::NAN
            };
            delta[b * classes + t] -= 1.0;
        }
        let inv = 1.0 / rows as f64;
        loss *= inv;
        delta.iter_mut().for_each(|d| *d *= inv);

        let mut gw: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &acts[li];
            let mut prev_delta = vec![0.0; rows * layer.inputs];
            for b in 0..rows {
                let a = &input[b * layer.inputs..(b + 1) * layer.inputs];
                let d = &delta[b * layer.outputs..(b + 1) * layer.outputs];
                let pd = &mut prev_delta[b * layer.inputs..(b + 1) * layer.inputs];
                for (j, &dj) in d.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    gb[li][j] += dj;
                    axpy(&mut gw[li][j * layer.inputs..(j + 1) * layer.inputs], dj, a);
                    axpy(pd, dj, &layer.weights[j * layer.inputs..(j + 1) * layer.inputs]);
                }
            }
            if li > 0 {
                // rectifier derivative of the layer below
                for (pd, a) in prev_delta.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
            }
            delta = prev_delta;
        }
        (
            loss,
            Gradients {
                weights: gw,
                bias: gb,
            },
        )
    }
}

struct AdamState {
    m: Gradients,
    v: Gradients,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

fn zero_like(net: &Network) -> Gradients {
    Gradients {
        weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
        bias: net.layers.iter().map(|l| vec![0.0; l.outputs]).collect(),
    }
}

fn apply_update(net: &mut Network, g: &Gradients, lr: f64, optimizer: Optimizer, adam: &mut AdamState) {
    match optimizer {
        Optimizer::Sgd => {
            for (li, layer) in net.layers.iter_mut().enumerate() {
                axpy(&mut layer.weights, -lr, &g.weights[li]);
                axpy(&mut layer.bias, -lr, &g.bias[li]);
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let c1 = 1.0 - BETA1.powi(adam.t);
            let c2 = 1.0 - BETA2.powi(adam.t);
            let step = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                    let mh = m[i] / c1;
                    let vh = v[i] / c2;
                    p[i] -= lr * mh / (vh.sqrt() + EPSILON);
                }
            };
            for (li, layer) in net.layers.iter_mut().enumerate() {
                step(
                    &mut layer.weights,
                    &g.weights[li],
                    &mut adam.m.weights[li],
                    &mut adam.v.weights[li],
                );
                step(
                    &mut layer.bias,
                    &g.bias[li],
                    &mut adam.m.bias[li],
                    &mut adam.v.bias[li],
                );
            }
        }
    }
}

/// Trains on row-major `x` (already transformed) with class indices `y`.
/// Returns the network and the mean training loss of every epoch.
pub fn fit_network(x: &[f64], y: &[usize], p: usize, cfg: &MlpConfig) -> Result<(Network, Vec<f64>)> {
    let sizes = cfg.validate(p)?;
    let n = y.len();
    if n == 0 || x.len() != n * p {
        return Err(Error::Param("training matrix does not match label count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::init(&sizes, &mut rng);
    let mut adam = AdamState {
        m: zero_like(&net),
        v: zero_like(&net),
        t: 0,
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size * p);
    let mut by = Vec::with_capacity(cfg.batch_size);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.extend_from_slice(&x[i * p..(i + 1) * p]);
                by.push(y[i]);
            }
            let (loss, grad) = net.loss_and_gradient(&bx, &by);
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            total += loss * chunk.len() as f64;
            apply_update(&mut net, &grad, cfg.learning_rate, cfg.optimizer, &mut adam);
        }
        let mean = total / n as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        losses.push(mean);
    }
    Ok((net, losses))
}
