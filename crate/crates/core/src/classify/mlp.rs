//! Multi-layer perceptron with a softmax output trained on cross-entropy.
//!
//! Fixed-width architecture: F inputs, L hidden layers of J units, K
//! outputs; J^2(L-1) + J(F+L+K) + K parameters in total. Hidden layers use
//! the logistic sigmoid by default, with a switch to applying softmax across
//! each hidden layer instead. Training is minibatch Adam with Glorot
//! initialization from a derived seed and early stopping when the epoch loss
//! stops improving.

use super::{softmax, Adam, MlpHyper, Normalizer, TrainData};
use crate::dictionary::LabeledSample;
use crate::rng::{self, tags};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Parameter count for a width-J, depth-L network on F features, K classes.
pub fn param_count(f: usize, j: usize, l: usize, k: usize) -> usize {
    j * j * (l - 1) + j * (f + l + k) + k
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub normalizer: Normalizer,
    /// Flat parameters: for each layer in order (input->hidden, hidden
    /// layers, hidden->output), the weight matrix row-major then its biases.
    params: Vec<f64>,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub layer_softmax_hidden: bool,
    pub k: usize,
    pub f: usize,
    pub converged: bool,
    pub final_loss: f64,
}

/// (weight offset, bias offset, rows, cols) per layer, canonical order.
fn layout(f: usize, j: usize, l: usize, k: usize) -> Vec<(usize, usize, usize, usize)> {
    let mut shapes = vec![(j, f)];
    for _ in 1..l {
        shapes.push((j, j));
    }
    shapes.push((k, j));
    let mut out = Vec::with_capacity(shapes.len());
    let mut off = 0;
    for (rows, cols) in shapes {
        out.push((off, off + rows * cols, rows, cols));
        off += rows * cols + rows;
    }
    out
}

fn affine(params: &[f64], layer: (usize, usize, usize, usize), input: &[f64]) -> Vec<f64> {
    let (w_off, b_off, rows, cols) = layer;
    (0..rows)
        .map(|r| {
            let w = &params[w_off + r * cols..w_off + (r + 1) * cols];
            w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + params[b_off + r]
        })
        .collect()
}

fn sigmoid(v: &mut [f64]) {
    for x in v.iter_mut() {
        *x = 1.0 / (1.0 + (-*x).exp());
    }
}

impl MlpModel {
    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Replaces the parameter vector; the length must match the
    /// architecture. Exists so gradient checks can probe the loss surface.
    pub fn set_parameters(&mut self, params: Vec<f64>) {
        assert_eq!(
            params.len(),
            param_count(self.f, self.hidden_units, self.hidden_layers, self.k),
            "parameter vector does not fit the architecture"
        );
        self.params = params;
    }

    /// Forward pass on a normalized input; returns per-layer activations
    /// (input included) and the output probabilities.
    fn forward(&self, z: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let layers = layout(self.f, self.hidden_units, self.hidden_layers, self.k);
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.hidden_layers + 1);
        acts.push(z.to_vec());
        for layer in &layers[..self.hidden_layers] {
            let mut a = affine(&self.params, *layer, acts.last().unwrap());
            if self.layer_softmax_hidden {
                a = softmax(&a);
            } else {
                sigmoid(&mut a);
            }
            acts.push(a);
        }
        let scores = affine(&self.params, layers[self.hidden_layers], acts.last().unwrap());
        (acts, softmax(&scores))
    }

    pub(crate) fn proba(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&self.normalizer.transform(x)).1
    }
}

/// Cross-entropy of the network summed over `batch` (raw, unnormalized
/// inputs; the model's stored normalization is applied internally).
pub fn loss(model: &MlpModel, batch: &[LabeledSample]) -> f64 {
    batch
        .iter()
        .map(|s| {
            let p = model.proba(&s.x);
            -s.t
                .iter()
                .zip(&p)
                .map(|(t, p)| if *t > 0.0 { t * p.max(1e-300).ln() } else { 0.0 })
                .sum::<f64>()
        })
        .sum()
}

/// Analytic gradient of [`loss`] with respect to every parameter, in the
/// same flat order as [`MlpModel::parameters`].
pub fn gradient(model: &MlpModel, batch: &[LabeledSample]) -> Vec<f64> {
    let layers = layout(model.f, model.hidden_units, model.hidden_layers, model.k);
    let mut grad = vec![0.0; model.params.len()];
    for s in batch {
        let z = model.normalizer.transform(&s.x);
        let (acts, p) = model.forward(&z);
        backprop(model, &layers, &acts, &p, &s.t, &mut grad);
    }
    grad
}

/// Accumulates one sample's gradient into `grad`.
fn backprop(
    model: &MlpModel,
    layers: &[(usize, usize, usize, usize)],
    acts: &[Vec<f64>],
    p: &[f64],
    t: &[f64],
    grad: &mut [f64],
) {
    // Softmax + cross-entropy collapse to p - t at the output.
    let mut delta: Vec<f64> = p.iter().zip(t).map(|(p, t)| p - t).collect();
    for l in (0..layers.len()).rev() {
        let (w_off, b_off, rows, cols) = layers[l];
        let input = &acts[l];
        for r in 0..rows {
            for c in 0..cols {
                grad[w_off + r * cols + c] += delta[r] * input[c];
            }
            grad[b_off + r] += delta[r];
        }
        if l == 0 {
            break;
        }
        // Pull the error through the weights, then through the activation.
        let mut v = vec![0.0; cols];
        for r in 0..rows {
            let w = &model.params[w_off + r * cols..w_off + (r + 1) * cols];
            for (vc, wc) in v.iter_mut().zip(w) {
                *vc += delta[r] * wc;
            }
        }
        let h = &acts[l];
        if model.layer_softmax_hidden {
            let dot: f64 = h.iter().zip(&v).map(|(a, b)| a * b).sum();
            delta = h.iter().zip(&v).map(|(h, v)| h * (v - dot)).collect();
        } else {
            delta = h.iter().zip(&v).map(|(h, v)| v * h * (1.0 - h)).collect();
        }
    }
}

pub(crate) fn fit(
    data: &TrainData,
    params: &MlpHyper,
    normalizer: Normalizer,
    seed: u64,
) -> MlpModel {
    let (n, f, k) = (data.n, data.f, data.k);
    let (j, l) = (params.hidden_units, params.hidden_layers);
    let mut rng = rng::stream(seed, tags::MODEL, 0);
    let layers = layout(f, j, l, k);
    let mut init = vec![0.0; param_count(f, j, l, k)];
    for &(w_off, _, rows, cols) in &layers {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        for w in init[w_off..w_off + rows * cols].iter_mut() {
            *w = (rng.random::<f64>() * 2.0 - 1.0) * limit;
        }
    }
    let mut model = MlpModel {
        normalizer,
        params: init,
        hidden_layers: l,
        hidden_units: j,
        layer_softmax_hidden: params.layer_softmax_hidden,
        k,
        f,
        converged: false,
        final_loss: f64::NAN,
    };
    let batch = params.batch_size.clamp(1, n);
    let mut adam = Adam::new(model.params.len(), params.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    let mut last = f64::NAN;
    for _ in 0..params.max_iter {
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for chunk in order.chunks(batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                let z = data.row(i);
                let (acts, p) = model.forward(z);
                let mut t = vec![0.0; k];
                t[data.labels[i]] = 1.0;
                backprop(&model, &layers, &acts, &p, &t, &mut grad);
            }
            adam.step(&mut model.params, &grad);
        }
        let mut epoch_loss = 0.0;
        for i in 0..n {
            let (_, p) = model.forward(data.row(i));
            epoch_loss -= p[data.labels[i]].max(1e-300).ln();
        }
        epoch_loss /= n as f64;
        last = epoch_loss;
        if epoch_loss > best - params.tol {
            stalled += 1;
            if stalled >= params.n_iter_no_change {
                model.converged = true;
                break;
            }
        } else {
            stalled = 0;
        }
        best = best.min(epoch_loss);
    }
    model.final_loss = last;
    model
}
