//! Two-layer perceptron encoder and softmax head with hand-written
//! backpropagation.

use ndarray::{Array1, Array2, ArrayD, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl Default for EncoderShape {
    fn default() -> Self {
        Self { input: 16, hidden: 32, output: 8 }
    }
}

fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound))
}

/// `x ↦ tanh(x W1 + b1) W2 + b2`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct EncoderCache {
    input: Array2<f64>,
    hidden: Array2<f64>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl Encoder {
    pub fn new(shape: EncoderShape, seed: u64) -> Result<Self> {
        if shape.input == 0 || shape.hidden == 0 || shape.output == 0 {
            return Err(Error::invalid(format!("encoder layer sizes must be positive: {shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            w1: xavier(&mut rng, shape.input, shape.hidden),
            b1: Array1::zeros(shape.hidden),
            w2: xavier(&mut rng, shape.hidden, shape.output),
            b2: Array1::zeros(shape.output),
        })
    }

    pub fn shape(&self) -> EncoderShape {
        EncoderShape { input: self.w1.nrows(), hidden: self.w1.ncols(), output: self.w2.ncols() }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> EncoderCache {
        let hidden = (x.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let output = hidden.dot(&self.w2) + &self.b2;
        EncoderCache { input: x.to_owned(), hidden, output }
    }

    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(x).output
    }

    /// Parameter gradients given `∂L/∂output`.
    pub fn backward(&self, cache: &EncoderCache, grad_out: &Array2<f64>) -> EncoderGrad {
        let w2 = cache.hidden.t().dot(grad_out);
        let b2 = grad_out.sum_axis(Axis(0));
        let grad_hidden = grad_out.dot(&self.w2.t()) * cache.hidden.mapv(|a| 1.0 - a * a);
        let w1 = cache.input.t().dot(&grad_hidden);
        let b1 = grad_hidden.sum_axis(Axis(0));
        EncoderGrad { w1, b1, w2, b2 }
    }
}

/// Row-wise L2 normalization. Returns the normalized rows and the norms.
pub fn normalize_rows(h: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>)> {
    let norms = h.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    if let Some(i) = norms.iter().position(|n| !(*n > 0.0 && n.is_finite())) {
        return Err(Error::DegenerateEmbedding { index: i });
    }
    let z = h / &norms.view().insert_axis(Axis(1));
    Ok((z, norms))
}

/// Pulls `∂L/∂z` back through `z = h / ‖h‖`: `(g − z (z·g)) / ‖h‖` per row.
pub fn normalize_backward(z: &Array2<f64>, norms: &Array1<f64>, grad_z: &Array2<f64>) -> Array2<f64> {
    let proj = (z * grad_z).sum_axis(Axis(1)).insert_axis(Axis(1));
    (grad_z - &(z * &proj)) / &norms.view().insert_axis(Axis(1))
}

/// Linear softmax classifier used by the cross-entropy baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadLoss {
    /// Mean cross-entropy over the batch.
    pub value: f64,
    pub grad_input: Array2<f64>,
    pub grad_w: Array2<f64>,
    pub grad_b: Array1<f64>,
}

impl LinearHead {
    pub fn new(input: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { w: xavier(&mut rng, input, classes), b: Array1::zeros(classes) }
    }

    pub fn logits(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        h.dot(&self.w) + &self.b
    }

    /// Mean softmax cross-entropy against `labels` and its gradients.
    pub fn loss(&self, h: ArrayView2<'_, f64>, labels: &[usize]) -> Result<HeadLoss> {
        let classes = self.b.len();
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} outside the head's {classes} classes")));
        }
        let logits = self.logits(h);
        let n = logits.nrows() as f64;
        let mut grad_logits = Array2::<f64>::zeros(logits.raw_dim());
        let mut value = 0.0;
        for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            value += lse - row[labels[i]];
            for (k, v) in row.iter().enumerate() {
                grad_logits[[i, k]] = (v - lse).exp() / n;
            }
            grad_logits[[i, labels[i]]] -= 1.0 / n;
        }
        Ok(HeadLoss {
            value: value / n,
            grad_input: grad_logits.dot(&self.w.t()),
            grad_w: h.t().dot(&grad_logits),
            grad_b: grad_logits.sum_axis(Axis(0)),
        })
    }
}

/// Plain SGD with classical momentum.
#[derive(Debug, Clone)]
pub struct Momentum {
    coefficient: f64,
    velocity: Vec<ArrayD<f64>>,
}

impl Momentum {
    pub fn new(coefficient: f64) -> Self {
        Self { coefficient, velocity: Vec::new() }
    }

    /// `v ← μ v + g; p ← p − lr v` for each parameter/gradient pair.
    pub fn step(&mut self, lr: f64, params: Vec<ArrayViewMutD<'_, f64>>, grads: Vec<ArrayViewD<'_, f64>>) {
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| ArrayD::zeros(g.raw_dim())).collect();
        }
        for ((mut p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            v.zip_mut_with(&g, |v, &g| *v = self.coefficient * *v + g);
            p.scaled_add(-lr, v);
        }
    }
}

impl Encoder {
    pub fn params_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        vec![
            self.w1.view_mut().into_dyn(),
            self.b1.view_mut().into_dyn(),
            self.w2.view_mut().into_dyn(),
            self.b2.view_mut().into_dyn(),
        ]
    }
}

impl EncoderGrad {
    pub fn views(&self) -> Vec<ArrayViewD<'_, f64>> {
        vec![self.w1.view().into_dyn(), self.b1.view().into_dyn(), self.w2.view().into_dyn(), self.b2.view().into_dyn()]
    }
}
