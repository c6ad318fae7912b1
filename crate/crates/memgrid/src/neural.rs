//! Minimal dense-network stack with reverse-mode differentiation and Adam.
//!
//! Only what the dispatch agent and the scenario generator need: affine
//! layers, a handful of activations, optional per-layer batch normalization,
//! soft target updates, and gradients with respect to both parameters and a
//! designated input slice. All math is f64.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected input width {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |v| v.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn row_vector(v: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: v.len(),
            data: v.to_vec(),
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of the given column range.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, end - start);
        for r in 0..self.rows {
            for (j, c) in (start..end).enumerate() {
                out.set(r, j, self.get(r, c));
            }
        }
        out
    }

    /// Horizontal concatenation [self | other].
    pub fn hcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let mut out = Matrix::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            out.data[r * out.cols..r * out.cols + self.cols].copy_from_slice(self.row(r));
            out.data[r * out.cols + self.cols..(r + 1) * out.cols].copy_from_slice(other.row(r));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match *self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(slope) => {
                if z >= 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
        }
    }

    /// Derivative expressed through pre-activation z and output y.
    #[inline]
    fn derivative(&self, z: f64, y: f64) -> f64 {
        match *self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if z >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: vec![1.0; dim],
            beta: vec![0.0; dim],
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.9,
            epsilon: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// [out_dim x in_dim], row-major.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub batch_norm: Option<BatchNorm>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.cols
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows
    }

    fn param_count(&self) -> usize {
        let mut n = self.weight.data.len() + self.bias.len();
        if let Some(bn) = &self.batch_norm {
            n += bn.gamma.len() + bn.beta.len();
        }
        n
    }

    /// x [batch x in] -> z [batch x out], z = x W^T + b.
    fn affine(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows, self.out_dim());
        for r in 0..x.rows {
            let xr = x.row(r);
            for o in 0..self.out_dim() {
                let w = self.weight.row(o);
                let mut acc = self.bias[o];
                for (xi, wi) in xr.iter().zip(w) {
                    acc += xi * wi;
                }
                z.set(r, o, acc);
            }
        }
        z
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    /// Batch variance of the affine output (train mode with BN only).
    bn_var: Vec<f64>,
    bn_hat: Matrix,
    /// Pre-activation (post-BN when BN present).
    pre_activation: Matrix,
    output: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.layers.last().expect("empty cache").output
    }
}

/// Spec of one layer for network construction.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub out_dim: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

impl LayerSpec {
    pub fn new(out_dim: usize, activation: Activation) -> Self {
        Self {
            out_dim,
            activation,
            batch_norm: false,
        }
    }

    pub fn with_batch_norm(mut self) -> Self {
        self.batch_norm = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
}

impl DenseNetwork {
    /// Build with uniform +-1/sqrt(fan_in) initialization.
    pub fn new<R: Rng>(in_dim: usize, specs: &[LayerSpec], rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(specs.len());
        let mut prev = in_dim;
        for spec in specs {
            let bound = 1.0 / (prev as f64).sqrt();
            let mut weight = Matrix::zeros(spec.out_dim, prev);
            for v in &mut weight.data {
                *v = rng.gen_range(-bound..bound);
            }
            let mut bias = vec![0.0; spec.out_dim];
            for v in &mut bias {
                *v = rng.gen_range(-bound..bound);
            }
            layers.push(Layer {
                weight,
                bias,
                activation: spec.activation,
                batch_norm: spec.batch_norm.then(|| BatchNorm::new(spec.out_dim)),
            });
            prev = spec.out_dim;
        }
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn check_input(&self, x: &Matrix) -> Result<(), NeuralError> {
        if x.cols != self.in_dim() {
            return Err(NeuralError::DimensionMismatch {
                expected: self.in_dim(),
                actual: x.cols,
            });
        }
        if !x.is_finite() {
            return Err(NeuralError::NonFinite("network input"));
        }
        Ok(())
    }

    /// Inference pass: batch norm uses running statistics, nothing mutates.
    pub fn forward_eval(&self, x: &Matrix) -> Result<Matrix, NeuralError> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            let mut z = layer.affine(&cur);
            if let Some(bn) = &layer.batch_norm {
                for r in 0..z.rows {
                    for c in 0..z.cols {
                        let hat = (z.get(r, c) - bn.running_mean[c])
                            / (bn.running_var[c] + bn.epsilon).sqrt();
                        z.set(r, c, bn.gamma[c] * hat + bn.beta[c]);
                    }
                }
            }
            for v in &mut z.data {
                *v = layer.activation.apply(*v);
            }
            cur = z;
        }
        Ok(cur)
    }

    /// Training pass: batch norm uses batch statistics and updates running
    /// statistics. Returns the cache needed by [`DenseNetwork::backward`].
    pub fn forward_train(&mut self, x: &Matrix) -> Result<ForwardCache, NeuralError> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let affine = layer.affine(&cur);
            let mut bn_var = Vec::new();
            let mut bn_hat = Matrix::zeros(0, 0);
            let mut pre = affine.clone();
            if let Some(bn) = &mut layer.batch_norm {
                let b = affine.rows as f64;
                let mut bn_mean = vec![0.0; affine.cols];
                bn_var = vec![0.0; affine.cols];
                for c in 0..affine.cols {
                    let mut mean = 0.0;
                    for r in 0..affine.rows {
                        mean += affine.get(r, c);
                    }
                    mean /= b;
                    let mut var = 0.0;
                    for r in 0..affine.rows {
                        let d = affine.get(r, c) - mean;
                        var += d * d;
                    }
                    var /= b;
                    bn_mean[c] = mean;
                    bn_var[c] = var;
                    bn.running_mean[c] = bn.momentum * bn.running_mean[c] + (1.0 - bn.momentum) * mean;
                    bn.running_var[c] = bn.momentum * bn.running_var[c] + (1.0 - bn.momentum) * var;
                }
                bn_hat = Matrix::zeros(affine.rows, affine.cols);
                for r in 0..affine.rows {
                    for c in 0..affine.cols {
                        let hat = (affine.get(r, c) - bn_mean[c]) / (bn_var[c] + bn.epsilon).sqrt();
                        bn_hat.set(r, c, hat);
                        pre.set(r, c, bn.gamma[c] * hat + bn.beta[c]);
                    }
                }
            }
            let mut output = pre.clone();
            for v in &mut output.data {
                *v = layer.activation.apply(*v);
            }
            caches.push(LayerCache {
                input: cur,
                bn_var,
                bn_hat,
                pre_activation: pre,
                output: output.clone(),
            });
            cur = output;
        }
        Ok(ForwardCache { layers: caches })
    }

    /// Reverse pass through a cached forward. Returns flat parameter
    /// gradients (same layout as [`DenseNetwork::params_flat`]) and the
    /// gradient with respect to the network input.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> (Vec<f64>, Matrix) {
        assert_eq!(cache.layers.len(), self.layers.len());
        let mut grads = vec![0.0; self.param_count()];
        // Flat offsets per layer, front to back.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }
        let mut delta = upstream.clone();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[li];
            // Through the activation.
            let mut d_pre = Matrix::zeros(delta.rows, delta.cols);
            for r in 0..delta.rows {
                for c in 0..delta.cols {
                    let d = layer
                        .activation
                        .derivative(lc.pre_activation.get(r, c), lc.output.get(r, c));
                    d_pre.set(r, c, delta.get(r, c) * d);
                }
            }
            let base = offsets[li];
            let w_len = layer.weight.data.len();
            let b_len = layer.bias.len();
            // Through batch norm (batch statistics).
            let d_affine = if let Some(bn) = &layer.batch_norm {
                let b = d_pre.rows as f64;
                let mut d_aff = Matrix::zeros(d_pre.rows, d_pre.cols);
                for c in 0..d_pre.cols {
                    let inv_std = 1.0 / (lc.bn_var[c] + bn.epsilon).sqrt();
                    let mut d_gamma = 0.0;
                    let mut d_beta = 0.0;
                    let mut sum_dhat = 0.0;
                    let mut sum_dhat_hat = 0.0;
                    for r in 0..d_pre.rows {
                        let dy = d_pre.get(r, c);
                        let hat = lc.bn_hat.get(r, c);
                        d_gamma += dy * hat;
                        d_beta += dy;
                        let dhat = dy * bn.gamma[c];
                        sum_dhat += dhat;
                        sum_dhat_hat += dhat * hat;
                    }
                    for r in 0..d_pre.rows {
                        let dy = d_pre.get(r, c);
                        let hat = lc.bn_hat.get(r, c);
                        let dhat = dy * bn.gamma[c];
                        d_aff.set(
                            r,
                            c,
                            inv_std * (dhat - sum_dhat / b - hat * sum_dhat_hat / b),
                        );
                    }
                    grads[base + w_len + b_len + c] = d_gamma;
                    grads[base + w_len + b_len + bn.gamma.len() + c] = d_beta;
                }
                d_aff
            } else {
                d_pre
            };
            // dW[o][i] = sum_b d_affine[b][o] * input[b][i]; db[o] = sum_b d_affine[b][o].
            for o in 0..layer.out_dim() {
                let mut db = 0.0;
                for r in 0..d_affine.rows {
                    let d = d_affine.get(r, o);
                    db += d;
                    let xr = lc.input.row(r);
                    let wrow = &mut grads[base + o * layer.in_dim()..base + (o + 1) * layer.in_dim()];
                    for (g, xi) in wrow.iter_mut().zip(xr) {
                        *g += d * xi;
                    }
                }
                grads[base + w_len + o] = db;
            }
            // d_input = d_affine . W
            let mut d_in = Matrix::zeros(d_affine.rows, layer.in_dim());
            for r in 0..d_affine.rows {
                for o in 0..layer.out_dim() {
                    let d = d_affine.get(r, o);
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = layer.weight.row(o);
                    let drow = &mut d_in.data[r * layer.in_dim()..(r + 1) * layer.in_dim()];
                    for (di, wi) in drow.iter_mut().zip(wrow) {
                        *di += d * wi;
                    }
                }
            }
            delta = d_in;
        }
        (grads, delta)
    }

    /// All trainable parameters, flattened per layer as weight (row-major),
    /// bias, then batch-norm scale and shift. Running statistics are not
    /// trainable and are excluded.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weight.data);
            out.extend_from_slice(&layer.bias);
            if let Some(bn) = &layer.batch_norm {
                out.extend_from_slice(&bn.gamma);
                out.extend_from_slice(&bn.beta);
            }
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut i = 0;
        for layer in &mut self.layers {
            let w = layer.weight.data.len();
            layer.weight.data.copy_from_slice(&params[i..i + w]);
            i += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&params[i..i + b]);
            i += b;
            if let Some(bn) = &mut layer.batch_norm {
                let g = bn.gamma.len();
                bn.gamma.copy_from_slice(&params[i..i + g]);
                i += g;
                bn.beta.copy_from_slice(&params[i..i + g]);
                i += g;
            }
        }
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.is_finite()
                && l.bias.iter().all(|v| v.is_finite())
                && l.batch_norm.as_ref().map_or(true, |bn| {
                    bn.gamma.iter().chain(&bn.beta).all(|v| v.is_finite())
                })
        })
    }
}

/// Adam optimizer state for one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, param_count: usize) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }
}

/// One bias-corrected Adam step, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - state.beta1.powf(t);
    let bc2 = 1.0 - state.beta2.powf(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
}

/// Convenience: one Adam step applied directly to a network.
pub fn adam_step_network(net: &mut DenseNetwork, grads: &[f64], state: &mut AdamState) {
    let mut params = net.params_flat();
    adam_step(&mut params, grads, state);
    net.set_params_flat(&params);
}

/// target <- tau * source + (1 - tau) * target, parameter-wise.
/// Central-difference check of [`DenseNetwork::backward`] on representative
/// architectures, for the diagnostics command. Returns the worst relative
/// error between analytic and numeric parameter gradients.
pub fn finite_diff_check_summary<R: Rng>(rng: &mut R) -> f64 {
    let configs: [(usize, Vec<LayerSpec>); 2] = [
        (
            5,
            vec![
                LayerSpec::new(8, Activation::LeakyRelu(0.2)),
                LayerSpec::new(6, Activation::Tanh),
                LayerSpec::new(3, Activation::Identity),
            ],
        ),
        (
            4,
            vec![
                LayerSpec::new(6, Activation::LeakyRelu(0.2)).with_batch_norm(),
                LayerSpec::new(2, Activation::Sigmoid),
            ],
        ),
    ];
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (in_dim, specs) in configs {
        let net = DenseNetwork::new(in_dim, &specs, rng);
        let mut x = Matrix::zeros(6, in_dim);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut upstream = Matrix::zeros(6, net.out_dim());
        for v in &mut upstream.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        let loss = |n: &DenseNetwork| -> f64 {
            let mut n = n.clone();
            let cache = n.forward_train(&x).expect("forward");
            cache
                .output()
                .data
                .iter()
                .zip(&upstream.data)
                .map(|(o, u)| o * u)
                .sum()
        };
        let analytic = {
            let mut n = net.clone();
            let cache = n.forward_train(&x).expect("forward");
            n.backward(&cache, &upstream).0
        };
        let base = net.params_flat();
        for i in 0..base.len() {
            let mut p = base.clone();
            let mut probe = net.clone();
            p[i] = base[i] + h;
            probe.set_params_flat(&p);
            let lp = loss(&probe);
            p[i] = base[i] - h;
            probe.set_params_flat(&p);
            let lm = loss(&probe);
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
    }
    worst
}

pub fn soft_update(target: &mut DenseNetwork, source: &DenseNetwork, tau: f64) {
    let src = source.params_flat();
    let mut tgt = target.params_flat();
    assert_eq!(src.len(), tgt.len(), "architecture mismatch in soft update");
    for (t, s) in tgt.iter_mut().zip(&src) {
        *t = tau * s + (1.0 - tau) * *t;
    }
    target.set_params_flat(&tgt);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_layer(w: Vec<Vec<f64>>, b: Vec<f64>, act: Activation) -> DenseNetwork {
        DenseNetwork {
            layers: vec![Layer {
                weight: Matrix::from_rows(w),
                bias: b,
                activation: act,
                batch_norm: None,
            }],
        }
    }

    #[test]
    fn identity_layer_passes_through() {
        let net = single_layer(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        );
        let x = Matrix::from_rows(vec![vec![3.0, -2.0]]);
        assert_eq!(net.forward_eval(&x).unwrap(), x);
    }

    #[test]
    fn affine_map_hand_value() {
        let net = single_layer(vec![vec![2.0]], vec![3.0], Activation::Identity);
        let y = net.forward_eval(&Matrix::from_rows(vec![vec![1.0]])).unwrap();
        assert_eq!(y.get(0, 0), 5.0);
    }

    #[test]
    fn leaky_relu_negative_branch() {
        assert_relative_eq!(
            Activation::LeakyRelu(0.2).apply(-1.0),
            -0.2,
            max_relative = 1e-15
        );
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = single_layer(vec![vec![2.0]], vec![0.0], Activation::Identity);
        let x = Matrix::from_rows(vec![vec![1.0, 2.0]]);
        assert!(matches!(
            net.forward_eval(&x),
            Err(NeuralError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linear_net_gradient_hand_value() {
        // y = 2x, loss = y^2, x = 1 -> dL/dw = 2y * x = 4.
        let mut net = single_layer(vec![vec![2.0]], vec![0.0], Activation::Identity);
        let x = Matrix::from_rows(vec![vec![1.0]]);
        let cache = net.forward_train(&x).unwrap();
        let y = cache.output().get(0, 0);
        let upstream = Matrix::from_rows(vec![vec![2.0 * y]]);
        let (grads, _) = net.backward(&cache, &upstream);
        assert_relative_eq!(grads[0], 4.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = DenseNetwork::new(
            3,
            &[
                LayerSpec::new(4, Activation::Relu),
                LayerSpec::new(2, Activation::Identity),
            ],
            &mut rng,
        );
        let x = Matrix::from_rows(vec![vec![0.3, -0.1, 0.7]]);
        let cache = net.forward_train(&x).unwrap();
        let (grads, d_in) = net.backward(&cache, &Matrix::zeros(1, 2));
        assert!(grads.iter().all(|g| *g == 0.0));
        assert!(d_in.data.iter().all(|g| *g == 0.0));
    }

    /// Central finite differences over every parameter of the network for a
    /// scalar loss L = sum(output * upstream).
    pub(crate) fn finite_diff_grads(
        net: &DenseNetwork,
        x: &Matrix,
        upstream: &Matrix,
        h: f64,
    ) -> Vec<f64> {
        let loss = |net: &DenseNetwork| -> f64 {
            // Batch statistics path, mirrored without mutating running stats.
            let mut n = net.clone();
            let cache = n.forward_train(x).unwrap();
            let out = cache.output();
            out.data
                .iter()
                .zip(&upstream.data)
                .map(|(o, u)| o * u)
                .sum()
        };
        let base = net.params_flat();
        let mut grads = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + h;
            let mut np = net.clone();
            np.set_params_flat(&p);
            let lp = loss(&np);
            p[i] = base[i] - h;
            np.set_params_flat(&p);
            let lm = loss(&np);
            grads[i] = (lp - lm) / (2.0 * h);
        }
        grads
    }

    fn check_gradients(net: &mut DenseNetwork, x: &Matrix, tol: f64) -> f64 {
        let cache = net.forward_train(x).unwrap();
        let out = cache.output();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut upstream = Matrix::zeros(out.rows, out.cols);
        for v in &mut upstream.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        // Rebuild the cache on a clone so finite differences see the same
        // running-stat state.
        let frozen = net.clone();
        let analytic = {
            let mut n = frozen.clone();
            let c = n.forward_train(x).unwrap();
            n.backward(&c, &upstream).0
        };
        let numeric = finite_diff_grads(&frozen, x, &upstream, 1e-5);
        let mut max_rel = 0.0f64;
        for (a, n) in analytic.iter().zip(&numeric) {
            let denom = a.abs().max(n.abs()).max(1e-6);
            max_rel = max_rel.max((a - n).abs() / denom);
        }
        assert!(max_rel < tol, "max relative gradient error {max_rel}");
        max_rel
    }

    #[test]
    fn random_three_layer_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = DenseNetwork::new(
            5,
            &[
                LayerSpec::new(8, Activation::LeakyRelu(0.2)),
                LayerSpec::new(6, Activation::Tanh),
                LayerSpec::new(3, Activation::Identity),
            ],
            &mut rng,
        );
        let mut x = Matrix::zeros(4, 5);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        check_gradients(&mut net, &x, 1e-4);
    }

    #[test]
    fn batchnorm_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut net = DenseNetwork::new(
            4,
            &[
                LayerSpec::new(6, Activation::LeakyRelu(0.2)).with_batch_norm(),
                LayerSpec::new(2, Activation::Sigmoid),
            ],
            &mut rng,
        );
        let mut x = Matrix::zeros(8, 4);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        check_gradients(&mut net, &x, 1e-4);
    }

    #[test]
    fn input_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net = DenseNetwork::new(
            3,
            &[
                LayerSpec::new(5, Activation::Tanh),
                LayerSpec::new(1, Activation::Identity),
            ],
            &mut rng,
        );
        let x = Matrix::from_rows(vec![vec![0.4, -0.2, 0.9]]);
        let cache = net.forward_train(&x).unwrap();
        let upstream = Matrix::from_rows(vec![vec![1.0]]);
        let (_, d_in) = net.backward(&cache, &upstream);
        let h = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            xp.data[i] += h;
            let mut xm = x.clone();
            xm.data[i] -= h;
            let fp = net.forward_eval(&xp).unwrap().get(0, 0);
            let fm = net.forward_eval(&xm).unwrap().get(0, 0);
            let num = (fp - fm) / (2.0 * h);
            assert_relative_eq!(d_in.get(0, i), num, max_relative = 1e-4);
        }
    }

    #[test]
    fn adam_zero_gradient_fixed_point() {
        let mut params = vec![1.5, -0.25];
        let mut state = AdamState::new(0.1, 0.5, 0.999, 2);
        adam_step(&mut params, &[0.0, 0.0], &mut state);
        assert_eq!(params, vec![1.5, -0.25]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_hand_value() {
        let mut params = vec![0.0];
        let mut state = AdamState::new(0.1, 0.5, 0.999, 1);
        adam_step(&mut params, &[1.0], &mut state);
        // m_hat = 1, v_hat = 1 -> delta = -0.1 / (1 + eps).
        assert_relative_eq!(params[0], -0.1 / (1.0 + 1e-8), max_relative = 1e-12);
    }

    #[test]
    fn adam_equal_gradients_equal_updates() {
        let mut params = vec![0.3, 0.3];
        let mut state = AdamState::new(0.01, 0.9, 0.999, 2);
        adam_step(&mut params, &[0.7, 0.7], &mut state);
        assert_eq!(params[0], params[1]);
    }

    #[test]
    fn soft_update_hand_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [LayerSpec::new(2, Activation::Identity)];
        let source = DenseNetwork::new(2, &specs, &mut rng);
        let mut target = DenseNetwork::new(2, &specs, &mut rng);

        // tau = 1 copies exactly.
        let mut t1 = target.clone();
        soft_update(&mut t1, &source, 1.0);
        assert_eq!(t1.params_flat(), source.params_flat());

        // tau = 0 leaves the target unchanged.
        let mut t0 = target.clone();
        soft_update(&mut t0, &source, 0.0);
        assert_eq!(t0.params_flat(), target.params_flat());

        // Single small step.
        let mut src1 = source.clone();
        let ones = vec![1.0; src1.param_count()];
        src1.set_params_flat(&ones);
        target.set_params_flat(&vec![0.0; target.param_count()]);
        soft_update(&mut target, &src1, 0.001);
        for p in target.params_flat() {
            assert_relative_eq!(p, 0.001, max_relative = 1e-12);
        }

        // Geometric convergence with a frozen source.
        let k = 50;
        for _ in 1..k {
            soft_update(&mut target, &src1, 0.001);
        }
        let expected = 1.0 - (1.0 - 0.001f64).powi(k);
        for p in target.params_flat() {
            assert_relative_eq!(p, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn batchnorm_running_stats_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = DenseNetwork::new(
            2,
            &[LayerSpec::new(2, Activation::Identity).with_batch_norm()],
            &mut rng,
        );
        let mut x = Matrix::zeros(16, 2);
        for v in &mut x.data {
            *v = rng.gen_range(-1.0..1.0);
        }
        for _ in 0..200 {
            net.forward_train(&x).unwrap();
        }
        // Eval output should approach train output for the same batch.
        let train_out = net.clone().forward_train(&x).unwrap().output().clone();
        let eval_out = net.forward_eval(&x).unwrap();
        for (a, b) in train_out.data.iter().zip(&eval_out.data) {
            assert_relative_eq!(a, b, epsilon = 1e-2, max_relative = 1e-2);
        }
    }
}
