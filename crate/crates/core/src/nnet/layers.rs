//! Layer kernels: valid 2-D convolution, 2×2 max pooling, batch
//! normalization, dense layers, inverted dropout, sigmoid, and binary
//! cross-entropy. Each kernel carries its exact backward pass.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Spatial kernel side length of every convolution filter.
pub const KERNEL: usize = 3;
/// Probabilities entering the cross-entropy are clamped to
/// `[PROB_CLAMP, 1 − PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;
/// Variance floor inside batch normalization.
pub const BN_EPSILON: f64 = 1e-5;
/// Running-statistics momentum: `running ← m·running + (1−m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// A dense height × width × channels grid, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    /// Height (time frames).
    pub h: usize,
    /// Width (frequency bins).
    pub w: usize,
    /// Channels (input channels or filter maps).
    pub c: usize,
    /// Values: `data[(y*w + x)*c + ch]`.
    pub data: Vec<f64>,
}

impl Grid3 {
    /// An all-zero grid.
    pub fn zeros(h: usize, w: usize, c: usize) -> Grid3 {
        Grid3 { h, w, c, data: vec![0.0; h * w * c] }
    }

    /// Builds a grid from values in `(y, x, ch)` order.
    pub fn from_rows(h: usize, w: usize, c: usize, data: Vec<f64>) -> Result<Grid3> {
        if data.len() != h * w * c {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {h}×{w}×{c} grid",
                data.len()
            )));
        }
        Ok(Grid3 { h, w, c, data })
    }

    #[inline]
    pub(crate) fn idx(&self, y: usize, x: usize, ch: usize) -> usize {
        (y * self.w + x) * self.c + ch
    }

    /// Value at (y, x, ch).
    pub fn at(&self, y: usize, x: usize, ch: usize) -> f64 {
        self.data[self.idx(y, x, ch)]
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// In-place ReLU; returns the pass-through mask for the backward pass.
pub(crate) fn relu_in_place(values: &mut [f64]) -> Vec<bool> {
    values
        .iter_mut()
        .map(|v| {
            let pass = *v > 0.0;
            if !pass {
                *v = 0.0;
            }
            pass
        })
        .collect()
}

/// A valid (no padding) cross-correlation layer with 3×3 filters.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// Input channels.
    pub in_channels: usize,
    /// Filter count.
    pub out_channels: usize,
    /// Weights: `weights[((ky*KERNEL + kx)*in_channels + ci)*out_channels + f]`.
    pub weights: Vec<f64>,
    /// One bias per filter.
    pub biases: Vec<f64>,
}

impl Conv2d {
    /// An all-zero layer of the given channel counts.
    pub fn zeros(in_channels: usize, out_channels: usize) -> Conv2d {
        Conv2d {
            in_channels,
            out_channels,
            weights: vec![0.0; KERNEL * KERNEL * in_channels * out_channels],
            biases: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn widx(&self, ky: usize, kx: usize, ci: usize, f: usize) -> usize {
        ((ky * KERNEL + kx) * self.in_channels + ci) * self.out_channels + f
    }

    /// Valid cross-correlation: output is `(h−2) × (w−2) × out_channels`.
    pub fn forward(&self, input: &Grid3) -> Result<Grid3> {
        if input.c != self.in_channels {
            return Err(Error::Shape(format!(
                "convolution expects {} input channels, got {}",
                self.in_channels, input.c
            )));
        }
        if input.h < KERNEL || input.w < KERNEL {
            return Err(Error::Shape(format!(
                "input {}×{} is smaller than the {KERNEL}×{KERNEL} kernel",
                input.h, input.w
            )));
        }
        let (oh, ow) = (input.h - KERNEL + 1, input.w - KERNEL + 1);
        let mut out = Grid3::zeros(oh, ow, self.out_channels);
        for y in 0..oh {
            for x in 0..ow {
                let base = out.idx(y, x, 0);
                out.data[base..base + self.out_channels].copy_from_slice(&self.biases);
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let in_base = input.idx(y + ky, x + kx, 0);
                        for ci in 0..self.in_channels {
                            let v = input.data[in_base + ci];
                            let w_base = self.widx(ky, kx, ci, 0);
                            for f in 0..self.out_channels {
                                out.data[base + f] += v * self.weights[w_base + f];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Gradients of a scalar loss w.r.t. weights, biases, and input, given
    /// the loss gradient at the layer output.
    pub fn backward(
        &self,
        input: &Grid3,
        grad_out: &Grid3,
    ) -> (Vec<f64>, Vec<f64>, Grid3) {
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.biases.len()];
        let mut grad_in = Grid3::zeros(input.h, input.w, input.c);
        for y in 0..grad_out.h {
            for x in 0..grad_out.w {
                let base = grad_out.idx(y, x, 0);
                for f in 0..self.out_channels {
                    grad_b[f] += grad_out.data[base + f];
                }
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let in_base = input.idx(y + ky, x + kx, 0);
                        for ci in 0..self.in_channels {
                            let v = input.data[in_base + ci];
                            let w_base = self.widx(ky, kx, ci, 0);
                            let mut din = 0.0;
                            for f in 0..self.out_channels {
                                let g = grad_out.data[base + f];
                                grad_w[w_base + f] += v * g;
                                din += self.weights[w_base + f] * g;
                            }
                            grad_in.data[in_base + ci] += din;
                        }
                    }
                }
            }
        }
        (grad_w, grad_b, grad_in)
    }

    /// Accumulates weight and bias gradients only; the layer sits first in
    /// the network, so its input gradient is never consumed in training.
    pub fn backward_params(
        &self,
        input: &Grid3,
        grad_out: &Grid3,
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) {
        for y in 0..grad_out.h {
            for x in 0..grad_out.w {
                let base = grad_out.idx(y, x, 0);
                for f in 0..self.out_channels {
                    grad_b[f] += grad_out.data[base + f];
                }
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let in_base = input.idx(y + ky, x + kx, 0);
                        for ci in 0..self.in_channels {
                            let v = input.data[in_base + ci];
                            let w_base = self.widx(ky, kx, ci, 0);
                            for f in 0..self.out_channels {
                                grad_w[w_base + f] += v * grad_out.data[base + f];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Non-overlapping 2×2 max pooling, stride 2; odd trailing row/column
/// dropped. Returns the pooled grid and, per output element, the flat
/// input index of its maximum (ties take the first in scan order).
pub fn maxpool2x2(input: &Grid3) -> Result<(Grid3, Vec<usize>)> {
    if input.h < 2 || input.w < 2 {
        return Err(Error::Shape(format!(
            "cannot 2×2-pool a {}×{} grid",
            input.h, input.w
        )));
    }
    let (oh, ow) = (input.h / 2, input.w / 2);
    let mut out = Grid3::zeros(oh, ow, input.c);
    let mut argmax = vec![0usize; oh * ow * input.c];
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..input.c {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = input.idx(2 * y + dy, 2 * x + dx, ch);
                        if input.data[idx] > best {
                            best = input.data[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = out.idx(y, x, ch);
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

/// Routes output gradients back to each window's argmax position.
pub fn maxpool2x2_backward(
    input_shape: (usize, usize, usize),
    argmax: &[usize],
    grad_out: &Grid3,
) -> Grid3 {
    let mut grad_in = Grid3::zeros(input_shape.0, input_shape.1, input_shape.2);
    for (o, &src) in argmax.iter().enumerate() {
        grad_in.data[src] += grad_out.data[o];
    }
    grad_in
}

/// Per-feature batch normalization over a rows × features matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    /// Learned scale per feature.
    pub gamma: Vec<f64>,
    /// Learned shift per feature.
    pub beta: Vec<f64>,
    /// Running mean used in inference.
    pub running_mean: Vec<f64>,
    /// Running (biased) variance used in inference.
    pub running_var: Vec<f64>,
}

/// Batch statistics cached by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    rows: usize,
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    /// Identity initialization: γ = 1, β = 0, running mean 0, variance 1.
    pub fn new(features: usize) -> BatchNorm {
        BatchNorm {
            gamma: vec![1.0; features],
            beta: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
        }
    }

    /// Feature (column) count.
    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    fn check_matrix(&self, len: usize) -> Result<usize> {
        let features = self.features();
        if features == 0 || len % features != 0 {
            return Err(Error::Shape(format!(
                "{len} values do not form rows of {features} features"
            )));
        }
        Ok(len / features)
    }

    /// Normalizes in place with batch statistics (biased variance), caching
    /// what the backward pass needs; with `update_running` the running
    /// statistics absorb the batch at momentum [`BN_MOMENTUM`].
    pub fn forward_train(&mut self, data: &mut [f64], update_running: bool) -> Result<BnCache> {
        let rows = self.check_matrix(data.len())?;
        if rows < 2 {
            return Err(Error::Data(
                "batch normalization needs at least 2 rows in training mode".to_string(),
            ));
        }
        let features = self.features();
        let mut mean = vec![0.0; features];
        for r in 0..rows {
            for f in 0..features {
                mean[f] += data[r * features + f];
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        let mut var = vec![0.0; features];
        for r in 0..rows {
            for f in 0..features {
                let d = data[r * features + f] - mean[f];
                var[f] += d * d;
            }
        }
        for v in &mut var {
            *v /= rows as f64;
        }
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
        let mut x_hat = vec![0.0; data.len()];
        for r in 0..rows {
            for f in 0..features {
                let i = r * features + f;
                x_hat[i] = (data[i] - mean[f]) * inv_std[f];
                data[i] = x_hat[i] * self.gamma[f] + self.beta[f];
            }
        }
        if update_running {
            for f in 0..features {
                self.running_mean[f] =
                    BN_MOMENTUM * self.running_mean[f] + (1.0 - BN_MOMENTUM) * mean[f];
                self.running_var[f] =
                    BN_MOMENTUM * self.running_var[f] + (1.0 - BN_MOMENTUM) * var[f];
            }
        }
        Ok(BnCache { rows, x_hat, inv_std })
    }

    /// Normalizes in place with the running statistics.
    pub fn forward_infer(&self, data: &mut [f64]) -> Result<()> {
        let rows = self.check_matrix(data.len())?;
        let features = self.features();
        for r in 0..rows {
            for f in 0..features {
                let i = r * features + f;
                data[i] = (data[i] - self.running_mean[f])
                    / (self.running_var[f] + BN_EPSILON).sqrt()
                    * self.gamma[f]
                    + self.beta[f];
            }
        }
        Ok(())
    }

    /// Transforms the output gradient in place into the input gradient and
    /// returns `(grad_gamma, grad_beta)`. Exact through the batch
    /// statistics.
    pub fn backward(&self, cache: &BnCache, grad: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let features = self.features();
        let rows = cache.rows;
        let m = rows as f64;
        let mut grad_gamma = vec![0.0; features];
        let mut grad_beta = vec![0.0; features];
        let mut sum_dxhat = vec![0.0; features];
        let mut sum_dxhat_xhat = vec![0.0; features];
        for r in 0..rows {
            for f in 0..features {
                let i = r * features + f;
                let dy = grad[i];
                grad_beta[f] += dy;
                grad_gamma[f] += dy * cache.x_hat[i];
                let dxhat = dy * self.gamma[f];
                sum_dxhat[f] += dxhat;
                sum_dxhat_xhat[f] += dxhat * cache.x_hat[i];
            }
        }
        for r in 0..rows {
            for f in 0..features {
                let i = r * features + f;
                let dxhat = grad[i] * self.gamma[f];
                grad[i] = cache.inv_std[f] / m
                    * (m * dxhat - sum_dxhat[f] - cache.x_hat[i] * sum_dxhat_xhat[f]);
            }
        }
        (grad_gamma, grad_beta)
    }
}

/// A fully connected layer over a rows × features matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Input feature count.
    pub in_features: usize,
    /// Output feature count.
    pub out_features: usize,
    /// Weights: `weights[i * out_features + j]`.
    pub weights: Vec<f64>,
    /// One bias per output.
    pub biases: Vec<f64>,
}

impl Dense {
    /// An all-zero layer.
    pub fn zeros(in_features: usize, out_features: usize) -> Dense {
        Dense {
            in_features,
            out_features,
            weights: vec![0.0; in_features * out_features],
            biases: vec![0.0; out_features],
        }
    }

    /// `rows × in_features` → `rows × out_features`.
    pub fn forward(&self, input: &[f64], rows: usize) -> Result<Vec<f64>> {
        if input.len() != rows * self.in_features {
            return Err(Error::Shape(format!(
                "dense layer expects {rows}×{} inputs, got {} values",
                self.in_features,
                input.len()
            )));
        }
        let mut out = vec![0.0; rows * self.out_features];
        for r in 0..rows {
            let in_row = &input[r * self.in_features..(r + 1) * self.in_features];
            let out_row = &mut out[r * self.out_features..(r + 1) * self.out_features];
            out_row.copy_from_slice(&self.biases);
            for (i, &v) in in_row.iter().enumerate() {
                let w_row = &self.weights[i * self.out_features..(i + 1) * self.out_features];
                for (o, &w) in out_row.iter_mut().zip(w_row) {
                    *o += v * w;
                }
            }
        }
        Ok(out)
    }

    /// Gradients w.r.t. weights, biases, and input.
    pub fn backward(
        &self,
        input: &[f64],
        grad_out: &[f64],
        rows: usize,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_b = vec![0.0; self.biases.len()];
        let mut grad_in = vec![0.0; input.len()];
        for r in 0..rows {
            let in_row = &input[r * self.in_features..(r + 1) * self.in_features];
            let g_row = &grad_out[r * self.out_features..(r + 1) * self.out_features];
            for (j, &g) in g_row.iter().enumerate() {
                grad_b[j] += g;
            }
            for (i, &v) in in_row.iter().enumerate() {
                let w_row = &self.weights[i * self.out_features..(i + 1) * self.out_features];
                let mut din = 0.0;
                for (j, &g) in g_row.iter().enumerate() {
                    grad_w[i * self.out_features + j] += v * g;
                    din += w_row[j] * g;
                }
                grad_in[r * self.in_features + i] = din;
            }
        }
        (grad_w, grad_b, grad_in)
    }
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, else
/// `1/(1 − rate)`, so the expected activation matches inference.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    let keep = 1.0 / (1.0 - rate);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect())
}

/// Mean binary cross-entropy over all (instance, label) entries, with
/// probabilities clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]`; natural log.
pub fn bce_loss(probabilities: &[f64], labels: &[f64]) -> Result<f64> {
    if probabilities.len() != labels.len() || probabilities.is_empty() {
        return Err(Error::Shape(format!(
            "{} probabilities against {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&p, &y) in probabilities.iter().zip(labels) {
        if y != 0.0 && y != 1.0 {
            return Err(Error::Data(format!("labels must be 0 or 1, got {y}")));
        }
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    Ok(total / probabilities.len() as f64)
}

/// Gradient of [`bce_loss`] w.r.t. the pre-sigmoid logits: `(p − y)/count`
/// inside the clamp range, exactly zero where the clamp is active.
pub(crate) fn bce_grad_logits(probabilities: &[f64], labels: &[f64]) -> Vec<f64> {
    let count = probabilities.len() as f64;
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            if p < PROB_CLAMP || p > 1.0 - PROB_CLAMP {
                0.0
            } else {
                (p - y) / count
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
