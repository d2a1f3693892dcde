//! Fixed layers with hand-written backward passes.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Uniform initialisation bound for a layer followed by ReLU.
fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Uniform initialisation bound for a linear output layer.
fn lecun_bound(fan_in: usize) -> f64 {
    (3.0 / fan_in as f64).sqrt()
}

fn uniform(n: usize, bound: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    Relu,
    Linear,
}

/// Valid (unpadded) 2-D convolution, stride 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][ky][kx]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            weight: vec![0.0; out_channels * in_channels * kernel * kernel],
            bias: vec![0.0; out_channels],
        }
    }

    pub fn init(in_channels: usize, out_channels: usize, kernel: usize, rng: &mut Rng) -> Self {
        let fan_in = in_channels * kernel * kernel;
        Self {
            weight: uniform(out_channels * fan_in, he_bound(fan_in), rng),
            ..Self::zeros(in_channels, out_channels, kernel)
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 1 - self.kernel, w + 1 - self.kernel)
    }

    /// Unrolls input patches: row `(c·k + ky)·k + kx`, column `y·ow + x`.
    pub fn im2col(&self, input: &[f64], h: usize, w: usize) -> Vec<f64> {
        let k = self.kernel;
        let (oh, ow) = self.out_dims(h, w);
        let plane = oh * ow;
        let mut cols = vec![0.0; self.in_channels * k * k * plane];
        for c in 0..self.in_channels {
            let src = &input[c * h * w..(c + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let r = (c * k + ky) * k + kx;
                    let dst = &mut cols[r * plane..(r + 1) * plane];
                    for y in 0..oh {
                        dst[y * ow..(y + 1) * ow]
                            .copy_from_slice(&src[(y + ky) * w + kx..(y + ky) * w + kx + ow]);
                    }
                }
            }
        }
        cols
    }

    /// Forward pass on unrolled patches from [`Conv2d::im2col`].
    pub fn forward_cols(&self, cols: &[f64], plane: usize, out: &mut [f64]) {
        let rows = self.in_channels * self.kernel * self.kernel;
        debug_assert_eq!(cols.len(), rows * plane);
        debug_assert_eq!(out.len(), self.out_channels * plane);
        for o in 0..self.out_channels {
            let out_o = &mut out[o * plane..(o + 1) * plane];
            out_o.fill(self.bias[o]);
            let w_o = &self.weight[o * rows..(o + 1) * rows];
            for (r, &wt) in w_o.iter().enumerate() {
                let col = &cols[r * plane..(r + 1) * plane];
                for (d, s) in out_o.iter_mut().zip(col) {
                    *d += wt * s;
                }
            }
        }
    }

    pub fn forward(&self, input: &[f64], h: usize, w: usize, out: &mut [f64]) {
        let (oh, ow) = self.out_dims(h, w);
        let cols = self.im2col(input, h, w);
        self.forward_cols(&cols, oh * ow, out);
    }

    /// Accumulates parameter gradients into `grad`; writes the input gradient
    /// into `d_input` when given. `cols` comes from [`Conv2d::im2col`].
    ///
    /// Output gradients behind ReLU and max pooling are mostly zero, so only
    /// nonzero positions are visited.
    pub fn backward(
        &self,
        cols: &[f64],
        h: usize,
        w: usize,
        d_out: &[f64],
        grad: &mut Conv2d,
        mut d_input: Option<&mut [f64]>,
    ) {
        let k = self.kernel;
        let rows = self.in_channels * k * k;
        let (oh, ow) = self.out_dims(h, w);
        let plane = oh * ow;
        if let Some(d) = d_input.as_deref_mut() {
            d.fill(0.0);
        }
        let mut nonzero: Vec<(usize, f64)> = Vec::with_capacity(plane);
        for o in 0..self.out_channels {
            nonzero.clear();
            nonzero.extend(
                d_out[o * plane..(o + 1) * plane]
                    .iter()
                    .enumerate()
                    .filter(|(_, &g)| g != 0.0)
                    .map(|(p, &g)| (p, g)),
            );
            if nonzero.is_empty() {
                continue;
            }
            grad.bias[o] += nonzero.iter().map(|&(_, g)| g).sum::<f64>();
            let gw = &mut grad.weight[o * rows..(o + 1) * rows];
            for (r, gwr) in gw.iter_mut().enumerate() {
                let col = &cols[r * plane..(r + 1) * plane];
                *gwr += nonzero.iter().map(|&(p, g)| g * col[p]).sum::<f64>();
            }
            if let Some(d) = d_input.as_deref_mut() {
                let w_o = &self.weight[o * rows..(o + 1) * rows];
                for &(p, g) in &nonzero {
                    let (y, x) = (p / ow, p % ow);
                    for c in 0..self.in_channels {
                        for ky in 0..k {
                            let base = c * h * w + (y + ky) * w + x;
                            let wrow = &w_o[(c * k + ky) * k..(c * k + ky + 1) * k];
                            for (dd, wt) in d[base..base + k].iter_mut().zip(wrow) {
                                *dd += wt * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Dot product with independent partial sums so the loop vectorizes.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Fully connected layer, `out = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    pub fn init(inputs: usize, outputs: usize, init: Init, rng: &mut Rng) -> Self {
        let bound = match init {
            Init::Relu => he_bound(inputs),
            Init::Linear => lecun_bound(inputs),
        };
        Self {
            weight: uniform(inputs * outputs, bound, rng),
            ..Self::zeros(inputs, outputs)
        }
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        for (o, y) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
            *y = self.bias[o] + dot(row, x);
        }
    }

    pub fn backward(&self, x: &[f64], d_out: &[f64], grad: &mut Dense, d_input: Option<&mut [f64]>) {
        for (o, &g) in d_out.iter().enumerate() {
            grad.bias[o] += g;
            if g == 0.0 {
                continue;
            }
            let grow = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
            for (gw, xi) in grow.iter_mut().zip(x) {
                *gw += g * xi;
            }
        }
        if let Some(d) = d_input {
            d.fill(0.0);
            for (o, &g) in d_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &self.weight[o * self.inputs..(o + 1) * self.inputs];
                for (di, w) in d.iter_mut().zip(row) {
                    *di += g * w;
                }
            }
        }
    }
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes gradient entries whose post-ReLU activation is not positive.
pub fn relu_backward(activation: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2×2 max pooling with stride 2; odd trailing rows/columns are dropped.
pub fn max_pool2(input: &[f64], channels: usize, h: usize, w: usize, out: &mut [f64], argmax: &mut [usize]) {
    let (oh, ow) = (h / 2, w / 2);
    for c in 0..channels {
        let base = c * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = base + (2 * y + dy) * w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                let o = (c * oh + y) * ow + x;
                out[o] = input[best];
                argmax[o] = best;
            }
        }
    }
}

pub fn max_pool2_backward(d_out: &[f64], argmax: &[usize], d_input: &mut [f64]) {
    d_input.fill(0.0);
    for (&g, &i) in d_out.iter().zip(argmax) {
        d_input[i] += g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = crate::rng::seeded(1);
        let conv = Conv2d::init(2, 3, 3, &mut rng);
        let (h, w) = (6, 5);
        let input: Vec<f64> = (0..2 * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let (oh, ow) = conv.out_dims(h, w);
        let mut out = vec![0.0; 3 * oh * ow];
        conv.forward(&input, h, w, &mut out);
        for o in 0..3 {
            for y in 0..oh {
                for x in 0..ow {
                    let mut s = conv.bias[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                s += conv.weight[((o * 2 + c) * 3 + ky) * 3 + kx]
                                    * input[c * h * w + (y + ky) * w + x + kx];
                            }
                        }
                    }
                    assert!((out[(o * oh + y) * ow + x] - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_picks_maximum_and_routes_gradient() {
        let input = [1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 9.0, 1.0, 7.0, 8.0, 6.0, 2.0];
        // one channel, 3 rows × 4 cols; the last row is dropped
        let mut out = [0.0; 2];
        let mut idx = [0usize; 2];
        max_pool2(&input, 1, 3, 4, &mut out, &mut idx);
        assert_eq!(out, [5.0, 9.0]);
        let mut d = [0.0; 12];
        max_pool2_backward(&[1.0, 2.0], &idx, &mut d);
        assert_eq!(d[1], 1.0);
        assert_eq!(d[6], 2.0);
        assert_eq!(d.iter().sum::<f64>(), 3.0);
    }
}
