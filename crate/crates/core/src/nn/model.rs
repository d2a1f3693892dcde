//! The shallow dual-head regressor.
//!
//! ```text
//! image ─ conv3×3×8 ─ relu ─ pool ─ conv3×3×16 ─ relu ─ pool ─ fc1(128) ─ relu
//!       ─ fc2(64) ─ relu ─ fc3(T) ═ source head ─ fc4(1) ═ amplitude
//! ```
//!
//! `theta1` holds everything up to and including the source head, `theta2`
//! the final affine map from the source head to the amplitude.

use serde::{Deserialize, Serialize};

use super::layers::{
    max_pool2, max_pool2_backward, relu_backward, relu_in_place, Conv2d, Dense, Init,
};
use super::tensors::{NamedTensor, TensorSet};
use crate::rng::{seeded, Rng};
use crate::signal::WindowedSource;
use crate::synthgen::StimulusImage;
use crate::{Error, Result};

pub const CONV1_CHANNELS: usize = 8;
pub const CONV2_CHANNELS: usize = 16;
pub const KERNEL: usize = 3;
pub const FC1_WIDTH: usize = 128;
pub const FC2_WIDTH: usize = 64;

/// Convolutional stack plus FC1 and FC2, shared with the auxiliary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub input_height: usize,
    pub input_width: usize,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc1: Dense,
    pub fc2: Dense,
}

/// Spatial sizes through the stack.
#[derive(Debug, Clone, Copy)]
struct Dims {
    h0: usize,
    w0: usize,
    h1: usize,
    w1: usize,
    hp1: usize,
    wp1: usize,
    h2: usize,
    w2: usize,
    hp2: usize,
    wp2: usize,
}

impl Dims {
    fn new(h: usize, w: usize) -> Option<Self> {
        let valid = |n: usize| n.checked_sub(KERNEL - 1);
        let h1 = valid(h)?;
        let w1 = valid(w)?;
        let (hp1, wp1) = (h1 / 2, w1 / 2);
        let h2 = valid(hp1)?;
        let w2 = valid(wp1)?;
        let (hp2, wp2) = (h2 / 2, w2 / 2);
        if hp2 == 0 || wp2 == 0 {
            return None;
        }
        Some(Self { h0: h, w0: w, h1, w1, hp1, wp1, h2, w2, hp2, wp2 })
    }

    fn flat(&self) -> usize {
        CONV2_CHANNELS * self.hp2 * self.wp2
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BackboneCache {
    cols1: Vec<f64>,
    a1: Vec<f64>,
    p1: Vec<f64>,
    idx1: Vec<usize>,
    cols2: Vec<f64>,
    a2: Vec<f64>,
    p2: Vec<f64>,
    idx2: Vec<usize>,
    h1: Vec<f64>,
    /// Backbone output (post-ReLU FC2).
    pub h2: Vec<f64>,
}

impl Backbone {
    fn dims(&self) -> Dims {
        Dims::new(self.input_height, self.input_width).expect("validated at construction")
    }

    fn check_input(height: usize, width: usize) -> Result<Dims> {
        Dims::new(height, width).ok_or_else(|| {
            Error::Shape(format!("{height}x{width} input is too small for the conv stack"))
        })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        let d = Self::check_input(height, width)?;
        Ok(Self {
            input_height: height,
            input_width: width,
            conv1: Conv2d::zeros(1, CONV1_CHANNELS, KERNEL),
            conv2: Conv2d::zeros(CONV1_CHANNELS, CONV2_CHANNELS, KERNEL),
            fc1: Dense::zeros(d.flat(), FC1_WIDTH),
            fc2: Dense::zeros(FC1_WIDTH, FC2_WIDTH),
        })
    }

    pub fn init(height: usize, width: usize, rng: &mut Rng) -> Result<Self> {
        let d = Self::check_input(height, width)?;
        Ok(Self {
            input_height: height,
            input_width: width,
            conv1: Conv2d::init(1, CONV1_CHANNELS, KERNEL, rng),
            conv2: Conv2d::init(CONV1_CHANNELS, CONV2_CHANNELS, KERNEL, rng),
            fc1: Dense::init(d.flat(), FC1_WIDTH, Init::Relu, rng),
            fc2: Dense::init(FC1_WIDTH, FC2_WIDTH, Init::Relu, rng),
        })
    }

    pub fn output_width(&self) -> usize {
        FC2_WIDTH
    }

    pub fn check_image(&self, image: &StimulusImage) -> Result<()> {
        if image.height != self.input_height
            || image.width != self.input_width
            || image.pixels.len() != image.height * image.width
        {
            return Err(Error::Shape(format!(
                "model expects {}x{} images, got {}x{} ({} pixels)",
                self.input_height,
                self.input_width,
                image.height,
                image.width,
                image.pixels.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, pixels: &[f64]) -> BackboneCache {
        let d = self.dims();
        let cols1 = self.conv1.im2col(pixels, d.h0, d.w0);
        let mut a1 = vec![0.0; CONV1_CHANNELS * d.h1 * d.w1];
        self.conv1.forward_cols(&cols1, d.h1 * d.w1, &mut a1);
        relu_in_place(&mut a1);
        let mut p1 = vec![0.0; CONV1_CHANNELS * d.hp1 * d.wp1];
        let mut idx1 = vec![0; p1.len()];
        max_pool2(&a1, CONV1_CHANNELS, d.h1, d.w1, &mut p1, &mut idx1);

        let cols2 = self.conv2.im2col(&p1, d.hp1, d.wp1);
        let mut a2 = vec![0.0; CONV2_CHANNELS * d.h2 * d.w2];
        self.conv2.forward_cols(&cols2, d.h2 * d.w2, &mut a2);
        relu_in_place(&mut a2);
        let mut p2 = vec![0.0; d.flat()];
        let mut idx2 = vec![0; p2.len()];
        max_pool2(&a2, CONV2_CHANNELS, d.h2, d.w2, &mut p2, &mut idx2);

        let mut h1 = vec![0.0; FC1_WIDTH];
        self.fc1.forward(&p2, &mut h1);
        relu_in_place(&mut h1);
        let mut h2 = vec![0.0; FC2_WIDTH];
        self.fc2.forward(&h1, &mut h2);
        relu_in_place(&mut h2);
        BackboneCache { cols1, a1, p1, idx1, cols2, a2, p2, idx2, h1, h2 }
    }

    /// Backpropagates `d_h2` (gradient w.r.t. the post-ReLU output).
    pub fn backward(&self, cache: &BackboneCache, d_h2: &[f64], grad: &mut Backbone) {
        let d = self.dims();
        let mut g2 = d_h2.to_vec();
        relu_backward(&cache.h2, &mut g2);
        let mut g1 = vec![0.0; FC1_WIDTH];
        self.fc2.backward(&cache.h1, &g2, &mut grad.fc2, Some(&mut g1));
        relu_backward(&cache.h1, &mut g1);
        let mut gp2 = vec![0.0; cache.p2.len()];
        self.fc1.backward(&cache.p2, &g1, &mut grad.fc1, Some(&mut gp2));

        let mut ga2 = vec![0.0; cache.a2.len()];
        max_pool2_backward(&gp2, &cache.idx2, &mut ga2);
        relu_backward(&cache.a2, &mut ga2);
        let mut gp1 = vec![0.0; cache.p1.len()];
        self.conv2
            .backward(&cache.cols2, d.hp1, d.wp1, &ga2, &mut grad.conv2, Some(&mut gp1));

        let mut ga1 = vec![0.0; cache.a1.len()];
        max_pool2_backward(&gp1, &cache.idx1, &mut ga1);
        relu_backward(&cache.a1, &mut ga1);
        self.conv1.backward(&cache.cols1, d.h0, d.w0, &ga1, &mut grad.conv1, None);
    }
}

impl TensorSet for Backbone {
    fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        vec![
            NamedTensor::new(
                "conv1.weight",
                vec![CONV1_CHANNELS, 1, KERNEL, KERNEL],
                &self.conv1.weight,
            ),
            NamedTensor::new("conv1.bias", vec![CONV1_CHANNELS], &self.conv1.bias),
            NamedTensor::new(
                "conv2.weight",
                vec![CONV2_CHANNELS, CONV1_CHANNELS, KERNEL, KERNEL],
                &self.conv2.weight,
            ),
            NamedTensor::new("conv2.bias", vec![CONV2_CHANNELS], &self.conv2.bias),
            NamedTensor::new("fc1.weight", vec![self.fc1.outputs, self.fc1.inputs], &self.fc1.weight),
            NamedTensor::new("fc1.bias", vec![self.fc1.outputs], &self.fc1.bias),
            NamedTensor::new("fc2.weight", vec![self.fc2.outputs, self.fc2.inputs], &self.fc2.weight),
            NamedTensor::new("fc2.bias", vec![self.fc2.outputs], &self.fc2.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.fc1.weight,
            &mut self.fc1.bias,
            &mut self.fc2.weight,
            &mut self.fc2.bias,
        ]
    }
}

/// Parameters up to and including the source head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta1 {
    pub backbone: Backbone,
    /// FC3, the source head; its width is the window length `T`.
    pub fc3: Dense,
}

impl TensorSet for Theta1 {
    fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut v = self.backbone.named_tensors();
        v.push(NamedTensor::new("fc3.weight", vec![self.fc3.outputs, self.fc3.inputs], &self.fc3.weight));
        v.push(NamedTensor::new("fc3.bias", vec![self.fc3.outputs], &self.fc3.bias));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.backbone.tensors_mut();
        v.push(&mut self.fc3.weight);
        v.push(&mut self.fc3.bias);
        v
    }
}

/// All weights of the dual-head regressor, partitioned into `theta1`
/// (image → source signal) and `theta2` (source signal → amplitude).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub theta1: Theta1,
    /// FC4, `T → 1`, no nonlinearity.
    pub theta2: Dense,
}

impl ModelParams {
    /// All-zero parameters; also the shape of a gradient accumulator.
    pub fn zeros(height: usize, width: usize, source_len: usize) -> Result<Self> {
        if source_len == 0 {
            return Err(Error::Shape("source head needs at least one unit".into()));
        }
        Ok(Self {
            theta1: Theta1 {
                backbone: Backbone::zeros(height, width)?,
                fc3: Dense::zeros(FC2_WIDTH, source_len),
            },
            theta2: Dense::zeros(source_len, 1),
        })
    }

    pub fn init(height: usize, width: usize, source_len: usize, seed: u64) -> Result<Self> {
        if source_len == 0 {
            return Err(Error::Shape("source head needs at least one unit".into()));
        }
        let mut rng = seeded(seed);
        let backbone = Backbone::init(height, width, &mut rng)?;
        let fc3 = Dense::init(FC2_WIDTH, source_len, Init::Linear, &mut rng);
        let theta2 = Dense::init(source_len, 1, Init::Linear, &mut rng);
        Ok(Self {
            theta1: Theta1 { backbone, fc3 },
            theta2,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let b = &self.theta1.backbone;
        Self::zeros(b.input_height, b.input_width, self.source_len()).expect("shape already valid")
    }

    pub fn source_len(&self) -> usize {
        self.theta1.fc3.outputs
    }

    pub fn input_dims(&self) -> (usize, usize) {
        (self.theta1.backbone.input_height, self.theta1.backbone.input_width)
    }
}

impl TensorSet for ModelParams {
    fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut v: Vec<_> = self
            .theta1
            .named_tensors()
            .into_iter()
            .map(|t| t.prefixed("theta1"))
            .collect();
        v.extend(
            self.theta2
                .named_tensors()
                .into_iter()
                .map(|t| t.prefixed("theta2.fc4")),
        );
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.theta1.tensors_mut();
        v.extend(self.theta2.tensors_mut());
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Source-head activations.
    pub s_pred: Vec<f64>,
    pub y_pred: f64,
}

pub(crate) struct ForwardTrace {
    pub backbone: BackboneCache,
    pub s_pred: Vec<f64>,
    pub y_pred: f64,
}

pub(crate) fn forward_trace(params: &ModelParams, pixels: &[f64]) -> ForwardTrace {
    let backbone = params.theta1.backbone.forward(pixels);
    let mut s_pred = vec![0.0; params.source_len()];
    params.theta1.fc3.forward(&backbone.h2, &mut s_pred);
    let mut y = [0.0];
    params.theta2.forward(&s_pred, &mut y);
    ForwardTrace { backbone, s_pred, y_pred: y[0] }
}

/// Source-head activations only (the part of the network `theta1` owns).
pub fn source_prediction(theta1: &Theta1, image: &StimulusImage) -> Result<Vec<f64>> {
    theta1.backbone.check_image(image)?;
    let cache = theta1.backbone.forward(&image.pixels);
    let mut s = vec![0.0; theta1.fc3.outputs];
    theta1.fc3.forward(&cache.h2, &mut s);
    Ok(s)
}

pub fn forward(params: &ModelParams, image: &StimulusImage) -> Result<ForwardOutput> {
    params.theta1.backbone.check_image(image)?;
    let t = forward_trace(params, &image.pixels);
    Ok(ForwardOutput { s_pred: t.s_pred, y_pred: t.y_pred })
}

fn check_window(theta1: &Theta1, w: &WindowedSource) -> Result<()> {
    if w.len() != theta1.fc3.outputs {
        return Err(Error::Shape(format!(
            "source head has {} units but window has {} samples",
            theta1.fc3.outputs,
            w.len()
        )));
    }
    Ok(())
}

/// Mean squared L2 distance between source-head activations and true windows.
pub fn loss1(theta1: &Theta1, batch: &[(&StimulusImage, &WindowedSource)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut total = 0.0;
    for (image, window) in batch {
        check_window(theta1, window)?;
        let s = source_prediction(theta1, image)?;
        total += s
            .iter()
            .zip(&window.values)
            .map(|(p, t)| (t - p).powi(2))
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Mean squared amplitude error.
pub fn loss2(params: &ModelParams, batch: &[(&StimulusImage, f64)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut total = 0.0;
    for (image, y) in batch {
        total += (y - forward(params, image)?.y_pred).powi(2);
    }
    Ok(total / batch.len() as f64)
}

/// Which loss a gradient is taken of, and which partition the regime trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// loss₁ on `theta1`; `theta2` is frozen (and has zero gradient).
    Source,
    /// loss₂ with `theta1` frozen.
    AmplitudeHead,
    /// loss₂ on every parameter (training without EEG).
    AmplitudeFull,
}

/// Training pair for gradient evaluation. `window` is only read by
/// [`Objective::Source`]; `amplitude` only by the amplitude objectives.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub image: &'a StimulusImage,
    pub window: &'a WindowedSource,
    pub amplitude: f64,
}

#[derive(Debug, Clone)]
pub struct Gradient {
    pub values: ModelParams,
    pub loss: f64,
    pub theta1_frozen: bool,
    pub theta2_frozen: bool,
}

/// Exact gradient of the selected loss over `batch`. Frozen partitions are
/// still differentiated; the flags tell the optimizer to leave them alone.
pub fn grad(params: &ModelParams, batch: &[BatchItem<'_>], objective: Objective) -> Result<Gradient> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    for item in batch {
        params.theta1.backbone.check_image(item.image)?;
        if objective == Objective::Source {
            check_window(&params.theta1, item.window)?;
        }
    }
    let mut g = params.zeros_like();
    let loss = accumulate_grad(params, batch, objective, &mut g);
    Ok(Gradient {
        values: g,
        loss,
        theta1_frozen: objective == Objective::AmplitudeHead,
        theta2_frozen: objective == Objective::Source,
    })
}

/// Adds the batch gradient into `g` and returns the batch loss. Inputs are
/// assumed validated.
pub(crate) fn accumulate_grad(
    params: &ModelParams,
    batch: &[BatchItem<'_>],
    objective: Objective,
    g: &mut ModelParams,
) -> f64 {
    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let t_len = params.source_len();
    let mut d_h2 = vec![0.0; FC2_WIDTH];
    for item in batch {
        let pixels = item.image.pixels.as_slice();
        let trace = forward_trace(params, pixels);
        let d_s: Vec<f64> = match objective {
            Objective::Source => {
                let mut d = vec![0.0; t_len];
                for ((di, p), t) in d.iter_mut().zip(&trace.s_pred).zip(&item.window.values) {
                    let r = p - t;
                    loss += r * r * inv_n;
                    *di = 2.0 * r * inv_n;
                }
                d
            }
            Objective::AmplitudeHead | Objective::AmplitudeFull => {
                let r = trace.y_pred - item.amplitude;
                loss += r * r * inv_n;
                let dy = 2.0 * r * inv_n;
                params.theta2.backward(&trace.s_pred, &[dy], &mut g.theta2, None);
                params.theta2.weight.iter().map(|w| dy * w).collect()
            }
        };
        params
            .theta1
            .fc3
            .backward(&trace.backbone.h2, &d_s, &mut g.theta1.fc3, Some(&mut d_h2));
        params
            .theta1
            .backbone
            .backward(&trace.backbone, &d_h2, &mut g.theta1.backbone);
    }
    loss
}
