//! Softmax classifier on the shared conv stack. Its class probabilities feed
//! the Inception Score analog and its penultimate (FC2) activations are the
//! embedding for MMD and FID.

use serde::{Deserialize, Serialize};

use super::layers::{Dense, Init};
use super::model::Backbone;
use super::optim::Momentum;
use super::tensors::{NamedTensor, TensorSet};
use super::train::{classifier_epoch_order, TrainConfig};
use crate::numkit::DenseMatrix;
use crate::rng::seeded;
use crate::synthgen::StimulusImage;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub backbone: Backbone,
    pub head: Dense,
}

impl TensorSet for ClassifierParams {
    fn named_tensors(&self) -> Vec<NamedTensor<'_>> {
        let mut v: Vec<_> = self
            .backbone
            .named_tensors()
            .into_iter()
            .map(|t| t.prefixed("backbone"))
            .collect();
        v.extend(self.head.named_tensors().into_iter().map(|t| t.prefixed("head")));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.backbone.tensors_mut();
        v.extend(self.head.tensors_mut());
        v
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl ClassifierParams {
    pub fn zeros(height: usize, width: usize, n_classes: usize) -> Result<Self> {
        let backbone = Backbone::zeros(height, width)?;
        Ok(Self {
            head: Dense::zeros(backbone.output_width(), n_classes),
            backbone,
        })
    }

    pub fn init(height: usize, width: usize, n_classes: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let backbone = Backbone::init(height, width, &mut rng)?;
        Ok(Self {
            head: Dense::init(backbone.output_width(), n_classes, Init::Linear, &mut rng),
            backbone,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.head.outputs
    }

    fn logits(&self, image: &StimulusImage) -> Result<(Vec<f64>, Vec<f64>)> {
        self.backbone.check_image(image)?;
        let cache = self.backbone.forward(&image.pixels);
        let mut z = vec![0.0; self.n_classes()];
        self.head.forward(&cache.h2, &mut z);
        Ok((z, cache.h2))
    }

    /// n × k matrix of p(class | image); rows sum to one.
    pub fn probabilities(&self, images: &[&StimulusImage]) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(images.len() * self.n_classes());
        for img in images {
            data.extend(softmax(&self.logits(img)?.0));
        }
        DenseMatrix::new(images.len(), self.n_classes(), data)
    }

    /// n × 64 matrix of penultimate activations.
    pub fn features(&self, images: &[&StimulusImage]) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(images.len() * self.backbone.output_width());
        for img in images {
            self.backbone.check_image(img)?;
            data.extend(self.backbone.forward(&img.pixels).h2);
        }
        DenseMatrix::new(images.len(), self.backbone.output_width(), data)
    }

    /// Mean cross-entropy and its gradient over a batch.
    pub fn cross_entropy_grad(&self, batch: &[(&StimulusImage, usize)]) -> Result<(f64, ClassifierParams)> {
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let mut grad = Self::zeros(self.backbone.input_height, self.backbone.input_width, self.n_classes())?;
        let loss = self.accumulate(batch, &mut grad)?;
        Ok((loss, grad))
    }

    fn accumulate(&self, batch: &[(&StimulusImage, usize)], grad: &mut ClassifierParams) -> Result<f64> {
        let inv_n = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut d_h2 = vec![0.0; self.backbone.output_width()];
        for &(img, label) in batch {
            if label >= self.n_classes() {
                return Err(Error::Input(format!("label {label} out of range")));
            }
            self.backbone.check_image(img)?;
            let cache = self.backbone.forward(&img.pixels);
            let mut z = vec![0.0; self.n_classes()];
            self.head.forward(&cache.h2, &mut z);
            let p = softmax(&z);
            loss -= p[label].max(f64::MIN_POSITIVE).ln() * inv_n;
            let dz: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(k, &pk)| (pk - if k == label { 1.0 } else { 0.0 }) * inv_n)
                .collect();
            self.head.backward(&cache.h2, &dz, &mut grad.head, Some(&mut d_h2));
            self.backbone
                .backward(&cache, &d_h2, &mut grad.backbone);
        }
        Ok(loss)
    }
}

/// Trains the classifier for `cfg.stage1_epochs` epochs of mini-batch
/// cross-entropy descent.
pub fn train_classifier(
    images: &[&StimulusImage],
    labels: &[usize],
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<ClassifierParams> {
    if n_classes < 2 {
        return Err(Error::Input("classifier needs at least 2 categories".into()));
    }
    if images.len() != labels.len() {
        return Err(Error::Input(format!("{} images but {} labels", images.len(), labels.len())));
    }
    let first = images
        .first()
        .ok_or_else(|| Error::Input("no images to classify".into()))?;
    cfg.validate(images.len())?;
    let mut params = ClassifierParams::init(first.height, first.width, n_classes, cfg.weight_init_seed)?;
    let mut opt = Momentum::new(cfg.learning_rate, cfg.momentum, cfg.l2_weight_decay);
    let mut grad = ClassifierParams::zeros(first.height, first.width, n_classes)?;
    for epoch in 0..cfg.stage1_epochs {
        let order = classifier_epoch_order(images.len(), cfg.weight_init_seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            for t in grad.tensors_mut() {
                t.fill(0.0);
            }
            let batch: Vec<_> = chunk.iter().map(|&i| (images[i], labels[i])).collect();
            let loss = params.accumulate(&batch, &mut grad)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            opt.step(&mut params, &grad);
        }
        if !params.all_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(params)
}
