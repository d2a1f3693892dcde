//! The three training regimes: two-stage with EEG, EEG-shuffled ablation
//! (same trainer, permuted windows) and the no-EEG baseline.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{accumulate_grad, BatchItem, ModelParams, Objective};
use super::optim::Momentum;
use super::tensors::TensorSet;
use super::model::source_prediction;
use crate::rng::{derive_seed, seeded};
use crate::signal::{
    extract_window, single_trial_amplitude_with, AmplitudeMode, WindowedSource,
};
use crate::synthgen::{Dataset, StimulusImage};
use crate::{Error, Result};

const STAGE1_STREAM: u64 = 1;
const STAGE2_STREAM: u64 = 2;
const BASELINE_STREAM: u64 = 3;
const CLASSIFIER_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    /// Epochs of the no-EEG baseline, which trains every parameter on loss₂.
    pub baseline_epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub weight_init_seed: u64,
    pub l2_weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 30,
            stage2_epochs: 30,
            baseline_epochs: 30,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            weight_init_seed: 7,
            l2_weight_decay: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_train: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.l2_weight_decay >= 0.0) {
            return Err(Error::Config("l2_weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_train {
            return Err(Error::Config(format!(
                "batch_size {} must lie in 1..={n_train}",
                self.batch_size
            )));
        }
        Ok(())
    }

    fn optimizer(&self) -> Momentum {
        Momentum::new(self.learning_rate, self.momentum, self.l2_weight_decay)
    }
}

/// One training example: an image, its 400–600 ms source window and its
/// single-trial amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image: StimulusImage,
    pub window: WindowedSource,
    pub amplitude: f64,
    pub category: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub examples: Vec<Example>,
}

impl TrainingSet {
    /// Windows and amplitudes for the selected samples of `ds`.
    pub fn from_dataset(ds: &Dataset, indices: &[usize], mode: AmplitudeMode) -> Result<Self> {
        let examples = indices
            .iter()
            .map(|&i| {
                let s = &ds.samples[i];
                let window = extract_window(&s.trial)?;
                Ok(Example {
                    amplitude: single_trial_amplitude_with(&window, mode),
                    window,
                    image: s.image.clone(),
                    category: s.category,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// (height, width, window length) shared by every example.
    pub fn dims(&self) -> Result<(usize, usize, usize)> {
        let first = self
            .examples
            .first()
            .ok_or_else(|| Error::Input("empty training set".into()))?;
        let dims = (first.image.height, first.image.width, first.window.len());
        for e in &self.examples {
            if (e.image.height, e.image.width, e.window.len()) != dims
                || e.image.pixels.len() != e.image.height * e.image.width
            {
                return Err(Error::Shape("examples differ in image or window size".into()));
            }
        }
        Ok(dims)
    }

    fn items(&self, order: &[usize]) -> Vec<BatchItem<'_>> {
        order
            .iter()
            .map(|&i| {
                let e = &self.examples[i];
                BatchItem {
                    image: &e.image,
                    window: &e.window,
                    amplitude: e.amplitude,
                }
            })
            .collect()
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub stage1: Vec<f64>,
    pub stage2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub initial: ModelParams,
    pub after_stage1: ModelParams,
    pub params: ModelParams,
    pub trace: TrainTrace,
}

fn epoch_order(n: usize, seed: u64, stream: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(derive_seed(&[seed, stream, epoch as u64])));
    order
}

fn zero<T: TensorSet>(t: &mut T) {
    for v in t.tensors_mut() {
        v.fill(0.0);
    }
}

/// Mini-batch epochs of full backprop; `update` applies the step to whichever
/// partition the regime trains.
fn run_backprop_epochs(
    params: &mut ModelParams,
    set: &TrainingSet,
    cfg: &TrainConfig,
    epochs: usize,
    stream: u64,
    objective: Objective,
    mut update: impl FnMut(&mut ModelParams, &ModelParams),
) -> Result<Vec<f64>> {
    let mut grad = params.zeros_like();
    let mut trace = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let order = epoch_order(set.len(), cfg.weight_init_seed, stream, epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            zero(&mut grad);
            let items = set.items(chunk);
            let loss = accumulate_grad(params, &items, objective, &mut grad);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            update(params, &grad);
        }
        if !params.all_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(epoch_loss / set.len() as f64);
    }
    Ok(trace)
}

/// Stage 1: fit `theta1` to the source windows (loss₁), `theta2` untouched.
pub fn run_stage1(params: &mut ModelParams, set: &TrainingSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let mut opt = cfg.optimizer();
    run_backprop_epochs(params, set, cfg, cfg.stage1_epochs, STAGE1_STREAM, Objective::Source, |p, g| {
        opt.step(&mut p.theta1, &g.theta1)
    })
}

/// Stage 2: fit `theta2` to the amplitudes (loss₂) with `theta1` frozen.
///
/// `theta1` cannot change, so source-head activations are computed once.
pub fn run_stage2(params: &mut ModelParams, set: &TrainingSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let features = set
        .examples
        .iter()
        .map(|e| source_prediction(&params.theta1, &e.image))
        .collect::<Result<Vec<_>>>()?;
    let mut opt = cfg.optimizer();
    let mut grad = params.theta2.clone();
    let mut trace = Vec::with_capacity(cfg.stage2_epochs);
    for epoch in 0..cfg.stage2_epochs {
        let order = epoch_order(set.len(), cfg.weight_init_seed, STAGE2_STREAM, epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            zero(&mut grad);
            let inv_n = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let mut y = [0.0];
                params.theta2.forward(&features[i], &mut y);
                let r = y[0] - set.examples[i].amplitude;
                loss += r * r * inv_n;
                params
                    .theta2
                    .backward(&features[i], &[2.0 * r * inv_n], &mut grad, None);
            }
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            opt.step(&mut params.theta2, &grad);
        }
        if !params.theta2.all_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.push(epoch_loss / set.len() as f64);
    }
    Ok(trace)
}

/// Two-stage training with neural supervision.
pub fn train_two_stage(set: &TrainingSet, cfg: &TrainConfig) -> Result<TwoStageOutcome> {
    let (h, w, t) = set.dims()?;
    cfg.validate(set.len())?;
    let initial = ModelParams::init(h, w, t, cfg.weight_init_seed)?;
    let mut params = initial.clone();
    let stage1 = run_stage1(&mut params, set, cfg)?;
    let after_stage1 = params.clone();
    let stage2 = run_stage2(&mut params, set, cfg)?;
    Ok(TwoStageOutcome {
        initial,
        after_stage1,
        params,
        trace: TrainTrace { stage1, stage2 },
    })
}

/// Training without EEG: every parameter fit directly on loss₂.
pub fn train_baseline(set: &TrainingSet, cfg: &TrainConfig) -> Result<(ModelParams, Vec<f64>)> {
    let first = set
        .examples
        .first()
        .ok_or_else(|| Error::Input("empty training set".into()))?;
    // window sizes are irrelevant here, only images are checked
    let (h, w) = (first.image.height, first.image.width);
    if set
        .examples
        .iter()
        .any(|e| e.image.height != h || e.image.width != w || e.image.pixels.len() != h * w)
    {
        return Err(Error::Shape("examples differ in image size".into()));
    }
    cfg.validate(set.len())?;
    let t = first.window.len().max(1);
    let mut params = ModelParams::init(h, w, t, cfg.weight_init_seed)?;
    let mut opt = cfg.optimizer();
    let trace = run_backprop_epochs(
        &mut params,
        set,
        cfg,
        cfg.baseline_epochs,
        BASELINE_STREAM,
        Objective::AmplitudeFull,
        |p, g| opt.step(p, g),
    )?;
    Ok((params, trace))
}

/// Permutes windows among the examples of each category. Images keep their
/// own amplitudes, so only loss₁ sees the shuffled pairing.
pub fn shuffle_eeg_within_category(set: &TrainingSet, seed: u64) -> TrainingSet {
    let mut out = set.clone();
    let n_categories = set.examples.iter().map(|e| e.category + 1).max().unwrap_or(0);
    for c in 0..n_categories {
        let members: Vec<usize> = (0..set.len()).filter(|&i| set.examples[i].category == c).collect();
        let mut donors = members.clone();
        donors.shuffle(&mut seeded(derive_seed(&[seed, c as u64])));
        for (&dst, &src) in members.iter().zip(&donors) {
            out.examples[dst].window = set.examples[src].window.clone();
        }
    }
    out
}

/// Mean predicted amplitude per category.
pub fn predict_synthetic_neuroscore(params: &ModelParams, groups: &[Vec<&StimulusImage>]) -> Result<Vec<f64>> {
    groups
        .iter()
        .enumerate()
        .map(|(c, images)| {
            if images.is_empty() {
                return Err(Error::Input(format!("category {c} has no images")));
            }
            let mut total = 0.0;
            for img in images {
                total += super::model::forward(params, img)?.y_pred;
            }
            Ok(total / images.len() as f64)
        })
        .collect()
}

pub(crate) fn classifier_epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    epoch_order(n, seed, CLASSIFIER_STREAM, epoch)
}
