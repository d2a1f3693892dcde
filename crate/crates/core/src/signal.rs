//! P300 source windows, single-trial amplitudes and Neuroscore.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const WINDOW_START_MS: f64 = 400.0;
pub const WINDOW_END_MS: f64 = 600.0;

/// One single-trial P300 source signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTrial {
    pub samples: Vec<f64>,
    pub fs_hz: f64,
    /// Time of `samples[0]` relative to stimulus onset.
    pub epoch_start_ms: f64,
    /// Generator ground truth, when known.
    pub true_amplitude: Option<f64>,
}

impl SourceTrial {
    pub fn new(samples: Vec<f64>, fs_hz: f64, epoch_start_ms: f64) -> Result<Self> {
        if !(fs_hz > 0.0) || !fs_hz.is_finite() {
            return Err(Error::Input(format!("sampling rate must be positive, got {fs_hz}")));
        }
        if samples.is_empty() {
            return Err(Error::Input("trial has no samples".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("trial samples must be finite".into()));
        }
        Ok(Self {
            samples,
            fs_hz,
            epoch_start_ms,
            true_amplitude: None,
        })
    }

    pub fn epoch_end_ms(&self) -> f64 {
        self.epoch_start_ms + self.samples.len() as f64 * 1000.0 / self.fs_hz
    }
}

/// Number of samples in the [400, 600) ms window at `fs_hz`.
pub fn window_len(fs_hz: f64) -> usize {
    ((WINDOW_END_MS - WINDOW_START_MS) / 1000.0 * fs_hz).round() as usize
}

/// The 400–600 ms segment of a source trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSource {
    pub values: Vec<f64>,
}

impl WindowedSource {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Returns the `T` samples whose timestamps fall in [400, 600) ms.
pub fn extract_window(trial: &SourceTrial) -> Result<WindowedSource> {
    let t = window_len(trial.fs_hz);
    let coverage = || Error::Coverage {
        epoch_start_ms: trial.epoch_start_ms,
        epoch_end_ms: trial.epoch_end_ms(),
        window_start_ms: WINDOW_START_MS,
        window_end_ms: WINDOW_END_MS,
    };
    if t < 2 {
        return Err(Error::Input(format!(
            "sampling rate {} Hz gives a {t}-sample window, need at least 2",
            trial.fs_hz
        )));
    }
    if trial.epoch_start_ms > WINDOW_START_MS {
        return Err(coverage());
    }
    // first sample with timestamp >= 400 ms; the slack absorbs float error in
    // start·fs products that should be integral
    let offset = (WINDOW_START_MS - trial.epoch_start_ms) * trial.fs_hz / 1000.0;
    let first = (offset - 1e-9).ceil().max(0.0) as usize;
    if first + t > trial.samples.len() {
        return Err(coverage());
    }
    Ok(WindowedSource {
        values: trial.samples[first..first + t].to_vec(),
    })
}

/// How a single-trial amplitude is read off the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// Window maximum.
    #[default]
    Peak,
    /// Window mean.
    Mean,
}

pub fn single_trial_amplitude(w: &WindowedSource) -> f64 {
    single_trial_amplitude_with(w, AmplitudeMode::Peak)
}

pub fn single_trial_amplitude_with(w: &WindowedSource, mode: AmplitudeMode) -> f64 {
    match mode {
        AmplitudeMode::Peak => w.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        AmplitudeMode::Mean => w.values.iter().sum::<f64>() / w.values.len() as f64,
    }
}

/// Single-trial amplitudes collected for one stimulus category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub category: String,
    pub amplitudes: Vec<f64>,
}

/// Mean single-trial amplitude of a category.
pub fn neuroscore(scores: &CategoryScores) -> Result<f64> {
    mean_amplitude(&scores.amplitudes)
}

pub(crate) fn mean_amplitude(amplitudes: &[f64]) -> Result<f64> {
    if amplitudes.is_empty() {
        return Err(Error::Input("Neuroscore of an empty category".into()));
    }
    Ok(amplitudes.iter().sum::<f64>() / amplitudes.len() as f64)
}

/// Σ |pred_i − truth_i| over categories.
pub fn neuroscore_error(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Input(format!(
            "{} predicted vs {} true Neuroscores",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Input("no categories to compare".into()));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum())
}
