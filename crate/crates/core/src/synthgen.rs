//! Synthetic stand-in for the RSVP experiment.
//!
//! Every sample carries a latent quality in [0, 1]. Quality controls how
//! clean the face-like stimulus looks (blob jitter and pixel noise shrink as
//! quality rises) and how large the simulated P300 source response is.
//! Categories play the role of image generators of increasing realism.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded, Rng};
use crate::signal::{extract_window, SourceTrial};
use crate::{Error, Result};

const QUALITY_STREAM: u64 = 0x51;
const IMAGE_STREAM: u64 = 0x1A;
const TRIAL_STREAM: u64 = 0x7E;

/// Epoch end relative to stimulus onset; epochs start at 0 ms.
pub const EPOCH_END_MS: f64 = 800.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_per_category: usize,
    pub category_names: Vec<String>,
    /// Mean latent quality per category, strictly increasing.
    pub category_quality_means: Vec<f64>,
    pub quality_spread: f64,
    /// Mean quality of the reference ("real") image set used by IS/MMD/FID.
    pub reference_quality_mean: f64,
    pub amplitude_base: f64,
    pub amplitude_gain: f64,
    /// Trial-to-trial amplitude jitter sd as a fraction of `amplitude_gain`.
    pub amplitude_jitter: f64,
    pub erp_latency_ms: f64,
    pub erp_width_ms: f64,
    pub noise_sd: f64,
    pub fs_hz: f64,
    pub image_size: usize,
    /// Blob position jitter sd (pixels) at quality 0.
    pub image_jitter_px: f64,
    /// Additive pixel noise sd at quality 0.
    pub image_noise_sd: f64,
    pub master_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_per_category: 200,
            category_names: vec!["dcgan_sim".into(), "began_sim".into(), "progan_sim".into()],
            category_quality_means: vec![0.35, 0.55, 0.8],
            quality_spread: 0.15,
            reference_quality_mean: 0.95,
            amplitude_base: 0.25,
            amplitude_gain: 1.0,
            amplitude_jitter: 0.1,
            erp_latency_ms: 500.0,
            erp_width_ms: 60.0,
            noise_sd: 0.08,
            fs_hz: 250.0,
            image_size: 32,
            image_jitter_px: 3.0,
            image_noise_sd: 0.7,
            master_seed: 20_200_426,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_per_category < 10 {
            return bad(format!("n_per_category must be >= 10, got {}", self.n_per_category));
        }
        if self.category_quality_means.len() < 2 {
            return bad("need at least two categories".into());
        }
        if self.category_names.len() != self.category_quality_means.len() {
            return bad(format!(
                "{} category names for {} quality means",
                self.category_names.len(),
                self.category_quality_means.len()
            ));
        }
        if self
            .category_quality_means
            .iter()
            .any(|&q| !(q > 0.0 && q < 1.0))
        {
            return bad("category quality means must lie in (0, 1)".into());
        }
        if !self.category_quality_means.windows(2).all(|w| w[0] < w[1]) {
            return bad("category quality means must be strictly increasing".into());
        }
        if !(self.quality_spread > 0.0) {
            return bad("quality_spread must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.reference_quality_mean) {
            return bad("reference_quality_mean must lie in [0, 1]".into());
        }
        if self.noise_sd < 0.0 || self.amplitude_jitter < 0.0 || self.image_noise_sd < 0.0 {
            return bad("noise levels must be non-negative".into());
        }
        if self.image_jitter_px < 0.0 {
            return bad("image_jitter_px must be non-negative".into());
        }
        if !(self.erp_width_ms > 0.0) {
            return bad("erp_width_ms must be positive".into());
        }
        if !(self.fs_hz > 0.0) {
            return bad("fs_hz must be positive".into());
        }
        if self.image_size < 8 {
            return bad(format!("image_size must be >= 8, got {}", self.image_size));
        }
        Ok(())
    }

    pub fn n_categories(&self) -> usize {
        self.category_quality_means.len()
    }

    pub fn epoch_len(&self) -> usize {
        (EPOCH_END_MS / 1000.0 * self.fs_hz).round() as usize
    }
}

/// Grayscale stimulus with its latent quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusImage {
    pub height: usize,
    pub width: usize,
    /// Row-major, values in [0, 1].
    pub pixels: Vec<f64>,
    pub quality: f64,
    pub category: usize,
    pub seed: u64,
}

/// One stimulus and the source response it evoked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub category: usize,
    pub image: StimulusImage,
    pub trial: SourceTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub config: GenConfig,
    /// Grouped by category, in category order.
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn n_categories(&self) -> usize {
        self.config.n_categories()
    }

    /// Sample indices belonging to each category.
    pub fn category_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_categories()];
        for (i, s) in self.samples.iter().enumerate() {
            out[s.category].push(i);
        }
        out
    }
}

struct Blob {
    row: f64,
    col: f64,
    sd_row: f64,
    sd_col: f64,
}

fn face_template(size: usize) -> [Blob; 3] {
    let s = size as f64;
    [
        Blob { row: 0.38 * s, col: 0.32 * s, sd_row: 0.07 * s, sd_col: 0.07 * s },
        Blob { row: 0.38 * s, col: 0.68 * s, sd_row: 0.07 * s, sd_col: 0.07 * s },
        Blob { row: 0.70 * s, col: 0.50 * s, sd_row: 0.05 * s, sd_col: 0.16 * s },
    ]
}

fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Renders the face-like stimulus for `quality`, deterministic in `(quality, seed)`.
pub fn gen_image(quality: f64, seed: u64, cfg: &GenConfig) -> StimulusImage {
    let quality = quality.clamp(0.0, 1.0);
    let degradation = 1.0 - quality;
    let mut rng = seeded(derive_seed(&[seed, IMAGE_STREAM]));
    let size = cfg.image_size;
    let blobs: Vec<Blob> = face_template(size)
        .into_iter()
        .map(|b| {
            let jitter = degradation * cfg.image_jitter_px;
            Blob {
                row: b.row + jitter * normal(&mut rng),
                col: b.col + jitter * normal(&mut rng),
                ..b
            }
        })
        .collect();
    let noise_sd = degradation * cfg.image_noise_sd;
    let mut pixels = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let mut v = 0.0f64;
            for b in &blobs {
                let dr = (r as f64 - b.row) / b.sd_row;
                let dc = (c as f64 - b.col) / b.sd_col;
                v = v.max((-0.5 * (dr * dr + dc * dc)).exp());
            }
            let noise = if noise_sd > 0.0 { noise_sd * normal(&mut rng) } else { 0.0 };
            pixels.push((v + noise).clamp(0.0, 1.0));
        }
    }
    StimulusImage {
        height: size,
        width: size,
        pixels,
        quality,
        category: 0,
        seed,
    }
}

/// Unit-peak Gaussian ERP kernel.
fn erp_kernel(t_ms: f64, cfg: &GenConfig) -> f64 {
    let z = (t_ms - cfg.erp_latency_ms) / cfg.erp_width_ms;
    (-0.5 * z * z).exp()
}

/// Simulates the 0–800 ms source response to a stimulus of `quality`.
pub fn gen_trial(quality: f64, seed: u64, cfg: &GenConfig) -> SourceTrial {
    let quality = quality.clamp(0.0, 1.0);
    let mut rng = seeded(derive_seed(&[seed, TRIAL_STREAM]));
    let jitter_sd = cfg.amplitude_jitter * cfg.amplitude_gain;
    let amplitude = cfg.amplitude_base + cfg.amplitude_gain * quality + jitter_sd * normal(&mut rng);
    let n = cfg.epoch_len();
    let dt = 1000.0 / cfg.fs_hz;
    let clean: Vec<f64> = (0..n)
        .map(|i| amplitude * erp_kernel(i as f64 * dt, cfg))
        .collect();
    let samples = clean
        .iter()
        .map(|&v| {
            if cfg.noise_sd > 0.0 {
                v + cfg.noise_sd * normal(&mut rng)
            } else {
                v
            }
        })
        .collect();
    let noiseless = SourceTrial {
        samples: clean,
        fs_hz: cfg.fs_hz,
        epoch_start_ms: 0.0,
        true_amplitude: None,
    };
    let true_amplitude = extract_window(&noiseless)
        .expect("0-800 ms epoch covers the P300 window")
        .values
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    SourceTrial {
        samples,
        fs_hz: cfg.fs_hz,
        epoch_start_ms: 0.0,
        true_amplitude: Some(true_amplitude),
    }
}

/// Draws a quality from N(mean, spread²) truncated to [0, 1] by rejection.
fn draw_quality(mean: f64, spread: f64, seed: u64) -> f64 {
    let mut rng = seeded(derive_seed(&[seed, QUALITY_STREAM]));
    for _ in 0..1000 {
        let q = mean + spread * normal(&mut rng);
        if (0.0..=1.0).contains(&q) {
            return q;
        }
    }
    mean.clamp(0.0, 1.0)
}

/// Seed of sample `i` in category `category`.
pub fn sample_seed(master_seed: u64, category: usize, i: usize) -> u64 {
    derive_seed(&[master_seed, category as u64, i as u64])
}

pub fn gen_sample(cfg: &GenConfig, category: usize, i: usize) -> Sample {
    let seed = sample_seed(cfg.master_seed, category, i);
    let quality = draw_quality(cfg.category_quality_means[category], cfg.quality_spread, seed);
    let mut image = gen_image(quality, seed, cfg);
    image.category = category;
    Sample {
        category,
        image,
        trial: gen_trial(quality, seed, cfg),
    }
}

pub fn gen_dataset(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let samples = (0..cfg.n_categories())
        .flat_map(|c| (0..cfg.n_per_category).map(move |i| (c, i)))
        .map(|(c, i)| gen_sample(cfg, c, i))
        .collect();
    Ok(Dataset {
        config: cfg.clone(),
        samples,
    })
}

/// Images drawn around `reference_quality_mean`; they stand in for real
/// photographs when scoring categories with IS, MMD and FID. The category
/// label is `n_categories()` and seeds continue past the regular categories.
pub fn gen_reference_images(cfg: &GenConfig, n: usize) -> Vec<StimulusImage> {
    let label = cfg.n_categories();
    (0..n)
        .map(|i| {
            let seed = sample_seed(cfg.master_seed, label, i);
            let q = draw_quality(cfg.reference_quality_mean, cfg.quality_spread, seed);
            let mut img = gen_image(q, seed, cfg);
            img.category = label;
            img
        })
        .collect()
}

/// Fresh images of one category, drawn from an independent seed stream.
pub fn gen_category_images(cfg: &GenConfig, category: usize, n: usize, stream: u64) -> Vec<StimulusImage> {
    (0..n)
        .map(|i| {
            let seed = derive_seed(&[cfg.master_seed, stream, category as u64, i as u64]);
            let q = draw_quality(cfg.category_quality_means[category], cfg.quality_spread, seed);
            let mut img = gen_image(q, seed, cfg);
            img.category = category;
            img
        })
        .collect()
}
