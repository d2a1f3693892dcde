//! Experiment configuration and its flat TOML file form.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::TrainConfig;
use crate::signal::AmplitudeMode;
use crate::synthgen::GenConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Two-stage training on the recorded source windows.
    WithEeg,
    /// Two-stage training with windows permuted within each category.
    RandomEeg,
    /// Every parameter trained on amplitudes alone.
    NoEeg,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::WithEeg, Regime::RandomEeg, Regime::NoEeg];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::WithEeg => "with_eeg",
            Regime::RandomEeg => "random_eeg",
            Regime::NoEeg => "no_eeg",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// Accepts both `with_eeg` and `with-eeg` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == norm)
            .ok_or_else(|| Error::Config(format!("unknown regime {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub gen: GenConfig,
    #[serde(flatten)]
    pub train: TrainConfig,
    pub n_shuffles: usize,
    pub test_fraction: f64,
    pub regimes: Vec<Regime>,
    pub amplitude_mode: AmplitudeMode,
    /// Train the feature classifier and fill in the IS/MMD/FID table.
    pub metric_table: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gen: GenConfig::default(),
            train: TrainConfig::default(),
            n_shuffles: 20,
            test_fraction: 0.2,
            regimes: Regime::ALL.to_vec(),
            amplitude_mode: AmplitudeMode::Peak,
            metric_table: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        if self.n_shuffles == 0 {
            return Err(Error::Config("n_shuffles must be >= 1".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("at least one regime must be enabled".into()));
        }
        let distinct: BTreeSet<_> = self.regimes.iter().collect();
        if distinct.len() != self.regimes.len() {
            return Err(Error::Config("regimes must not repeat".into()));
        }
        Ok(())
    }

    /// Parses the flat key/value form. Missing keys keep their defaults;
    /// unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("config parse error: {e}")))?;
        let mut merged = match toml::Value::try_from(Self::default()) {
            Ok(toml::Value::Table(t)) => t,
            _ => unreachable!("default config serializes to a table"),
        };
        for (key, value) in table {
            if !merged.contains_key(&key) {
                return Err(Error::Config(format!("unknown config key {key:?}")));
            }
            merged.insert(key, value);
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
