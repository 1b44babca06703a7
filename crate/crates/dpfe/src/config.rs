//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use dpfe_core::data::{SplitFractions, TwoFactorConfig};
use dpfe_core::pipeline::TrainConfig;
use dpfe_core::tradeoff::{PrivacyAxis, SweepConfig};
use serde::{Deserialize, Serialize};

use crate::error::{read_text, Error, Result};

/// Environment variable that roots every relative output directory.
pub const OUTPUT_ROOT_ENV: &str = "DPFE_OUTPUT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub privacy_axis: PrivacyAxis,
    pub grid_points: usize,
    /// Also report L / U1 / U2 in evaluation reports.
    pub bounds: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            privacy_axis: PrivacyAxis::Lrp,
            grid_points: 5,
            bounds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; generation, splitting, training and sweeps all derive from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: TwoFactorConfig,
    pub split: SplitFractions,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub metrics: MetricOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            output_dir: PathBuf::from("."),
            data: TwoFactorConfig::default(),
            split: SplitFractions::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            metrics: MetricOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format(path, e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    /// Copies the base seed into every stage.
    pub fn resolve(mut self) -> Self {
        self.train.seed = self.seed;
        self.sweep.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.split.validate()?;
        self.train.validate()?;
        self.sweep.validate()?;
        if self.metrics.grid_points == 0 {
            return Err(dpfe_core::Error::Config("grid_points must be at least 1".into()).into());
        }
        Ok(())
    }

    /// `output_dir`, placed under `$DPFE_OUTPUT_ROOT` when it is relative.
    pub fn output_path(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }
}
