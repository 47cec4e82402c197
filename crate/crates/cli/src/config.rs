//! JSON run configuration. Every section is optional and falls back to the
//! published tuning; unknown keys are rejected.

use std::path::Path;

use lgpose_core::filter::FilterConfig;
use lgpose_core::{BodyParams, GaitParams, NoiseParams, PathKind, SensorNoise};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub p0_scale: f64,
    pub jacobian_terms: usize,
    pub limiter: bool,
    pub clamp_eigenvalues: bool,
}

impl Default for FilterSettings {
    fn default() -> Self {
        let d = FilterConfig::default();
        FilterSettings {
            p0_scale: d.p0_scale,
            jacobian_terms: d.jacobian_terms,
            limiter: d.limiter,
            clamp_eigenvalues: d.clamp_eigenvalues,
        }
    }
}

/// Gait generator settings; body geometry comes from the `body` section.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSettings {
    pub stride_length: f64,
    pub cadence: f64,
    pub step_height: f64,
    pub duration: f64,
    pub sample_rate: f64,
    pub path: PathKind,
    /// Seeds both the foothold jitter and the sensor noise.
    pub seed: u64,
    pub foot_jitter: f64,
}

impl Default for GaitSettings {
    fn default() -> Self {
        let d = GaitParams::default();
        GaitSettings {
            stride_length: d.stride_length,
            cadence: d.cadence,
            step_height: d.step_height,
            duration: d.duration,
            sample_rate: d.sample_rate,
            path: d.path,
            seed: d.seed,
            foot_jitter: d.foot_jitter,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub body: BodyParams,
    /// Filter process and measurement variances.
    pub noise: NoiseParams,
    pub filter: FilterSettings,
    pub gait: GaitSettings,
    /// Noise injected by the simulator.
    pub sensor: SensorNoise,
}

impl RunConfig {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg = Self::from_json(&text).map_err(|source| CliError::Config {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> lgpose_core::Result<()> {
        self.filter_config().validate()?;
        self.gait_params().validate()?;
        self.sensor.validate()
    }

    pub fn filter_config(&self) -> FilterConfig {
        FilterConfig {
            noise: self.noise,
            body: self.body,
            p0_scale: self.filter.p0_scale,
            jacobian_terms: self.filter.jacobian_terms,
            limiter: self.filter.limiter,
            clamp_eigenvalues: self.filter.clamp_eigenvalues,
            diagnostics: false,
        }
    }

    pub fn gait_params(&self) -> GaitParams {
        let g = &self.gait;
        GaitParams {
            stride_length: g.stride_length,
            cadence: g.cadence,
            step_height: g.step_height,
            duration: g.duration,
            sample_rate: g.sample_rate,
            path: g.path,
            body: self.body,
            seed: g.seed,
            foot_jitter: g.foot_jitter,
        }
    }
}
