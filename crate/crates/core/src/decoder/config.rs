use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Named hyperparameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    /// Natural photographs: k=128, 5 blocks, 3 decoders, b=0.0001.
    #[default]
    Natural,
    /// Noisy microscopy: k=32, 4 blocks, 5 decoders, b=0.0002.
    Downsized,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Natural => "natural",
            Preset::Downsized => "downsized",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" => Ok(Preset::Natural),
            "downsized" => Ok(Preset::Downsized),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset {other:?} (expected natural or downsized)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Hidden channels `k`.
    pub channels: usize,
    pub blocks: usize,
    /// Positional-encoding frequency count `l`.
    pub frequencies: usize,
    /// Weight of the spatial loss; `1 - lambda` weights the RGB loss.
    pub lambda: f64,
    pub blur_factor: f64,
    /// Replaces the blur-factor rule when set.
    pub sigma_override: Option<f64>,
    pub dropout: f64,
    pub lr: f64,
    pub steps: usize,
    /// Step at which dropout is switched off and the learning rate decays.
    pub lr_decay_step: usize,
    pub lr_decay_factor: f64,
    /// Ensemble size.
    pub decoders: usize,
    pub seed: u64,
}

impl DecoderConfig {
    pub fn preset(preset: Preset) -> Self {
        let natural = DecoderConfig {
            channels: 128,
            blocks: 5,
            frequencies: 1,
            lambda: 0.1,
            blur_factor: 0.0001,
            sigma_override: None,
            dropout: 0.3,
            lr: 0.01,
            steps: 1500,
            lr_decay_step: 1000,
            lr_decay_factor: 0.8,
            decoders: 3,
            seed: 0,
        };
        match preset {
            Preset::Natural => natural,
            Preset::Downsized => DecoderConfig {
                channels: 32,
                blocks: 4,
                blur_factor: 0.0002,
                decoders: 5,
                ..natural
            },
        }
    }

    pub fn natural() -> Self {
        Self::preset(Preset::Natural)
    }

    pub fn downsized() -> Self {
        Self::preset(Preset::Downsized)
    }

    /// Changes the step budget and moves the dropout/decay switch to the
    /// same fraction of the run (1000 of 1500 by default).
    pub fn with_steps(mut self, steps: usize) -> Self {
        let frac = if self.steps == 0 {
            2.0 / 3.0
        } else {
            self.lr_decay_step as f64 / self.steps as f64
        };
        self.steps = steps;
        self.lr_decay_step = ((steps as f64 * frac).round() as usize).min(steps);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.channels == 0 {
            return bad("channels must be at least 1".into());
        }
        if self.blocks == 0 {
            return bad("blocks must be at least 1".into());
        }
        if self.frequencies == 0 {
            return bad("frequencies must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.blur_factor > 0.0) {
            return bad(format!("blur factor {} must be positive", self.blur_factor));
        }
        if let Some(s) = self.sigma_override {
            if !(s > 0.0) {
                return bad(format!("sigma {s} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0) || !(self.lr_decay_factor > 0.0) {
            return bad("learning rate and decay factor must be positive".into());
        }
        if self.lr_decay_step > self.steps {
            return bad(format!(
                "lr decay step {} exceeds step count {}",
                self.lr_decay_step, self.steps
            ));
        }
        if self.decoders == 0 {
            return bad("at least one decoder is required".into());
        }
        Ok(())
    }

    /// Output channels of the decoder head: RGB plus `8l` spatial maps.
    pub fn output_channels(&self) -> usize {
        3 + 8 * self.frequencies
    }
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::natural()
    }
}
