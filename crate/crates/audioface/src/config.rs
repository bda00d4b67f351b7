//! Pipeline configuration.
//!
//! Every tunable constant of the pipeline lives here with its default, and
//! can be overridden from a plain `key = value` config file. Unknown keys
//! are rejected so typos fail loudly instead of silently using a default.

use crate::error::PipelineError;
use crate::Result;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    // --- geometry / atlas ---
    /// Side of the square frontalized texture atlas.
    pub atlas_size: usize,
    /// Side of the square lip crop predicted by the texture decoder.
    pub lip_crop_size: usize,

    // --- lighting normalization ---
    /// Temperature of the IRLS weight update `w = exp(-e / t)`.
    pub irls_temperature: f64,
    /// Side of the square patch each gain sample is estimated over.
    pub irls_patch: usize,
    /// Fixed IRLS iteration count.
    pub irls_iterations: usize,
    /// Stride of the gain evaluation grid; gain is bilinearly upsampled.
    pub irls_grid_stride: usize,
    /// Gaussian sigma applied before the specular mask test.
    pub specular_blur_sigma: f64,
    /// Skin-intensity percentile above which a pixel is flagged specular.
    pub specular_percentile: f64,
    /// Hole-filling diffusion iteration cap.
    pub holefill_max_iters: usize,
    /// Hole-filling stops once the largest per-pixel update drops below this.
    pub holefill_tolerance: f64,

    // --- audio ---
    pub sample_rate: u32,
    /// STFT window length in milliseconds.
    pub window_ms: f64,
    /// STFT hop in milliseconds.
    pub hop_ms: f64,
    pub fft_size: usize,
    /// Frequency bins kept per STFT column (DC dropped).
    pub spectrogram_bins: usize,
    /// STFT columns stacked around each video frame.
    pub spectrogram_frames: usize,
    pub video_fps: f64,

    // --- model ---
    /// Audio latent width.
    pub latent_audio: usize,
    /// Previous-atlas latent width.
    pub latent_atlas: usize,
    /// Geometry loss weight.
    pub alpha1: f64,
    /// Blendshape loss weight.
    pub alpha2: f64,
    /// Multiplier on every layer's channel count (1.0 = full scale).
    pub channel_scale: f64,
    /// Dropout probability in the geometry decoder.
    pub dropout: f64,

    // --- training ---
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay factor.
    pub lr_decay: f64,
    /// Steps between learning-rate decays.
    pub lr_decay_steps: usize,
    /// Probability of feeding an all-zeros previous atlas while training.
    pub zero_atlas_prob: f64,
    /// Fraction of frames held out for evaluation (taken from the end).
    pub holdout_fraction: f64,
    pub seed: u64,

    // --- synthesis ---
    /// Linear feather width (pixels) when blending the face into a frame.
    pub blend_feather_px: usize,
    /// Height (pixels) of the chin warp band below the original chin.
    pub chin_band_px: usize,
    /// Linear feather width (pixels) when pasting the lip crop into the atlas.
    pub lip_feather_px: usize,

    // --- execution ---
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            atlas_size: 256,
            lip_crop_size: 128,
            irls_temperature: 0.1,
            irls_patch: 16,
            irls_iterations: 8,
            irls_grid_stride: 4,
            specular_blur_sigma: 2.0,
            specular_percentile: 0.90,
            holefill_max_iters: 200,
            holefill_tolerance: 1e-4,
            sample_rate: 16_000,
            window_ms: 30.0,
            hop_ms: 10.0,
            fft_size: 512,
            spectrogram_bins: 256,
            spectrogram_frames: 24,
            video_fps: 30.0,
            latent_audio: 32,
            latent_atlas: 2,
            alpha1: 3.0,
            alpha2: 0.3,
            channel_scale: 0.25,
            dropout: 0.5,
            batch_size: 128,
            epochs: 500,
            learning_rate: 1e-4,
            lr_decay: 0.8,
            lr_decay_steps: 30_000,
            zero_atlas_prob: 0.2,
            holdout_fraction: 0.15,
            seed: 0,
            blend_feather_px: 12,
            chin_band_px: 40,
            lip_feather_px: 8,
            threads: 1,
        }
    }
}

impl PipelineConfig {
    /// Parses a `key = value` config file; unknown keys are an error.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(PipelineError::Config(msg.into()));
        if self.atlas_size == 0 || self.lip_crop_size > self.atlas_size {
            return bad("lip crop must fit inside the atlas");
        }
        if !(0.0..=1.0).contains(&self.zero_atlas_prob) || !(0.0..=1.0).contains(&self.dropout) {
            return bad("probabilities must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout fraction must lie in [0, 1)");
        }
        if self.irls_temperature <= 0.0 || self.irls_patch == 0 || self.irls_grid_stride == 0 {
            return bad("IRLS parameters must be positive");
        }
        if self.learning_rate <= 0.0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("training parameters must be positive");
        }
        if self.channel_scale <= 0.0 {
            return bad("channel scale must be positive");
        }
        if self.spectrogram_bins + 1 > self.fft_size / 2 + 1 {
            return bad("spectrogram bins exceed available FFT bins");
        }
        Ok(())
    }

    /// Serializes the full configuration (used by run manifests).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
