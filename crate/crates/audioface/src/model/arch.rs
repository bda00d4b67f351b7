//! Architecture description: layer shapes derived from the options.
//!
//! Channel counts follow the full-scale design scaled by a global
//! `channel_scale` knob (1.0 = full scale, 0.25 = desk scale): the audio
//! encoder runs a geometric progression 64 → 256 across its 12 layers, the
//! previous-atlas encoder 128 → 2048 across 5 layers, and the texture
//! decoder 1024 → 64 across its upsampling stages.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Act {
    Linear,
    Relu,
    LeakyRelu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub cin: usize,
    pub cout: usize,
    pub act: Act,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub input: usize,
    pub output: usize,
    pub act: Act,
}

/// Model construction options.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelOptions {
    pub channel_scale: f64,
    /// Auto-regressive previous-atlas conditioning.
    pub ar: bool,
    /// Blendshape head output width (None disables the head).
    pub blendshapes: Option<usize>,
    pub latent_audio: usize,
    pub latent_atlas: usize,
    pub spec_bins: usize,
    pub spec_frames: usize,
    pub crop_size: usize,
    pub vertex_count: usize,
    pub dropout: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            channel_scale: 0.25,
            ar: true,
            blendshapes: None,
            latent_audio: 32,
            latent_atlas: 2,
            spec_bins: 256,
            spec_frames: 24,
            crop_size: 128,
            vertex_count: 468,
            dropout: 0.5,
        }
    }
}

/// Complete static description of every layer in the model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelArch {
    pub options: ModelOptions,
    pub audio_conv: Vec<ConvSpec>,
    pub audio_dense: DenseSpec,
    pub geo_dense1: DenseSpec,
    pub geo_dense2: DenseSpec,
    pub atlas_conv: Vec<ConvSpec>,
    pub atlas_dense: DenseSpec,
    pub tex_dense: DenseSpec,
    /// Base channel count of the texture decoder's 4×4 seed tensor.
    pub tex_seed_channels: usize,
    pub tex_conv: Vec<ConvSpec>,
    pub bs_dense: Option<DenseSpec>,
}

fn scaled(full: f64, scale: f64) -> usize {
    ((full * scale).round() as usize).max(1)
}

/// Output spatial size of a stride-`s` same-padded convolution.
pub fn conv_out(input: usize, stride: usize) -> usize {
    input.div_ceil(stride)
}

impl ModelArch {
    pub fn build(options: ModelOptions) -> ModelArch {
        let s = options.channel_scale;

        // Audio encoder: 6 frequency-stride layers then 6 time-stride
        // layers, channels on a geometric 64 → 256 progression.
        let mut audio_conv = Vec::with_capacity(12);
        let mut cin = 2;
        for i in 0..12 {
            let cout = scaled(64.0 * 4f64.powf(i as f64 / 11.0), s);
            let (kh, kw, sh, sw) = if i < 6 { (3, 1, 2, 1) } else { (1, 3, 1, 2) };
            audio_conv.push(ConvSpec { kh, kw, sh, sw, cin, cout, act: Act::LeakyRelu });
            cin = cout;
        }
        let mut freq = options.spec_bins;
        let mut time = options.spec_frames;
        for spec in &audio_conv {
            freq = conv_out(freq, spec.sh);
            time = conv_out(time, spec.sw);
        }
        let audio_dense = DenseSpec {
            input: freq * time * cin,
            output: options.latent_audio,
            act: Act::Linear,
        };

        let geo_dense1 =
            DenseSpec { input: options.latent_audio, output: 150, act: Act::Linear };
        let geo_dense2 =
            DenseSpec { input: 150, output: options.vertex_count * 3, act: Act::Linear };

        // Previous-atlas encoder: five 5×5 stride-2 convolutions.
        let atlas_full = [128.0, 256.0, 512.0, 1024.0, 2048.0];
        let mut atlas_conv = Vec::new();
        let mut cin = 3;
        for &full in &atlas_full {
            let cout = scaled(full, s);
            atlas_conv.push(ConvSpec { kh: 5, kw: 5, sh: 2, sw: 2, cin, cout, act: Act::Relu });
            cin = cout;
        }
        let mut side = options.crop_size;
        for spec in &atlas_conv {
            side = conv_out(side, spec.sh);
        }
        let atlas_dense =
            DenseSpec { input: side * side * cin, output: options.latent_atlas, act: Act::Tanh };

        // Texture decoder: dense seed then five upsample+conv stages.
        let tex_seed_channels = scaled(1024.0, s);
        let tex_latent = options.latent_audio + if options.ar { options.latent_atlas } else { 0 };
        let tex_dense =
            DenseSpec { input: tex_latent, output: 4 * 4 * tex_seed_channels, act: Act::Relu };
        let tex_full = [512.0, 256.0, 128.0, 64.0];
        let mut tex_conv = Vec::new();
        let mut cin = tex_seed_channels;
        for &full in &tex_full {
            let cout = scaled(full, s);
            tex_conv.push(ConvSpec { kh: 3, kw: 3, sh: 1, sw: 1, cin, cout, act: Act::Relu });
            cin = cout;
        }
        tex_conv.push(ConvSpec { kh: 5, kw: 5, sh: 1, sw: 1, cin, cout: 3, act: Act::Tanh });

        let bs_dense = options.blendshapes.map(|k| DenseSpec {
            input: options.latent_audio,
            output: k,
            act: Act::Linear,
        });

        ModelArch {
            options,
            audio_conv,
            audio_dense,
            geo_dense1,
            geo_dense2,
            atlas_conv,
            atlas_dense,
            tex_dense,
            tex_seed_channels,
            tex_conv,
            bs_dense,
        }
    }

    /// (freq, time) extents after each audio conv layer.
    pub fn audio_shape_trace(&self) -> Vec<(usize, usize, usize)> {
        let mut freq = self.options.spec_bins;
        let mut time = self.options.spec_frames;
        let mut out = Vec::new();
        for spec in &self.audio_conv {
            freq = conv_out(freq, spec.sh);
            time = conv_out(time, spec.sw);
            out.push((freq, time, spec.cout));
        }
        out
    }

    /// Total trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let conv = |s: &ConvSpec| s.kh * s.kw * s.cin * s.cout + s.cout;
        let dense = |s: &DenseSpec| s.input * s.output + s.output;
        let mut n = 0;
        n += self.audio_conv.iter().map(conv).sum::<usize>();
        n += dense(&self.audio_dense);
        n += dense(&self.geo_dense1) + dense(&self.geo_dense2);
        if self.options.ar {
            n += self.atlas_conv.iter().map(conv).sum::<usize>();
            n += dense(&self.atlas_dense);
        }
        n += dense(&self.tex_dense);
        n += self.tex_conv.iter().map(conv).sum::<usize>();
        if let Some(bs) = &self.bs_dense {
            n += dense(bs);
        }
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_matches_the_design_tables() {
        let arch = ModelArch::build(ModelOptions { channel_scale: 1.0, ..Default::default() });
        // Audio: 256 → 4 over six frequency layers, 24 → 1 over six time
        // layers.
        let trace = arch.audio_shape_trace();
        assert_eq!(trace[5].0, 4);
        assert_eq!(trace[5].1, 24);
        assert_eq!(trace[11].0, 4);
        assert_eq!(trace[11].1, 1);
        assert_eq!(arch.audio_conv[0].cout, 64);
        assert_eq!(arch.audio_conv[11].cout, 256);
        assert_eq!(arch.audio_dense.output, 32);
        // Atlas encoder: 128..2048 channels, 128 → 4 spatially, latent 2.
        assert_eq!(
            arch.atlas_conv.iter().map(|c| c.cout).collect::<Vec<_>>(),
            vec![128, 256, 512, 1024, 2048]
        );
        assert_eq!(arch.atlas_dense.input, 4 * 4 * 2048);
        assert_eq!(arch.atlas_dense.output, 2);
        // Texture decoder: 16384-unit seed, channels 512..64 then 3.
        assert_eq!(arch.tex_dense.output, 16384);
        assert_eq!(arch.tex_dense.input, 34);
        assert_eq!(
            arch.tex_conv.iter().map(|c| c.cout).collect::<Vec<_>>(),
            vec![512, 256, 128, 64, 3]
        );
        assert_eq!(arch.tex_conv[4].kh, 5);
        // Geometry: 32 → 150 → 1404.
        assert_eq!(arch.geo_dense1.output, 150);
        assert_eq!(arch.geo_dense2.output, 1404);
    }

    #[test]
    fn parameter_count_is_architecture_deterministic() {
        let a = ModelArch::build(ModelOptions::default());
        let b = ModelArch::build(ModelOptions::default());
        assert_eq!(a.parameter_count(), b.parameter_count());
        assert!(a.parameter_count() > 0);
    }

    #[test]
    fn non_ar_texture_decoder_takes_32_inputs() {
        let arch = ModelArch::build(ModelOptions { ar: false, ..Default::default() });
        assert_eq!(arch.tex_dense.input, 32);
    }
}
