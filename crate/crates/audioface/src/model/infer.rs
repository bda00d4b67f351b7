//! Auto-regressive inference rollout.
//!
//! Frame 0 conditions the texture decoder on an all-zeros previous atlas
//! (the state it was teacher-forced to handle); every later frame feeds
//! back the previously *predicted* crop. The rollout is inherently
//! sequential.

use super::layers::Scalar;
use super::net::{forward, BatchInput, ModelParams};
use crate::audio::Spectrogram;
use ndarray::{Array1, Array3, Array4};

/// Reference data the decoders add their predictions onto.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Flattened reference vertices, `3·V`.
    pub vertices: Vec<f64>,
    /// Reference lip crop, `crop²·3`.
    pub crop: Vec<f32>,
}

/// Model outputs for one frame.
#[derive(Debug, Clone)]
pub struct FramePrediction {
    pub vertices: Vec<f64>,
    pub crop: Vec<f32>,
    pub blendshapes: Vec<f64>,
}

/// Runs the model over a spectrogram sequence.
pub fn infer_sequence<S: Scalar>(
    params: &ModelParams<S>,
    spectrograms: &[Spectrogram],
    reference: &Reference,
) -> Vec<FramePrediction> {
    let o = &params.arch.options;
    let ref_vertices = Array1::from_iter(reference.vertices.iter().map(|&v| S::from64(v)));
    let ref_crop = Array3::from_shape_fn((o.crop_size, o.crop_size, 3), |(y, x, c)| {
        S::from64(reference.crop[(y * o.crop_size + x) * 3 + c] as f64)
    });

    let mut prev_crop = Array4::<S>::zeros((1, o.crop_size, o.crop_size, 3));
    let mut out = Vec::with_capacity(spectrograms.len());
    for spec in spectrograms {
        let spectrograms = Array4::from_shape_fn((1, o.spec_bins, o.spec_frames, 2), |(_, b, t, r)| {
            S::from64(spec.data[(b * o.spec_frames + t) * 2 + r] as f64)
        });
        let input = BatchInput {
            spectrograms,
            prev_crops: prev_crop.clone(),
            ref_vertices: ref_vertices.clone(),
            ref_crop: ref_crop.clone(),
            dropout_masks: None,
        };
        let fwd = forward(params, &input);
        let vertices: Vec<f64> = fwd.vertices.row(0).iter().map(|v| v.to64()).collect();
        let crop: Vec<f32> = fwd.crops.as_slice().unwrap().iter().map(|v| v.to64() as f32).collect();
        let blendshapes: Vec<f64> = match &fwd.blendshapes {
            Some(b) => b.row(0).iter().map(|v| v.to64()).collect(),
            None => Vec::new(),
        };
        if o.ar {
            prev_crop = fwd.crops.clone();
        }
        out.push(FramePrediction { vertices, crop, blendshapes });
    }
    out
}

/// Mean absolute difference between consecutive predicted crops, skipping
/// the first transition (the zero-atlas bootstrap frame).
pub fn inter_frame_jitter(predictions: &[FramePrediction]) -> f64 {
    if predictions.len() < 3 {
        return 0.0;
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for pair in predictions.windows(2).skip(1) {
        let (a, b) = (&pair[0].crop, &pair[1].crop);
        total += a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>();
        count += a.len();
    }
    total / count.max(1) as f64
}
