//! End-to-end training with teacher forcing.
//!
//! The AR input is the ground-truth previous lip crop, replaced by an
//! all-zeros image with the configured probability so inference can boot
//! from a zero atlas. Batches are processed in fixed-size chunks whose
//! gradients merge in a fixed order, so loss histories are bitwise
//! reproducible for a given seed regardless of thread count.

use super::adam::Adam;
use super::arch::{ModelArch, ModelOptions};
use super::layers::Scalar;
use super::loss::{combined_loss, LossParts, LossWeights};
use super::net::{backward, forward, BatchInput, ModelParams};
use super::pca::pca_init;
use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::Result;
use ndarray::{Array1, Array2, Array3, Array4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// One frame of training data in normalized space.
#[derive(Debug, Clone)]
pub struct TrainSample {
    /// Raw spectrogram, `bins·frames·2` reals.
    pub spectrogram: Vec<f32>,
    /// Normalized vertices, flattened `3·V`.
    pub vertices: Vec<f64>,
    /// Normalized lip crop, `crop²·3` unit-range reals.
    pub crop: Vec<f32>,
    /// Ground-truth previous crop (zeros for the first frame of a take).
    pub prev_crop: Vec<f32>,
    pub blendshapes: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<TrainSample>,
    pub reference_vertices: Vec<f64>,
    pub reference_crop: Vec<f32>,
    pub spec_bins: usize,
    pub spec_frames: usize,
    pub crop_size: usize,
}

impl Dataset {
    pub fn vertex_count(&self) -> usize {
        self.reference_vertices.len() / 3
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Auto-regressive texture conditioning.
    pub ar: bool,
    pub use_blendshapes: bool,
    /// Override the configured epoch count (tests use small values).
    pub epochs: Option<usize>,
    /// Samples per parallel work chunk; fixed so reductions are
    /// order-stable under any thread count.
    pub chunk: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { ar: true, use_blendshapes: false, epochs: None, chunk: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Mean batch loss per optimizer step.
    pub loss_history: Vec<f64>,
    /// Teacher-forced mean loss on the holdout split.
    pub holdout: Option<LossParts>,
    pub holdout_indices: Vec<usize>,
    pub train_indices: Vec<usize>,
    pub steps: usize,
    pub parameter_count: usize,
}

/// Builds the architecture implied by the config and dataset.
pub fn arch_for(cfg: &PipelineConfig, dataset: &Dataset, options: &TrainOptions) -> ModelArch {
    let blendshapes = if options.use_blendshapes {
        dataset.samples.first().and_then(|s| s.blendshapes.as_ref()).map(|b| b.len())
    } else {
        None
    };
    ModelArch::build(ModelOptions {
        channel_scale: cfg.channel_scale,
        ar: options.ar,
        blendshapes,
        latent_audio: cfg.latent_audio,
        latent_atlas: cfg.latent_atlas,
        spec_bins: dataset.spec_bins,
        spec_frames: dataset.spec_frames,
        crop_size: dataset.crop_size,
        vertex_count: dataset.vertex_count(),
        dropout: cfg.dropout,
    })
}

/// Trains the joint model; returns the parameters and the loss history.
pub fn train<S: Scalar>(
    dataset: &Dataset,
    cfg: &PipelineConfig,
    options: &TrainOptions,
) -> Result<(ModelParams<S>, TrainReport)> {
    if dataset.samples.is_empty() {
        return Err(PipelineError::EmptyDataset("no training samples".into()));
    }
    let n = dataset.samples.len();
    let n_holdout = ((n as f64) * cfg.holdout_fraction).round() as usize;
    let n_train = n - n_holdout;
    if n_train == 0 {
        return Err(PipelineError::EmptyDataset("holdout fraction leaves no training data".into()));
    }
    let train_indices: Vec<usize> = (0..n_train).collect();
    let holdout_indices: Vec<usize> = (n_train..n).collect();

    let arch = arch_for(cfg, dataset, options);
    let mut params = ModelParams::<S>::init(arch.clone(), cfg.seed);

    // Spectrogram standardization over the training split.
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut count = 0.0f64;
    for &i in &train_indices {
        for &v in &dataset.samples[i].spectrogram {
            sum += v as f64;
            sumsq += (v as f64) * (v as f64);
            count += 1.0;
        }
    }
    let count = count.max(1.0);
    params.spec_mean = sum / count;
    params.spec_std = ((sumsq / count - params.spec_mean * params.spec_mean).max(0.0)).sqrt().max(1e-9);

    // PCA initialization of the geometry decoder's final layer.
    let deltas = Array2::from_shape_fn((n_train, dataset.reference_vertices.len()), |(r, c)| {
        dataset.samples[train_indices[r]].vertices[c] - dataset.reference_vertices[c]
    });
    let pca = pca_init(&deltas, arch.geo_dense2.output.min(arch.geo_dense1.output));
    for (i, comp) in pca.components.rows().into_iter().enumerate() {
        for (j, &v) in comp.iter().enumerate() {
            params.geo2.w[[i, j]] = S::from64(v);
        }
    }
    for (j, &v) in pca.mean.iter().enumerate() {
        params.geo2.b[j] = S::from64(v);
    }

    let weights = LossWeights { alpha1: cfg.alpha1, alpha2: cfg.alpha2 };
    let mut adam = Adam::new(cfg.learning_rate, cfg.lr_decay, cfg.lr_decay_steps, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x7261696e));
    let epochs = options.epochs.unwrap_or(cfg.epochs);
    let mut history = Vec::new();

    let mut order = train_indices.clone();
    for _epoch in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            // Per-sample draws happen sequentially, in batch order, so the
            // stream is independent of the parallel execution below.
            let zero_flags: Vec<bool> = batch
                .iter()
                .map(|_| options.ar && rng.gen::<f64>() < cfg.zero_atlas_prob)
                .collect();
            let dropout_masks: Vec<Vec<f64>> = batch
                .iter()
                .map(|_| {
                    (0..arch.geo_dense1.output)
                        .map(|_| {
                            if rng.gen::<f64>() < cfg.dropout {
                                0.0
                            } else {
                                1.0 / (1.0 - cfg.dropout)
                            }
                        })
                        .collect()
                })
                .collect();

            let chunk_size = options.chunk.max(1);
            let chunk_jobs: Vec<(usize, usize)> = (0..batch.len())
                .step_by(chunk_size)
                .map(|start| (start, (start + chunk_size).min(batch.len())))
                .collect();
            let results: Vec<(LossParts, super::net::ModelGrads<S>)> = chunk_jobs
                .par_iter()
                .map(|&(start, end)| {
                    let idx = &batch[start..end];
                    let input = build_batch::<S>(
                        dataset,
                        idx,
                        &arch,
                        Some(&zero_flags[start..end]),
                        Some(&dropout_masks[start..end]),
                    );
                    let out = forward(&params, &input);
                    let (truth_v, truth_c, truth_b) = batch_truth::<S>(dataset, idx, &arch);
                    let (parts, d_out) =
                        combined_loss(&out, &truth_v, &truth_c, truth_b.as_ref(), &weights);
                    let mut grads = params.zero_grads();
                    backward(&params, &out, &d_out, &mut grads);
                    (parts, grads)
                })
                .collect();

            let mut total = LossParts::default();
            let mut grads = params.zero_grads();
            for (parts, chunk_grads) in &results {
                total.merge(parts);
                grads.accumulate(chunk_grads);
            }
            grads.scale(S::from64(1.0 / batch.len() as f64));
            let mean_loss = total.mean_total();
            if !mean_loss.is_finite() {
                return Err(PipelineError::Divergence { step: history.len(), loss: mean_loss });
            }
            adam.step(&mut params, &grads);
            history.push(mean_loss);
        }
    }

    let holdout = if holdout_indices.is_empty() {
        None
    } else {
        Some(evaluate(&params, dataset, &holdout_indices, &weights, options.chunk))
    };

    let steps = history.len();
    Ok((
        params,
        TrainReport {
            loss_history: history,
            holdout,
            holdout_indices,
            train_indices,
            steps,
            parameter_count: arch.parameter_count(),
        },
    ))
}

/// Teacher-forced loss over a set of samples (eval mode, no dropout).
pub fn evaluate<S: Scalar>(
    params: &ModelParams<S>,
    dataset: &Dataset,
    indices: &[usize],
    weights: &LossWeights,
    chunk: usize,
) -> LossParts {
    let arch = &params.arch;
    let chunk_jobs: Vec<(usize, usize)> = (0..indices.len())
        .step_by(chunk.max(1))
        .map(|start| (start, (start + chunk.max(1)).min(indices.len())))
        .collect();
    let results: Vec<LossParts> = chunk_jobs
        .par_iter()
        .map(|&(start, end)| {
            let idx = &indices[start..end];
            let input = build_batch::<S>(dataset, idx, arch, None, None);
            let out = forward(params, &input);
            let (tv, tc, tb) = batch_truth::<S>(dataset, idx, arch);
            combined_loss(&out, &tv, &tc, tb.as_ref(), weights).0
        })
        .collect();
    let mut total = LossParts::default();
    for parts in &results {
        total.merge(parts);
    }
    total
}

/// Assembles a batch input; `zero_flags` blanks the AR crop per sample.
pub fn build_batch<S: Scalar>(
    dataset: &Dataset,
    indices: &[usize],
    arch: &ModelArch,
    zero_flags: Option<&[bool]>,
    dropout_masks: Option<&[Vec<f64>]>,
) -> BatchInput<S> {
    let o = &arch.options;
    let n = indices.len();
    let mut spectrograms = Array4::<S>::zeros((n, o.spec_bins, o.spec_frames, 2));
    let mut prev_crops = Array4::<S>::zeros((n, o.crop_size, o.crop_size, 3));
    for (row, &i) in indices.iter().enumerate() {
        let s = &dataset.samples[i];
        fill4(&mut spectrograms, row, &s.spectrogram);
        let zeroed = zero_flags.map(|z| z[row]).unwrap_or(false);
        if o.ar && !zeroed {
            fill4(&mut prev_crops, row, &s.prev_crop);
        }
    }
    let ref_vertices =
        Array1::from_iter(dataset.reference_vertices.iter().map(|&v| S::from64(v)));
    let ref_crop = Array3::from_shape_fn((o.crop_size, o.crop_size, 3), |(y, x, c)| {
        S::from64(dataset.reference_crop[(y * o.crop_size + x) * 3 + c] as f64)
    });
    let dropout = dropout_masks.map(|masks| {
        Array2::from_shape_fn((n, arch.geo_dense1.output), |(r, c)| S::from64(masks[r][c]))
    });
    BatchInput {
        spectrograms,
        prev_crops,
        ref_vertices,
        ref_crop,
        dropout_masks: dropout,
    }
}

/// Ground-truth tensors for a batch.
pub fn batch_truth<S: Scalar>(
    dataset: &Dataset,
    indices: &[usize],
    arch: &ModelArch,
) -> (Array2<S>, Array4<S>, Option<Array2<S>>) {
    let o = &arch.options;
    let n = indices.len();
    let nv3 = dataset.reference_vertices.len();
    let mut vertices = Array2::<S>::zeros((n, nv3));
    let mut crops = Array4::<S>::zeros((n, o.crop_size, o.crop_size, 3));
    for (row, &i) in indices.iter().enumerate() {
        let s = &dataset.samples[i];
        for (j, &v) in s.vertices.iter().enumerate() {
            vertices[[row, j]] = S::from64(v);
        }
        fill4(&mut crops, row, &s.crop);
    }
    let bs = arch.bs_dense.as_ref().map(|spec| {
        Array2::from_shape_fn((n, spec.output), |(r, c)| {
            let coeffs = dataset.samples[indices[r]]
                .blendshapes
                .as_ref()
                .expect("blendshape head enabled without coefficients");
            S::from64(coeffs[c])
        })
    });
    (vertices, crops, bs)
}

fn fill4<S: Scalar>(arr: &mut Array4<S>, row: usize, values: &[f32]) {
    let per = arr.len() / arr.dim().0;
    debug_assert_eq!(per, values.len());
    let slice = arr.as_slice_mut().unwrap();
    for (dst, &v) in slice[row * per..(row + 1) * per].iter_mut().zip(values) {
        *dst = S::from64(v as f64);
    }
}
