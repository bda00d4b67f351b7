//! The full model: parameter container, forward pass and backpropagation.

use super::arch::{Act, ConvSpec, DenseSpec, ModelArch};
use super::layers::{
    conv_backward, conv_forward, dense_backward, dense_forward, upsample2x_backward,
    upsample2x_forward, Scalar,
};
use ndarray::{Array1, Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct ConvLayer<S> {
    pub spec: ConvSpec,
    pub w: Array2<S>,
    pub b: Array1<S>,
}

#[derive(Debug, Clone)]
pub struct DenseLayer<S> {
    pub spec: DenseSpec,
    pub w: Array2<S>,
    pub b: Array1<S>,
}

/// All trainable tensors plus the architecture they belong to.
#[derive(Debug, Clone)]
pub struct ModelParams<S> {
    pub arch: ModelArch,
    pub audio_convs: Vec<ConvLayer<S>>,
    pub audio_out: DenseLayer<S>,
    pub geo1: DenseLayer<S>,
    pub geo2: DenseLayer<S>,
    pub atlas_convs: Vec<ConvLayer<S>>,
    pub atlas_out: Option<DenseLayer<S>>,
    pub tex_in: DenseLayer<S>,
    pub tex_convs: Vec<ConvLayer<S>>,
    pub bs: Option<DenseLayer<S>>,
    /// Spectrogram standardization constants estimated on the training set.
    pub spec_mean: f64,
    pub spec_std: f64,
}

/// Gradient accumulator with the same tensor layout as [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelGrads<S> {
    pub audio_convs: Vec<(Array2<S>, Array1<S>)>,
    pub audio_out: (Array2<S>, Array1<S>),
    pub geo1: (Array2<S>, Array1<S>),
    pub geo2: (Array2<S>, Array1<S>),
    pub atlas_convs: Vec<(Array2<S>, Array1<S>)>,
    pub atlas_out: Option<(Array2<S>, Array1<S>)>,
    pub tex_in: (Array2<S>, Array1<S>),
    pub tex_convs: Vec<(Array2<S>, Array1<S>)>,
    pub bs: Option<(Array2<S>, Array1<S>)>,
}

fn tensor_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the tensor name, mixed with the global seed.
    let mut h = 0xcbf29ce484222325u64;
    for byte in name.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed
}

fn normal<S: Scalar>(rng: &mut ChaCha8Rng, std: f64) -> S {
    // Box-Muller.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    S::from64((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos() * std)
}

fn init_std(act: Act, fan_in: usize) -> f64 {
    match act {
        Act::Relu | Act::LeakyRelu => (2.0 / fan_in as f64).sqrt(),
        Act::Linear | Act::Tanh => (1.0 / fan_in as f64).sqrt(),
    }
}

fn init_conv<S: Scalar>(spec: &ConvSpec, seed: u64, name: &str, scale: f64) -> ConvLayer<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(tensor_seed(seed, name));
    let fan_in = spec.kh * spec.kw * spec.cin;
    let std = init_std(spec.act, fan_in) * scale;
    let w = Array2::from_shape_fn((fan_in, spec.cout), |_| normal(&mut rng, std));
    ConvLayer { spec: *spec, w, b: Array1::zeros(spec.cout) }
}

fn init_dense<S: Scalar>(spec: &DenseSpec, seed: u64, name: &str, scale: f64) -> DenseLayer<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(tensor_seed(seed, name));
    let std = init_std(spec.act, spec.input) * scale;
    let w = Array2::from_shape_fn((spec.input, spec.output), |_| normal(&mut rng, std));
    DenseLayer { spec: *spec, w, b: Array1::zeros(spec.output) }
}

impl<S: Scalar> ModelParams<S> {
    /// Random initialization, deterministic per (seed, tensor name).
    pub fn init(arch: ModelArch, seed: u64) -> ModelParams<S> {
        let audio_convs = arch
            .audio_conv
            .iter()
            .enumerate()
            .map(|(i, s)| init_conv(s, seed, &format!("audio_conv{}", i), 1.0))
            .collect();
        let audio_out = init_dense(&arch.audio_dense, seed, "audio_out", 1.0);
        let geo1 = init_dense(&arch.geo_dense1, seed, "geo1", 1.0);
        let geo2 = init_dense(&arch.geo_dense2, seed, "geo2", 1.0);
        let (atlas_convs, atlas_out) = if arch.options.ar {
            (
                arch.atlas_conv
                    .iter()
                    .enumerate()
                    .map(|(i, s)| init_conv(s, seed, &format!("atlas_conv{}", i), 1.0))
                    .collect(),
                Some(init_dense(&arch.atlas_dense, seed, "atlas_out", 1.0)),
            )
        } else {
            (Vec::new(), None)
        };
        let tex_in = init_dense(&arch.tex_dense, seed, "tex_in", 1.0);
        let n_tex = arch.tex_conv.len();
        let tex_convs = arch
            .tex_conv
            .iter()
            .enumerate()
            // The final tanh layer starts near zero so the predicted update
            // starts as a no-op on the reference crop.
            .map(|(i, s)| {
                let scale = if i + 1 == n_tex { 0.1 } else { 1.0 };
                init_conv(s, seed, &format!("tex_conv{}", i), scale)
            })
            .collect();
        let bs = arch.bs_dense.as_ref().map(|s| init_dense(s, seed, "bs_out", 1.0));
        ModelParams {
            arch,
            audio_convs,
            audio_out,
            geo1,
            geo2,
            atlas_convs,
            atlas_out,
            tex_in,
            tex_convs,
            bs,
            spec_mean: 0.0,
            spec_std: 1.0,
        }
    }

    pub fn zero_grads(&self) -> ModelGrads<S> {
        ModelGrads {
            audio_convs: self
                .audio_convs
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                .collect(),
            audio_out: (
                Array2::zeros(self.audio_out.w.raw_dim()),
                Array1::zeros(self.audio_out.b.raw_dim()),
            ),
            geo1: (Array2::zeros(self.geo1.w.raw_dim()), Array1::zeros(self.geo1.b.raw_dim())),
            geo2: (Array2::zeros(self.geo2.w.raw_dim()), Array1::zeros(self.geo2.b.raw_dim())),
            atlas_convs: self
                .atlas_convs
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                .collect(),
            atlas_out: self
                .atlas_out
                .as_ref()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim()))),
            tex_in: (Array2::zeros(self.tex_in.w.raw_dim()), Array1::zeros(self.tex_in.b.raw_dim())),
            tex_convs: self
                .tex_convs
                .iter()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim())))
                .collect(),
            bs: self
                .bs
                .as_ref()
                .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.raw_dim()))),
        }
    }

    /// Visits every tensor in a fixed stable order: `f(index, name, slice)`.
    pub fn for_each_tensor(&self, mut f: impl FnMut(usize, &str, &[S])) {
        let mut idx = 0;
        let mut visit = |name: String, w: &Array2<S>, b: &Array1<S>| {
            f(idx, &format!("{}_w", name), w.as_slice().expect("standard layout"));
            idx += 1;
            f(idx, &format!("{}_b", name), b.as_slice().expect("standard layout"));
            idx += 1;
        };
        for (i, l) in self.audio_convs.iter().enumerate() {
            visit(format!("audio_conv{}", i), &l.w, &l.b);
        }
        visit("audio_out".into(), &self.audio_out.w, &self.audio_out.b);
        visit("geo1".into(), &self.geo1.w, &self.geo1.b);
        visit("geo2".into(), &self.geo2.w, &self.geo2.b);
        for (i, l) in self.atlas_convs.iter().enumerate() {
            visit(format!("atlas_conv{}", i), &l.w, &l.b);
        }
        if let Some(l) = &self.atlas_out {
            visit("atlas_out".into(), &l.w, &l.b);
        }
        visit("tex_in".into(), &self.tex_in.w, &self.tex_in.b);
        for (i, l) in self.tex_convs.iter().enumerate() {
            visit(format!("tex_conv{}", i), &l.w, &l.b);
        }
        if let Some(l) = &self.bs {
            visit("bs_out".into(), &l.w, &l.b);
        }
    }

    /// Mutable variant of [`Self::for_each_tensor`], same order.
    #[allow(unused_assignments)]
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(usize, &str, &mut [S])) {
        let mut idx = 0;
        macro_rules! visit {
            ($name:expr, $layer:expr) => {{
                let name = $name;
                let l = $layer;
                f(idx, &format!("{}_w", name), l.w.as_slice_mut().expect("standard layout"));
                idx += 1;
                f(idx, &format!("{}_b", name), l.b.as_slice_mut().expect("standard layout"));
                idx += 1;
            }};
        }
        for i in 0..self.audio_convs.len() {
            visit!(format!("audio_conv{}", i), &mut self.audio_convs[i]);
        }
        visit!("audio_out".to_string(), &mut self.audio_out);
        visit!("geo1".to_string(), &mut self.geo1);
        visit!("geo2".to_string(), &mut self.geo2);
        for i in 0..self.atlas_convs.len() {
            visit!(format!("atlas_conv{}", i), &mut self.atlas_convs[i]);
        }
        if self.atlas_out.is_some() {
            visit!("atlas_out".to_string(), self.atlas_out.as_mut().unwrap());
        }
        visit!("tex_in".to_string(), &mut self.tex_in);
        for i in 0..self.tex_convs.len() {
            visit!(format!("tex_conv{}", i), &mut self.tex_convs[i]);
        }
        if self.bs.is_some() {
            visit!("bs_out".to_string(), self.bs.as_mut().unwrap());
        }
    }

    pub fn tensor_count(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|_, _, _| n += 1);
        n
    }
}

impl<S: Scalar> ModelGrads<S> {
    /// Flattened gradient slices in the same order as
    /// [`ModelParams::for_each_tensor`].
    pub fn tensors(&self) -> Vec<&[S]> {
        fn push<'a, S: Scalar>(out: &mut Vec<&'a [S]>, pair: &'a (Array2<S>, Array1<S>)) {
            out.push(pair.0.as_slice().expect("standard layout"));
            out.push(pair.1.as_slice().expect("standard layout"));
        }
        let mut out: Vec<&[S]> = Vec::new();
        for pair in &self.audio_convs {
            push(&mut out, pair);
        }
        push(&mut out, &self.audio_out);
        push(&mut out, &self.geo1);
        push(&mut out, &self.geo2);
        for pair in &self.atlas_convs {
            push(&mut out, pair);
        }
        if let Some(pair) = &self.atlas_out {
            push(&mut out, pair);
        }
        push(&mut out, &self.tex_in);
        for pair in &self.tex_convs {
            push(&mut out, pair);
        }
        if let Some(pair) = &self.bs {
            push(&mut out, pair);
        }
        out
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &ModelGrads<S>) {
        fn add<S: Scalar>(a: &mut (Array2<S>, Array1<S>), b: &(Array2<S>, Array1<S>)) {
            a.0.scaled_add(S::one(), &b.0);
            a.1.scaled_add(S::one(), &b.1);
        }
        for (a, b) in self.audio_convs.iter_mut().zip(&other.audio_convs) {
            add(a, b);
        }
        add(&mut self.audio_out, &other.audio_out);
        add(&mut self.geo1, &other.geo1);
        add(&mut self.geo2, &other.geo2);
        for (a, b) in self.atlas_convs.iter_mut().zip(&other.atlas_convs) {
            add(a, b);
        }
        if let (Some(a), Some(b)) = (self.atlas_out.as_mut(), other.atlas_out.as_ref()) {
            add(a, b);
        }
        add(&mut self.tex_in, &other.tex_in);
        for (a, b) in self.tex_convs.iter_mut().zip(&other.tex_convs) {
            add(a, b);
        }
        if let (Some(a), Some(b)) = (self.bs.as_mut(), other.bs.as_ref()) {
            add(a, b);
        }
    }

    pub fn scale(&mut self, factor: S) {
        fn sc<S: Scalar>(pair: &mut (Array2<S>, Array1<S>), factor: S) {
            pair.0.mapv_inplace(|v| v * factor);
            pair.1.mapv_inplace(|v| v * factor);
        }
        for pair in self.audio_convs.iter_mut() {
            sc(pair, factor);
        }
        sc(&mut self.audio_out, factor);
        sc(&mut self.geo1, factor);
        sc(&mut self.geo2, factor);
        for pair in self.atlas_convs.iter_mut() {
            sc(pair, factor);
        }
        if let Some(pair) = self.atlas_out.as_mut() {
            sc(pair, factor);
        }
        sc(&mut self.tex_in, factor);
        for pair in self.tex_convs.iter_mut() {
            sc(pair, factor);
        }
        if let Some(pair) = self.bs.as_mut() {
            sc(pair, factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v.to64().abs())
            .fold(0.0, f64::max)
    }
}

/// One batch of model inputs.
pub struct BatchInput<S> {
    /// Raw (unstandardized) spectrograms, `(n, bins, frames, 2)`.
    pub spectrograms: Array4<S>,
    /// Previous-frame crops for the AR path, `(n, crop, crop, 3)`;
    /// all-zeros rows implement teacher-forcing dropout and frame 0.
    pub prev_crops: Array4<S>,
    /// Reference vertices, flattened `(3·V)`.
    pub ref_vertices: Array1<S>,
    /// Reference lip crop `(crop, crop, 3)`.
    pub ref_crop: Array3<S>,
    /// Pre-scaled dropout masks for the geometry hidden layer `(n, 150)`;
    /// `None` runs in eval mode.
    pub dropout_masks: Option<Array2<S>>,
}

/// Forward activations kept for backprop.
pub struct ForwardCache<S> {
    audio_acts: Vec<Array4<S>>,
    audio_flat: Array2<S>,
    latent_audio: Array2<S>,
    geo_h1: Array2<S>,
    geo_h1_dropped: Array2<S>,
    dropout_masks: Option<Array2<S>>,
    atlas_acts: Vec<Array4<S>>,
    atlas_flat: Option<Array2<S>>,
    latent_atlas: Option<Array2<S>>,
    tex_latent: Array2<S>,
    tex_seed_flat: Array2<S>,
    /// Interleaved per stage: [seed4d, up0, out0, up1, out1, ...].
    tex_acts: Vec<Array4<S>>,
    /// 1 where the crop clamp passed the value through unchanged.
    clamp_pass: Array4<S>,
}

/// Model outputs for one batch.
pub struct ForwardOutput<S> {
    pub latent_audio: Array2<S>,
    pub latent_atlas: Option<Array2<S>>,
    /// Predicted vertices `(n, 3·V)`.
    pub vertices: Array2<S>,
    /// Predicted crops, clamped to `[0, 1]`: `(n, crop, crop, 3)`.
    pub crops: Array4<S>,
    pub blendshapes: Option<Array2<S>>,
    pub cache: ForwardCache<S>,
}

/// Gradients of the loss with respect to the model outputs.
pub struct OutputGrads<S> {
    pub d_vertices: Array2<S>,
    pub d_crops: Array4<S>,
    pub d_blendshapes: Option<Array2<S>>,
}

pub fn forward<S: Scalar>(params: &ModelParams<S>, input: &BatchInput<S>) -> ForwardOutput<S> {
    let n = input.spectrograms.dim().0;
    let mean = S::from64(params.spec_mean);
    let inv_std = S::from64(1.0 / params.spec_std.max(1e-12));

    // Audio encoder.
    let mut audio_acts: Vec<Array4<S>> = Vec::with_capacity(params.audio_convs.len() + 1);
    audio_acts.push(input.spectrograms.map(|&v| (v - mean) * inv_std));
    for layer in &params.audio_convs {
        let y = conv_forward(audio_acts.last().unwrap(), &layer.w, &layer.b, &layer.spec);
        audio_acts.push(y);
    }
    let last = audio_acts.last().unwrap();
    let flat_len = last.len() / n;
    let audio_flat =
        last.clone().into_shape_with_order((n, flat_len)).expect("audio flatten");
    let latent_audio =
        dense_forward(&audio_flat, &params.audio_out.w, &params.audio_out.b, &params.audio_out.spec);

    // Geometry decoder.
    let geo_h1 = dense_forward(&latent_audio, &params.geo1.w, &params.geo1.b, &params.geo1.spec);
    let geo_h1_dropped = match &input.dropout_masks {
        Some(masks) => &geo_h1 * masks,
        None => geo_h1.clone(),
    };
    let delta = dense_forward(&geo_h1_dropped, &params.geo2.w, &params.geo2.b, &params.geo2.spec);
    let mut vertices = delta;
    for mut row in vertices.rows_mut() {
        for (v, r) in row.iter_mut().zip(input.ref_vertices.iter()) {
            *v += *r;
        }
    }

    // Previous-atlas encoder (AR path).
    let (atlas_acts, atlas_flat, latent_atlas) = if params.arch.options.ar {
        let mut acts: Vec<Array4<S>> = Vec::with_capacity(params.atlas_convs.len() + 1);
        acts.push(input.prev_crops.clone());
        for layer in &params.atlas_convs {
            let y = conv_forward(acts.last().unwrap(), &layer.w, &layer.b, &layer.spec);
            acts.push(y);
        }
        let last = acts.last().unwrap();
        let flat_len = last.len() / n;
        let flat = last.clone().into_shape_with_order((n, flat_len)).expect("atlas flatten");
        let out = params.atlas_out.as_ref().unwrap();
        let latent = dense_forward(&flat, &out.w, &out.b, &out.spec);
        (acts, Some(flat), Some(latent))
    } else {
        (Vec::new(), None, None)
    };

    // Texture decoder.
    let tex_latent = match &latent_atlas {
        Some(la) => {
            let mut cat = Array2::<S>::zeros((n, latent_audio.dim().1 + la.dim().1));
            cat.slice_mut(ndarray::s![.., ..latent_audio.dim().1]).assign(&latent_audio);
            cat.slice_mut(ndarray::s![.., latent_audio.dim().1..]).assign(la);
            cat
        }
        None => latent_audio.clone(),
    };
    let tex_seed_flat =
        dense_forward(&tex_latent, &params.tex_in.w, &params.tex_in.b, &params.tex_in.spec);
    let c0 = params.arch.tex_seed_channels;
    let seed = tex_seed_flat
        .clone()
        .into_shape_with_order((n, 4, 4, c0))
        .expect("texture seed reshape");
    let mut tex_acts: Vec<Array4<S>> = vec![seed];
    for layer in &params.tex_convs {
        let up = upsample2x_forward(tex_acts.last().unwrap());
        let out = conv_forward(&up, &layer.w, &layer.b, &layer.spec);
        tex_acts.push(up);
        tex_acts.push(out);
    }
    let delta_tex = tex_acts.last().unwrap().clone();

    // Â = clamp01(reference crop + Δ).
    let mut crops = delta_tex;
    let mut clamp_pass = Array4::<S>::zeros(crops.raw_dim());
    {
        let cs = crops.as_slice_mut().unwrap();
        let ps = clamp_pass.as_slice_mut().unwrap();
        let rs = input.ref_crop.as_slice().unwrap();
        let per = rs.len();
        for ni in 0..n {
            for i in 0..per {
                let idx = ni * per + i;
                let pre = cs[idx] + rs[i];
                if pre < S::zero() {
                    cs[idx] = S::zero();
                } else if pre > S::one() {
                    cs[idx] = S::one();
                } else {
                    cs[idx] = pre;
                    ps[idx] = S::one();
                }
            }
        }
    }

    // Blendshape head.
    let blendshapes = params
        .bs
        .as_ref()
        .map(|l| dense_forward(&latent_audio, &l.w, &l.b, &l.spec));

    ForwardOutput {
        latent_audio: latent_audio.clone(),
        latent_atlas: latent_atlas.clone(),
        vertices,
        crops,
        blendshapes,
        cache: ForwardCache {
            audio_acts,
            audio_flat,
            latent_audio,
            geo_h1,
            geo_h1_dropped,
            dropout_masks: input.dropout_masks.clone(),
            atlas_acts,
            atlas_flat,
            latent_atlas,
            tex_latent,
            tex_seed_flat,
            tex_acts,
            clamp_pass,
        },
    }
}

/// Backpropagates output gradients into `grads` (accumulating).
pub fn backward<S: Scalar>(
    params: &ModelParams<S>,
    out: &ForwardOutput<S>,
    d_out: &OutputGrads<S>,
    grads: &mut ModelGrads<S>,
) {
    let cache = &out.cache;
    let n = out.vertices.dim().0;
    let na = params.arch.options.latent_audio;

    // Texture head: clamp → conv/upsample chain → seed dense.
    let d_delta = &d_out.d_crops * &cache.clamp_pass;
    let mut d_cur = d_delta;
    for (li, layer) in params.tex_convs.iter().enumerate().rev() {
        let up = &cache.tex_acts[1 + 2 * li];
        let y = &cache.tex_acts[2 + 2 * li];
        let g = &mut grads.tex_convs[li];
        let d_up = conv_backward(up, y, &d_cur, &layer.w, &mut g.0, &mut g.1, &layer.spec);
        let in_dims = cache.tex_acts[2 * li].dim();
        d_cur = upsample2x_backward(&d_up, in_dims);
    }
    let d_seed_flat = d_cur
        .into_shape_with_order((n, cache.tex_seed_flat.dim().1))
        .expect("texture seed grad reshape");
    let d_tex_latent = dense_backward(
        &cache.tex_latent,
        &cache.tex_seed_flat,
        &d_seed_flat,
        &params.tex_in.w,
        &mut grads.tex_in.0,
        &mut grads.tex_in.1,
        &params.tex_in.spec,
    );

    // Split the concatenated latent gradient.
    let mut d_latent_audio = d_tex_latent.slice(ndarray::s![.., ..na]).to_owned();
    if params.arch.options.ar {
        let d_latent_atlas = d_tex_latent.slice(ndarray::s![.., na..]).to_owned();
        let atlas_out = params.atlas_out.as_ref().unwrap();
        let g_out = grads.atlas_out.as_mut().unwrap();
        let d_flat = dense_backward(
            cache.atlas_flat.as_ref().unwrap(),
            cache.latent_atlas.as_ref().unwrap(),
            &d_latent_atlas,
            &atlas_out.w,
            &mut g_out.0,
            &mut g_out.1,
            &atlas_out.spec,
        );
        let last_dims = cache.atlas_acts.last().unwrap().dim();
        let mut d_conv = d_flat.into_shape_with_order(last_dims).expect("atlas grad reshape");
        for (li, layer) in params.atlas_convs.iter().enumerate().rev() {
            let x = &cache.atlas_acts[li];
            let y = &cache.atlas_acts[li + 1];
            let g = &mut grads.atlas_convs[li];
            d_conv = conv_backward(x, y, &d_conv, &layer.w, &mut g.0, &mut g.1, &layer.spec);
        }
        // Gradient w.r.t. the previous crop is discarded: teacher forcing
        // feeds ground truth, not a differentiable predecessor.
    }

    // Geometry head.
    let d_h1d = dense_backward(
        &cache.geo_h1_dropped,
        &out.vertices, // linear activation: y unused by the act-grad
        &d_out.d_vertices,
        &params.geo2.w,
        &mut grads.geo2.0,
        &mut grads.geo2.1,
        &params.geo2.spec,
    );
    let d_h1 = match &cache.dropout_masks {
        Some(masks) => &d_h1d * masks,
        None => d_h1d,
    };
    let d_latent_geo = dense_backward(
        &cache.latent_audio,
        &cache.geo_h1,
        &d_h1,
        &params.geo1.w,
        &mut grads.geo1.0,
        &mut grads.geo1.1,
        &params.geo1.spec,
    );
    d_latent_audio.scaled_add(S::one(), &d_latent_geo);

    // Blendshape head.
    if let (Some(layer), Some(d_bs)) = (&params.bs, &d_out.d_blendshapes) {
        let g = grads.bs.as_mut().unwrap();
        let d_latent_bs = dense_backward(
            &cache.latent_audio,
            out.blendshapes.as_ref().unwrap(),
            d_bs,
            &layer.w,
            &mut g.0,
            &mut g.1,
            &layer.spec,
        );
        d_latent_audio.scaled_add(S::one(), &d_latent_bs);
    }

    // Audio encoder.
    let d_flat = dense_backward(
        &cache.audio_flat,
        &cache.latent_audio,
        &d_latent_audio,
        &params.audio_out.w,
        &mut grads.audio_out.0,
        &mut grads.audio_out.1,
        &params.audio_out.spec,
    );
    let last_dims = cache.audio_acts.last().unwrap().dim();
    let mut d_conv = d_flat.into_shape_with_order(last_dims).expect("audio grad reshape");
    for (li, layer) in params.audio_convs.iter().enumerate().rev() {
        let x = &cache.audio_acts[li];
        let y = &cache.audio_acts[li + 1];
        let g = &mut grads.audio_convs[li];
        d_conv = conv_backward(x, y, &d_conv, &layer.w, &mut g.0, &mut g.1, &layer.spec);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelArch, ModelOptions};

    fn tiny_arch(ar: bool, bs: Option<usize>) -> ModelArch {
        ModelArch::build(ModelOptions {
            channel_scale: 0.125,
            ar,
            blendshapes: bs,
            ..Default::default()
        })
    }

    fn dummy_input(n: usize, arch: &ModelArch) -> BatchInput<f64> {
        let o = &arch.options;
        BatchInput {
            spectrograms: Array4::from_elem((n, o.spec_bins, o.spec_frames, 2), 0.0),
            prev_crops: Array4::zeros((n, o.crop_size, o.crop_size, 3)),
            ref_vertices: Array1::from_elem(o.vertex_count * 3, 0.5),
            ref_crop: Array3::from_elem((o.crop_size, o.crop_size, 3), 0.5),
            dropout_masks: None,
        }
    }

    #[test]
    fn forward_shapes_are_consistent() {
        let arch = tiny_arch(true, Some(4));
        let params = ModelParams::<f64>::init(arch.clone(), 7);
        let input = dummy_input(2, &arch);
        let out = forward(&params, &input);
        assert_eq!(out.latent_audio.dim(), (2, 32));
        assert_eq!(out.latent_atlas.as_ref().unwrap().dim(), (2, 2));
        assert_eq!(out.vertices.dim(), (2, 1404));
        assert_eq!(out.crops.dim(), (2, 128, 128, 3));
        assert_eq!(out.blendshapes.as_ref().unwrap().dim(), (2, 4));
    }

    #[test]
    fn zero_spectrogram_gives_zero_latent_and_reference_outputs() {
        let arch = tiny_arch(false, Some(3));
        let mut params = ModelParams::<f64>::init(arch.clone(), 1);
        // Zero geometry/texture/bs weights so heads emit the references.
        params.geo1.w.fill(0.0);
        params.geo2.w.fill(0.0);
        params.tex_in.w.fill(0.0);
        for l in &mut params.tex_convs {
            l.w.fill(0.0);
        }
        params.bs.as_mut().unwrap().w.fill(0.0);
        let input = dummy_input(1, &arch);
        let out = forward(&params, &input);
        // Leaky ReLU fixes zero, biases are zero: latent is exactly zero.
        assert!(out.latent_audio.iter().all(|&v| v == 0.0));
        // Heads with zero weights return the references.
        assert!(out.vertices.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(out.crops.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!(out.blendshapes.as_ref().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn atlas_latent_lives_in_tanh_range() {
        let arch = tiny_arch(true, None);
        let params = ModelParams::<f64>::init(arch.clone(), 3);
        let mut input = dummy_input(2, &arch);
        input.prev_crops.fill(0.9);
        let out = forward(&params, &input);
        for &v in out.latent_atlas.as_ref().unwrap() {
            assert!(v.abs() < 1.0);
        }
    }

    #[test]
    fn geometry_decoder_is_linear_without_dropout() {
        let arch = tiny_arch(false, None);
        let mut params = ModelParams::<f64>::init(arch.clone(), 5);
        params.geo1.b.fill(0.0);
        params.geo2.b.fill(0.0);
        let mut input = dummy_input(1, &arch);
        input.ref_vertices.fill(0.0);
        input.spectrograms.fill(0.3);
        let out1 = forward(&params, &input);
        // Doubling the audio latent must double the deltas: emulate by
        // scaling geo1's input via a doubled latent path. Instead check
        // decode(2L) - ref == 2 (decode(L) - ref) directly on the dense
        // pair.
        let latent = out1.latent_audio.clone();
        let h1 = dense_forward(&latent, &params.geo1.w, &params.geo1.b, &params.geo1.spec);
        let d1 = dense_forward(&h1, &params.geo2.w, &params.geo2.b, &params.geo2.spec);
        let latent2 = &latent * 2.0;
        let h2 = dense_forward(&latent2, &params.geo1.w, &params.geo1.b, &params.geo1.spec);
        let d2 = dense_forward(&h2, &params.geo2.w, &params.geo2.b, &params.geo2.spec);
        for (a, b) in d1.iter().zip(d2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }
}
