//! Lighting normalization of frontalized texture atlases.
//!
//! Spatial pass: the reference atlas is symmetrized — for every mirror pair
//! the darker pixel is brightened to the brighter one — after removing
//! specular highlights. Temporal pass: each frame atlas is matched to the
//! normalized reference by a smooth multiplicative luminance gain plus a
//! global per-channel affine color transform.

mod gain;
mod specular;

pub use gain::{estimate_color_transform, estimate_gain_irls, ColorTransform, GainEstimate, IrlsDiagnostics, IrlsParams};
pub use specular::{remove_specularity, SpecularParams};

use crate::config::PipelineConfig;
use crate::geom::{self, TextureAtlas};
use crate::image::{Grid, Image};
use crate::landmarks::LandmarkFrame;
use crate::topology::FaceTopology;
use crate::Result;
use rayon::prelude::*;

/// Per-pixel multiplicative luminance gain field.
pub type GainMap = Grid;
/// Per-pixel IRLS weights in `[0, 1]`.
pub type WeightMap = Grid;
/// Per-pixel specular alpha in `[0, 1)`.
pub type AlphaMap = Grid;

// BT.601 full-range luma weights.
const KR: f32 = 0.299;
const KG: f32 = 0.587;
const KB: f32 = 0.114;

/// RGB → YUV for a single pixel (BT.601 full range).
#[inline]
pub fn rgb_to_yuv_px(rgb: [f32; 3]) -> (f32, f32, f32) {
    let y = KR * rgb[0] + KG * rgb[1] + KB * rgb[2];
    let u = 0.5 / (1.0 - KB) * (rgb[2] - y);
    let v = 0.5 / (1.0 - KR) * (rgb[0] - y);
    (y, u, v)
}

/// YUV → RGB for a single pixel; exact inverse of [`rgb_to_yuv_px`].
#[inline]
pub fn yuv_to_rgb_px(y: f32, u: f32, v: f32) -> [f32; 3] {
    let r = y + (1.0 - KR) / 0.5 * v;
    let b = y + (1.0 - KB) / 0.5 * u;
    let g = (y - KR * r - KB * b) / KG;
    [r, g, b]
}

/// Conversion direction for [`rgb_yuv_convert`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YuvDirection {
    Forward,
    Inverse,
}

/// Converts a packed 3-channel image between RGB and YUV, in place of the
/// channel meaning (the buffer layout is unchanged).
pub fn rgb_yuv_convert(img: &Image, direction: YuvDirection) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = img.get(y, x);
            let q = match direction {
                YuvDirection::Forward => {
                    let (yy, u, v) = rgb_to_yuv_px(p);
                    [yy, u, v]
                }
                YuvDirection::Inverse => yuv_to_rgb_px(p[0], p[1], p[2]),
            };
            out.set(y, x, q);
        }
    }
    out
}

/// Luminance channel of an RGB image.
pub fn luminance(img: &Image) -> Grid {
    let mut out = Grid::new(img.height(), img.width());
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.set(y, x, rgb_to_yuv_px(img.get(y, x)).0);
        }
    }
    out
}

/// Output of [`normalize_temporal`]: the normalized atlas plus the maps
/// that produced it, kept for diagnostics dumps.
#[derive(Debug, Clone)]
pub struct TemporalNormalization {
    pub normalized: TextureAtlas,
    pub gain: GainMap,
    pub color: ColorTransform,
    pub weights: WeightMap,
}

/// Matches the illumination of frame atlas `f` to reference atlas `r`
/// (already warped into `f`'s texture coordinates by the caller).
///
/// The luminance is scaled by the IRLS gain, then a global per-channel
/// affine color transform (estimated under the same fixed weights) aligns
/// the RGB distribution; the result is clamped to `[0, 1]`.
pub fn normalize_temporal(
    f: &TextureAtlas,
    r: &TextureAtlas,
    params: &IrlsParams,
) -> TemporalNormalization {
    let est = estimate_gain_irls(f, r, None, params);
    let gained = apply_gain(&f.pixels, &est.gain);
    let gained_atlas = TextureAtlas { pixels: gained, valid: f.valid.clone() };
    let color = estimate_color_transform(&gained_atlas, r, &est.weights);
    let mut out = gained_atlas.pixels.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            let mut px = out.get(y, x);
            for c in 0..3 {
                px[c] = (px[c] * color.a[c] as f32 + color.b[c] as f32).clamp(0.0, 1.0);
            }
            out.set(y, x, px);
        }
    }
    TemporalNormalization {
        normalized: TextureAtlas { pixels: out, valid: f.valid.clone() },
        gain: est.gain,
        color,
        weights: est.weights,
    }
}

/// Scales an image's luminance by a gain field, preserving chroma.
pub fn apply_gain(img: &Image, gain: &Grid) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (yy, u, v) = rgb_to_yuv_px(img.get(y, x));
            let rgb = yuv_to_rgb_px(yy * gain.get(y, x), u, v);
            out.set(y, x, [rgb[0].clamp(0.0, 1.0), rgb[1].clamp(0.0, 1.0), rgb[2].clamp(0.0, 1.0)]);
        }
    }
    out
}

/// Output of [`symmetrize_reference`].
#[derive(Debug, Clone)]
pub struct Symmetrization {
    pub normalized: TextureAtlas,
    /// Symmetrized gain `max(gᵐ, mirror(gᵐ))`; exactly mirror-symmetric.
    pub gain_sym: GainMap,
    /// The raw mirror gain `gᵐ` (reference as frame, its mirror as target).
    pub gain_mirror: GainMap,
}

/// Fixed-point refinement passes inside [`symmetrize_reference`]; each
/// pass corrects the patch-averaging bias the previous one left behind.
const SYMMETRIZE_PASSES: usize = 3;

/// Brightening gains within this band of 1 are treated as estimator noise
/// and not applied; the band stops noise rectification from ratcheting the
/// image brighter on every pass.
const SYMMETRIZE_DEADBAND: f32 = 0.004;

/// Equalizes left/right illumination of the (specular-free) reference
/// atlas using facial symmetry.
///
/// The mirror gain `gᵐ` satisfies `mirror(r) ≈ gᵐ·r`, so it exceeds 1
/// exactly where `r` is darker than its mirror pixel. The darker member of
/// each pair is brightened to the brighter one by applying the brightening
/// branch `max(gᵐ, 1)`; the reported symmetrized gain is the mirror-
/// symmetric `max(gᵐ, mirror(gᵐ))` (composed over the refinement passes),
/// which coincides with the applied gain on every darker-side pixel.
/// Genuine (non-illumination) asymmetries get low IRLS weights and
/// survive.
pub fn symmetrize_reference(
    r: &TextureAtlas,
    params: &IrlsParams,
) -> Symmetrization {
    let (h, w) = r.size();
    let mut current = r.clone();
    let mut gain_sym = Grid::filled(h, w, 1.0);
    let mut gain_mirror: Option<Grid> = None;

    for _ in 0..SYMMETRIZE_PASSES {
        let mirrored = TextureAtlas {
            pixels: current.pixels.mirror_horizontal(),
            valid: current.valid.mirror_horizontal(),
        };
        let est = estimate_gain_irls(&current, &mirrored, None, params);
        let gm = est.gain;
        let gm_mirror = gm.mirror_horizontal();
        let mut applied = Grid::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let a = gm.get(y, x);
                let b = gm_mirror.get(y, x);
                gain_sym.set(y, x, gain_sym.get(y, x) * a.max(b));
                applied.set(y, x, if a > 1.0 + SYMMETRIZE_DEADBAND { a } else { 1.0 });
            }
        }
        current = TextureAtlas {
            pixels: apply_gain(&current.pixels, &applied),
            valid: current.valid,
        };
        if gain_mirror.is_none() {
            gain_mirror = Some(gm);
        }
    }
    Symmetrization {
        normalized: current,
        gain_sym,
        gain_mirror: gain_mirror.expect("at least one pass"),
    }
}

/// One normalized frame: lighting-normalized atlas plus the pose-normalized
/// vertices it was unrolled with.
#[derive(Debug, Clone)]
pub struct NormalizedFrame {
    pub atlas: TextureAtlas,
    pub vertices: Vec<nalgebra::Point3<f64>>,
}

/// Streaming sequence normalizer.
///
/// Construction fixes the reference: its atlas is unrolled, despecularized
/// and symmetrized once. Each subsequent frame is pose-normalized, unrolled,
/// despecularized and temporally normalized against the reference warped
/// into the frame's own texture coordinates. Frames are independent, so
/// callers may process them in parallel or stream them from disk.
pub struct SequenceNormalizer {
    topo: FaceTopology,
    irls: IrlsParams,
    spec_params: SpecularParams,
    atlas_size: usize,
    ref_frame: LandmarkFrame,
    pub cyl: geom::CylinderRef,
    /// Symmetrized, specular-free reference atlas.
    pub reference: TextureAtlas,
    /// Reference-frame uv chart.
    pub reference_uv: Vec<(f64, f64)>,
}

impl SequenceNormalizer {
    pub fn new(
        ref_image: &Image,
        ref_landmarks: &LandmarkFrame,
        topo: &FaceTopology,
        cfg: &PipelineConfig,
    ) -> Result<SequenceNormalizer> {
        let atlas_size = cfg.atlas_size;
        let irls = IrlsParams {
            temperature: cfg.irls_temperature,
            patch: cfg.irls_patch,
            iterations: cfg.irls_iterations,
            grid_stride: cfg.irls_grid_stride,
        };
        let spec_params = SpecularParams {
            blur_sigma: cfg.specular_blur_sigma,
            percentile: cfg.specular_percentile,
            holefill_max_iters: cfg.holefill_max_iters,
            holefill_tolerance: cfg.holefill_tolerance,
        };
        let cyl = geom::fit_reference_cylinder(ref_landmarks, topo, atlas_size)?;
        let uv = geom::cylinder_uv(&ref_landmarks.vertices, &cyl)?;
        let image_coords = geom::project_2d(&ref_landmarks.vertices);
        let atlas = geom::unroll_texture(
            ref_image,
            &ref_landmarks.vertices,
            &cyl,
            topo,
            &image_coords,
            atlas_size,
        )?;
        let skin = geom::atlas_skin_mask(&uv, topo, atlas_size);
        let (despec, _) = remove_specularity(&atlas, &skin, &spec_params);
        let sym = symmetrize_reference(&despec, &irls);
        Ok(SequenceNormalizer {
            topo: topo.clone(),
            irls,
            spec_params,
            atlas_size,
            ref_frame: ref_landmarks.clone(),
            cyl,
            reference: sym.normalized,
            reference_uv: uv,
        })
    }

    /// Normalizes one frame (pose, specularity, temporal lighting).
    pub fn normalize_frame(&self, image: &Image, lm: &LandmarkFrame) -> Result<NormalizedFrame> {
        let (normalized, _) = geom::normalize_pose(lm, &self.ref_frame, &self.topo)?;
        let uv = geom::cylinder_uv(&normalized, &self.cyl)?;
        let image_coords = geom::project_2d(&lm.vertices);
        let atlas = geom::unroll_texture(
            image,
            &normalized,
            &self.cyl,
            &self.topo,
            &image_coords,
            self.atlas_size,
        )?;
        let skin = geom::atlas_skin_mask(&uv, &self.topo, self.atlas_size);
        let (despec, _) = remove_specularity(&atlas, &skin, &self.spec_params);
        let depths: Vec<f64> = normalized.iter().map(|p| p.z).collect();
        let warped_ref = geom::warp_triangles(
            &self.reference.pixels,
            &self.reference_uv,
            &uv,
            &self.topo.triangles,
            (self.atlas_size, self.atlas_size),
            Some(&depths),
        );
        let norm = normalize_temporal(&despec, &warped_ref, &self.irls);
        Ok(NormalizedFrame { atlas: norm.normalized, vertices: normalized })
    }
}

/// Result of normalizing a whole sequence.
pub struct NormalizedSequence {
    /// Per-frame lighting-normalized atlases (`None` where a frame failed).
    pub atlases: Vec<Option<TextureAtlas>>,
    /// Per-frame normalized vertices.
    pub vertices: Vec<Option<Vec<nalgebra::Point3<f64>>>>,
    /// The symmetrized, specular-free reference atlas.
    pub reference: TextureAtlas,
    /// Reference-frame uv chart (one entry per vertex).
    pub reference_uv: Vec<(f64, f64)>,
    /// Frames that failed, with the error rendered to text.
    pub failures: Vec<(usize, String)>,
}

/// Normalizes a whole in-memory sequence: despecularized frontalization of
/// every frame, reference symmetrization, then temporal normalization
/// against the warped reference. Per-frame failures are reported with
/// their index; the pipeline continues past them.
pub fn normalize_sequence(
    frames: &[(Image, LandmarkFrame)],
    ref_index: usize,
    topo: &FaceTopology,
    cfg: &PipelineConfig,
) -> Result<NormalizedSequence> {
    if ref_index >= frames.len() {
        return Err(crate::PipelineError::InvalidInput(format!(
            "reference index {} out of range ({} frames)",
            ref_index,
            frames.len()
        )));
    }
    let normalizer =
        SequenceNormalizer::new(&frames[ref_index].0, &frames[ref_index].1, topo, cfg)?;
    let results: Vec<std::result::Result<NormalizedFrame, String>> = frames
        .par_iter()
        .map(|(image, lm)| normalizer.normalize_frame(image, lm).map_err(|e| e.to_string()))
        .collect();

    let mut atlases = Vec::with_capacity(frames.len());
    let mut vertices = Vec::with_capacity(frames.len());
    let mut failures = Vec::new();
    for (idx, res) in results.into_iter().enumerate() {
        match res {
            Ok(frame) => {
                atlases.push(Some(frame.atlas));
                vertices.push(Some(frame.vertices));
            }
            Err(e) => {
                atlases.push(None);
                vertices.push(None);
                failures.push((idx, e));
            }
        }
    }
    Ok(NormalizedSequence {
        atlases,
        vertices,
        reference: normalizer.reference,
        reference_uv: normalizer.reference_uv,
        failures,
    })
}
