//! Procedural synthetic faces with exact ground truth.
//!
//! The generator builds a half-ellipsoid face sampled on the same 13×36
//! vertex grid as the default topology, textures it from a smooth albedo
//! atlas, and renders frames through the exact inverse of the unrolling
//! path (triangle warp atlas → frame). Lighting corruptions — smooth
//! luminance gain, global color shifts, specular blobs — are composited
//! with known parameters, so every stage of the normalization pipeline has
//! an invertible oracle. Audio corpora pair the frames with an
//! amplitude-modulated tone whose smoothed envelope drives the mouth.

mod audio_corpus;

pub use audio_corpus::{build_training_dataset, gen_audio_visual_corpus, AudioVisualCorpus, CorpusParams};

use crate::geom::{self, warp_triangles, SimilarityTransform, TextureAtlas};
use crate::image::{Grid, Image};
use crate::landmarks::LandmarkFrame;
use crate::model::BlendshapeBasis;
use crate::topology::{grid_index, FaceTopology, GRID_COLS, GRID_ROWS};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Azimuth step between adjacent grid columns (radians).
const COL_STEP: f64 = 0.15;

/// The neutral half-ellipsoid face centered at (`cx`, `cy`) in image
/// coordinates, with the surface facing the camera (negative z).
pub fn base_face_frame(cx: f64, cy: f64, radius: f64, timestamp: f64) -> LandmarkFrame {
    let row_step = 2.0 * radius / (GRID_ROWS as f64 - 1.0);
    let mut vertices = Vec::with_capacity(GRID_ROWS * GRID_COLS);
    for r in 0..GRID_ROWS {
        let t = (r as f64 - (GRID_ROWS as f64 - 1.0) / 2.0) / ((GRID_ROWS as f64 - 1.0) / 2.0);
        let rho = radius * (1.0 - 0.35 * t * t);
        for c in 0..GRID_COLS {
            let theta = (c as f64 - (GRID_COLS as f64 - 1.0) / 2.0) * COL_STEP;
            vertices.push(Point3::new(
                cx + rho * theta.sin(),
                cy + (r as f64 - (GRID_ROWS as f64 - 1.0) / 2.0) * row_step,
                -rho * theta.cos(),
            ));
        }
    }
    LandmarkFrame::new(vertices, timestamp).expect("grid face is valid")
}

/// Unit mouth-opening displacement: the jaw rows translate downward with a
/// smooth onset below the upper lip.
pub fn mouth_displacement(max_drop: f64) -> Vec<Vector3<f64>> {
    let mut out = vec![Vector3::zeros(); GRID_ROWS * GRID_COLS];
    for r in 0..GRID_ROWS {
        let s = smoothstep((r as f64 - 24.0) / 6.0);
        if s <= 0.0 {
            continue;
        }
        for c in 0..GRID_COLS {
            out[grid_index(r, c)] = Vector3::new(0.0, max_drop * s, 0.0);
        }
    }
    out
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Applies `opening ∈ [0, 1]` of the mouth shape to the neutral face.
pub fn apply_opening(base: &LandmarkFrame, shape: &[Vector3<f64>], opening: f64) -> Vec<Point3<f64>> {
    base.vertices
        .iter()
        .zip(shape)
        .map(|(p, d)| Point3::from(p.coords + opening * d))
        .collect()
}

/// Rough inverse of [`apply_opening`]: mean jaw drop relative to the neutral
/// face, normalized by the shape amplitude.
pub fn opening_from_vertices(
    vertices: &[Point3<f64>],
    base: &LandmarkFrame,
    shape: &[Vector3<f64>],
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((v, b), d) in vertices.iter().zip(&base.vertices).zip(shape) {
        if d.y.abs() > 1e-9 {
            num += (v.y - b.y) * d.y;
            den += d.y * d.y;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Smooth structured albedo: skin tone with soft features (brows, eyes,
/// nose shading, lips) so similarity metrics have gradients to latch onto.
pub fn default_albedo(seed: u64, size: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa1bed0);
    let phases: Vec<(f32, f32, f32)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.0..std::f32::consts::TAU),
                rng.gen_range(1.0..3.0),
                rng.gen_range(1.0..3.0),
            )
        })
        .collect();
    let s = size as f32;
    let mut img = Image::new(size, size);
    for y in 0..size {
        for x in 0..size {
            let (fx, fy) = (x as f32 / s, y as f32 / s);
            let mut base = [0.80f32, 0.62, 0.53];
            // Gentle low-frequency mottling.
            let mut wave = 0.0;
            for &(p, kx, ky) in &phases {
                wave += ((fx * kx + fy * ky) * std::f32::consts::TAU + p).sin();
            }
            for v in &mut base {
                *v += 0.02 * wave;
            }
            // Soft shading features at the anchor layout.
            let features: [(f32, f32, f32, f32, [f32; 3]); 6] = [
                (88.0, 96.0, 9.0, 5.5, [0.22, 0.18, 0.16]),   // left eye
                (168.0, 96.0, 9.0, 5.5, [0.22, 0.18, 0.16]),  // right eye
                (88.0, 78.0, 16.0, 3.5, [0.45, 0.33, 0.27]),  // left brow
                (168.0, 78.0, 16.0, 3.5, [0.45, 0.33, 0.27]), // right brow
                (128.0, 140.0, 7.0, 9.0, [0.70, 0.50, 0.42]), // nose shading
                (128.0, 188.0, 22.0, 7.0, [0.62, 0.36, 0.33]), // lips
            ];
            let scale = s / 256.0;
            for &(cx, cy, rx, ry, color) in &features {
                let dx = (x as f32 - cx * scale) / (rx * scale);
                let dy = (y as f32 - cy * scale) / (ry * scale);
                let w = (-(dx * dx + dy * dy)).exp();
                for c in 0..3 {
                    base[c] = base[c] * (1.0 - w) + color[c] * w;
                }
            }
            img.set(y, x, [base[0].clamp(0.0, 1.0), base[1].clamp(0.0, 1.0), base[2].clamp(0.0, 1.0)]);
        }
    }
    img
}

/// Darkens the mouth interior proportionally to the opening.
pub fn albedo_with_mouth(albedo: &Image, opening: f64, size: usize) -> Image {
    let mut out = albedo.clone();
    if opening <= 0.0 {
        return out;
    }
    let s = size as f32 / 256.0;
    let (cx, cy) = (128.0 * s, 192.0 * s);
    let rx = (16.0 + 6.0 * opening as f32) * s;
    let ry = (2.0 + 14.0 * opening as f32) * s;
    let dark = [0.12f32, 0.07, 0.07];
    for y in 0..size {
        for x in 0..size {
            let dx = (x as f32 - cx) / rx;
            let dy = (y as f32 - cy) / ry;
            let d = dx * dx + dy * dy;
            if d < 4.0 {
                let w = ((1.0 - d).clamp(0.0, 1.0) * opening as f32).min(1.0);
                let mut px = out.get(y, x);
                for c in 0..3 {
                    px[c] = px[c] * (1.0 - w) + dark[c] * w;
                }
                out.set(y, x, px);
            }
        }
    }
    out
}

/// Smooth per-frame luminance gain field: an affine ramp over the atlas.
#[derive(Debug, Clone, Copy)]
pub struct GainParams {
    pub offset: f64,
    pub slope_x: f64,
    pub slope_y: f64,
}

impl GainParams {
    pub const NEUTRAL: GainParams = GainParams { offset: 1.0, slope_x: 0.0, slope_y: 0.0 };

    pub fn at(&self, x: usize, y: usize, size: usize) -> f64 {
        let fx = x as f64 / (size as f64 - 1.0) - 0.5;
        let fy = y as f64 / (size as f64 - 1.0) - 0.5;
        (self.offset + self.slope_x * fx + self.slope_y * fy).max(0.05)
    }

    pub fn field(&self, size: usize) -> Grid {
        let mut g = Grid::new(size, size);
        for y in 0..size {
            for x in 0..size {
                g.set(y, x, self.at(x, y, size) as f32);
            }
        }
        g
    }
}

/// Gaussian specular blob composited by the alpha model
/// `I = α + (1 - α)·I_c`.
#[derive(Debug, Clone, Copy)]
pub struct SpecBlob {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    pub amplitude: f64,
}

impl SpecBlob {
    pub fn alpha(&self, size: usize) -> Grid {
        let mut g = Grid::new(size, size);
        for y in 0..size {
            for x in 0..size {
                let d2 = ((x as f64 - self.cx).powi(2) + (y as f64 - self.cy).powi(2))
                    / (2.0 * self.sigma * self.sigma);
                g.set(y, x, (self.amplitude * (-d2).exp()) as f32);
            }
        }
        g
    }
}

/// Scene generation knobs.
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub frame_size: usize,
    pub atlas_size: usize,
    pub face_radius: f64,
    pub yaw_amp: f64,
    pub pitch_amp: f64,
    pub translation_amp: f64,
    pub scale_amp: f64,
    pub gain_slope_amp: f64,
    pub gain_offset_amp: f64,
    pub color_amp: f64,
    pub specular_amplitude: f64,
    pub mouth_max_drop: f64,
    pub fps: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            frame_size: 320,
            atlas_size: 256,
            face_radius: 90.0,
            yaw_amp: 0.15,
            pitch_amp: 0.05,
            translation_amp: 5.0,
            scale_amp: 0.03,
            gain_slope_amp: 0.35,
            gain_offset_amp: 0.15,
            color_amp: 0.0,
            specular_amplitude: 0.0,
            mouth_max_drop: 10.0,
            fps: 30.0,
        }
    }
}

/// A fully specified synthetic take: geometry, texture and per-frame
/// corruption parameters, reproducible from the seed.
#[derive(Debug, Clone)]
pub struct SynthScene {
    pub seed: u64,
    pub params: SceneParams,
    pub albedo: Image,
    pub base: LandmarkFrame,
    pub mouth_shape: Vec<Vector3<f64>>,
    /// Fixed per-vertex texture coordinates of the base face.
    pub base_uv: Vec<(f64, f64)>,
    pub cyl: geom::CylinderRef,
    pub poses: Vec<SimilarityTransform>,
    pub gains: Vec<GainParams>,
    pub color_shifts: Vec<([f64; 3], [f64; 3])>,
    pub speculars: Vec<Option<SpecBlob>>,
    pub opening: Vec<f64>,
}

/// Everything the generator knows about one rendered frame.
#[derive(Debug, Clone)]
pub struct FrameTruth {
    /// Canonical-pose unrolled clean atlas (what normalization should
    /// recover up to the reference illumination).
    pub atlas_clean: TextureAtlas,
    /// Clean atlas after the luminance gain and color shift.
    pub atlas_lit: TextureAtlas,
    pub gain: Grid,
    pub alpha: Grid,
    pub opening: f64,
}

/// One generated frame: image, tracked landmarks and ground truth.
#[derive(Debug, Clone)]
pub struct SynthFrame {
    pub image: Image,
    pub landmarks: LandmarkFrame,
    pub truth: FrameTruth,
}

impl SynthScene {
    /// Builds a scene with per-frame parameters drawn deterministically
    /// from the seed. Frame 0 is left neutral (identity pose, unit gain, no
    /// specular) so it can serve as the reference frame.
    pub fn generate(seed: u64, params: SceneParams, opening: Vec<f64>) -> SynthScene {
        let n = opening.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame_size = params.frame_size as f64;
        let base =
            base_face_frame(frame_size / 2.0, frame_size / 2.0, params.face_radius, 0.0);
        let topo = FaceTopology::default_grid();
        let cyl = geom::fit_reference_cylinder(&base, &topo, params.atlas_size)
            .expect("base face has a valid cylinder");
        let base_uv = geom::cylinder_uv(&base.vertices, &cyl).expect("base face off-axis");

        let mut poses = Vec::with_capacity(n);
        let mut gains = Vec::with_capacity(n);
        let mut color_shifts = Vec::with_capacity(n);
        let mut speculars = Vec::with_capacity(n);
        for t in 0..n {
            if t == 0 {
                poses.push(SimilarityTransform::identity());
                gains.push(GainParams::NEUTRAL);
                color_shifts.push(([1.0; 3], [0.0; 3]));
                speculars.push(None);
                continue;
            }
            let yaw = rng.gen_range(-params.yaw_amp..=params.yaw_amp);
            let pitch = rng.gen_range(-params.pitch_amp..=params.pitch_amp);
            let scale = 1.0 + rng.gen_range(-params.scale_amp..=params.scale_amp);
            let tx = rng.gen_range(-params.translation_amp..=params.translation_amp);
            let ty = rng.gen_range(-params.translation_amp..=params.translation_amp);
            let rot = rotation_y(yaw) * rotation_x(pitch);
            let center = Vector3::new(frame_size / 2.0, frame_size / 2.0, 0.0);
            // Rotate about the face center, then translate.
            let translation = center - scale * (rot * center) + Vector3::new(tx, ty, 0.0);
            poses.push(SimilarityTransform { scale, rotation: rot, translation });

            gains.push(GainParams {
                offset: 1.0 + rng.gen_range(-params.gain_offset_amp..=params.gain_offset_amp),
                slope_x: rng.gen_range(-params.gain_slope_amp..=params.gain_slope_amp),
                slope_y: rng.gen_range(-params.gain_slope_amp..=params.gain_slope_amp),
            });
            let ca = params.color_amp;
            color_shifts.push((
                [
                    1.0 + rng.gen_range(-ca..=ca.max(1e-12)),
                    1.0 + rng.gen_range(-ca..=ca.max(1e-12)),
                    1.0 + rng.gen_range(-ca..=ca.max(1e-12)),
                ],
                [
                    rng.gen_range(-ca..=ca.max(1e-12)) * 0.3,
                    rng.gen_range(-ca..=ca.max(1e-12)) * 0.3,
                    rng.gen_range(-ca..=ca.max(1e-12)) * 0.3,
                ],
            ));
            speculars.push(if params.specular_amplitude > 0.0 {
                Some(SpecBlob {
                    cx: rng.gen_range(90.0..166.0) * params.atlas_size as f64 / 256.0,
                    cy: rng.gen_range(110.0..170.0) * params.atlas_size as f64 / 256.0,
                    sigma: rng.gen_range(6.0..12.0) * params.atlas_size as f64 / 256.0,
                    amplitude: params.specular_amplitude * rng.gen_range(0.7..1.0),
                })
            } else {
                None
            });
        }

        SynthScene {
            seed,
            albedo: default_albedo(seed, params.atlas_size),
            base,
            mouth_shape: mouth_displacement(params.mouth_max_drop),
            base_uv,
            cyl,
            poses,
            gains,
            color_shifts,
            speculars,
            opening,
            params,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.opening.len()
    }

    /// Vertices of frame `t` in canonical (unposed) space.
    pub fn canonical_vertices(&self, t: usize) -> Vec<Point3<f64>> {
        apply_opening(&self.base, &self.mouth_shape, self.opening[t])
    }

    /// Renders frame `t` together with its ground truth.
    pub fn render_frame(&self, t: usize) -> SynthFrame {
        let size = self.params.atlas_size;
        let frame_size = self.params.frame_size;
        let opening = self.opening[t];

        // Texture for this frame's mouth state, then lighting corruptions in
        // atlas (face surface) space.
        let atlas_albedo = albedo_with_mouth(&self.albedo, opening, size);
        let gain = self.gains[t].field(size);
        let (ca, cb) = self.color_shifts[t];
        let mut lit = apply_gain_luminance(&atlas_albedo, &gain);
        for y in 0..size {
            for x in 0..size {
                let mut px = lit.get(y, x);
                for c in 0..3 {
                    px[c] = (px[c] * ca[c] as f32 + cb[c] as f32).clamp(0.0, 1.0);
                }
                lit.set(y, x, px);
            }
        }
        let alpha = match self.speculars[t] {
            Some(blob) => blob.alpha(size),
            None => Grid::new(size, size),
        };
        let mut composited = lit.clone();
        for y in 0..size {
            for x in 0..size {
                let a = alpha.get(y, x);
                if a > 0.0 {
                    let mut px = composited.get(y, x);
                    for c in 0..3 {
                        px[c] = a + (1.0 - a) * px[c];
                    }
                    composited.set(y, x, px);
                }
            }
        }

        // Geometry: canonical opening then the rigid pose.
        let canonical = self.canonical_vertices(t);
        let posed = self.poses[t].apply_all(&canonical);
        let landmarks =
            LandmarkFrame::new(posed.clone(), t as f64 / self.params.fps).expect("posed frame valid");

        // Render: warp the composited atlas into the frame. Depth buffers on
        // the posed z so silhouette folds resolve front-most.
        let dst: Vec<(f64, f64)> = posed.iter().map(|p| (p.x, p.y)).collect();
        let depths: Vec<f64> = posed.iter().map(|p| p.z).collect();
        let topo = FaceTopology::default_grid();
        let rendered = warp_triangles(
            &composited,
            &self.base_uv,
            &dst,
            &topo.triangles,
            (frame_size, frame_size),
            Some(&depths),
        );
        let mut image = Image::filled(frame_size, frame_size, [0.26, 0.28, 0.30]);
        for y in 0..frame_size {
            for x in 0..frame_size {
                if rendered.valid.get(y, x) {
                    image.set(y, x, rendered.pixels.get(y, x));
                }
            }
        }

        // Ground-truth atlases in the canonical chart: what unrolling a
        // clean (and lit) render should produce.
        let canon_uv = geom::cylinder_uv(&canonical, &self.cyl).expect("canonical off-axis");
        let canon_depth: Vec<f64> = canonical.iter().map(|p| p.z).collect();
        let atlas_clean = warp_triangles(
            &atlas_albedo,
            &self.base_uv,
            &canon_uv,
            &topo.triangles,
            (size, size),
            Some(&canon_depth),
        );
        let atlas_lit = warp_triangles(
            &lit,
            &self.base_uv,
            &canon_uv,
            &topo.triangles,
            (size, size),
            Some(&canon_depth),
        );

        SynthFrame {
            image,
            landmarks,
            truth: FrameTruth { atlas_clean, atlas_lit, gain, alpha, opening },
        }
    }

    /// Blendshape basis whose first shape is the mouth opening; the extra
    /// shapes are small unrelated deformations.
    pub fn blendshape_basis(&self) -> BlendshapeBasis {
        let mut shapes = vec![self.mouth_shape.clone()];
        // Brow raise.
        let mut brow = vec![Vector3::zeros(); self.base.vertices.len()];
        for r in 0..6 {
            for c in 0..GRID_COLS {
                brow[grid_index(r, c)] = Vector3::new(0.0, -3.0 * (1.0 - r as f64 / 6.0), 0.0);
            }
        }
        shapes.push(brow);
        // Cheek widen.
        let mut widen = vec![Vector3::zeros(); self.base.vertices.len()];
        for r in 14..26 {
            for c in 0..GRID_COLS {
                let side = (c as f64 - 6.0) / 6.0;
                widen[grid_index(r, c)] = Vector3::new(2.0 * side, 0.0, 0.0);
            }
        }
        shapes.push(widen);
        BlendshapeBasis::new(self.base.vertices.clone(), shapes).expect("valid basis")
    }
}

/// Renders every frame of the scene.
pub fn gen_face_sequence(scene: &SynthScene) -> Vec<SynthFrame> {
    (0..scene.frame_count()).map(|t| scene.render_frame(t)).collect()
}

/// Scales the luminance channel by a gain field, leaving chroma unchanged.
pub fn apply_gain_luminance(img: &Image, gain: &Grid) -> Image {
    let mut out = img.clone();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let px = img.get(y, x);
            let (yy, u, v) = crate::light::rgb_to_yuv_px(px);
            let scaled = crate::light::yuv_to_rgb_px(yy * gain.get(y, x), u, v);
            out.set(y, x, [
                scaled[0].clamp(0.0, 1.0),
                scaled[1].clamp(0.0, 1.0),
                scaled[2].clamp(0.0, 1.0),
            ]);
        }
    }
    out
}

fn rotation_y(angle: f64) -> Matrix3<f64> {
    Matrix3::new(
        angle.cos(), 0.0, angle.sin(),
        0.0, 1.0, 0.0,
        -angle.sin(), 0.0, angle.cos(),
    )
}

fn rotation_x(angle: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0, 0.0, 0.0,
        0.0, angle.cos(), -angle.sin(),
        0.0, angle.sin(), angle.cos(),
    )
}
