//! Inference-side synthesis: textured meshes and video compositing.
//!
//! Predicted geometry plus the predicted atlas make a textured 3D mesh
//! (texture coordinates come from projecting the predicted vertices onto
//! the reference cylinder). For video, the prediction is relit against the
//! target frame's own unrolled atlas, warped to the target pose, and
//! blended into the frame with a feathered mask after warping the area
//! below the chin to the new jaw position.

mod mesh;

pub use mesh::{export_obj, import_obj, TexturedMesh};

use crate::config::PipelineConfig;
use crate::geom::{self, CylinderRef, SimilarityTransform, TextureAtlas};
use crate::image::{Grid, Image, Mask};
use crate::landmarks::LandmarkFrame;
use crate::light::{normalize_temporal, IrlsParams};
use crate::topology::{grid_index, FaceTopology, GRID_COLS, GRID_ROWS};
use crate::Result;
use nalgebra::Point3;

/// Builds a textured mesh from predicted vertices and a predicted atlas:
/// the uv chart is the cylinder projection of the predicted vertices.
pub fn build_textured_mesh(
    predicted_vertices: &[Point3<f64>],
    atlas: TextureAtlas,
    cyl: &CylinderRef,
    topo: &FaceTopology,
) -> Result<TexturedMesh> {
    let uv = geom::cylinder_uv(predicted_vertices, cyl)?;
    Ok(TexturedMesh {
        vertices: predicted_vertices.to_vec(),
        uv,
        triangles: topo.triangles.clone(),
        atlas,
    })
}

/// Transfers the target atlas's illumination onto the prediction: the
/// temporal normalization run in reverse, with the (lit) target as the
/// reference.
pub fn relight_to_target(
    predicted_atlas: &TextureAtlas,
    target_atlas: &TextureAtlas,
    irls: &IrlsParams,
) -> TextureAtlas {
    normalize_temporal(predicted_atlas, target_atlas, irls).normalized
}

/// Warps the band below the chin so the background follows a new jaw
/// position. Pixels outside the band are untouched; a self-intersecting
/// band falls back to the identity with a warning flag.
pub fn chin_warp(
    frame: &Image,
    old_chin: &[(f64, f64)],
    new_chin: &[(f64, f64)],
    band_px: f64,
) -> (Image, bool) {
    assert_eq!(old_chin.len(), new_chin.len(), "chin polylines must match");
    if old_chin.len() < 2 {
        return (frame.clone(), false);
    }
    let k = old_chin.len();
    // Band: top edge is the chin polyline, bottom edge hangs `band_px`
    // below the OLD chin and is shared, pinning the far side.
    let bottom: Vec<(f64, f64)> = old_chin.iter().map(|&(x, y)| (x, y + band_px)).collect();
    let mut src_coords = Vec::with_capacity(2 * k);
    let mut dst_coords = Vec::with_capacity(2 * k);
    src_coords.extend_from_slice(old_chin);
    src_coords.extend_from_slice(&bottom);
    dst_coords.extend_from_slice(new_chin);
    dst_coords.extend_from_slice(&bottom);

    let mut triangles = Vec::with_capacity((k - 1) * 2);
    for i in 0..k - 1 {
        triangles.push([i, i + 1, k + i]);
        triangles.push([k + i, i + 1, k + i + 1]);
    }

    // Reject flipped/self-intersecting destination bands.
    let orient = |t: &[usize; 3], pts: &[(f64, f64)]| {
        let (a, b, c) = (pts[t[0]], pts[t[1]], pts[t[2]]);
        (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
    };
    let mut sign = 0.0f64;
    for t in &triangles {
        let o = orient(t, &dst_coords);
        if o.abs() < 1e-9 {
            continue;
        }
        if sign == 0.0 {
            sign = o.signum();
        } else if o.signum() != sign {
            return (frame.clone(), true);
        }
    }

    let warped = geom::warp_triangles(
        frame,
        &src_coords,
        &dst_coords,
        &triangles,
        (frame.height(), frame.width()),
        None,
    );
    let mut out = frame.clone();
    for y in 0..frame.height() {
        for x in 0..frame.width() {
            if warped.valid.get(y, x) {
                out.set(y, x, warped.pixels.get(y, x));
            }
        }
    }
    (out, false)
}

/// Pastes a predicted lip crop back into a full atlas with a linear feather
/// band so the seam does not show.
pub fn compose_full_atlas(
    reference_atlas: &TextureAtlas,
    crop: &Image,
    topo: &FaceTopology,
    feather_px: usize,
) -> TextureAtlas {
    let rect = topo.lip_crop;
    let mut out = reference_atlas.clone();
    let f = feather_px.max(1) as f32;
    for y in 0..rect.h {
        for x in 0..rect.w {
            // Distance to the crop border controls the blend.
            let d = [y, x, rect.h - 1 - y, rect.w - 1 - x]
                .into_iter()
                .min()
                .unwrap() as f32;
            let alpha = (d / f).min(1.0);
            let (ay, ax) = (rect.y + y, rect.x + x);
            let base = out.pixels.get(ay, ax);
            let c = crop.get(y, x);
            let mut px = [0.0f32; 3];
            for ch in 0..3 {
                px[ch] = base[ch] * (1.0 - alpha) + c[ch] * alpha;
            }
            out.pixels.set(ay, ax, px);
        }
    }
    out
}

/// The chin polyline of a vertex set: the bottom grid row, projected to the
/// image plane.
pub fn chin_polyline(vertices: &[Point3<f64>]) -> Vec<(f64, f64)> {
    (0..GRID_COLS)
        .map(|c| {
            let p = vertices[grid_index(GRID_ROWS - 1, c)];
            (p.x, p.y)
        })
        .collect()
}

/// Output of [`blend_into_frame`].
pub struct BlendResult {
    pub frame: Image,
    /// Pixels covered by the synthesized face (before feathering).
    pub face_region: Mask,
    pub chin_warp_fallback: bool,
}

/// Composites a predicted face into a target frame.
///
/// The prediction (atlas in reference texture coordinates) is relit
/// against the target's own unrolled atlas, warped to the target pose, and
/// feather-blended over the chin-warped target frame.
pub fn blend_into_frame(
    target_frame: &Image,
    target_landmarks: &LandmarkFrame,
    predicted_vertices: &[Point3<f64>],
    predicted_atlas: &TextureAtlas,
    ref_landmarks: &LandmarkFrame,
    cyl: &CylinderRef,
    topo: &FaceTopology,
    cfg: &PipelineConfig,
) -> Result<BlendResult> {
    let irls = IrlsParams {
        temperature: cfg.irls_temperature,
        patch: cfg.irls_patch,
        iterations: cfg.irls_iterations,
        grid_stride: cfg.irls_grid_stride,
    };

    // Target decomposition: normalized pose and its own (lit) atlas.
    let (target_normalized, target_transform) =
        geom::normalize_pose(target_landmarks, ref_landmarks, topo)?;
    let target_image_coords = geom::project_2d(&target_landmarks.vertices);
    let target_atlas = geom::unroll_texture(
        target_frame,
        &target_normalized,
        cyl,
        topo,
        &target_image_coords,
        cfg.atlas_size,
    )?;

    // Carry the target's illumination onto the prediction.
    let relit = relight_to_target(predicted_atlas, &target_atlas, &irls);

    // Predicted geometry at the target's pose.
    let to_frame = target_transform.inverse();
    let predicted_at_pose: Vec<Point3<f64>> =
        predicted_vertices.iter().map(|p| to_frame.apply(p)).collect();
    let dst_coords = geom::project_2d(&predicted_at_pose);
    let depths: Vec<f64> = predicted_at_pose.iter().map(|p| p.z).collect();

    // Background preparation: move the area below the original chin to the
    // predicted chin position.
    let old_chin = chin_polyline(&target_landmarks.vertices);
    let new_chin = chin_polyline(&predicted_at_pose);
    let (background, chin_fallback) =
        chin_warp(target_frame, &old_chin, &new_chin, cfg.chin_band_px as f64);

    // Render the prediction into the frame.
    let uv = geom::cylinder_uv(predicted_vertices, cyl)?;
    let rendered = geom::warp_triangles(
        &relit.pixels,
        &uv,
        &dst_coords,
        &topo.triangles,
        (target_frame.height(), target_frame.width()),
        Some(&depths),
    );

    if rendered.valid.count() == 0 {
        return Ok(BlendResult {
            frame: target_frame.clone(),
            face_region: rendered.valid,
            chin_warp_fallback: chin_fallback,
        });
    }

    // Feathered blend: full synthesized content in the eroded interior,
    // linear ramp across the boundary band.
    let feather = feather_mask(&rendered.valid, cfg.blend_feather_px);
    let mut out = background.clone();
    for y in 0..out.height() {
        for x in 0..out.width() {
            let a = feather.get(y, x);
            if a <= 0.0 {
                continue;
            }
            let syn = rendered.pixels.get(y, x);
            let bg = out.get(y, x);
            let mut px = [0.0f32; 3];
            for c in 0..3 {
                px[c] = (bg[c] * (1.0 - a) + syn[c] * a).clamp(0.0, 1.0);
            }
            out.set(y, x, px);
        }
    }
    Ok(BlendResult { frame: out, face_region: rendered.valid, chin_warp_fallback: chin_fallback })
}

/// Linear feather: 1 in the mask interior, ramping to 0 across `width`
/// pixels inside the mask boundary, 0 outside the mask.
fn feather_mask(mask: &Mask, width: usize) -> Grid {
    let (h, w) = (mask.height(), mask.width());
    // Distance-to-boundary by iterative erosion (widths are small).
    let mut depth = vec![0u16; h * w];
    let mut current = mask.clone();
    for d in 0..=width {
        for y in 0..h {
            for x in 0..w {
                if current.get(y, x) {
                    depth[y * w + x] = d as u16 + 1;
                }
            }
        }
        if d < width {
            current = current.erode(1);
        }
    }
    let mut out = Grid::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let d = depth[y * w + x];
            if d > 0 {
                out.set(y, x, (d as f32 / (width.max(1) as f32 + 1.0)).min(1.0));
            }
        }
    }
    out
}

/// Ground-truth-driven self-reenactment: drives [`blend_into_frame`] with
/// the target's own decomposition (used by identity checks and examples).
pub fn self_reenact(
    target_frame: &Image,
    target_landmarks: &LandmarkFrame,
    normalized_atlas: &TextureAtlas,
    ref_landmarks: &LandmarkFrame,
    cyl: &CylinderRef,
    topo: &FaceTopology,
    cfg: &PipelineConfig,
) -> Result<BlendResult> {
    let (target_normalized, _) = geom::normalize_pose(target_landmarks, ref_landmarks, topo)?;
    blend_into_frame(
        target_frame,
        target_landmarks,
        &target_normalized,
        normalized_atlas,
        ref_landmarks,
        cyl,
        topo,
        cfg,
    )
}

/// Applies a similarity transform to a full vertex set (convenience for
/// pose playback in examples and tests).
pub fn apply_transform(vertices: &[Point3<f64>], t: &SimilarityTransform) -> Vec<Point3<f64>> {
    t.apply_all(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ruled_grid(h: usize, w: usize) -> Image {
        let mut img = Image::filled(h, w, [0.9, 0.9, 0.9]);
        for y in 0..h {
            for x in 0..w {
                if y % 8 == 0 || x % 8 == 0 {
                    img.set(y, x, [0.1, 0.1, 0.1]);
                }
            }
        }
        img
    }

    #[test]
    fn identity_chin_warp_leaves_the_frame_unchanged() {
        let img = ruled_grid(64, 64);
        let poly: Vec<(f64, f64)> = (0..8).map(|i| (i as f64 * 8.0 + 2.0, 30.0)).collect();
        let (out, fallback) = chin_warp(&img, &poly, &poly, 20.0);
        assert!(!fallback);
        assert_eq!(out, img);
    }

    #[test]
    fn lowered_chin_displaces_band_monotonically() {
        let img = ruled_grid(96, 96);
        let old: Vec<(f64, f64)> = (0..13).map(|i| (i as f64 * 7.5 + 2.0, 40.0)).collect();
        let new: Vec<(f64, f64)> = old.iter().map(|&(x, y)| (x, y + 10.0)).collect();
        let (out, fallback) = chin_warp(&img, &old, &new, 40.0);
        assert!(!fallback);
        // Above the old chin: bitwise unchanged.
        for y in 0..40 {
            for x in 0..96 {
                assert_eq!(out.get(y, x), img.get(y, x), "changed above chin at ({}, {})", x, y);
            }
        }
        // The dark rule originally at y = 48 inside the band should now sit
        // lower near the chin. At the band bottom (y = 80) content is
        // pinned. Verify: the row sampled at the new chin came from the old
        // chin (displaced by 10), i.e. out(50, x) == img(~41, x).
        let x = 40usize;
        let near_chin_out = out.get(52, x);
        let expect_src = img.sample_bilinear(x as f32, 52.0 - 10.0 * (80.0 - 52.0) / (80.0 - 50.0));
        for c in 0..3 {
            assert!((near_chin_out[c] - expect_src[c]).abs() < 0.35);
        }
        // Pinned bottom edge: rows at/under the band bottom are unchanged.
        for y in 81..96 {
            for xx in 0..96 {
                assert_eq!(out.get(y, xx), img.get(y, xx));
            }
        }
    }

    #[test]
    fn self_intersecting_band_falls_back_to_identity() {
        let img = ruled_grid(64, 64);
        let old: Vec<(f64, f64)> = (0..6).map(|i| (i as f64 * 12.0, 30.0)).collect();
        // Reverse the x-order: destination triangles flip orientation.
        let new: Vec<(f64, f64)> = old.iter().rev().map(|&(x, y)| (x, y + 4.0)).collect();
        let (out, fallback) = chin_warp(&img, &old, &new, 20.0);
        assert!(fallback);
        assert_eq!(out, img);
    }

    #[test]
    fn feather_mask_ramps_from_boundary() {
        let mut mask = Mask::new(32, 32);
        for y in 4..28 {
            for x in 4..28 {
                mask.set(y, x, true);
            }
        }
        let feather = feather_mask(&mask, 4);
        assert_eq!(feather.get(0, 0), 0.0);
        assert!(feather.get(16, 16) >= 1.0 - 1e-6);
        assert!(feather.get(4, 16) > 0.0 && feather.get(4, 16) < 0.5);
    }
}
