//! Pose normalization and texture unrolling.
//!
//! Each tracked frame is rigidly aligned to a reference frame using the
//! upper-face vertices, then its texture is unrolled onto the reference
//! cylinder to produce a frontalized atlas. All operations are pure
//! functions; per-frame work parallelizes trivially.

mod cylinder;
mod umeyama;
mod warp;

pub use cylinder::{
    cylinder_uv, fit_reference_cylinder, CylinderRef, ANCHOR_ATLAS_SIZE, LEFT_EYE_ANCHOR,
    NOSE_TIP_ANCHOR, RIGHT_EYE_ANCHOR,
};
pub use umeyama::{umeyama_align, SimilarityTransform};
pub use warp::{warp_triangles, TextureAtlas};

use crate::error::PipelineError;
use crate::image::{Image, Mask};
use crate::landmarks::LandmarkFrame;
use crate::topology::FaceTopology;
use crate::Result;
use nalgebra::Point3;

/// Rigidly aligns `frame` to `ref_frame` using the rigid (upper face)
/// subset; the estimated similarity is applied to all 468 vertices so
/// non-rigid motion (lips, jaw) survives in the normalized space.
pub fn normalize_pose(
    frame: &LandmarkFrame,
    ref_frame: &LandmarkFrame,
    topo: &FaceTopology,
) -> Result<(Vec<Point3<f64>>, SimilarityTransform)> {
    let src: Vec<Point3<f64>> = topo.rigid_indices.iter().map(|&i| frame.vertices[i]).collect();
    let dst: Vec<Point3<f64>> =
        topo.rigid_indices.iter().map(|&i| ref_frame.vertices[i]).collect();
    let transform = umeyama_align(&src, &dst)?;
    Ok((transform.apply_all(&frame.vertices), transform))
}

/// Unrolls the face texture of a video frame onto the reference cylinder.
///
/// `frame_vertices_2d` are the frame's original image-space vertex
/// positions; `normalized_vertices` are the same vertices after
/// [`normalize_pose`]. The normalized depth drives the per-pixel occlusion
/// test so folds at the silhouette resolve to the nearest surface.
pub fn unroll_texture(
    frame_image: &Image,
    normalized_vertices: &[Point3<f64>],
    cyl: &CylinderRef,
    topo: &FaceTopology,
    frame_vertices_2d: &[(f64, f64)],
    atlas_size: usize,
) -> Result<TextureAtlas> {
    if frame_vertices_2d.len() != normalized_vertices.len() {
        return Err(PipelineError::ShapeMismatch(format!(
            "{} 2D vertices for {} normalized vertices",
            frame_vertices_2d.len(),
            normalized_vertices.len()
        )));
    }
    let uv = cylinder_uv(normalized_vertices, cyl)?;
    let depths: Vec<f64> = normalized_vertices.iter().map(|p| p.z).collect();
    Ok(warp_triangles(
        frame_image,
        frame_vertices_2d,
        &uv,
        &topo.triangles,
        (atlas_size, atlas_size),
        Some(&depths),
    ))
}

/// Projects 3D vertices to their image-plane (x, y) coordinates.
pub fn project_2d(vertices: &[Point3<f64>]) -> Vec<(f64, f64)> {
    vertices.iter().map(|p| (p.x, p.y)).collect()
}

/// Rasterizes the triangles whose vertices all satisfy `keep` into an
/// atlas-space mask (used for skin and lip-region masks).
pub fn rasterize_vertex_mask(
    uv: &[(f64, f64)],
    topo: &FaceTopology,
    keep: &[bool],
    atlas_size: usize,
) -> Mask {
    let mut mask = Mask::new(atlas_size, atlas_size);
    for tri in &topo.triangles {
        if !tri.iter().all(|&v| keep[v]) {
            continue;
        }
        let pts = [uv[tri[0]], uv[tri[1]], uv[tri[2]]];
        let area = (pts[1].0 - pts[0].0) * (pts[2].1 - pts[0].1)
            - (pts[1].1 - pts[0].1) * (pts[2].0 - pts[0].0);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_x = pts
            .iter()
            .map(|p| p.0)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .min((atlas_size - 1) as f64) as usize;
        let min_y = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_y = pts
            .iter()
            .map(|p| p.1)
            .fold(f64::NEG_INFINITY, f64::max)
            .ceil()
            .min((atlas_size - 1) as f64) as usize;
        for y in min_y..=max_y.max(min_y) {
            for x in min_x..=max_x.max(min_x) {
                let p = (x as f64, y as f64);
                let w0 = ((pts[2].0 - pts[1].0) * (p.1 - pts[1].1)
                    - (pts[2].1 - pts[1].1) * (p.0 - pts[1].0))
                    / area;
                let w1 = ((pts[0].0 - pts[2].0) * (p.1 - pts[2].1)
                    - (pts[0].1 - pts[2].1) * (p.0 - pts[2].0))
                    / area;
                let w2 = 1.0 - w0 - w1;
                if w0 >= -1e-9 && w1 >= -1e-9 && w2 >= -1e-9 {
                    mask.set(y, x, true);
                }
            }
        }
    }
    mask
}

/// Atlas-space skin mask for a frame's uv parameterization.
pub fn atlas_skin_mask(uv: &[(f64, f64)], topo: &FaceTopology, atlas_size: usize) -> Mask {
    rasterize_vertex_mask(uv, topo, &topo.skin_vertex_mask, atlas_size)
}

/// Picks the reference frame: the frame whose rigid subset looks most
/// frontal, i.e. whose alignment to its own mirror image is closest to the
/// identity rotation (yaw ≈ 0).
pub fn choose_reference_frame(frames: &[LandmarkFrame], topo: &FaceTopology) -> Result<usize> {
    if frames.is_empty() {
        return Err(PipelineError::InvalidInput("no frames".into()));
    }
    let rigid_set: std::collections::HashSet<usize> = topo.rigid_indices.iter().copied().collect();
    let rigid_pairs: Vec<(usize, usize)> = topo
        .mirror_pairs
        .iter()
        .copied()
        .filter(|&(a, b)| rigid_set.contains(&a) && rigid_set.contains(&b))
        .collect();
    if rigid_pairs.len() < 3 {
        return Ok(0);
    }

    let mut best = (0usize, f64::INFINITY);
    for (idx, frame) in frames.iter().enumerate() {
        // Mirror the rigid cloud through its own centroid plane: for each
        // pair (a, b), vertex a's mirror image is vertex b with x reflected.
        let mean_x: f64 = rigid_pairs
            .iter()
            .flat_map(|&(a, b)| [frame.vertices[a].x, frame.vertices[b].x])
            .sum::<f64>()
            / (2 * rigid_pairs.len()) as f64;
        let mut src = Vec::with_capacity(rigid_pairs.len() * 2);
        let mut dst = Vec::with_capacity(rigid_pairs.len() * 2);
        for &(a, b) in &rigid_pairs {
            for (p, q) in [(a, b), (b, a)] {
                src.push(frame.vertices[p]);
                let m = frame.vertices[q];
                dst.push(Point3::new(2.0 * mean_x - m.x, m.y, m.z));
            }
        }
        let Ok(t) = umeyama_align(&src, &dst) else { continue };
        // Rotation angle of the frame-to-mirror alignment is twice the yaw.
        let trace = t.rotation.trace();
        let angle = ((trace - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
        if angle < best.1 {
            best = (idx, angle);
        }
    }
    Ok(best.0)
}
