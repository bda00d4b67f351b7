//! Evaluation metrics: SSIM and mouth landmark distance (LMD).

use crate::error::PipelineError;
use crate::image::Image;
use crate::topology::FaceTopology;
use crate::Result;
use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Mean Euclidean distance over the mouth vertices, image-plane (x, y)
/// components only, in pixels.
pub fn lmd(pred: &[Point3<f64>], gt: &[Point3<f64>], topo: &FaceTopology) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(PipelineError::ShapeMismatch(format!(
            "{} predicted vertices vs {} ground truth",
            pred.len(),
            gt.len()
        )));
    }
    if topo.mouth_indices.is_empty() {
        return Err(PipelineError::InvalidInput("empty mouth index set".into()));
    }
    let sum: f64 = topo
        .mouth_indices
        .iter()
        .map(|&i| {
            let dx = pred[i].x - gt[i].x;
            let dy = pred[i].y - gt[i].y;
            (dx * dx + dy * dy).sqrt()
        })
        .sum();
    Ok(sum / topo.mouth_indices.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame: usize,
    pub ssim: f64,
    pub lmd: Option<f64>,
}

/// Evaluation report; serialized as versioned JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub frames: Vec<FrameEval>,
    pub ssim_mean: f64,
    pub ssim_std: f64,
    pub lmd_mean: Option<f64>,
    pub lmd_std: Option<f64>,
    /// Metric conventions, recorded so numbers are comparable.
    pub metadata: EvalMetadata,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub lmd_units: String,
    pub lmd_normalization: String,
    pub ssim_region: String,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Builds a report from per-frame image pairs and optional vertex pairs.
pub fn evaluate_frames(
    pairs: &[(Image, Image)],
    vertex_pairs: Option<&[(Vec<Point3<f64>>, Vec<Point3<f64>>)]>,
    topo: &FaceTopology,
) -> Result<EvalReport> {
    if let Some(vp) = vertex_pairs {
        if vp.len() != pairs.len() {
            return Err(PipelineError::ShapeMismatch(format!(
                "{} image pairs vs {} vertex pairs",
                pairs.len(),
                vp.len()
            )));
        }
    }
    let mut frames = Vec::with_capacity(pairs.len());
    let mut ssims = Vec::with_capacity(pairs.len());
    let mut lmds = Vec::new();
    for (i, (pred, gt)) in pairs.iter().enumerate() {
        let s = crate::ssim::ssim(pred, gt);
        let l = match vertex_pairs {
            Some(vp) => Some(lmd(&vp[i].0, &vp[i].1, topo)?),
            None => None,
        };
        ssims.push(s);
        if let Some(v) = l {
            lmds.push(v);
        }
        frames.push(FrameEval { frame: i, ssim: s, lmd: l });
    }
    let (ssim_mean, ssim_std) = mean_std(&ssims);
    let (lmd_mean, lmd_std) = if lmds.len() == pairs.len() && !lmds.is_empty() {
        let (m, s) = mean_std(&lmds);
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Ok(EvalReport {
        version: 1,
        frames,
        ssim_mean,
        ssim_std,
        lmd_mean,
        lmd_std,
        metadata: EvalMetadata {
            lmd_units: "pixels".into(),
            lmd_normalization: "none (raw pixel units, no inter-ocular scaling)".into(),
            ssim_region: "full image".into(),
        },
    })
}

fn list_images(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut out: Vec<std::path::PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("png") | Some("ppm")
            )
        })
        .collect();
    out.sort();
    Ok(out)
}

fn find_landmark_stream(dir: &Path) -> Option<std::path::PathBuf> {
    for name in ["vertices.lmk", "landmarks.lmk"] {
        let p = dir.join(name);
        if p.exists() {
            return Some(p);
        }
    }
    None
}

/// Compares two directories of numbered images (plus landmark streams when
/// both sides have one) and aggregates per-frame SSIM / LMD.
pub fn evaluate_sequence(pred_dir: &Path, gt_dir: &Path, topo: &FaceTopology) -> Result<EvalReport> {
    let pred_images = list_images(pred_dir)?;
    let gt_images = list_images(gt_dir)?;
    if pred_images.len() != gt_images.len() {
        return Err(PipelineError::InvalidInput(format!(
            "frame count mismatch: {} predicted vs {} ground truth",
            pred_images.len(),
            gt_images.len()
        )));
    }
    if pred_images.is_empty() {
        return Err(PipelineError::InvalidInput("no frames to evaluate".into()));
    }
    let pairs: Vec<(Image, Image)> = pred_images
        .iter()
        .zip(&gt_images)
        .map(|(p, g)| Ok((Image::load(p)?, Image::load(g)?)))
        .collect::<Result<_>>()?;

    let vertex_pairs = match (find_landmark_stream(pred_dir), find_landmark_stream(gt_dir)) {
        (Some(p), Some(g)) => {
            let pred = crate::landmarks::load_stream(&p)?;
            let gt = crate::landmarks::load_stream(&g)?;
            if pred.len() != pairs.len() || gt.len() != pairs.len() {
                return Err(PipelineError::InvalidInput(
                    "landmark stream length differs from frame count".into(),
                ));
            }
            Some(
                pred.into_iter()
                    .zip(gt)
                    .map(|(a, b)| (a.vertices, b.vertices))
                    .collect::<Vec<_>>(),
            )
        }
        _ => None,
    };
    evaluate_frames(&pairs, vertex_pairs.as_deref(), topo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::FaceTopology;

    fn face() -> Vec<Point3<f64>> {
        crate::synthkit::base_face_frame(160.0, 160.0, 90.0, 0.0).vertices
    }

    #[test]
    fn identical_vertices_give_zero() {
        let topo = FaceTopology::default_grid();
        let v = face();
        assert_eq!(lmd(&v, &v, &topo).unwrap(), 0.0);
    }

    #[test]
    fn uniform_mouth_shift_is_exact() {
        let topo = FaceTopology::default_grid();
        let v = face();
        let mut moved = v.clone();
        for &i in &topo.mouth_indices {
            moved[i].x += 3.0;
            moved[i].y += 4.0;
        }
        let d = lmd(&moved, &v, &topo).unwrap();
        assert!((d - 5.0).abs() < 1e-12, "lmd = {}", d);
    }

    #[test]
    fn non_mouth_vertices_do_not_matter() {
        let topo = FaceTopology::default_grid();
        let v = face();
        let mut moved = v.clone();
        moved[0].x += 100.0; // forehead vertex
        assert_eq!(lmd(&moved, &v, &topo).unwrap(), 0.0);
    }

    #[test]
    fn z_displacement_is_ignored() {
        let topo = FaceTopology::default_grid();
        let v = face();
        let mut moved = v.clone();
        for &i in &topo.mouth_indices {
            moved[i].z += 50.0;
        }
        assert_eq!(lmd(&moved, &v, &topo).unwrap(), 0.0);
    }

    #[test]
    fn directory_evaluation_on_identical_dirs() {
        let topo = FaceTopology::default_grid();
        let dir = tempfile::tempdir().unwrap();
        let pred = dir.path().join("pred");
        let gt = dir.path().join("gt");
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::create_dir_all(&gt).unwrap();
        for i in 0..3 {
            let mut img = Image::new(32, 32);
            for y in 0..32 {
                for x in 0..32 {
                    let v = ((x + y + i) % 17) as f32 / 17.0;
                    img.set(y, x, [v, v * 0.5, 1.0 - v]);
                }
            }
            img.save_png(&pred.join(format!("f_{:06}.png", i))).unwrap();
            img.save_png(&gt.join(format!("f_{:06}.png", i))).unwrap();
        }
        let report = evaluate_sequence(&pred, &gt, &topo).unwrap();
        assert_eq!(report.frames.len(), 3);
        assert!((report.ssim_mean - 1.0).abs() < 1e-9);
        assert!(report.lmd_mean.is_none());
        // Mean equals the arithmetic mean of per-frame values.
        let mean: f64 =
            report.frames.iter().map(|f| f.ssim).sum::<f64>() / report.frames.len() as f64;
        assert!((report.ssim_mean - mean).abs() < 1e-12);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let topo = FaceTopology::default_grid();
        let dir = tempfile::tempdir().unwrap();
        let pred = dir.path().join("pred");
        let gt = dir.path().join("gt");
        std::fs::create_dir_all(&pred).unwrap();
        std::fs::create_dir_all(&gt).unwrap();
        let img = Image::filled(16, 16, [0.5; 3]);
        img.save_png(&pred.join("f_000000.png")).unwrap();
        img.save_png(&gt.join("f_000000.png")).unwrap();
        img.save_png(&gt.join("f_000001.png")).unwrap();
        assert!(evaluate_sequence(&pred, &gt, &topo).is_err());
    }
}
