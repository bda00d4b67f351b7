//! Least-squares similarity alignment between 3D point clouds.

use crate::error::PipelineError;
use crate::Result;
use nalgebra::{Matrix3, Point3, Vector3};

/// Similarity transform `p ↦ c·R·p + t` with `det(R) = +1` and `c > 0`.
#[derive(Debug, Clone)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn apply_all(&self, points: &[Point3<f64>]) -> Vec<Point3<f64>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    /// The transform mapping outputs back to inputs.
    pub fn inverse(&self) -> SimilarityTransform {
        let rot_t = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rot_t,
            translation: -(rot_t * self.translation) / self.scale,
        }
    }

    /// Checks orthonormality, positive determinant and positive scale.
    pub fn validate(&self) -> Result<()> {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if err >= 1e-9 {
            return Err(PipelineError::InvalidInput(format!(
                "rotation is not orthonormal (|RᵀR - I| = {:.2e})",
                err
            )));
        }
        if self.rotation.determinant() <= 0.0 {
            return Err(PipelineError::InvalidInput("rotation has negative determinant".into()));
        }
        if !(self.scale > 0.0) {
            return Err(PipelineError::InvalidInput("non-positive scale".into()));
        }
        Ok(())
    }

    /// Mean squared alignment residual `Σ‖dst - T(src)‖² / n`.
    pub fn mean_squared_residual(&self, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
        let n = src.len().max(1) as f64;
        src.iter()
            .zip(dst)
            .map(|(s, d)| (d - self.apply(s)).norm_squared())
            .sum::<f64>()
            / n
    }
}

/// Finds the similarity transform minimizing `Σ‖dst_i - (c·R·src_i + t)‖²`.
///
/// The rotation is kept proper (`det R = +1`) by flipping the sign of the
/// smallest singular value when the covariance has a reflective optimum.
/// Degenerate clouds (fewer than 3 points, collinear, or collapsed to a
/// point) are rejected.
pub fn umeyama_align(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(PipelineError::AlignmentDegenerate(format!(
            "point counts differ ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(PipelineError::AlignmentDegenerate(format!(
            "need at least 3 points, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mean_src = centroid(src);
    let mean_dst = centroid(dst);

    let mut src_var = 0.0;
    let mut cov = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        let sc = s - mean_src;
        let dc = d - mean_dst;
        src_var += sc.norm_squared();
        cov += dc * sc.transpose();
    }
    src_var /= n;
    cov /= n;

    if src_var < 1e-18 {
        return Err(PipelineError::AlignmentDegenerate("source cloud collapsed to a point".into()));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or_else(|| PipelineError::AlignmentDegenerate("svd failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| PipelineError::AlignmentDegenerate("svd failed".into()))?;
    let d = svd.singular_values;

    // Collinear clouds leave the rotation about the line unconstrained.
    if d[1] <= 1e-12 * d[0].max(1e-300) {
        return Err(PipelineError::AlignmentDegenerate("source points are collinear".into()));
    }

    let reflective = u.determinant() * v_t.determinant() < 0.0;
    let sign = if reflective { -1.0 } else { 1.0 };
    let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * s * v_t;
    let scale = (d[0] + d[1] + sign * d[2]) / src_var;
    if !(scale > 0.0) {
        return Err(PipelineError::AlignmentDegenerate("non-positive optimal scale".into()));
    }
    let translation = mean_dst.coords - scale * (rotation * mean_src.coords);

    Ok(SimilarityTransform { scale, rotation, translation })
}

fn centroid(points: &[Point3<f64>]) -> Point3<f64> {
    let mut acc = Vector3::zeros();
    for p in points {
        acc += p.coords;
    }
    Point3::from(acc / points.len() as f64)
}
