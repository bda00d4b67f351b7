//! Reference cylinder fit and cylindrical texture coordinates.
//!
//! The atlas parameterization wraps a vertical cylinder around the reference
//! head: most face vertices sit at roughly constant distance from the axis,
//! so (azimuth, height) makes a low-distortion 2D chart. The chart is pinned
//! so the eye anchors and nose tip land on fixed atlas pixels; everything
//! else follows from those anchors.

use crate::error::PipelineError;
use crate::landmarks::LandmarkFrame;
use crate::topology::FaceTopology;
use crate::Result;
use nalgebra::{Point3, Vector3};

/// Fixed atlas anchor pixels for a 256×256 atlas; scaled proportionally for
/// other atlas sizes.
pub const LEFT_EYE_ANCHOR: (f64, f64) = (88.0, 96.0);
pub const RIGHT_EYE_ANCHOR: (f64, f64) = (168.0, 96.0);
pub const NOSE_TIP_ANCHOR: (f64, f64) = (128.0, 140.0);
pub const ANCHOR_ATLAS_SIZE: f64 = 256.0;

/// Vertical reference cylinder plus the affine (azimuth, height) → pixel map.
#[derive(Debug, Clone)]
pub struct CylinderRef {
    /// A point on the axis.
    pub axis_point: Vector3<f64>,
    /// Unit axis direction; the fit fixes this to the frame's up axis.
    pub axis_direction: Vector3<f64>,
    pub radius: f64,
    pub u_scale: f64,
    pub u_offset: f64,
    pub v_scale: f64,
    pub v_offset: f64,
}

impl CylinderRef {
    /// Azimuth/height of a point about the axis. Azimuth is zero facing the
    /// camera (negative z side of the axis) and grows with +x.
    fn azimuth_height(&self, p: &Point3<f64>) -> Result<(f64, f64)> {
        let rel = p.coords - self.axis_point;
        let height = rel.dot(&self.axis_direction);
        let radial = rel - height * self.axis_direction;
        // With a vertical axis the radial part lives in the x/z plane.
        let (dx, dz) = (radial.x, radial.z);
        if dx * dx + dz * dz < 1e-18 {
            return Err(PipelineError::UndefinedAzimuth { index: 0 });
        }
        Ok((dx.atan2(-dz), height))
    }

    pub fn uv(&self, p: &Point3<f64>) -> Result<(f64, f64)> {
        let (theta, height) = self.azimuth_height(p)?;
        Ok((self.u_scale * theta + self.u_offset, self.v_scale * height + self.v_offset))
    }
}

/// Maps vertices to atlas coordinates through the reference cylinder.
pub fn cylinder_uv(vertices: &[Point3<f64>], cyl: &CylinderRef) -> Result<Vec<(f64, f64)>> {
    vertices
        .iter()
        .enumerate()
        .map(|(index, p)| {
            cyl.uv(p).map_err(|e| match e {
                PipelineError::UndefinedAzimuth { .. } => PipelineError::UndefinedAzimuth { index },
                other => other,
            })
        })
        .collect()
}

/// Fits the vertical reference cylinder to a (reference) landmark frame and
/// pins the uv chart to the eye/nose anchor pixels.
///
/// The axis direction is fixed to the frame's up axis (+y in image
/// coordinates); the axis position and radius minimize the squared
/// distance-to-axis residual over the skin vertices.
pub fn fit_reference_cylinder(
    ref_frame: &LandmarkFrame,
    topo: &FaceTopology,
    atlas_size: usize,
) -> Result<CylinderRef> {
    let pts: Vec<&Point3<f64>> = ref_frame
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, _)| topo.skin_vertex_mask.get(*i).copied().unwrap_or(true))
        .map(|(_, p)| p)
        .collect();
    let pts: Vec<&Point3<f64>> =
        if pts.is_empty() { ref_frame.vertices.iter().collect() } else { pts };

    let (cx, cz, radius) = fit_circle_xz(&pts)?;

    let mean_y = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
    let mut cyl = CylinderRef {
        axis_point: Vector3::new(cx, mean_y, cz),
        axis_direction: Vector3::new(0.0, 1.0, 0.0),
        radius,
        u_scale: 1.0,
        u_offset: 0.0,
        v_scale: 1.0,
        v_offset: 0.0,
    };

    // Pin the chart: eyes and nose tip go to their designated pixels. Both
    // axes are solved as tiny least-squares problems over the three anchors,
    // which is exact whenever the reference face is left/right symmetric.
    let left = mean_point(&ref_frame.vertices, &topo.left_eye_indices)?;
    let right = mean_point(&ref_frame.vertices, &topo.right_eye_indices)?;
    let nose = ref_frame.vertices[topo.nose_tip_index];

    let s = atlas_size as f64 / ANCHOR_ATLAS_SIZE;
    let (th_l, h_l) = cyl.azimuth_height(&left)?;
    let (th_r, h_r) = cyl.azimuth_height(&right)?;
    let (th_n, h_n) = cyl.azimuth_height(&nose)?;

    let (u_scale, u_offset) = solve_affine_1d(
        &[th_l, th_r, th_n],
        &[LEFT_EYE_ANCHOR.0 * s, RIGHT_EYE_ANCHOR.0 * s, NOSE_TIP_ANCHOR.0 * s],
    )
    .ok_or_else(|| PipelineError::DegenerateCylinder("anchor azimuths are coincident".into()))?;
    let (v_scale, v_offset) = solve_affine_1d(
        &[h_l, h_r, h_n],
        &[LEFT_EYE_ANCHOR.1 * s, RIGHT_EYE_ANCHOR.1 * s, NOSE_TIP_ANCHOR.1 * s],
    )
    .ok_or_else(|| PipelineError::DegenerateCylinder("anchor heights are coincident".into()))?;

    cyl.u_scale = u_scale;
    cyl.u_offset = u_offset;
    cyl.v_scale = v_scale;
    cyl.v_offset = v_offset;
    Ok(cyl)
}

/// Geometric circle fit in the x/z plane: algebraic (Kåsa) initialization
/// followed by Gauss-Newton on `Σ (‖p - c‖ - r)²`.
fn fit_circle_xz(pts: &[&Point3<f64>]) -> Result<(f64, f64, f64)> {
    let n = pts.len() as f64;
    let (mut sx, mut sz) = (0.0, 0.0);
    for p in pts {
        sx += p.x;
        sz += p.z;
    }
    let (mx, mz) = (sx / n, sz / n);

    // Kåsa: minimize Σ (u² + w² + d·u + e·w + f)² over centered coords.
    let (mut suu, mut suw, mut sww, mut su_q, mut sw_q, mut sq) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let u = p.x - mx;
        let w = p.z - mz;
        let q = u * u + w * w;
        suu += u * u;
        suw += u * w;
        sww += w * w;
        su_q += u * q;
        sw_q += w * q;
        sq += q;
    }
    if sq / n < 1e-18 {
        return Err(PipelineError::DegenerateCylinder("all vertices lie on the axis".into()));
    }
    let det = suu * sww - suw * suw;
    if det.abs() < 1e-12 * (suu + sww).powi(2).max(1e-300) {
        return Err(PipelineError::DegenerateCylinder("vertices are collinear in the x/z plane".into()));
    }
    let ucx = 0.5 * (su_q * sww - sw_q * suw) / det;
    let ucz = 0.5 * (sw_q * suu - su_q * suw) / det;
    let mut cx = mx + ucx;
    let mut cz = mz + ucz;
    let mut r = pts
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.z - cz).powi(2)).sqrt())
        .sum::<f64>()
        / n;

    // Gauss-Newton refinement of the geometric residual.
    for _ in 0..30 {
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for p in pts {
            let dx = p.x - cx;
            let dz = p.z - cz;
            let dist = (dx * dx + dz * dz).sqrt().max(1e-12);
            let res = dist - r;
            let j = [-dx / dist, -dz / dist, -1.0];
            for a in 0..3 {
                for b in 0..3 {
                    jtj[a][b] += j[a] * j[b];
                }
                jtr[a] += j[a] * res;
            }
        }
        let Some(step) = solve3(&jtj, &jtr) else { break };
        cx -= step[0];
        cz -= step[1];
        r -= step[2];
        if step.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12 {
            break;
        }
    }
    if !(r > 1e-9) {
        return Err(PipelineError::DegenerateCylinder("fitted radius is not positive".into()));
    }
    Ok((cx, cz, r))
}

/// Least-squares `y = a·x + b` through the given samples.
fn solve_affine_1d(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx < 1e-15 {
        return None;
    }
    let a = sxy / sxx;
    Some((a, my - a * mx))
}

fn solve3(a: &[[f64; 3]; 3], b: &[f64; 3]) -> Option<[f64; 3]> {
    let m = nalgebra::Matrix3::from_fn(|r, c| a[r][c]);
    let rhs = nalgebra::Vector3::new(b[0], b[1], b[2]);
    m.lu().solve(&rhs).map(|v| [v[0], v[1], v[2]])
}

fn mean_point(vertices: &[Point3<f64>], indices: &[usize]) -> Result<Point3<f64>> {
    if indices.is_empty() {
        return Err(PipelineError::InvalidInput("empty anchor index set".into()));
    }
    let mut acc = Vector3::zeros();
    for &i in indices {
        acc += vertices[i].coords;
    }
    Ok(Point3::from(acc / indices.len() as f64))
}
