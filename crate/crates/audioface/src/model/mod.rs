//! Joint audio → (geometry, texture, blendshapes) prediction model.
//!
//! A shared 12-layer convolutional encoder maps each 256×24×2 complex
//! spectrogram to a 32-dimensional latent. Dedicated decoders predict
//! vertex deformations (added to the reference vertices), a lip-crop
//! texture update (added to the reference crop), and optional blendshape
//! coefficients. Texture prediction is auto-regressive: the previous
//! frame's crop is encoded to a 2-dimensional latent and concatenated with
//! the audio latent. Everything is trained jointly end to end with
//! hand-rolled forward/backward passes and an Adam optimizer; the scalar
//! type is generic so training runs in `f32` while gradient checks run in
//! `f64`.

mod adam;
mod arch;
mod checkpoint;
mod infer;
mod layers;
mod loss;
mod net;
mod pca;
mod train;

pub use adam::Adam;
pub use arch::{Act, ConvSpec, DenseSpec, ModelArch, ModelOptions};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use infer::{infer_sequence, inter_frame_jitter, FramePrediction, Reference};
pub use layers::Scalar;
pub use loss::{combined_loss, LossParts, LossWeights};
pub use net::{ForwardOutput, ModelGrads, ModelParams};
pub use pca::{pca_init, reconstruct as pca_reconstruct, PcaInit};
pub use train::{train, Dataset, TrainOptions, TrainReport, TrainSample};

use crate::error::PipelineError;
use crate::Result;
use nalgebra::{DMatrix, DVector, Point3, Vector3};

/// Fixed displacement basis a face rig is driven with.
#[derive(Debug, Clone)]
pub struct BlendshapeBasis {
    pub neutral: Vec<Point3<f64>>,
    /// `K` displacement shapes, each one 3-vector per vertex.
    pub shapes: Vec<Vec<Vector3<f64>>>,
}

impl BlendshapeBasis {
    pub fn new(neutral: Vec<Point3<f64>>, shapes: Vec<Vec<Vector3<f64>>>) -> Result<Self> {
        if shapes.is_empty() {
            return Err(PipelineError::InvalidInput("blendshape basis needs K >= 1".into()));
        }
        for s in &shapes {
            if s.len() != neutral.len() {
                return Err(PipelineError::ShapeMismatch(
                    "blendshape shape length differs from neutral".into(),
                ));
            }
        }
        Ok(BlendshapeBasis { neutral, shapes })
    }

    pub fn k(&self) -> usize {
        self.shapes.len()
    }

    /// `neutral + Σ c_i · shape_i`.
    pub fn pose(&self, coeffs: &[f64]) -> Vec<Point3<f64>> {
        self.neutral
            .iter()
            .enumerate()
            .map(|(v, p)| {
                let mut acc = p.coords;
                for (c, shape) in coeffs.iter().zip(&self.shapes) {
                    acc += *c * shape[v];
                }
                Point3::from(acc)
            })
            .collect()
    }
}

/// Least-squares blendshape coefficients for a vertex set, constrained to
/// `[0, 1]` by projected re-solves on the free set.
pub fn fit_blendshape_coeffs(vertices: &[Point3<f64>], basis: &BlendshapeBasis) -> Result<Vec<f64>> {
    if vertices.len() != basis.neutral.len() {
        return Err(PipelineError::ShapeMismatch(format!(
            "{} vertices for a basis over {}",
            vertices.len(),
            basis.neutral.len()
        )));
    }
    let n3 = vertices.len() * 3;
    let k = basis.k();
    let mut b = DMatrix::<f64>::zeros(n3, k);
    for (j, shape) in basis.shapes.iter().enumerate() {
        for (v, d) in shape.iter().enumerate() {
            b[(v * 3, j)] = d.x;
            b[(v * 3 + 1, j)] = d.y;
            b[(v * 3 + 2, j)] = d.z;
        }
    }
    let mut d = DVector::<f64>::zeros(n3);
    for (v, (p, q)) in vertices.iter().zip(&basis.neutral).enumerate() {
        let delta = p - q;
        d[v * 3] = delta.x;
        d[v * 3 + 1] = delta.y;
        d[v * 3 + 2] = delta.z;
    }

    // Minimum-norm least squares via SVD (handles rank-deficient bases).
    let solve = |cols: &[usize], rhs: &DVector<f64>| -> Vec<f64> {
        let sub = DMatrix::from_fn(n3, cols.len(), |r, c| b[(r, cols[c])]);
        let svd = sub.svd(true, true);
        let sol = svd.solve(rhs, 1e-12).expect("svd solve");
        sol.iter().copied().collect()
    };

    let all: Vec<usize> = (0..k).collect();
    let mut coeffs: Vec<f64> = solve(&all, &d).iter().map(|v: &f64| v.clamp(0.0, 1.0)).collect();

    for _ in 0..5 {
        let free: Vec<usize> = (0..k).filter(|&i| coeffs[i] > 0.0 && coeffs[i] < 1.0).collect();
        if free.is_empty() || free.len() == k {
            if free.len() == k {
                // Nothing pinned; the unconstrained solution was feasible.
                break;
            }
            // All pinned: check whether releasing improves; one re-solve.
            let trial: Vec<f64> = solve(&all, &d).iter().map(|v: &f64| v.clamp(0.0, 1.0)).collect();
            if trial == coeffs {
                break;
            }
            coeffs = trial;
            continue;
        }
        let mut rhs = d.clone();
        for i in 0..k {
            if !free.contains(&i) && coeffs[i] != 0.0 {
                for r in 0..n3 {
                    rhs[r] -= coeffs[i] * b[(r, i)];
                }
            }
        }
        let sol = solve(&free, &rhs);
        let mut next = coeffs.clone();
        for (slot, &i) in free.iter().enumerate() {
            next[i] = sol[slot].clamp(0.0, 1.0);
        }
        if next == coeffs {
            break;
        }
        coeffs = next;
    }
    Ok(coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn orthogonal_basis(nv: usize, k: usize) -> BlendshapeBasis {
        // Disjoint-support shapes are orthogonal by construction.
        let neutral = (0..nv).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let span = nv / k;
        let shapes = (0..k)
            .map(|j| {
                (0..nv)
                    .map(|v| {
                        if v / span == j {
                            Vector3::new(0.0, 1.0, 0.5)
                        } else {
                            Vector3::zeros()
                        }
                    })
                    .collect()
            })
            .collect();
        BlendshapeBasis::new(neutral, shapes).unwrap()
    }

    #[test]
    fn neutral_fits_to_zero() {
        let basis = orthogonal_basis(40, 4);
        let coeffs = fit_blendshape_coeffs(&basis.neutral, &basis).unwrap();
        assert!(coeffs.iter().all(|&c| c.abs() < 1e-12));
    }

    #[test]
    fn orthogonal_projection_recovers_single_shape() {
        let basis = orthogonal_basis(40, 5);
        let posed = basis.pose(&[0.0, 0.0, 0.0, 0.7, 0.0]);
        let coeffs = fit_blendshape_coeffs(&posed, &basis).unwrap();
        for (i, &c) in coeffs.iter().enumerate() {
            let expect = if i == 3 { 0.7 } else { 0.0 };
            assert!((c - expect).abs() < 1e-9, "coeff {} = {}", i, c);
        }
    }

    #[test]
    fn fit_beats_random_coefficient_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let nv = 60;
        let neutral: Vec<Point3<f64>> =
            (0..nv).map(|i| Point3::new(i as f64, (i * i % 7) as f64, 0.0)).collect();
        let shapes: Vec<Vec<Vector3<f64>>> = (0..4)
            .map(|_| {
                (0..nv)
                    .map(|_| {
                        Vector3::new(
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect()
            })
            .collect();
        let basis = BlendshapeBasis::new(neutral, shapes).unwrap();
        let truth = [0.3, 0.9, 0.1, 0.6];
        let mut posed = basis.pose(&truth);
        // Perturb so the optimum is interior but not exact.
        for p in &mut posed {
            p.y += 0.05 * rng.gen_range(-1.0..1.0);
        }
        let coeffs = fit_blendshape_coeffs(&posed, &basis).unwrap();
        let residual = |c: &[f64]| -> f64 {
            basis
                .pose(c)
                .iter()
                .zip(&posed)
                .map(|(a, b)| (a - b).norm_squared())
                .sum()
        };
        let best = residual(&coeffs);
        for _ in 0..100 {
            let cand: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..1.0)).collect();
            assert!(residual(&cand) >= best - 1e-9);
        }
    }

    #[test]
    fn coefficients_stay_in_unit_interval() {
        let basis = orthogonal_basis(40, 4);
        // Pose far outside the admissible range.
        let mut posed = basis.pose(&[1.0, 0.0, 0.0, 0.0]);
        for (v, p) in posed.iter_mut().enumerate() {
            if v / 10 == 0 {
                p.y *= 3.0;
            }
        }
        let coeffs = fit_blendshape_coeffs(&posed, &basis).unwrap();
        assert!(coeffs.iter().all(|&c| (0.0..=1.0).contains(&c)));
        assert!((coeffs[0] - 1.0).abs() < 1e-12);
    }
}
