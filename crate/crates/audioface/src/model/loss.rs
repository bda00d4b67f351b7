//! Combined training loss and its output gradients.
//!
//! `R = R_tex + α₁·R_geo + α₂·R_bs` with `R_tex = 1 - SSIM(Â, A)`,
//! `R_geo` the mean per-vertex Euclidean distance and `R_bs` the mean
//! absolute blendshape error.

use super::layers::Scalar;
use super::net::{ForwardOutput, OutputGrads};
use ndarray::{Array2, Array3, Array4};

#[derive(Debug, Clone, Copy)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha1: 3.0, alpha2: 0.3 }
    }
}

/// Loss components summed over the batch (not averaged).
#[derive(Debug, Clone, Copy, Default)]
pub struct LossParts {
    pub tex: f64,
    pub geo: f64,
    pub bs: f64,
    pub total: f64,
    pub samples: usize,
}

impl LossParts {
    pub fn merge(&mut self, other: &LossParts) {
        self.tex += other.tex;
        self.geo += other.geo;
        self.bs += other.bs;
        self.total += other.total;
        self.samples += other.samples;
    }

    pub fn mean_total(&self) -> f64 {
        self.total / self.samples.max(1) as f64
    }
}

/// Computes the combined loss (summed over samples) and the gradients with
/// respect to the model outputs. The caller is responsible for the final
/// 1/batch scaling.
pub fn combined_loss<S: Scalar>(
    out: &ForwardOutput<S>,
    truth_vertices: &Array2<S>,
    truth_crops: &Array4<S>,
    truth_bs: Option<&Array2<S>>,
    weights: &LossWeights,
) -> (LossParts, OutputGrads<S>) {
    let n = out.vertices.dim().0;
    let nv = out.vertices.dim().1 / 3;
    let (crop_h, crop_w) = (out.crops.dim().1, out.crops.dim().2);

    let mut parts = LossParts { samples: n, ..Default::default() };
    let mut d_vertices = Array2::<S>::zeros(out.vertices.raw_dim());
    let mut d_crops = Array4::<S>::zeros(out.crops.raw_dim());
    let mut d_bs = truth_bs.map(|t| Array2::<S>::zeros(t.raw_dim()));

    // Texture: 1 - SSIM per sample, averaged nowhere (summed).
    for s in 0..n {
        let pred = Array3::from_shape_fn((crop_h, crop_w, 3), |(y, x, c)| {
            out.crops[[s, y, x, c]].to64()
        });
        let truth = Array3::from_shape_fn((crop_h, crop_w, 3), |(y, x, c)| {
            truth_crops[[s, y, x, c]].to64()
        });
        let (ssim, grad) = crate::ssim::ssim_with_grad(&pred.view(), &truth.view());
        parts.tex += 1.0 - ssim;
        for y in 0..crop_h {
            for x in 0..crop_w {
                for c in 0..3 {
                    d_crops[[s, y, x, c]] = S::from64(-grad[[y, x, c]]);
                }
            }
        }
    }

    // Geometry: mean per-vertex Euclidean distance.
    let a1 = S::from64(weights.alpha1);
    for s in 0..n {
        let mut acc = 0.0f64;
        for v in 0..nv {
            let mut d = [S::zero(); 3];
            let mut norm2 = S::zero();
            for c in 0..3 {
                d[c] = out.vertices[[s, v * 3 + c]] - truth_vertices[[s, v * 3 + c]];
                norm2 += d[c] * d[c];
            }
            let norm = norm2.sqrt();
            acc += norm.to64();
            if norm.to64() > 1e-12 {
                let scale = a1 / (norm * S::from64(nv as f64));
                for c in 0..3 {
                    d_vertices[[s, v * 3 + c]] = d[c] * scale;
                }
            }
        }
        parts.geo += acc / nv as f64;
    }

    // Blendshapes: mean absolute error.
    if let (Some(truth), Some(pred), Some(d)) = (truth_bs, &out.blendshapes, d_bs.as_mut()) {
        let k = truth.dim().1;
        let a2 = S::from64(weights.alpha2 / k as f64);
        for s in 0..n {
            let mut acc = 0.0f64;
            for j in 0..k {
                let diff = pred[[s, j]] - truth[[s, j]];
                acc += diff.to64().abs();
                d[[s, j]] = if diff > S::zero() {
                    a2
                } else if diff < S::zero() {
                    -a2
                } else {
                    S::zero()
                };
            }
            parts.bs += acc / k as f64;
        }
    }

    parts.total = parts.tex + weights.alpha1 * parts.geo + weights.alpha2 * parts.bs;
    (parts, OutputGrads { d_vertices, d_crops, d_blendshapes: d_bs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_sum_arithmetic() {
        // R = R_tex + 3.0·R_geo + 0.3·R_bs on hand-picked components.
        let w = LossWeights::default();
        let parts = LossParts { tex: 0.5, geo: 0.1, bs: 0.2, total: 0.0, samples: 1 };
        let total = parts.tex + w.alpha1 * parts.geo + w.alpha2 * parts.bs;
        assert!((total - 0.86).abs() < 1e-12);
        // Disabling the blendshape head drops exactly alpha2 * R_bs.
        let without = parts.tex + w.alpha1 * parts.geo;
        assert!((total - without - 0.06).abs() < 1e-12);
    }
}
