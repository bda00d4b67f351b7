//! Structural similarity (SSIM) with analytic gradients.
//!
//! Local statistics use an 11×11 Gaussian window (σ = 1.5) over valid
//! positions only (no padding), with the standard stabilizers K1 = 0.01,
//! K2 = 0.03 on unit-range images. Channels are averaged. The gradient
//! path is exact: every Gaussian filtering step is backpropagated through
//! its adjoint, so finite differences agree to machine-level tolerance.

use crate::image::{Image, Mask};
use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Valid-mode separable Gaussian filter: `(h, w) → (h-10, w-10)`.
fn gauss_valid(x: &ArrayView2<f64>, k: &[f64; WINDOW]) -> Array2<f64> {
    let (h, w) = x.dim();
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut tmp = Array2::<f64>::zeros((h, ow));
    for y in 0..h {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * x[[y, ox + i]];
            }
            tmp[[y, ox]] = acc;
        }
    }
    let mut out = Array2::<f64>::zeros((oh, ow));
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                acc += kv * tmp[[oy + i, ox]];
            }
            out[[oy, ox]] = acc;
        }
    }
    out
}

/// Adjoint of [`gauss_valid`]: scatters `(h-10, w-10)` gradients back to
/// `(h, w)`.
fn gauss_valid_adjoint(g: &ArrayView2<f64>, h: usize, w: usize, k: &[f64; WINDOW]) -> Array2<f64> {
    let (oh, ow) = g.dim();
    let mut tmp = Array2::<f64>::zeros((h, ow));
    for oy in 0..oh {
        for ox in 0..ow {
            let gv = g[[oy, ox]];
            for (i, kv) in k.iter().enumerate() {
                tmp[[oy + i, ox]] += kv * gv;
            }
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for y in 0..h {
        for ox in 0..ow {
            let gv = tmp[[y, ox]];
            for (i, kv) in k.iter().enumerate() {
                out[[y, ox + i]] += kv * gv;
            }
        }
    }
    out
}

struct ChannelStats {
    mu_x: Array2<f64>,
    mu_y: Array2<f64>,
    gxx: Array2<f64>,
    gyy: Array2<f64>,
    gxy: Array2<f64>,
}

fn channel_stats(x: &ArrayView2<f64>, y: &ArrayView2<f64>, k: &[f64; WINDOW]) -> ChannelStats {
    ChannelStats {
        mu_x: gauss_valid(x, k),
        mu_y: gauss_valid(y, k),
        gxx: gauss_valid(&(x.to_owned() * x).view(), k),
        gyy: gauss_valid(&(y.to_owned() * y).view(), k),
        gxy: gauss_valid(&(x.to_owned() * y).view(), k),
    }
}

#[inline]
fn ssim_terms(s: &ChannelStats, p: (usize, usize)) -> (f64, f64, f64, f64) {
    let mu_x = s.mu_x[[p.0, p.1]];
    let mu_y = s.mu_y[[p.0, p.1]];
    let sx2 = s.gxx[[p.0, p.1]] - mu_x * mu_x;
    let sy2 = s.gyy[[p.0, p.1]] - mu_y * mu_y;
    let sxy = s.gxy[[p.0, p.1]] - mu_x * mu_y;
    let a1 = 2.0 * mu_x * mu_y + K1 * K1;
    let a2 = 2.0 * sxy + K2 * K2;
    let b1 = mu_x * mu_x + mu_y * mu_y + K1 * K1;
    let b2 = sx2 + sy2 + K2 * K2;
    (a1, a2, b1, b2)
}

/// Mean SSIM over all valid window positions and channels of two
/// `(h, w, c)` arrays.
pub fn ssim_arrays(x: &ArrayView3<f64>, y: &ArrayView3<f64>) -> f64 {
    assert_eq!(x.dim(), y.dim(), "shape mismatch in ssim");
    let (h, w, ch) = x.dim();
    assert!(h >= WINDOW && w >= WINDOW, "image smaller than the SSIM window");
    let k = kernel();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..ch {
        let xc = x.index_axis(ndarray::Axis(2), c);
        let yc = y.index_axis(ndarray::Axis(2), c);
        let stats = channel_stats(&xc, &yc, &k);
        let (oh, ow) = stats.mu_x.dim();
        for py in 0..oh {
            for px in 0..ow {
                let (a1, a2, b1, b2) = ssim_terms(&stats, (py, px));
                total += (a1 * a2) / (b1 * b2);
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Mean SSIM plus its gradient with respect to `x`.
pub fn ssim_with_grad(x: &ArrayView3<f64>, y: &ArrayView3<f64>) -> (f64, Array3<f64>) {
    assert_eq!(x.dim(), y.dim(), "shape mismatch in ssim");
    let (h, w, ch) = x.dim();
    assert!(h >= WINDOW && w >= WINDOW, "image smaller than the SSIM window");
    let k = kernel();
    let mut grad = Array3::<f64>::zeros((h, w, ch));
    let mut total = 0.0;
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let weight = 1.0 / (oh * ow * ch) as f64;

    for c in 0..ch {
        let xc = x.index_axis(ndarray::Axis(2), c).to_owned();
        let yc = y.index_axis(ndarray::Axis(2), c).to_owned();
        let stats = channel_stats(&xc.view(), &yc.view(), &k);

        let mut g_t1 = Array2::<f64>::zeros((oh, ow));
        let mut g_t2 = Array2::<f64>::zeros((oh, ow));
        let mut g_t3 = Array2::<f64>::zeros((oh, ow));
        for py in 0..oh {
            for px in 0..ow {
                let (a1, a2, b1, b2) = ssim_terms(&stats, (py, px));
                let n = a1 * a2;
                let d = b1 * b2;
                total += n / d;
                let mu_x = stats.mu_x[[py, px]];
                let mu_y = stats.mu_y[[py, px]];
                let inv_d2 = 1.0 / (d * d);
                // Partials with respect to (μx, σx², σxy).
                let ds_dmu = (2.0 * mu_y * a2 * d - n * 2.0 * mu_x * b2) * inv_d2;
                let ds_dsx2 = -n * b1 * inv_d2;
                let ds_dsxy = 2.0 * a1 / d;
                // Chain into the three Gaussian-filter outputs:
                // t1 = μx, t2 = G(x²) (σx² = t2 - μx²), t3 = G(xy).
                g_t1[[py, px]] =
                    weight * (ds_dmu - 2.0 * mu_x * ds_dsx2 - mu_y * ds_dsxy);
                g_t2[[py, px]] = weight * ds_dsx2;
                g_t3[[py, px]] = weight * ds_dsxy;
            }
        }
        let a1 = gauss_valid_adjoint(&g_t1.view(), h, w, &k);
        let a2 = gauss_valid_adjoint(&g_t2.view(), h, w, &k);
        let a3 = gauss_valid_adjoint(&g_t3.view(), h, w, &k);
        for yy in 0..h {
            for xx in 0..w {
                grad[[yy, xx, c]] = a1[[yy, xx]]
                    + 2.0 * xc[[yy, xx]] * a2[[yy, xx]]
                    + yc[[yy, xx]] * a3[[yy, xx]];
            }
        }
    }
    (total * weight, grad)
}

fn image_to_array(img: &Image) -> Array3<f64> {
    let (h, w) = (img.height(), img.width());
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| img.get(y, x)[c] as f64)
}

/// SSIM between two images.
pub fn ssim(a: &Image, b: &Image) -> f64 {
    ssim_arrays(&image_to_array(a).view(), &image_to_array(b).view())
}

/// SSIM restricted to windows fully inside `mask`.
///
/// Returns `None` when no window fits inside the mask.
pub fn ssim_masked(a: &Image, b: &Image, mask: &Mask) -> Option<f64> {
    assert_eq!((a.height(), a.width()), (b.height(), b.width()));
    let (h, w) = (a.height(), a.width());
    if h < WINDOW || w < WINDOW {
        return None;
    }
    let k = kernel();
    let xa = image_to_array(a);
    let xb = image_to_array(b);

    // Integral image of the mask tells us which windows are fully valid.
    let mut integral = vec![0u32; (h + 1) * (w + 1)];
    for y in 0..h {
        for x in 0..w {
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1]
                + integral[(y + 1) * (w + 1) + x]
                - integral[y * (w + 1) + x]
                + mask.get(y, x) as u32;
        }
    }
    let window_full = |y: usize, x: usize| {
        let sum = integral[(y + WINDOW) * (w + 1) + x + WINDOW] as i64
            + integral[y * (w + 1) + x] as i64
            - integral[y * (w + 1) + x + WINDOW] as i64
            - integral[(y + WINDOW) * (w + 1) + x] as i64;
        sum as usize == WINDOW * WINDOW
    };

    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..3 {
        let xc = xa.index_axis(ndarray::Axis(2), c);
        let yc = xb.index_axis(ndarray::Axis(2), c);
        let stats = channel_stats(&xc, &yc, &k);
        let (oh, ow) = stats.mu_x.dim();
        for py in 0..oh {
            for px in 0..ow {
                if !window_full(py, px) {
                    continue;
                }
                let (a1, a2, b1, b2) = ssim_terms(&stats, (py, px));
                total += (a1 * a2) / (b1 * b2);
                count += 1;
            }
        }
    }
    if count == 0 {
        None
    } else {
        Some(total / count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = 0.15 + 0.7 * (x as f32 / w as f32) * (0.4 + 0.6 * y as f32 / h as f32);
                img.set(y, x, [v, (v * 0.8 + 0.1).min(1.0), (0.9 - v * 0.5).max(0.0)]);
            }
        }
        img
    }

    #[test]
    fn identical_images_have_ssim_one() {
        let img = gradient_image(32, 32);
        assert!((ssim(&img, &img) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_decreases_with_noise_level() {
        let img = gradient_image(48, 48);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut last = 1.0;
        for &sigma in &[0.01f32, 0.05, 0.1] {
            let noisy = img.map(|v| (v + sigma * (rng.gen::<f32>() - 0.5) * 3.46).clamp(0.0, 1.0));
            let s = ssim(&img, &noisy);
            assert!(s < last, "ssim did not decrease at sigma {}", sigma);
            last = s;
        }
    }

    #[test]
    fn inverted_gradient_is_anticorrelated() {
        // Mid-contrast sawtooth gradient: enough local variance for the
        // structure term to dominate.
        let mut img = Image::new(48, 48);
        for y in 0..48 {
            for x in 0..48 {
                let v = 0.1 + 0.8 * ((x + y) % 16) as f32 / 15.0;
                img.set(y, x, [v, v, v]);
            }
        }
        let inverted = img.map(|v| 1.0 - v);
        assert!(ssim(&img, &inverted) < 0.0);
    }

    #[test]
    fn masked_ssim_matches_full_on_full_mask() {
        let a = gradient_image(32, 32);
        let b = a.map(|v| (v + 0.03).min(1.0));
        let full = Mask::filled(32, 32, true);
        let m = ssim_masked(&a, &b, &full).unwrap();
        assert!((m - ssim(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn masked_ssim_empty_mask_is_none() {
        let a = gradient_image(16, 16);
        assert!(ssim_masked(&a, &a, &Mask::new(16, 16)).is_none());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = Array3::from_shape_fn((14, 15, 2), |_| rng.gen_range(0.2..0.8));
        let y = Array3::from_shape_fn((14, 15, 2), |_| rng.gen_range(0.2..0.8));
        let (_, grad) = ssim_with_grad(&x.view(), &y.view());
        let h = 1e-5;
        for &(py, px, c) in &[(0usize, 0usize, 0usize), (7, 8, 1), (13, 14, 0), (5, 3, 1)] {
            let mut xp = x.clone();
            xp[[py, px, c]] += h;
            let mut xm = x.clone();
            xm[[py, px, c]] -= h;
            let fd = (ssim_arrays(&xp.view(), &y.view()) - ssim_arrays(&xm.view(), &y.view()))
                / (2.0 * h);
            let an = grad[[py, px, c]];
            assert!(
                (fd - an).abs() <= 1e-7 + 1e-5 * fd.abs().max(an.abs()),
                "fd {} vs analytic {}",
                fd,
                an
            );
        }
    }
}
