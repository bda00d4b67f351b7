//! Specular highlight removal on stabilized face textures.
//!
//! Highlights are modeled as a soft white overlay `i = α + (1 - α)·i_c`.
//! The mask of candidate pixels is thresholded at the 90th percentile of
//! the min-over-RGB statistic on smoothed skin, a pseudo-clean image is
//! diffused into the masked holes, and the alpha map estimated from it
//! inverts the compositing exactly where the model holds.

use crate::geom::TextureAtlas;
use crate::image::{Grid, Mask};

#[derive(Debug, Clone, Copy)]
pub struct SpecularParams {
    pub blur_sigma: f64,
    pub percentile: f64,
    pub holefill_max_iters: usize,
    pub holefill_tolerance: f64,
}

impl Default for SpecularParams {
    fn default() -> Self {
        SpecularParams {
            blur_sigma: 2.0,
            percentile: 0.90,
            holefill_max_iters: 200,
            holefill_tolerance: 1e-4,
        }
    }
}

/// Removes specular highlights from an atlas, returning the clean atlas and
/// the estimated specular alpha map (zero off-mask).
pub fn remove_specularity(
    atlas: &TextureAtlas,
    skin_mask: &Mask,
    params: &SpecularParams,
) -> (TextureAtlas, Grid) {
    let (h, w) = atlas.size();
    let skin = skin_mask.and(&atlas.valid);

    // Min-over-RGB of the smoothed image is low on colored skin and high
    // only where all channels saturate toward white.
    let smoothed = atlas.pixels.gaussian_blur(params.blur_sigma as f32);
    let mut min_chan = Grid::new(h, w);
    for y in 0..h {
        for x in 0..w {
            let p = smoothed.get(y, x);
            min_chan.set(y, x, p[0].min(p[1]).min(p[2]));
        }
    }

    let mut skin_values: Vec<f32> = Vec::with_capacity(skin.count());
    for y in 0..h {
        for x in 0..w {
            if skin.get(y, x) {
                skin_values.push(min_chan.get(y, x));
            }
        }
    }
    let mut alpha = Grid::new(h, w);
    if skin_values.is_empty() {
        return (atlas.clone(), alpha);
    }
    skin_values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((skin_values.len() - 1) as f64 * params.percentile).round() as usize;
    let threshold = skin_values[rank];

    let mut mask = Mask::new(h, w);
    let mut any = false;
    for y in 0..h {
        for x in 0..w {
            // Strictly exceeds: a constant image flags nothing.
            if skin.get(y, x) && min_chan.get(y, x) > threshold {
                mask.set(y, x, true);
                any = true;
            }
        }
    }
    if !any {
        return (atlas.clone(), alpha);
    }

    let pseudo_clean = hole_fill(&atlas.pixels, &mask, &atlas.valid, params);

    // Alpha from the luminance channel; a pseudo-clean pixel at white would
    // blow up the division, so alpha collapses to zero there.
    let obs_y = super::luminance(&atlas.pixels);
    let clean_y = super::luminance(&pseudo_clean);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let ic = clean_y.get(y, x) as f64;
            if ic >= 1.0 - 1e-6 {
                continue;
            }
            let a = ((obs_y.get(y, x) as f64 - ic) / (1.0 - ic)).clamp(0.0, 1.0 - 1e-6);
            alpha.set(y, x, a as f32);
        }
    }

    let mut clean = atlas.clone();
    for y in 0..h {
        for x in 0..w {
            let a = alpha.get(y, x);
            if a > 0.0 {
                let mut px = clean.pixels.get(y, x);
                for c in 0..3 {
                    px[c] = ((px[c] - a) / (1.0 - a)).clamp(0.0, 1.0);
                }
                clean.pixels.set(y, x, px);
            }
        }
    }
    (clean, alpha)
}

/// Jacobi diffusion fill of the masked pixels, with unmasked valid pixels
/// as Dirichlet boundary. Deterministic: fixed sweep order and a fixed
/// iteration cap.
fn hole_fill(img: &crate::image::Image, mask: &Mask, valid: &Mask, params: &SpecularParams) -> crate::image::Image {
    let (h, w) = (img.height(), img.width());
    let mut filled = img.clone();

    // Start the holes at the mean of the surrounding unmasked content.
    let mut mean = [0.0f64; 3];
    let mut count = 0usize;
    for y in 0..h {
        for x in 0..w {
            if valid.get(y, x) && !mask.get(y, x) {
                let p = img.get(y, x);
                for c in 0..3 {
                    mean[c] += p[c] as f64;
                }
                count += 1;
            }
        }
    }
    if count > 0 {
        for c in &mut mean {
            *c /= count as f64;
        }
    }
    let hole_indices: Vec<(usize, usize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .filter(|&(y, x)| mask.get(y, x))
        .collect();
    for &(y, x) in &hole_indices {
        filled.set(y, x, [mean[0] as f32, mean[1] as f32, mean[2] as f32]);
    }

    let mut next = filled.clone();
    for _ in 0..params.holefill_max_iters {
        let mut max_update = 0.0f32;
        for &(y, x) in &hole_indices {
            let mut acc = [0.0f32; 3];
            let mut n = 0u32;
            let push = |yy: usize, xx: usize, acc: &mut [f32; 3], n: &mut u32| {
                if valid.get(yy, xx) || mask.get(yy, xx) {
                    let p = filled.get(yy, xx);
                    for c in 0..3 {
                        acc[c] += p[c];
                    }
                    *n += 1;
                }
            };
            if y > 0 {
                push(y - 1, x, &mut acc, &mut n);
            }
            if y + 1 < h {
                push(y + 1, x, &mut acc, &mut n);
            }
            if x > 0 {
                push(y, x - 1, &mut acc, &mut n);
            }
            if x + 1 < w {
                push(y, x + 1, &mut acc, &mut n);
            }
            if n == 0 {
                continue;
            }
            let old = filled.get(y, x);
            let mut newpx = [0.0f32; 3];
            for c in 0..3 {
                newpx[c] = acc[c] / n as f32;
                max_update = max_update.max((newpx[c] - old[c]).abs());
            }
            next.set(y, x, newpx);
        }
        for &(y, x) in &hole_indices {
            filled.set(y, x, next.get(y, x));
        }
        if max_update < params.holefill_tolerance as f32 {
            break;
        }
    }
    filled
}
