//! Robust smooth gain estimation between two aligned atlases.
//!
//! Under albedo constancy, corresponding pixels of a frame `F` and the
//! reference `R` differ only by illumination, so the luminance ratio is a
//! smooth multiplicative gain. Each gain sample minimizes the weighted
//! residual `Σ_j w_j (r_j - g·f_j)²` over a patch; the weights are then
//! re-derived from the residuals as `w = exp(-e / t)` and the solve
//! repeats — iteratively reweighted least squares. Pixels violating
//! constancy (mouth interior, folds) receive low weights and implicitly
//! interpolate their gain from smoother neighbors.

use crate::geom::TextureAtlas;
use crate::image::{Grid, Mask};

/// Gain estimation parameters (see the pipeline config for defaults).
#[derive(Debug, Clone, Copy)]
pub struct IrlsParams {
    pub temperature: f64,
    pub patch: usize,
    pub iterations: usize,
    pub grid_stride: usize,
}

impl Default for IrlsParams {
    fn default() -> Self {
        IrlsParams { temperature: 0.1, patch: 16, iterations: 8, grid_stride: 4 }
    }
}

/// Output of [`estimate_gain_irls`].
#[derive(Debug, Clone)]
pub struct GainEstimate {
    /// Full-resolution multiplicative luminance gain (frame → reference).
    pub gain: Grid,
    /// Final per-pixel weights `exp(-e / t)`, zero outside the valid mask.
    pub weights: Grid,
    pub diagnostics: IrlsDiagnostics,
}

#[derive(Debug, Clone, Default)]
pub struct IrlsDiagnostics {
    /// Grid nodes whose patch had no usable support (gain defaulted to 1).
    pub degenerate_patches: usize,
    /// Per iteration: patch energy summed over the grid, evaluated with the
    /// iteration's fixed weights under (previous gain, new gain). The second
    /// entry can never exceed the first.
    pub energy_history: Vec<(f64, f64)>,
}

/// Estimates the smooth luminance gain `g` with `r ≈ g·f` and the final
/// robustness weights.
///
/// Operates on the luminance channel over the intersection of both validity
/// masks. Gain samples live on a stride-`grid_stride` grid (each estimated
/// over a `patch`×`patch` window) and are bilinearly upsampled to full
/// resolution.
pub fn estimate_gain_irls(
    f: &TextureAtlas,
    r: &TextureAtlas,
    weights_init: Option<&Grid>,
    params: &IrlsParams,
) -> GainEstimate {
    assert_eq!(f.size(), r.size(), "atlases must have equal sizes");
    let (h, w) = f.size();
    let f_y = super::luminance(&f.pixels);
    let r_y = super::luminance(&r.pixels);
    let mask = f.valid.and(&r.valid);

    let mut weights = match weights_init {
        Some(init) => {
            assert_eq!((init.height(), init.width()), (h, w));
            init.clone()
        }
        None => Grid::filled(h, w, 1.0),
    };
    zero_outside(&mut weights, &mask);

    let stride = params.grid_stride.max(1);
    let gh = h.div_ceil(stride);
    let gw = w.div_ceil(stride);
    let half = params.patch / 2;

    let mut grid_prev = Grid::filled(gh, gw, 1.0);
    let mut gain_full = Grid::filled(h, w, 1.0);
    let mut diagnostics = IrlsDiagnostics::default();

    for _ in 0..params.iterations {
        let mut grid = Grid::filled(gh, gw, 1.0);
        let mut degenerate = 0usize;
        let mut energy_prev = 0.0f64;
        let mut energy_new = 0.0f64;
        for gy in 0..gh {
            for gx in 0..gw {
                let cy = gy * stride;
                let cx = gx * stride;
                let y0 = cy.saturating_sub(half);
                let y1 = (cy + half).min(h);
                let x0 = cx.saturating_sub(half);
                let x1 = (cx + half).min(w);
                let mut num = 0.0f64;
                let mut den = 0.0f64;
                for py in y0..y1 {
                    for px in x0..x1 {
                        if !mask.get(py, px) {
                            continue;
                        }
                        let wgt = weights.get(py, px) as f64;
                        let fv = f_y.get(py, px) as f64;
                        let rv = r_y.get(py, px) as f64;
                        num += wgt * rv * fv;
                        den += wgt * fv * fv;
                    }
                }
                let g = if den < 1e-12 {
                    degenerate += 1;
                    1.0
                } else {
                    num / den
                };
                grid.set(gy, gx, g as f32);

                // Patch energies for the monotonicity diagnostic.
                let g_old = grid_prev.get(gy, gx) as f64;
                for py in y0..y1 {
                    for px in x0..x1 {
                        if !mask.get(py, px) {
                            continue;
                        }
                        let wgt = weights.get(py, px) as f64;
                        let fv = f_y.get(py, px) as f64;
                        let rv = r_y.get(py, px) as f64;
                        energy_prev += wgt * (rv - g_old * fv).powi(2);
                        energy_new += wgt * (rv - g * fv).powi(2);
                    }
                }
            }
        }
        diagnostics.degenerate_patches = degenerate;
        diagnostics.energy_history.push((energy_prev, energy_new));

        gain_full = upsample_grid(&grid, h, w, stride);
        grid_prev = grid;

        // Residual-driven weight update.
        let inv_t = 1.0 / params.temperature;
        for y in 0..h {
            for x in 0..w {
                if !mask.get(y, x) {
                    weights.set(y, x, 0.0);
                    continue;
                }
                let res = r_y.get(y, x) as f64 - gain_full.get(y, x) as f64 * f_y.get(y, x) as f64;
                weights.set(y, x, (-(res * res) * inv_t).exp() as f32);
            }
        }
    }

    GainEstimate { gain: gain_full, weights, diagnostics }
}

/// Per-channel affine color correction `r ≈ a·f + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorTransform {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

impl ColorTransform {
    pub const IDENTITY: ColorTransform = ColorTransform { a: [1.0; 3], b: [0.0; 3] };
}

/// Closed-form weighted least squares for the global color transform,
/// solved independently per RGB channel with the weights held fixed.
///
/// A channel with (weighted) zero variance in `f` falls back to a pure bias:
/// `a = 1`, `b = weighted mean(r - f)`.
pub fn estimate_color_transform(f: &TextureAtlas, r: &TextureAtlas, weights: &Grid) -> ColorTransform {
    assert_eq!(f.size(), r.size());
    let (h, w) = f.size();
    let mask = f.valid.and(&r.valid);
    let mut out = ColorTransform::IDENTITY;
    for c in 0..3 {
        let mut sw = 0.0f64;
        let mut sf = 0.0f64;
        let mut sr = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                if !mask.get(y, x) {
                    continue;
                }
                let wgt = weights.get(y, x) as f64;
                sw += wgt;
                sf += wgt * f.pixels.get(y, x)[c] as f64;
                sr += wgt * r.pixels.get(y, x)[c] as f64;
            }
        }
        if sw < 1e-12 {
            continue;
        }
        let mf = sf / sw;
        let mr = sr / sw;
        let mut cov = 0.0f64;
        let mut var = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                if !mask.get(y, x) {
                    continue;
                }
                let wgt = weights.get(y, x) as f64;
                let fv = f.pixels.get(y, x)[c] as f64 - mf;
                let rv = r.pixels.get(y, x)[c] as f64 - mr;
                cov += wgt * fv * rv;
                var += wgt * fv * fv;
            }
        }
        if var < 1e-12 * sw {
            out.a[c] = 1.0;
            out.b[c] = mr - mf;
        } else {
            out.a[c] = cov / var;
            out.b[c] = mr - out.a[c] * mf;
        }
    }
    out
}

fn zero_outside(grid: &mut Grid, mask: &Mask) {
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            if !mask.get(y, x) {
                grid.set(y, x, 0.0);
            }
        }
    }
}

fn upsample_grid(grid: &Grid, h: usize, w: usize, stride: usize) -> Grid {
    let mut full = Grid::new(h, w);
    let s = stride as f32;
    for y in 0..h {
        for x in 0..w {
            full.set(y, x, grid.sample_bilinear(x as f32 / s, y as f32 / s));
        }
    }
    full
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    fn atlas_from_gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> TextureAtlas {
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = f(y, x);
                img.set(y, x, [v, v, v]);
            }
        }
        TextureAtlas { pixels: img, valid: Mask::filled(h, w, true) }
    }

    #[test]
    fn identical_atlases_give_unit_gain_and_weights() {
        let r = atlas_from_gray(64, 64, |y, x| 0.3 + 0.3 * ((x + y) as f32 / 128.0));
        let est = estimate_gain_irls(&r, &r, None, &IrlsParams::default());
        for &g in est.gain.data() {
            assert!((g - 1.0).abs() < 1e-6);
        }
        for &w in est.weights.data() {
            assert!((w - 1.0).abs() < 1e-6);
        }
        assert_eq!(est.diagnostics.degenerate_patches, 0);
    }

    #[test]
    fn uniform_halving_recovers_gain_two() {
        let r = atlas_from_gray(64, 64, |y, x| 0.3 + 0.25 * ((x as f32 - y as f32) / 128.0));
        let f = TextureAtlas { pixels: r.pixels.map(|v| v * 0.5), valid: r.valid.clone() };
        let est = estimate_gain_irls(&f, &r, None, &IrlsParams::default());
        for &g in est.gain.data() {
            assert!((g - 2.0).abs() < 1e-3, "gain = {}", g);
        }
    }

    #[test]
    fn irls_energy_is_monotone_for_fixed_weights() {
        let r = atlas_from_gray(64, 64, |y, x| 0.3 + 0.3 * (x as f32 / 64.0) - 0.1 * (y as f32 / 64.0));
        let mut f = r.clone();
        // Smooth gain plus a block of outliers.
        for y in 0..64 {
            for x in 0..64 {
                let g = 0.8 + 0.4 * x as f32 / 63.0;
                let mut px = f.pixels.get(y, x);
                for c in 0..3 {
                    px[c] /= g;
                }
                if (20..24).contains(&y) && (30..34).contains(&x) {
                    px = [0.95, 0.95, 0.95];
                }
                f.pixels.set(y, x, px);
            }
        }
        let est = estimate_gain_irls(&f, &r, None, &IrlsParams::default());
        for (prev, new) in est.diagnostics.energy_history {
            assert!(new <= prev + 1e-9, "energy increased: {} -> {}", prev, new);
        }
    }

    #[test]
    fn color_transform_identity_for_equal_atlases() {
        let r = atlas_from_gray(32, 32, |y, x| 0.2 + 0.5 * (x as f32 * y as f32 / 1024.0));
        let w = Grid::filled(32, 32, 1.0);
        let ct = estimate_color_transform(&r, &r, &w);
        for c in 0..3 {
            assert!((ct.a[c] - 1.0).abs() < 1e-9);
            assert!(ct.b[c].abs() < 1e-9);
        }
    }

    #[test]
    fn color_transform_inverts_known_affine_map() {
        let r = atlas_from_gray(32, 32, |y, x| 0.2 + 0.6 * (x as f32 / 32.0) * (y as f32 / 32.0));
        let f = TextureAtlas { pixels: r.pixels.map(|v| 0.5 * v + 0.1), valid: r.valid.clone() };
        let w = Grid::filled(32, 32, 1.0);
        let ct = estimate_color_transform(&f, &r, &w);
        for c in 0..3 {
            assert!((ct.a[c] - 2.0).abs() < 1e-6, "a = {:?}", ct.a);
            assert!((ct.b[c] + 0.2).abs() < 1e-6, "b = {:?}", ct.b);
        }
    }

    #[test]
    fn constant_channel_falls_back_to_bias() {
        let mut f = atlas_from_gray(16, 16, |_, _| 0.0);
        let mut r = atlas_from_gray(16, 16, |_, _| 0.0);
        for y in 0..16 {
            for x in 0..16 {
                // f red constant, r red varies; green/blue match and vary.
                let v = 0.2 + (x as f32) / 40.0;
                f.pixels.set(y, x, [0.4, v, v]);
                r.pixels.set(y, x, [0.3 + (y as f32) / 50.0, v, v]);
            }
        }
        let w = Grid::filled(16, 16, 1.0);
        let ct = estimate_color_transform(&f, &r, &w);
        assert!((ct.a[0] - 1.0).abs() < 1e-9);
        let mean_diff: f32 = (0..16)
            .flat_map(|y| (0..16).map(move |x| (y, x)))
            .map(|(y, x)| r.pixels.get(y, x)[0] - f.pixels.get(y, x)[0])
            .sum::<f32>()
            / 256.0;
        assert!((ct.b[0] - mean_diff as f64).abs() < 1e-5);
    }
}
