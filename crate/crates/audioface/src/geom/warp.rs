//! Barycentric triangle warping between two vertex parameterizations.
//!
//! Every destination pixel covered by a destination triangle is mapped to
//! the corresponding point of the source triangle via barycentric
//! coordinates and sampled bilinearly. Overlaps resolve by nearest depth
//! when per-vertex depths are given, otherwise by last writer in the
//! (deterministic) triangle order.

use crate::image::{Image, Mask};

/// Frontalized texture image plus the pixels actually covered by triangles.
#[derive(Debug, Clone)]
pub struct TextureAtlas {
    pub pixels: Image,
    pub valid: Mask,
}

impl TextureAtlas {
    pub fn new(h: usize, w: usize) -> Self {
        TextureAtlas { pixels: Image::new(h, w), valid: Mask::new(h, w) }
    }

    pub fn size(&self) -> (usize, usize) {
        (self.pixels.height(), self.pixels.width())
    }
}

/// Inclusion tolerance for pixels sitting exactly on a triangle edge.
const EDGE_EPS: f64 = 1e-9;

/// Warps `src_image` from the `src_coords` parameterization onto the
/// `dst_coords` parameterization.
///
/// `depth`, when provided, holds one value per vertex; overlapping coverage
/// keeps the sample with the smallest interpolated depth.
pub fn warp_triangles(
    src_image: &Image,
    src_coords: &[(f64, f64)],
    dst_coords: &[(f64, f64)],
    triangles: &[[usize; 3]],
    dst_size: (usize, usize),
    depth: Option<&[f64]>,
) -> TextureAtlas {
    assert_eq!(src_coords.len(), dst_coords.len(), "coordinate lists must match");
    let (dst_h, dst_w) = dst_size;
    let mut atlas = TextureAtlas::new(dst_h, dst_w);
    let mut zbuf = depth.map(|_| vec![f64::INFINITY; dst_h * dst_w]);

    for tri in triangles {
        let d = [dst_coords[tri[0]], dst_coords[tri[1]], dst_coords[tri[2]]];
        let s = [src_coords[tri[0]], src_coords[tri[1]], src_coords[tri[2]]];

        let area = edge(d[0], d[1], d[2]);
        if area.abs() < 1e-12 {
            continue;
        }

        let min_x = d.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_x =
            d.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil().min((dst_w - 1) as f64) as usize;
        let min_y = d.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as usize;
        let max_y =
            d.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil().min((dst_h - 1) as f64) as usize;
        if min_x > max_x || min_y > max_y {
            continue;
        }

        for y in min_y..=max_y {
            for x in min_x..=max_x {
                let p = (x as f64, y as f64);
                let w0 = edge(d[1], d[2], p) / area;
                let w1 = edge(d[2], d[0], p) / area;
                let w2 = edge(d[0], d[1], p) / area;
                if w0 < -EDGE_EPS || w1 < -EDGE_EPS || w2 < -EDGE_EPS {
                    continue;
                }
                let idx = y * dst_w + x;
                if let (Some(zb), Some(dep)) = (zbuf.as_mut(), depth) {
                    let z = w0 * dep[tri[0]] + w1 * dep[tri[1]] + w2 * dep[tri[2]];
                    if z >= zb[idx] {
                        continue;
                    }
                    zb[idx] = z;
                }
                let sx = w0 * s[0].0 + w1 * s[1].0 + w2 * s[2].0;
                let sy = w0 * s[0].1 + w1 * s[1].1 + w2 * s[2].1;
                let rgb = src_image.sample_bilinear(sx as f32, sy as f32);
                atlas.pixels.set(y, x, rgb);
                atlas.valid.set(y, x, true);
            }
        }
    }
    atlas
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checkerboard(h: usize, w: usize, cell: usize) -> Image {
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let v = if ((x / cell) + (y / cell)) % 2 == 0 { 1.0 } else { 0.0 };
                img.set(y, x, [v, v, v]);
            }
        }
        img
    }

    fn quad_coords(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<(f64, f64)> {
        vec![(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
    }

    const QUAD_TRIS: [[usize; 3]; 2] = [[0, 1, 2], [2, 1, 3]];

    #[test]
    fn identity_warp_reproduces_covered_pixels() {
        let img = checkerboard(32, 32, 4);
        let coords = quad_coords(0.0, 0.0, 31.0, 31.0);
        let out = warp_triangles(&img, &coords, &coords, &QUAD_TRIS, (32, 32), None);
        for y in 0..32 {
            for x in 0..32 {
                assert!(out.valid.get(y, x));
                let a = img.get(y, x);
                let b = out.pixels.get(y, x);
                for c in 0..3 {
                    assert!((a[c] - b[c]).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn pure_translation_shifts_the_image() {
        let img = checkerboard(40, 40, 8);
        let src = quad_coords(0.0, 0.0, 31.0, 31.0);
        let dst = quad_coords(8.0, 0.0, 39.0, 31.0);
        let out = warp_triangles(&img, &src, &dst, &QUAD_TRIS, (40, 40), None);
        for y in 0..32 {
            for x in 8..40 {
                assert!(out.valid.get(y, x));
                let expect = img.get(y, x - 8);
                let got = out.pixels.get(y, x);
                for c in 0..3 {
                    assert!((expect[c] - got[c]).abs() < 1e-5, "at ({}, {})", x, y);
                }
            }
            assert!(!out.valid.get(y, 0));
        }
    }

    #[test]
    fn round_trip_on_smooth_gradient_is_tight() {
        let mut img = Image::new(48, 48);
        for y in 0..48 {
            for x in 0..48 {
                let v = 0.2 + 0.6 * (x as f32 + y as f32) / 94.0;
                img.set(y, x, [v, v * 0.8, v * 0.5]);
            }
        }
        let a = quad_coords(2.0, 2.0, 45.0, 45.0);
        // A mild non-rigid quad for the intermediate parameterization.
        let b = vec![(6.0, 4.0), (43.0, 7.0), (4.0, 44.0), (41.0, 40.0)];
        let to_b = warp_triangles(&img, &a, &b, &QUAD_TRIS, (48, 48), None);
        let back = warp_triangles(&to_b.pixels, &b, &a, &QUAD_TRIS, (48, 48), None);
        // Interior pixels, away from triangle borders.
        for y in 8..40 {
            for x in 8..40 {
                if !back.valid.get(y, x) {
                    continue;
                }
                let orig = img.get(y, x);
                let got = back.pixels.get(y, x);
                for c in 0..3 {
                    assert!((orig[c] - got[c]).abs() < 0.02, "at ({}, {}): {} vs {}", x, y, orig[c], got[c]);
                }
            }
        }
    }

    #[test]
    fn constant_image_is_preserved_exactly() {
        let img = Image::filled(24, 24, [0.37, 0.62, 0.11]);
        let src = quad_coords(1.0, 1.0, 22.0, 22.0);
        let dst = vec![(3.0, 2.0), (20.0, 5.0), (2.0, 21.0), (19.0, 22.0)];
        let out = warp_triangles(&img, &src, &dst, &QUAD_TRIS, (24, 24), None);
        assert!(out.valid.count() > 0);
        for y in 0..24 {
            for x in 0..24 {
                if out.valid.get(y, x) {
                    assert_eq!(out.pixels.get(y, x), [0.37, 0.62, 0.11]);
                }
            }
        }
    }

    #[test]
    fn depth_test_keeps_nearest_triangle() {
        // Left half red, right half green.
        let mut img = Image::new(16, 32);
        for y in 0..16 {
            for x in 0..32 {
                img.set(y, x, if x < 16 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] });
            }
        }
        // Two coincident destination quads sampling different halves. The
        // nearer quad (green) comes FIRST in triangle order, so a pure
        // last-writer rule would wrongly keep red.
        let src: Vec<(f64, f64)> = quad_coords(18.0, 0.0, 29.0, 15.0)
            .into_iter()
            .chain(quad_coords(2.0, 0.0, 13.0, 15.0))
            .collect();
        let dst: Vec<(f64, f64)> = quad_coords(0.0, 0.0, 15.0, 15.0)
            .into_iter()
            .chain(quad_coords(0.0, 0.0, 15.0, 15.0))
            .collect();
        let tris = [[0, 1, 2], [2, 1, 3], [4, 5, 6], [6, 5, 7]];
        let depths = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let out = warp_triangles(&img, &src, &dst, &tris, (16, 16), Some(&depths));
        assert_eq!(out.pixels.get(8, 8), [0.0, 1.0, 0.0]);

        // Without depths the later (red) quad wins.
        let out2 = warp_triangles(&img, &src, &dst, &tris, (16, 16), None);
        assert_eq!(out2.pixels.get(8, 8), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_coverage_yields_all_false_mask() {
        let img = Image::filled(8, 8, [0.5; 3]);
        let out = warp_triangles(&img, &[], &[], &[], (8, 8), None);
        assert_eq!(out.valid.count(), 0);
    }
}
