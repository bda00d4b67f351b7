//! Small CPU image types used by the normalization pipeline.
//!
//! Pixels are `f32` in `[0, 1]`. [`Image`] is interleaved RGB, [`Grid`] is a
//! single-channel field (luminance, gain, weights, alpha) and [`Mask`] is a
//! boolean coverage map. Sampling is bilinear with clamp-to-edge semantics.

use crate::error::PipelineError;
use crate::Result;
use std::path::Path;

/// Interleaved RGB image, row-major, `f32` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

/// Single-channel scalar field with the same layout conventions as [`Image`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

/// Boolean per-pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    h: usize,
    w: usize,
    data: Vec<bool>,
}

impl Image {
    pub fn new(h: usize, w: usize) -> Self {
        Image { h, w, data: vec![0.0; h * w * 3] }
    }

    pub fn filled(h: usize, w: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            data.extend_from_slice(&rgb);
        }
        Image { h, w, data }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w * 3 {
            return Err(PipelineError::ShapeMismatch(format!(
                "image buffer has {} values, expected {}",
                data.len(),
                h * w * 3
            )));
        }
        Ok(Image { h, w, data })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.w + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Bilinear sample at continuous pixel coordinates, clamped to the edge.
    /// Integer coordinates address pixel centers.
    pub fn sample_bilinear(&self, x: f32, y: f32) -> [f32; 3] {
        let (x0, y0, fx, fy) = clamped_lerp_coords(x, y, self.w, self.h);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let p00 = self.get(y0, x0);
        let p01 = self.get(y0, x1);
        let p10 = self.get(y1, x0);
        let p11 = self.get(y1, x1);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let top = p00[c] + (p01[c] - p00[c]) * fx;
            let bot = p10[c] + (p11[c] - p10[c]) * fx;
            out[c] = top + (bot - top) * fy;
        }
        out
    }

    /// Per-pixel map over channels.
    pub fn map<F: FnMut(f32) -> f32>(&self, mut f: F) -> Image {
        Image { h: self.h, w: self.w, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Horizontal mirror about the vertical centerline (column `w-1-x`).
    pub fn mirror_horizontal(&self) -> Image {
        let mut out = Image::new(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                out.set(y, x, self.get(y, self.w - 1 - x));
            }
        }
        out
    }

    /// Rectangular crop; the rectangle must lie inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.w || y0 + h > self.h {
            return Err(PipelineError::ShapeMismatch(format!(
                "crop {}x{}+{}+{} exceeds image {}x{}",
                w, h, x0, y0, self.w, self.h
            )));
        }
        let mut out = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                out.set(y, x, self.get(y0 + y, x0 + x));
            }
        }
        Ok(out)
    }

    /// Channel-separable Gaussian blur, kernel truncated at three sigma.
    pub fn gaussian_blur(&self, sigma: f32) -> Image {
        let kernel = gaussian_kernel(sigma);
        let mut tmp = Image::new(self.h, self.w);
        let mut out = Image::new(self.h, self.w);
        convolve_h(&self.data, &mut tmp.data, self.h, self.w, 3, &kernel);
        convolve_v(&tmp.data, &mut out.data, self.h, self.w, 3, &kernel);
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let mut buf = image::RgbImage::new(self.w as u32, self.h as u32);
        for y in 0..self.h {
            for x in 0..self.w {
                let p = self.get(y, x);
                let px = image::Rgb([quantize(p[0]), quantize(p[1]), quantize(p[2])]);
                buf.put_pixel(x as u32, y as u32, px);
            }
        }
        buf.save(path).map_err(|e| PipelineError::Image(e.to_string()))
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let img = image::open(path).map_err(|e| PipelineError::Image(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let mut out = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let p = rgb.get_pixel(x as u32, y as u32);
                out.set(y, x, [
                    p[0] as f32 / 255.0,
                    p[1] as f32 / 255.0,
                    p[2] as f32 / 255.0,
                ]);
            }
        }
        Ok(out)
    }

    /// Binary PPM (P6) writer; used for codec-free frame exchange.
    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let mut bytes = format!("P6\n{} {}\n255\n", self.w, self.h).into_bytes();
        bytes.extend(self.data.iter().map(|&v| quantize(v)));
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load_ppm(path: &Path) -> Result<Image> {
        let bytes = std::fs::read(path)?;
        let (w, h, payload) = parse_pnm_header(&bytes, b'6', path)?;
        if payload.len() < w * h * 3 {
            return Err(PipelineError::Format {
                path: path.display().to_string(),
                detail: "truncated PPM payload".into(),
            });
        }
        let data = payload[..w * h * 3].iter().map(|&b| b as f32 / 255.0).collect();
        Ok(Image { h, w, data })
    }

    /// Loads either PNG or PPM based on the file extension.
    pub fn load(path: &Path) -> Result<Image> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("ppm") => Image::load_ppm(path),
            _ => Image::load_png(path),
        }
    }
}

impl Grid {
    pub fn new(h: usize, w: usize) -> Self {
        Grid { h, w, data: vec![0.0; h * w] }
    }

    pub fn filled(h: usize, w: usize, v: f32) -> Self {
        Grid { h, w, data: vec![v; h * w] }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w {
            return Err(PipelineError::ShapeMismatch(format!(
                "grid buffer has {} values, expected {}",
                data.len(),
                h * w
            )));
        }
        Ok(Grid { h, w, data })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.w + x] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn sample_bilinear(&self, x: f32, y: f32) -> f32 {
        let (x0, y0, fx, fy) = clamped_lerp_coords(x, y, self.w, self.h);
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let top = self.get(y0, x0) + (self.get(y0, x1) - self.get(y0, x0)) * fx;
        let bot = self.get(y1, x0) + (self.get(y1, x1) - self.get(y1, x0)) * fx;
        top + (bot - top) * fy
    }

    pub fn mirror_horizontal(&self) -> Grid {
        let mut out = Grid::new(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                out.set(y, x, self.get(y, self.w - 1 - x));
            }
        }
        out
    }

    pub fn map<F: FnMut(f32) -> f32>(&self, mut f: F) -> Grid {
        Grid { h: self.h, w: self.w, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn gaussian_blur(&self, sigma: f32) -> Grid {
        let kernel = gaussian_kernel(sigma);
        let mut tmp = Grid::new(self.h, self.w);
        let mut out = Grid::new(self.h, self.w);
        convolve_h(&self.data, &mut tmp.data, self.h, self.w, 1, &kernel);
        convolve_v(&tmp.data, &mut out.data, self.h, self.w, 1, &kernel);
        out
    }

    /// Grayscale PGM (P5) writer for diagnostics dumps; values are scaled
    /// by `scale` before 8-bit quantization.
    pub fn save_pgm(&self, path: &Path, scale: f32) -> Result<()> {
        let mut bytes = format!("P5\n{} {}\n255\n", self.w, self.h).into_bytes();
        bytes.extend(self.data.iter().map(|&v| quantize(v * scale)));
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

impl Mask {
    pub fn new(h: usize, w: usize) -> Self {
        Mask { h, w, data: vec![false; h * w] }
    }

    pub fn filled(h: usize, w: usize, v: bool) -> Self {
        Mask { h, w, data: vec![v; h * w] }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.w + x] = v;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        assert_eq!((self.h, self.w), (other.h, other.w));
        Mask {
            h: self.h,
            w: self.w,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn mirror_horizontal(&self) -> Mask {
        let mut out = Mask::new(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                out.set(y, x, self.get(y, self.w - 1 - x));
            }
        }
        out
    }

    /// Erodes the mask by `r` pixels (square structuring element).
    pub fn erode(&self, r: usize) -> Mask {
        let mut out = Mask::new(self.h, self.w);
        for y in 0..self.h {
            for x in 0..self.w {
                let mut keep = true;
                'probe: for dy in y.saturating_sub(r)..=(y + r).min(self.h - 1) {
                    for dx in x.saturating_sub(r)..=(x + r).min(self.w - 1) {
                        if !self.get(dy, dx) {
                            keep = false;
                            break 'probe;
                        }
                    }
                }
                out.set(y, x, keep);
            }
        }
        out
    }
}

fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
fn clamped_lerp_coords(x: f32, y: f32, w: usize, h: usize) -> (usize, usize, f32, f32) {
    let xc = x.clamp(0.0, (w - 1) as f32);
    let yc = y.clamp(0.0, (h - 1) as f32);
    let x0 = xc.floor() as usize;
    let y0 = yc.floor() as usize;
    (x0.min(w - 1), y0.min(h - 1), xc - x0 as f32, yc - y0 as f32)
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f32 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

fn convolve_h(src: &[f32], dst: &mut [f32], h: usize, w: usize, ch: usize, kernel: &[f32]) {
    let radius = kernel.len() as i64 / 2;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sx = (x as i64 + ki as i64 - radius).clamp(0, w as i64 - 1) as usize;
                    acc += kv * src[(y * w + sx) * ch + c];
                }
                dst[(y * w + x) * ch + c] = acc;
            }
        }
    }
}

fn convolve_v(src: &[f32], dst: &mut [f32], h: usize, w: usize, ch: usize, kernel: &[f32]) {
    let radius = kernel.len() as i64 / 2;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0f32;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sy = (y as i64 + ki as i64 - radius).clamp(0, h as i64 - 1) as usize;
                    acc += kv * src[(sy * w + x) * ch + c];
                }
                dst[(y * w + x) * ch + c] = acc;
            }
        }
    }
}

fn parse_pnm_header<'a>(bytes: &'a [u8], kind: u8, path: &Path) -> Result<(usize, usize, &'a [u8])> {
    let err = |detail: &str| PipelineError::Format {
        path: path.display().to_string(),
        detail: detail.to_string(),
    };
    if bytes.len() < 2 || bytes[0] != b'P' || bytes[1] != kind {
        return Err(err("bad PNM magic"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // Skip whitespace and comment lines.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("bad PNM header field"))?;
    }
    if fields[2] != 255 {
        return Err(err("only maxval 255 supported"));
    }
    // Single whitespace byte separates header from payload.
    pos += 1;
    Ok((fields[0], fields[1], &bytes[pos.min(bytes.len())..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_identity_at_pixel_centers() {
        let mut img = Image::new(4, 4);
        img.set(2, 3, [0.25, 0.5, 0.75]);
        assert_eq!(img.sample_bilinear(3.0, 2.0), [0.25, 0.5, 0.75]);
    }

    #[test]
    fn bilinear_clamps_at_edges() {
        let img = Image::filled(2, 2, [0.5, 0.5, 0.5]);
        assert_eq!(img.sample_bilinear(-3.0, 10.0), [0.5, 0.5, 0.5]);
    }

    #[test]
    fn mirror_is_involution() {
        let mut g = Grid::new(3, 5);
        for y in 0..3 {
            for x in 0..5 {
                g.set(y, x, (y * 5 + x) as f32);
            }
        }
        assert_eq!(g.mirror_horizontal().mirror_horizontal(), g);
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.ppm");
        let mut img = Image::new(2, 3);
        img.set(0, 0, [1.0, 0.0, 0.5]);
        img.set(1, 2, [0.2, 0.4, 0.6]);
        img.save_ppm(&path).unwrap();
        let back = Image::load_ppm(&path).unwrap();
        assert_eq!(back.height(), 2);
        assert_eq!(back.width(), 3);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn gaussian_blur_preserves_constant_images() {
        let img = Image::filled(8, 8, [0.3, 0.6, 0.9]);
        let blurred = img.gaussian_blur(2.0);
        for (a, b) in img.data().iter().zip(blurred.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
