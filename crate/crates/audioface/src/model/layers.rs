//! Layer primitives: convolution, dense, bilinear upsampling, activations.
//!
//! Convolutions use ceiling-division "same" padding (output extent
//! `ceil(in / stride)`) and are lowered to GEMM through im2col. All
//! primitives come in forward/backward pairs; backward passes are exact
//! adjoints so the whole model passes central-difference gradient checks.

use super::arch::{Act, ConvSpec, DenseSpec};
use ndarray::{Array1, Array2, Array4};

/// Scalar abstraction: `f32` for training throughput, `f64` for gradient
/// verification.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + std::iter::Sum<Self>
    + 'static
{
    fn from64(v: f64) -> Self;
    fn to64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from64(v: f64) -> f32 {
        v as f32
    }
    #[inline]
    fn to64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from64(v: f64) -> f64 {
        v
    }
    #[inline]
    fn to64(self) -> f64 {
        self
    }
}

const LEAKY_SLOPE: f64 = 0.2;

#[inline]
pub fn activate<S: Scalar>(act: Act, z: S) -> S {
    match act {
        Act::Linear => z,
        Act::Relu => {
            if z > S::zero() {
                z
            } else {
                S::zero()
            }
        }
        Act::LeakyRelu => {
            if z > S::zero() {
                z
            } else {
                z * S::from64(LEAKY_SLOPE)
            }
        }
        Act::Tanh => z.tanh(),
    }
}

/// Activation derivative expressed through the activation OUTPUT `y`
/// (possible because every activation here is invertible on its slope
/// regions).
#[inline]
pub fn activate_grad_from_output<S: Scalar>(act: Act, y: S) -> S {
    match act {
        Act::Linear => S::one(),
        Act::Relu => {
            if y > S::zero() {
                S::one()
            } else {
                S::zero()
            }
        }
        Act::LeakyRelu => {
            if y > S::zero() {
                S::one()
            } else {
                S::from64(LEAKY_SLOPE)
            }
        }
        Act::Tanh => S::one() - y * y,
    }
}

/// Padding offsets for a same-padded convolution (TensorFlow convention:
/// excess padding goes to the bottom/right).
fn pad_before(input: usize, stride: usize, k: usize) -> i64 {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(input);
    (total / 2) as i64
}

/// Gathers convolution patches: `(n, h, w, cin) → (n·oh·ow, kh·kw·cin)`.
pub fn im2col<S: Scalar>(x: &Array4<S>, spec: &ConvSpec) -> Array2<S> {
    let (n, h, w, cin) = x.dim();
    debug_assert_eq!(cin, spec.cin);
    let oh = h.div_ceil(spec.sh);
    let ow = w.div_ceil(spec.sw);
    let pad_y = pad_before(h, spec.sh, spec.kh);
    let pad_x = pad_before(w, spec.sw, spec.kw);
    let k = spec.kh * spec.kw * cin;
    let xs = x.as_slice().expect("contiguous input");
    let mut cols = Array2::<S>::zeros((n * oh * ow, k));
    let cs = cols.as_slice_mut().unwrap();
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((ni * oh + oy) * ow + ox) * k;
                for ky in 0..spec.kh {
                    let iy = oy as i64 * spec.sh as i64 - pad_y + ky as i64;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    for kx in 0..spec.kw {
                        let ix = ox as i64 * spec.sw as i64 - pad_x + kx as i64;
                        if ix < 0 || ix >= w as i64 {
                            continue;
                        }
                        let src = ((ni * h + iy as usize) * w + ix as usize) * cin;
                        let dst = row + (ky * spec.kw + kx) * cin;
                        cs[dst..dst + cin].copy_from_slice(&xs[src..src + cin]);
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-adds column gradients back to the input layout.
fn col2im<S: Scalar>(d_cols: &Array2<S>, spec: &ConvSpec, dims: (usize, usize, usize, usize)) -> Array4<S> {
    let (n, h, w, cin) = dims;
    let oh = h.div_ceil(spec.sh);
    let ow = w.div_ceil(spec.sw);
    let pad_y = pad_before(h, spec.sh, spec.kh);
    let pad_x = pad_before(w, spec.sw, spec.kw);
    let k = spec.kh * spec.kw * cin;
    let mut dx = Array4::<S>::zeros((n, h, w, cin));
    let ds = dx.as_slice_mut().unwrap();
    let cs = d_cols.as_slice().expect("contiguous gradient");
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((ni * oh + oy) * ow + ox) * k;
                for ky in 0..spec.kh {
                    let iy = oy as i64 * spec.sh as i64 - pad_y + ky as i64;
                    if iy < 0 || iy >= h as i64 {
                        continue;
                    }
                    for kx in 0..spec.kw {
                        let ix = ox as i64 * spec.sw as i64 - pad_x + kx as i64;
                        if ix < 0 || ix >= w as i64 {
                            continue;
                        }
                        let dst = ((ni * h + iy as usize) * w + ix as usize) * cin;
                        let src = row + (ky * spec.kw + kx) * cin;
                        for c in 0..cin {
                            ds[dst + c] += cs[src + c];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Convolution forward: `y = act(im2col(x)·w + b)`.
///
/// `w` has shape `(kh·kw·cin, cout)`, rows ordered (ky, kx, cin).
pub fn conv_forward<S: Scalar>(
    x: &Array4<S>,
    w: &Array2<S>,
    b: &Array1<S>,
    spec: &ConvSpec,
) -> Array4<S> {
    let (n, h, wid, _) = x.dim();
    let oh = h.div_ceil(spec.sh);
    let ow = wid.div_ceil(spec.sw);
    let cols = im2col(x, spec);
    let mut out = cols.dot(w);
    for mut row in out.rows_mut() {
        for (v, bias) in row.iter_mut().zip(b.iter()) {
            *v = activate(spec.act, *v + *bias);
        }
    }
    out.into_shape_with_order((n, oh, ow, spec.cout)).expect("conv output reshape")
}

/// Convolution backward. `y` is the forward OUTPUT (post-activation).
/// Returns `d_x` and accumulates `d_w`, `d_b`.
pub fn conv_backward<S: Scalar>(
    x: &Array4<S>,
    y: &Array4<S>,
    d_y: &Array4<S>,
    w: &Array2<S>,
    d_w: &mut Array2<S>,
    d_b: &mut Array1<S>,
    spec: &ConvSpec,
) -> Array4<S> {
    let (n, h, wid, cin) = x.dim();
    let (_, oh, ow, cout) = y.dim();
    let rows = n * oh * ow;
    let mut d_z = Array2::<S>::zeros((rows, cout));
    {
        let ys = y.as_slice().unwrap();
        let ds = d_y.as_slice().unwrap();
        let dz = d_z.as_slice_mut().unwrap();
        for i in 0..rows * cout {
            dz[i] = ds[i] * activate_grad_from_output(spec.act, ys[i]);
        }
    }
    for row in d_z.rows() {
        for (db, v) in d_b.iter_mut().zip(row.iter()) {
            *db += *v;
        }
    }
    let cols = im2col(x, spec);
    d_w.scaled_add(S::one(), &cols.t().dot(&d_z));
    let d_cols = d_z.dot(&w.t());
    col2im(&d_cols, spec, (n, h, wid, cin))
}

/// Dense forward: `y = act(x·w + b)` with `x (n, in)`, `w (in, out)`.
pub fn dense_forward<S: Scalar>(
    x: &Array2<S>,
    w: &Array2<S>,
    b: &Array1<S>,
    spec: &DenseSpec,
) -> Array2<S> {
    let mut out = x.dot(w);
    for mut row in out.rows_mut() {
        for (v, bias) in row.iter_mut().zip(b.iter()) {
            *v = activate(spec.act, *v + *bias);
        }
    }
    out
}

/// Dense backward; mirrors [`conv_backward`].
pub fn dense_backward<S: Scalar>(
    x: &Array2<S>,
    y: &Array2<S>,
    d_y: &Array2<S>,
    w: &Array2<S>,
    d_w: &mut Array2<S>,
    d_b: &mut Array1<S>,
    spec: &DenseSpec,
) -> Array2<S> {
    let mut d_z = d_y.clone();
    for (dz, yv) in d_z.iter_mut().zip(y.iter()) {
        *dz = *dz * activate_grad_from_output(spec.act, *yv);
    }
    for row in d_z.rows() {
        for (db, v) in d_b.iter_mut().zip(row.iter()) {
            *db += *v;
        }
    }
    d_w.scaled_add(S::one(), &x.t().dot(&d_z));
    d_z.dot(&w.t())
}

/// 2× bilinear upsampling (half-pixel centers, clamped borders):
/// `(n, h, w, c) → (n, 2h, 2w, c)`.
pub fn upsample2x_forward<S: Scalar>(x: &Array4<S>) -> Array4<S> {
    let (n, h, w, c) = x.dim();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Array4::<S>::zeros((n, oh, ow, c));
    let xs = x.as_slice().unwrap();
    let os = out.as_slice_mut().unwrap();
    for ni in 0..n {
        for oy in 0..oh {
            let (y0, y1, wy) = lerp_coords(oy, h);
            for ox in 0..ow {
                let (x0, x1, wx) = lerp_coords(ox, w);
                let base00 = ((ni * h + y0) * w + x0) * c;
                let base01 = ((ni * h + y0) * w + x1) * c;
                let base10 = ((ni * h + y1) * w + x0) * c;
                let base11 = ((ni * h + y1) * w + x1) * c;
                let dst = ((ni * oh + oy) * ow + ox) * c;
                let w00 = S::from64((1.0 - wy) * (1.0 - wx));
                let w01 = S::from64((1.0 - wy) * wx);
                let w10 = S::from64(wy * (1.0 - wx));
                let w11 = S::from64(wy * wx);
                for ch in 0..c {
                    os[dst + ch] = xs[base00 + ch] * w00
                        + xs[base01 + ch] * w01
                        + xs[base10 + ch] * w10
                        + xs[base11 + ch] * w11;
                }
            }
        }
    }
    out
}

/// Adjoint of [`upsample2x_forward`].
pub fn upsample2x_backward<S: Scalar>(d_y: &Array4<S>, in_dims: (usize, usize, usize, usize)) -> Array4<S> {
    let (n, h, w, c) = in_dims;
    let (oh, ow) = (2 * h, 2 * w);
    let mut dx = Array4::<S>::zeros((n, h, w, c));
    let ds = d_y.as_slice().unwrap();
    let xs = dx.as_slice_mut().unwrap();
    for ni in 0..n {
        for oy in 0..oh {
            let (y0, y1, wy) = lerp_coords(oy, h);
            for ox in 0..ow {
                let (x0, x1, wx) = lerp_coords(ox, w);
                let base00 = ((ni * h + y0) * w + x0) * c;
                let base01 = ((ni * h + y0) * w + x1) * c;
                let base10 = ((ni * h + y1) * w + x0) * c;
                let base11 = ((ni * h + y1) * w + x1) * c;
                let src = ((ni * oh + oy) * ow + ox) * c;
                let w00 = S::from64((1.0 - wy) * (1.0 - wx));
                let w01 = S::from64((1.0 - wy) * wx);
                let w10 = S::from64(wy * (1.0 - wx));
                let w11 = S::from64(wy * wx);
                for ch in 0..c {
                    let g = ds[src + ch];
                    xs[base00 + ch] += g * w00;
                    xs[base01 + ch] += g * w01;
                    xs[base10 + ch] += g * w10;
                    xs[base11 + ch] += g * w11;
                }
            }
        }
    }
    dx
}

#[inline]
fn lerp_coords(out_idx: usize, in_extent: usize) -> (usize, usize, f64) {
    let src = (out_idx as f64 + 0.5) / 2.0 - 0.5;
    let clamped = src.clamp(0.0, (in_extent - 1) as f64);
    let i0 = clamped.floor() as usize;
    let i1 = (i0 + 1).min(in_extent - 1);
    (i0, i1, clamped - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_array4(rng: &mut ChaCha8Rng, dims: (usize, usize, usize, usize)) -> Array4<f64> {
        Array4::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn conv_output_shape_uses_ceiling_division() {
        let spec = ConvSpec { kh: 3, kw: 1, sh: 2, sw: 1, cin: 2, cout: 4, act: Act::Linear };
        let x = Array4::<f64>::zeros((1, 9, 5, 2));
        let w = Array2::<f64>::zeros((3 * 2, 4));
        let b = Array1::<f64>::zeros(4);
        let y = conv_forward(&x, &w, &b, &spec);
        assert_eq!(y.dim(), (1, 5, 5, 4));
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec { kh: 3, kw: 3, sh: 2, sw: 2, cin: 2, cout: 3, act: Act::LeakyRelu };
        let x = random_array4(&mut rng, (2, 7, 6, 2));
        let mut w = Array2::from_shape_fn((18, 3), |_| rng.gen_range(-0.5..0.5));
        let b = Array1::from_shape_fn(3, |_| rng.gen_range(-0.2..0.2));
        // Scalar loss: sum of outputs times fixed random weights.
        let y = conv_forward(&x, &w, &b, &spec);
        let probe = Array4::from_shape_fn(y.dim(), |_| rng.gen_range(-1.0..1.0));
        let loss = |w_: &Array2<f64>, x_: &Array4<f64>| -> f64 {
            let y = conv_forward(x_, w_, &b, &spec);
            (y * &probe).sum()
        };
        let mut d_w = Array2::<f64>::zeros(w.raw_dim());
        let mut d_b = Array1::<f64>::zeros(3);
        let d_x = conv_backward(&x, &y, &probe, &w, &mut d_w, &mut d_b, &spec);

        let h = 1e-6;
        for &(r, c) in &[(0usize, 0usize), (7, 2), (17, 1)] {
            let orig = w[[r, c]];
            w[[r, c]] = orig + h;
            let up = loss(&w, &x);
            w[[r, c]] = orig - h;
            let down = loss(&w, &x);
            w[[r, c]] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - d_w[[r, c]]).abs() < 1e-6 * (1.0 + fd.abs()), "dW: {} vs {}", fd, d_w[[r, c]]);
        }
        let mut x2 = x.clone();
        for &(n, yy, xx, ch) in &[(0usize, 0usize, 0usize, 0usize), (1, 6, 5, 1), (0, 3, 2, 1)] {
            let orig = x2[[n, yy, xx, ch]];
            x2[[n, yy, xx, ch]] = orig + h;
            let up = loss(&w, &x2);
            x2[[n, yy, xx, ch]] = orig - h;
            let down = loss(&w, &x2);
            x2[[n, yy, xx, ch]] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = d_x[[n, yy, xx, ch]];
            assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "dX: {} vs {}", fd, an);
        }
    }

    #[test]
    fn upsample_backward_is_the_exact_adjoint() {
        // <U x, y> must equal <x, Uᵀ y> for random x, y.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_array4(&mut rng, (1, 5, 4, 3));
        let y = random_array4(&mut rng, (1, 10, 8, 3));
        let ux = upsample2x_forward(&x);
        let uty = upsample2x_backward(&y, (1, 5, 4, 3));
        let lhs: f64 = (&ux * &y).sum();
        let rhs: f64 = (&x * &uty).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn upsample_preserves_constants() {
        let x = Array4::<f64>::from_elem((1, 4, 4, 2), 0.7);
        let y = upsample2x_forward(&x);
        assert_eq!(y.dim(), (1, 8, 8, 2));
        assert!(y.iter().all(|&v| (v - 0.7).abs() < 1e-12));
    }

    #[test]
    fn dense_linear_layer_is_linear() {
        let spec = DenseSpec { input: 4, output: 3, act: Act::Linear };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let b = Array1::<f64>::zeros(3);
        let x = Array2::from_shape_fn((2, 4), |_| rng.gen_range(-1.0..1.0));
        let y1 = dense_forward(&x, &w, &b, &spec);
        let y2 = dense_forward(&(&x * 2.0), &w, &b, &spec);
        for (a, b) in y1.iter().zip(y2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }
}
