//! 3×3 stride-1 cross-correlation with a two-cell zero border on every side,
//! so each layer grows the time and frequency axes by two (43×128 → 45×130).
//!
//! Implemented as im2col followed by a GEMM; backward reuses the column
//! matrix for the weight gradient and scatters the column gradient back with
//! col2im.

use super::{Tensor, TensorError};

pub const KERNEL_SIZE: usize = 3;
/// Zero cells added on each side of both spatial axes.
const PAD: usize = 2;
/// Spatial growth per convolution layer.
pub const CONV_GROWTH: usize = 2 * PAD + 1 - KERNEL_SIZE;

pub fn conv_output_dims(h: usize, w: usize) -> (usize, usize) {
    (h + CONV_GROWTH, w + CONV_GROWTH)
}

/// State kept from the forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Conv2dCache {
    cols: Vec<f64>,
    in_shape: [usize; 3],
    out_hw: (usize, usize),
}

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller's slices cover every (row, col) reachable through
    // the given strides; the asserts below pin the extents.
    assert!(a.len() >= m * k && b.len() >= k * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(input: &[f64], c_in: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let p = oh * ow;
    let mut cols = vec![0.0; c_in * KERNEL_SIZE * KERNEL_SIZE * p];
    for c in 0..c_in {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..KERNEL_SIZE {
            for kx in 0..KERNEL_SIZE {
                let row = (c * KERNEL_SIZE + ky) * KERNEL_SIZE + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                // Output x maps to input x + kx - PAD; valid x range below.
                let x_lo = PAD.saturating_sub(kx);
                let x_hi = (w + PAD - kx).min(ow);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..oh {
                    let iy = y + ky;
                    if iy < PAD || iy - PAD >= h {
                        continue;
                    }
                    let src_row = &plane[(iy - PAD) * w..(iy - PAD + 1) * w];
                    let ix0 = x_lo + kx - PAD;
                    dst[y * ow + x_lo..y * ow + x_hi]
                        .copy_from_slice(&src_row[ix0..ix0 + (x_hi - x_lo)]);
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], c_in: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    let p = oh * ow;
    let mut out = vec![0.0; c_in * h * w];
    for c in 0..c_in {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ky in 0..KERNEL_SIZE {
            for kx in 0..KERNEL_SIZE {
                let row = (c * KERNEL_SIZE + ky) * KERNEL_SIZE + kx;
                let src = &cols[row * p..(row + 1) * p];
                let x_lo = PAD.saturating_sub(kx);
                let x_hi = (w + PAD - kx).min(ow);
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..oh {
                    let iy = y + ky;
                    if iy < PAD || iy - PAD >= h {
                        continue;
                    }
                    let ix0 = x_lo + kx - PAD;
                    let dst_row = &mut plane[(iy - PAD) * w + ix0..(iy - PAD) * w + ix0 + (x_hi - x_lo)];
                    for (d, s) in dst_row.iter_mut().zip(&src[y * ow + x_lo..y * ow + x_hi]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// `input [C_in×H×W]`, `weight [C_out×C_in×3×3]`, `bias [C_out]` →
/// `[C_out×(H+2)×(W+2)]`.
pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<(Tensor, Conv2dCache), TensorError> {
    let &[c_in, h, w] = input.shape() else {
        return Err(TensorError::ShapeMismatch {
            expected: "[C, H, W]".into(),
            actual: format!("{:?}", input.shape()),
        });
    };
    let &[c_out, wc_in, kh, kw] = weight.shape() else {
        return Err(TensorError::ShapeMismatch {
            expected: "[C_out, C_in, 3, 3]".into(),
            actual: format!("{:?}", weight.shape()),
        });
    };
    if kh != KERNEL_SIZE || kw != KERNEL_SIZE {
        return Err(TensorError::ShapeMismatch {
            expected: "3x3 kernel".into(),
            actual: format!("{kh}x{kw}"),
        });
    }
    if wc_in != c_in {
        return Err(TensorError::ChannelMismatch {
            input: c_in,
            weights: wc_in,
        });
    }
    if bias.shape() != [c_out] {
        return Err(TensorError::ShapeMismatch {
            expected: format!("[{c_out}]"),
            actual: format!("{:?}", bias.shape()),
        });
    }
    let (oh, ow) = conv_output_dims(h, w);
    let p = oh * ow;
    let k = c_in * KERNEL_SIZE * KERNEL_SIZE;
    let cols = im2col(input.values(), c_in, h, w, oh, ow);

    let mut out = vec![0.0; c_out * p];
    for (o, row) in out.chunks_exact_mut(p).enumerate() {
        row.fill(bias.values()[o]);
    }
    gemm(
        c_out,
        k,
        p,
        weight.values(),
        (k as isize, 1),
        &cols,
        (p as isize, 1),
        1.0,
        &mut out,
    );
    let out = Tensor::from_vec(&[c_out, oh, ow], out)?;
    Ok((
        out,
        Conv2dCache {
            cols,
            in_shape: [c_in, h, w],
            out_hw: (oh, ow),
        },
    ))
}

/// Accumulates into `grad_weight` and `grad_bias`; returns the input
/// gradient when `want_input_grad` is set (the first layer skips it).
pub fn conv2d_backward(
    cache: &Conv2dCache,
    weight: &Tensor,
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let [c_in, h, w] = cache.in_shape;
    let (oh, ow) = cache.out_hw;
    let p = oh * ow;
    let k = c_in * KERNEL_SIZE * KERNEL_SIZE;
    let c_out = weight.shape()[0];
    assert_eq!(grad_out.len(), c_out * p, "conv2d grad_out length");
    assert_eq!(grad_weight.len(), c_out * k);
    assert_eq!(grad_bias.len(), c_out);

    for (gb, row) in grad_bias.iter_mut().zip(grad_out.chunks_exact(p)) {
        *gb += row.iter().sum::<f64>();
    }
    // dW[C_out×K] += dY[C_out×P] · colsᵀ[P×K]
    gemm(
        c_out,
        p,
        k,
        grad_out,
        (p as isize, 1),
        &cache.cols,
        (1, p as isize),
        1.0,
        grad_weight,
    );
    if !want_input_grad {
        return None;
    }
    // dcols[K×P] = Wᵀ[K×C_out] · dY[C_out×P]
    let mut dcols = vec![0.0; k * p];
    gemm(
        k,
        c_out,
        p,
        weight.values(),
        (1, k as isize),
        grad_out,
        (p as isize, 1),
        0.0,
        &mut dcols,
    );
    Some(col2im(&dcols, c_in, h, w, oh, ow))
}
