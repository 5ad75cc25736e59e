//! Max pooling: 3×3 windows with stride 3 (no padding), and global max pooling.
//!
//! Both record the flat index of the winning element so backward can route
//! the gradient. Ties go to the first maximal element in row-major order.

use super::{Tensor, TensorError};

pub const POOL_SIZE: usize = 3;
pub const POOL_STRIDE: usize = 3;

pub fn pool_output_dim(n: usize) -> usize {
    (n - POOL_SIZE) / POOL_STRIDE + 1
}

/// Argmax routing table: one input index per output element.
#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<usize>,
    input_len: usize,
}

fn chw(t: &Tensor) -> Result<(usize, usize, usize), TensorError> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(TensorError::ShapeMismatch {
            expected: "[C, H, W]".into(),
            actual: format!("{:?}", t.shape()),
        }),
    }
}

pub fn maxpool2d_forward(input: &Tensor) -> Result<(Tensor, PoolCache), TensorError> {
    let (c, h, w) = chw(input)?;
    if h < POOL_SIZE || w < POOL_SIZE {
        return Err(TensorError::PoolTooSmall(h, w));
    }
    let (oh, ow) = (pool_output_dim(h), pool_output_dim(w));
    let x = input.values();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * POOL_STRIDE * w + ox * POOL_STRIDE;
                for dy in 0..POOL_SIZE {
                    for dx in 0..POOL_SIZE {
                        let idx = base + (oy * POOL_STRIDE + dy) * w + ox * POOL_STRIDE + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c, oh, ow], out)?,
        PoolCache {
            argmax,
            input_len: x.len(),
        },
    ))
}

pub fn maxpool2d_backward(cache: &PoolCache, grad_out: &[f64]) -> Vec<f64> {
    route(cache, grad_out)
}

pub fn global_max_pool_forward(input: &Tensor) -> Result<(Tensor, PoolCache), TensorError> {
    let (c, h, w) = chw(input)?;
    if h == 0 || w == 0 {
        return Err(TensorError::ShapeMismatch {
            expected: "non-empty spatial dims".into(),
            actual: format!("{h}x{w}"),
        });
    }
    let plane = h * w;
    let x = input.values();
    let mut out = Vec::with_capacity(c);
    let mut argmax = Vec::with_capacity(c);
    for ch in 0..c {
        let base = ch * plane;
        let mut best = base;
        for idx in base + 1..base + plane {
            if x[idx] > x[best] {
                best = idx;
            }
        }
        out.push(x[best]);
        argmax.push(best);
    }
    Ok((
        Tensor::from_vec(&[c], out)?,
        PoolCache {
            argmax,
            input_len: x.len(),
        },
    ))
}

pub fn global_max_pool_backward(cache: &PoolCache, grad_out: &[f64]) -> Vec<f64> {
    route(cache, grad_out)
}

fn route(cache: &PoolCache, grad_out: &[f64]) -> Vec<f64> {
    assert_eq!(grad_out.len(), cache.argmax.len(), "pool grad_out length");
    let mut grad = vec![0.0; cache.input_len];
    for (&idx, &g) in cache.argmax.iter().zip(grad_out) {
        grad[idx] += g;
    }
    grad
}
