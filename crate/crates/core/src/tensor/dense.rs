use super::{Tensor, TensorError};

/// Affine map `W·x + b` with `W [N_out×N_in]`.
pub fn dense_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, TensorError> {
    let &[n_out, n_in] = weight.shape() else {
        return Err(TensorError::ShapeMismatch {
            expected: "[N_out, N_in]".into(),
            actual: format!("{:?}", weight.shape()),
        });
    };
    if input.len() != n_in {
        return Err(TensorError::ShapeMismatch {
            expected: format!("{n_in} inputs"),
            actual: format!("{}", input.len()),
        });
    }
    if bias.shape() != [n_out] {
        return Err(TensorError::ShapeMismatch {
            expected: format!("[{n_out}]"),
            actual: format!("{:?}", bias.shape()),
        });
    }
    let x = input.values();
    let out = weight
        .values()
        .chunks_exact(n_in)
        .zip(bias.values())
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect();
    Tensor::from_vec(&[n_out], out)
}

/// Accumulates `g⊗x` into `grad_weight` and `g` into `grad_bias`; returns `Wᵀg`.
pub fn dense_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Vec<f64> {
    let n_in = input.len();
    let x = input.values();
    let mut grad_in = vec![0.0; n_in];
    for (((&g, w_row), gw_row), gb) in grad_out
        .iter()
        .zip(weight.values().chunks_exact(n_in))
        .zip(grad_weight.chunks_exact_mut(n_in))
        .zip(grad_bias.iter_mut())
    {
        *gb += g;
        if g == 0.0 {
            continue;
        }
        for ((gw, &xv), (gi, &w)) in gw_row.iter_mut().zip(x).zip(grad_in.iter_mut().zip(w_row)) {
            *gw += g * xv;
            *gi += g * w;
        }
    }
    grad_in
}
