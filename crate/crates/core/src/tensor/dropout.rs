//! Inverted dropout: survivors are scaled by `1/(1-rate)` at training time so
//! inference is the identity.

use rand::Rng as _;

use super::{Tensor, TensorError};
use crate::rng::Rng;

/// Per-element multiplier applied in the forward pass (0 or `1/(1-rate)`).
#[derive(Debug, Clone)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn zero_fraction(&self) -> f64 {
        match &self.0 {
            Some(m) if !m.is_empty() => m.iter().filter(|&&v| v == 0.0).count() as f64 / m.len() as f64,
            _ => 0.0,
        }
    }
}

pub fn dropout_forward(
    input: &Tensor,
    rate: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<(Tensor, DropoutMask), TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::DropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), DropoutMask(None)));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out = input.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::from_vec(input.shape(), out)?, DropoutMask(Some(mask))))
}

pub fn dropout_backward(mask: &DropoutMask, grad_out: &[f64]) -> Vec<f64> {
    match &mask.0 {
        Some(m) => grad_out.iter().zip(m).map(|(g, m)| g * m).collect(),
        None => grad_out.to_vec(),
    }
}
