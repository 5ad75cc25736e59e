//! Hidden-layer nonlinearities and the output sigmoid.
//!
//! Rectifier derivatives at exactly zero take the positive branch (1).

use std::fmt;
use std::str::FromStr;

use super::{Tensor, TensorError};

/// Hidden-layer activation. `PRelu` slopes live in the model's parameter
/// list (one per channel), not in the kind itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Tanh,
    Relu,
    LeakyRelu { alpha: f64 },
    PRelu,
}

impl ActivationKind {
    pub fn leaky(alpha: f64) -> Result<Self, TensorError> {
        if alpha > 0.0 && alpha < 1.0 {
            Ok(Self::LeakyRelu { alpha })
        } else {
            Err(TensorError::LeakySlope(alpha))
        }
    }

    /// Whether the activation carries learnable per-channel slopes.
    pub fn is_parametric(&self) -> bool {
        matches!(self, Self::PRelu)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Tanh => write!(f, "tanh"),
            Self::Relu => write!(f, "relu"),
            Self::LeakyRelu { alpha } => write!(f, "lrelu({alpha})"),
            Self::PRelu => write!(f, "prelu"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = String;

    /// Accepts `tanh`, `relu`, `prelu`, `lrelu` (slope 0.33) and `lrelu(α)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "tanh" => Ok(Self::Tanh),
            "relu" => Ok(Self::Relu),
            "prelu" => Ok(Self::PRelu),
            "lrelu" => Ok(Self::LeakyRelu { alpha: 0.33 }),
            _ => {
                let alpha = s
                    .strip_prefix("lrelu(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|a| a.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown activation '{s}'"))?;
                Self::leaky(alpha).map_err(|e| e.to_string())
            }
        }
    }
}

/// Channel layout: the leading axis indexes channels (`[C×H×W]` or `[N]`).
fn channel_span(z: &Tensor) -> (usize, usize) {
    let c = z.shape().first().copied().unwrap_or(1).max(1);
    (c, z.len() / c)
}

fn check_alphas(z: &Tensor, alphas: Option<&[f64]>) -> Result<(), TensorError> {
    let (c, _) = channel_span(z);
    match alphas {
        Some(a) if a.len() == c => Ok(()),
        Some(a) => Err(TensorError::ShapeMismatch {
            expected: format!("{c} prelu slopes"),
            actual: format!("{}", a.len()),
        }),
        None => Err(TensorError::ShapeMismatch {
            expected: format!("{c} prelu slopes"),
            actual: "none".into(),
        }),
    }
}

pub fn activation_forward(z: &Tensor, kind: ActivationKind, alphas: Option<&[f64]>) -> Result<Tensor, TensorError> {
    let mut out = z.values().to_vec();
    match kind {
        ActivationKind::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
        ActivationKind::Relu => out.iter_mut().for_each(|v| *v = v.max(0.0)),
        ActivationKind::LeakyRelu { alpha } => out.iter_mut().for_each(|v| {
            if *v < 0.0 {
                *v *= alpha
            }
        }),
        ActivationKind::PRelu => {
            check_alphas(z, alphas)?;
            let alphas = alphas.unwrap_or_default();
            let (_, span) = channel_span(z);
            for (chunk, &a) in out.chunks_exact_mut(span).zip(alphas) {
                chunk.iter_mut().filter(|v| **v < 0.0).for_each(|v| *v *= a);
            }
        }
    }
    Tensor::from_vec(z.shape(), out)
}

/// Gradient with respect to the pre-activation `z`. For `PRelu`,
/// `grad_alpha[i] += Σ_{z<0} z·g` over channel `i`.
pub fn activation_backward(
    z: &Tensor,
    kind: ActivationKind,
    alphas: Option<&[f64]>,
    grad_out: &[f64],
    grad_alpha: Option<&mut [f64]>,
) -> Vec<f64> {
    let zs = z.values();
    assert_eq!(zs.len(), grad_out.len(), "activation grad_out length");
    match kind {
        ActivationKind::Tanh => zs
            .iter()
            .zip(grad_out)
            .map(|(v, g)| {
                let t = v.tanh();
                g * (1.0 - t * t)
            })
            .collect(),
        ActivationKind::Relu => zs
            .iter()
            .zip(grad_out)
            .map(|(&v, &g)| if v >= 0.0 { g } else { 0.0 })
            .collect(),
        ActivationKind::LeakyRelu { alpha } => zs
            .iter()
            .zip(grad_out)
            .map(|(&v, &g)| if v >= 0.0 { g } else { alpha * g })
            .collect(),
        ActivationKind::PRelu => {
            let alphas = alphas.expect("prelu backward needs slopes");
            let (_, span) = channel_span(z);
            let mut grad = Vec::with_capacity(zs.len());
            let mut ga_local = vec![0.0; alphas.len()];
            for (ch, (zc, gc)) in zs.chunks_exact(span).zip(grad_out.chunks_exact(span)).enumerate() {
                let a = alphas[ch];
                for (&v, &g) in zc.iter().zip(gc) {
                    if v >= 0.0 {
                        grad.push(g);
                    } else {
                        grad.push(a * g);
                        ga_local[ch] += v * g;
                    }
                }
            }
            if let Some(ga) = grad_alpha {
                ga.iter_mut().zip(ga_local).for_each(|(d, s)| *d += s);
            }
            grad
        }
    }
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(z: &Tensor) -> Tensor {
    let out = z.values().iter().map(|&v| sigmoid_scalar(v)).collect();
    Tensor::from_vec(z.shape(), out).expect("same shape")
}
