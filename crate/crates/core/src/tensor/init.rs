use rand::Rng as _;

use super::Tensor;
use crate::rng::Rng;

/// `√(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fans(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [n] => (n, n),
        [out, inp] => (inp, out),
        [out, inp, ref rest @ ..] => {
            let receptive: usize = rest.iter().product();
            (inp * receptive, out * receptive)
        }
        [] => (1, 1),
    }
}

/// Uniform samples in `[-L, L]`. Fans follow the weight layout: `[out, in]`
/// for dense layers, `[C_out, C_in, kh, kw]` for convolutions (receptive
/// field counted on both sides). Biases are never drawn from here.
pub fn glorot_uniform_init(shape: &[usize], rng: &mut Rng) -> Tensor {
    let (fan_in, fan_out) = fans(shape);
    let limit = glorot_limit(fan_in, fan_out);
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::from_vec(shape, values).expect("shape product")
}
