use super::{Parameter, TensorError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam update using the parameter's current gradient. The
/// gradient is left in place; callers zero it before the next accumulation.
pub fn adam_step(param: &mut Parameter, cfg: &AdamConfig) -> Result<(), TensorError> {
    let Parameter {
        tensor,
        adam_m,
        adam_v,
        step_count,
    } = param;
    let grad = tensor.grad.as_ref().ok_or(TensorError::MissingGrad)?;
    *step_count += 1;
    let t = *step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((w, &g), m), v) in tensor.values.iter_mut().zip(grad).zip(adam_m.iter_mut()).zip(adam_v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}
