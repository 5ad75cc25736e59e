//! Cross-entropy between the 11 sigmoid outputs and a one-hot target.

use super::TensorError;

/// Probabilities are clamped to `[ε, 1-ε]` before the logarithm.
pub const LOSS_EPSILON: f64 = 1e-7;

/// How the 11 sigmoid outputs are scored against a one-hot target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CrossEntropy {
    /// `-Σ tᵢ ln(clamp(pᵢ / Σⱼ pⱼ))`: outputs are rescaled to sum to one, so
    /// raising a wrong class's output raises the loss.
    SumNormalized,
    /// `-Σ tᵢ ln(clamp(pᵢ))`: only the target entries contribute.
    Literal,
    /// `-Σ [tᵢ ln(clamp(pᵢ)) + (1-tᵢ) ln(clamp(1-pᵢ))]`: every output is
    /// an independent binary decision. The default: of the three it is the
    /// only one whose minimum separates the classes when some outputs never
    /// occur as targets.
    #[default]
    Binary,
}

impl CrossEntropy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SumNormalized => "normalized",
            Self::Literal => "literal",
            Self::Binary => "binary",
        }
    }
}

impl std::str::FromStr for CrossEntropy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "normalized" => Ok(Self::SumNormalized),
            "literal" => Ok(Self::Literal),
            "binary" => Ok(Self::Binary),
            other => Err(format!("unknown loss form '{other}'")),
        }
    }
}

fn clamp(p: f64) -> (f64, bool) {
    if p < LOSS_EPSILON {
        (LOSS_EPSILON, true)
    } else if p > 1.0 - LOSS_EPSILON {
        (1.0 - LOSS_EPSILON, true)
    } else {
        (p, false)
    }
}

/// Exactly one entry equal to 1, the rest 0.
pub fn validate_one_hot(target: &[f64]) -> Result<usize, TensorError> {
    let mut hot = None;
    for (i, &t) in target.iter().enumerate() {
        if t == 1.0 && hot.is_none() {
            hot = Some(i);
        } else if t != 0.0 {
            return Err(TensorError::NotOneHot);
        }
    }
    hot.ok_or(TensorError::NotOneHot)
}

fn check(pred: &[f64], target: &[f64]) -> Result<(), TensorError> {
    if pred.len() != target.len() {
        return Err(TensorError::ShapeMismatch {
            expected: format!("{} targets", pred.len()),
            actual: format!("{}", target.len()),
        });
    }
    Ok(())
}

pub fn categorical_cross_entropy(pred: &[f64], target: &[f64], form: CrossEntropy) -> Result<f64, TensorError> {
    check(pred, target)?;
    if form == CrossEntropy::Binary {
        return Ok(-pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let p = clamp(p).0;
                t * p.ln() + (1.0 - t) * (1.0 - p).ln()
            })
            .sum::<f64>());
    }
    let total: f64 = match form {
        CrossEntropy::SumNormalized => pred.iter().sum(),
        _ => 1.0,
    };
    Ok(-pred
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| t * clamp(p / total).0.ln())
        .sum::<f64>())
}

/// `dL/dp` for the given predictions. Clamped entries contribute no gradient.
pub fn categorical_cross_entropy_grad(pred: &[f64], target: &[f64], form: CrossEntropy) -> Result<Vec<f64>, TensorError> {
    check(pred, target)?;
    match form {
        CrossEntropy::Literal => Ok(pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| if t == 0.0 || clamp(p).1 { 0.0 } else { -t / p })
            .collect()),
        CrossEntropy::Binary => Ok(pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| if clamp(p).1 { 0.0 } else { -t / p + (1.0 - t) / (1.0 - p) })
            .collect()),
        CrossEntropy::SumNormalized => {
            let total: f64 = pred.iter().sum();
            // L = -Σ_{unclamped} tᵢ (ln pᵢ - ln S)
            let live_mass: f64 = pred
                .iter()
                .zip(target)
                .filter(|(&p, &t)| t != 0.0 && !clamp(p / total).1)
                .map(|(_, &t)| t)
                .sum();
            Ok(pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| {
                    let own = if t == 0.0 || clamp(p / total).1 { 0.0 } else { -t / p };
                    own + live_mass / total
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn one_hot(k: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn certain_prediction_has_zero_loss() {
        let mut p = vec![1e-12; 11];
        p[3] = 1.0;
        let l = categorical_cross_entropy(&p, &one_hot(3, 11), CrossEntropy::Literal).unwrap();
        assert!(l.abs() < 1e-6);
        let l = categorical_cross_entropy(&p, &one_hot(3, 11), CrossEntropy::SumNormalized).unwrap();
        assert!(l.abs() < 1e-6);
    }

    #[test]
    fn inverse_e_gives_unit_loss() {
        let mut p = vec![0.5; 11];
        p[0] = (-1.0f64).exp();
        let l = categorical_cross_entropy(&p, &one_hot(0, 11), CrossEntropy::Literal).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        // Normalized form: true share e⁻¹ of the total mass.
        let mut p = vec![0.0; 11];
        p[0] = 0.2;
        let rest = 0.2 * ((1.0f64).exp() - 1.0) / 10.0;
        p.iter_mut().skip(1).for_each(|v| *v = rest);
        let l = categorical_cross_entropy(&p, &one_hot(0, 11), CrossEntropy::SumNormalized).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_summation() {
        let mut r = rng::seeded(5);
        for _ in 0..100 {
            let p: Vec<f64> = (0..11).map(|_| r.gen_range(0.01..0.99)).collect();
            let t: Vec<f64> = (0..11).map(|_| r.gen_range(0.0..1.0)).collect();
            let s: f64 = p.iter().sum();
            let mut lit = 0.0;
            let mut norm = 0.0;
            let mut bin = 0.0;
            for i in 0..11 {
                lit -= t[i] * p[i].ln();
                norm -= t[i] * (p[i] / s).ln();
                bin -= t[i] * p[i].ln() + (1.0 - t[i]) * (1.0 - p[i]).ln();
            }
            assert!((categorical_cross_entropy(&p, &t, CrossEntropy::Binary).unwrap() - bin).abs() < 1e-12);
            assert!((categorical_cross_entropy(&p, &t, CrossEntropy::Literal).unwrap() - lit).abs() < 1e-12);
            assert!((categorical_cross_entropy(&p, &t, CrossEntropy::SumNormalized).unwrap() - norm).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_is_finite_at_the_extremes() {
        let p = [0.0, 1.0, 0.0];
        for form in [CrossEntropy::Literal, CrossEntropy::SumNormalized, CrossEntropy::Binary] {
            assert!(categorical_cross_entropy(&p, &one_hot(0, 3), form).unwrap().is_finite());
            assert!(categorical_cross_entropy_grad(&p, &one_hot(0, 3), form).unwrap().iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn literal_form_is_minimized_by_saturating_every_output() {
        let t = one_hot(2, 11);
        let all_ones = vec![1.0; 11];
        assert!(categorical_cross_entropy(&all_ones, &t, CrossEntropy::Literal).unwrap() < 1e-6);
        assert!(categorical_cross_entropy(&all_ones, &t, CrossEntropy::Binary).unwrap() > 100.0);
        let mut sharp = vec![1e-9; 11];
        sharp[2] = 1.0 - 1e-9;
        assert!(categorical_cross_entropy(&sharp, &t, CrossEntropy::Binary).unwrap() < 1e-5);
    }

    #[test]
    fn one_hot_validation() {
        assert_eq!(validate_one_hot(&one_hot(4, 11)), Ok(4));
        assert_eq!(validate_one_hot(&[0.0, 0.0]), Err(TensorError::NotOneHot));
        assert_eq!(validate_one_hot(&[1.0, 1.0]), Err(TensorError::NotOneHot));
        assert_eq!(validate_one_hot(&[0.5, 0.5]), Err(TensorError::NotOneHot));
    }

    #[test]
    fn shape_mismatch() {
        assert!(categorical_cross_entropy(&[0.5; 3], &[1.0, 0.0], CrossEntropy::Literal).is_err());
    }
}
