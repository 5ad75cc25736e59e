//! Central finite-difference checks of the analytic backward passes.
//!
//! Each probe wires one forward/backward pair to a scalar objective
//! `Σ rᵢ·outᵢ` with a fixed random projection `r`, so the analytic gradient
//! is simply the backward pass fed with `r`.

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::*;
use crate::rng;

/// Gradients whose magnitude is below this are compared absolutely against it.
pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Perturbs every coordinate of every variable by `±h` and returns the
/// largest relative error between `(f(x+h) - f(x-h)) / 2h` and `analytic`.
pub fn gradient_check<F>(point: &mut [Vec<f64>], analytic: &[Vec<f64>], h: f64, objective: F) -> f64
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let coords: Vec<(usize, usize)> = point
        .iter()
        .enumerate()
        .flat_map(|(v, xs)| (0..xs.len()).map(move |i| (v, i)))
        .collect();
    gradient_check_at(point, analytic, h, &coords, objective)
}

/// As [`gradient_check`] but only at the listed `(variable, index)` pairs.
pub fn gradient_check_at<F>(
    point: &mut [Vec<f64>],
    analytic: &[Vec<f64>],
    h: f64,
    coords: &[(usize, usize)],
    mut objective: F,
) -> f64
where
    F: FnMut(&[Vec<f64>]) -> f64,
{
    let mut worst = 0.0f64;
    for &(v, i) in coords {
        let orig = point[v][i];
        point[v][i] = orig + h;
        let up = objective(point);
        point[v][i] = orig - h;
        let down = objective(point);
        point[v][i] = orig;
        let numeric = (up - down) / (2.0 * h);
        worst = worst.max(relative_error(analytic[v][i], numeric));
    }
    worst
}

/// The operations that can be checked in isolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    Conv2d,
    MaxPool2d,
    GlobalMaxPool,
    Dense,
    Activation(ActivationKind),
    Sigmoid,
    Loss(CrossEntropy),
}

impl std::fmt::Display for Probe {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Probe::Conv2d => write!(f, "conv2d"),
            Probe::MaxPool2d => write!(f, "maxpool2d"),
            Probe::GlobalMaxPool => write!(f, "global_max_pool"),
            Probe::Dense => write!(f, "dense"),
            Probe::Activation(k) => write!(f, "activation {k}"),
            Probe::Sigmoid => write!(f, "sigmoid"),
            Probe::Loss(form) => write!(f, "cross-entropy ({})", form.name()),
        }
    }
}

fn uniform(n: usize, lo: f64, hi: f64, r: &mut rng::Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

/// Values at least `margin` away from zero, either sign.
fn off_kink(n: usize, margin: f64, r: &mut rng::Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let m = r.gen_range(margin..2.0);
            if r.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect()
}

/// Distinct values spaced far more than `2h` apart, so no perturbation can
/// change a pooling argmax.
fn well_separated(n: usize, r: &mut rng::Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    v.shuffle(r);
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn t(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::from_vec(shape, v.to_vec()).expect("probe shape")
}

/// Runs the finite-difference check for one operation with step `h`.
pub fn check_probe(probe: Probe, seed: u64, h: f64) -> f64 {
    let mut r = rng::seeded(seed);
    match probe {
        Probe::Conv2d => {
            let (xs, ws, bs) = ([2, 4, 5], [3, 2, 3, 3], [3]);
            let mut point = vec![uniform(40, -1.0, 1.0, &mut r), uniform(54, -1.0, 1.0, &mut r), uniform(3, -1.0, 1.0, &mut r)];
            let proj = uniform(3 * 6 * 7, -1.0, 1.0, &mut r);
            let (x, w, b) = (t(&xs, &point[0]), t(&ws, &point[1]), t(&bs, &point[2]));
            let (_, cache) = conv2d_forward(&x, &w, &b).unwrap();
            let mut gw = vec![0.0; 54];
            let mut gb = vec![0.0; 3];
            let gx = conv2d_backward(&cache, &w, &proj, &mut gw, &mut gb, true).unwrap();
            gradient_check(&mut point, &[gx, gw, gb], h, |p| {
                let (out, _) = conv2d_forward(&t(&xs, &p[0]), &t(&ws, &p[1]), &t(&bs, &p[2])).unwrap();
                dot(out.values(), &proj)
            })
        }
        Probe::MaxPool2d => {
            let shape = [2, 7, 8];
            let mut point = vec![well_separated(112, &mut r)];
            let (out, cache) = maxpool2d_forward(&t(&shape, &point[0])).unwrap();
            let proj = uniform(out.len(), -1.0, 1.0, &mut r);
            let gx = maxpool2d_backward(&cache, &proj);
            gradient_check(&mut point, &[gx], h, |p| dot(maxpool2d_forward(&t(&shape, &p[0])).unwrap().0.values(), &proj))
        }
        Probe::GlobalMaxPool => {
            let shape = [3, 4, 5];
            let mut point = vec![well_separated(60, &mut r)];
            let (_, cache) = global_max_pool_forward(&t(&shape, &point[0])).unwrap();
            let proj = uniform(3, -1.0, 1.0, &mut r);
            let gx = global_max_pool_backward(&cache, &proj);
            gradient_check(&mut point, &[gx], h, |p| dot(global_max_pool_forward(&t(&shape, &p[0])).unwrap().0.values(), &proj))
        }
        Probe::Dense => {
            let (n_in, n_out) = (6, 4);
            let mut point = vec![
                uniform(n_in, -1.0, 1.0, &mut r),
                uniform(n_in * n_out, -1.0, 1.0, &mut r),
                uniform(n_out, -1.0, 1.0, &mut r),
            ];
            let proj = uniform(n_out, -1.0, 1.0, &mut r);
            let x = t(&[n_in], &point[0]);
            let w = t(&[n_out, n_in], &point[1]);
            let mut gw = vec![0.0; n_in * n_out];
            let mut gb = vec![0.0; n_out];
            let gx = dense_backward(&x, &w, &proj, &mut gw, &mut gb);
            gradient_check(&mut point, &[gx, gw, gb], h, |p| {
                let out = dense_forward(&t(&[n_in], &p[0]), &t(&[n_out, n_in], &p[1]), &t(&[n_out], &p[2])).unwrap();
                dot(out.values(), &proj)
            })
        }
        Probe::Activation(kind) => {
            let shape = [3, 4, 4];
            let z = off_kink(48, 0.05, &mut r);
            let proj = uniform(48, -1.0, 1.0, &mut r);
            if kind.is_parametric() {
                let mut point = vec![z, uniform(3, 0.05, 0.5, &mut r)];
                let mut ga = vec![0.0; 3];
                let gz = activation_backward(&t(&shape, &point[0]), kind, Some(&point[1]), &proj, Some(&mut ga));
                gradient_check(&mut point, &[gz, ga], h, |p| {
                    dot(activation_forward(&t(&shape, &p[0]), kind, Some(&p[1])).unwrap().values(), &proj)
                })
            } else {
                let mut point = vec![z];
                let gz = activation_backward(&t(&shape, &point[0]), kind, None, &proj, None);
                gradient_check(&mut point, &[gz], h, |p| {
                    dot(activation_forward(&t(&shape, &p[0]), kind, None).unwrap().values(), &proj)
                })
            }
        }
        Probe::Sigmoid => {
            let mut point = vec![uniform(11, -4.0, 4.0, &mut r)];
            let proj = uniform(11, -1.0, 1.0, &mut r);
            let y = sigmoid(&t(&[11], &point[0]));
            let gz: Vec<f64> = y.values().iter().zip(&proj).map(|(s, g)| g * s * (1.0 - s)).collect();
            gradient_check(&mut point, &[gz], h, |p| dot(sigmoid(&t(&[11], &p[0])).values(), &proj))
        }
        Probe::Loss(form) => {
            let mut point = vec![uniform(11, 0.05, 0.95, &mut r)];
            let k = r.gen_range(0..11);
            let target: Vec<f64> = (0..11).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
            let g = categorical_cross_entropy_grad(&point[0], &target, form).unwrap();
            gradient_check(&mut point, &[g], h, |p| categorical_cross_entropy(&p[0], &target, form).unwrap())
        }
    }
}

/// Every probe the network relies on.
pub fn all_probes() -> Vec<Probe> {
    vec![
        Probe::Conv2d,
        Probe::MaxPool2d,
        Probe::GlobalMaxPool,
        Probe::Dense,
        Probe::Activation(ActivationKind::Tanh),
        Probe::Activation(ActivationKind::Relu),
        Probe::Activation(ActivationKind::LeakyRelu { alpha: 0.33 }),
        Probe::Activation(ActivationKind::LeakyRelu { alpha: 0.01 }),
        Probe::Activation(ActivationKind::PRelu),
        Probe::Sigmoid,
        Probe::Loss(CrossEntropy::SumNormalized),
        Probe::Loss(CrossEntropy::Literal),
        Probe::Loss(CrossEntropy::Binary),
    ]
}
