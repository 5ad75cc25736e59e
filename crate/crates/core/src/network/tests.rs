use rand::Rng as _;

use super::*;
use crate::tensor::gradcheck::relative_error;

fn lrelu() -> ActivationKind {
    ActivationKind::LeakyRelu { alpha: 0.33 }
}

fn random_input(frames: usize, seed: u64) -> Tensor {
    let mut r = rng::seeded(seed);
    let v = (0..frames * MEL_BINS).map(|_| r.gen_range(-1.0..1.0)).collect();
    Tensor::from_vec(&[1, frames, MEL_BINS], v).unwrap()
}

#[test]
fn shape_table_for_one_second_windows() {
    let spec = ArchitectureSpec::new(lrelu(), 43).unwrap();
    let expected: Vec<Vec<usize>> = vec![
        vec![1, 43, 128],
        vec![32, 45, 130],
        vec![32, 47, 132],
        vec![32, 15, 44],
        vec![32, 15, 44],
        vec![64, 17, 46],
        vec![64, 19, 48],
        vec![64, 6, 16],
        vec![64, 6, 16],
        vec![128, 8, 18],
        vec![128, 10, 20],
        vec![128, 3, 6],
        vec![128, 3, 6],
        vec![256, 5, 8],
        vec![256, 7, 10],
        vec![256, 1, 1],
        vec![1024],
        vec![1024],
        vec![11],
    ];
    let table: Vec<Vec<usize>> = spec.shape_trace().into_iter().map(|r| r.shape).collect();
    assert_eq!(table, expected);

    let model = Model::build(lrelu(), 43, 7).unwrap();
    let trace = model.forward_trace(&random_input(43, 1), false, &mut rng::seeded(0)).unwrap();
    assert_eq!(trace.shapes, expected);
}

#[test]
fn short_windows_trace_through_the_network() {
    let spec = ArchitectureSpec::new(lrelu(), 21).unwrap();
    let rows = spec.shape_trace();
    assert_eq!(rows[3].shape, vec![32, 8, 44]);
    assert_eq!(rows[7].shape, vec![64, 4, 16]);
    assert_eq!(rows[11].shape, vec![128, 2, 6]);
    assert_eq!(rows[14].shape, vec![256, 6, 10]);
    for frames in [1, 21, 64, 129] {
        assert!(ArchitectureSpec::new(lrelu(), frames).is_ok(), "{frames}");
    }
    assert!(matches!(ArchitectureSpec::new(lrelu(), 0), Err(ModelError::WindowTooShort(0))));
}

#[test]
fn parameter_count_matches_layer_arithmetic() {
    // conv: c_out·(c_in·9 + 1); dense: n_out·(n_in + 1)
    let convs = [(1, 32), (32, 32), (32, 64), (64, 64), (64, 128), (128, 128), (128, 256), (256, 256)];
    let conv_total: usize = convs.iter().map(|(i, o)| o * (i * 9 + 1)).sum();
    let dense_total = 1024 * (256 + 1) + 11 * (1024 + 1);
    let expected = conv_total + dense_total;
    assert_eq!(expected, 1_446_123);
    for frames in [21, 43, 129] {
        assert_eq!(ArchitectureSpec::new(lrelu(), frames).unwrap().parameter_count(), expected);
        assert_eq!(ArchitectureSpec::new(ActivationKind::Relu, frames).unwrap().parameter_count(), expected);
    }
    let slopes: usize = convs.iter().map(|(_, o)| o).sum::<usize>() + 1024;
    assert_eq!(ArchitectureSpec::new(ActivationKind::PRelu, 43).unwrap().parameter_count(), expected + slopes);
}

#[test]
fn same_seed_same_model() {
    let a = Model::build(lrelu(), 43, 42).unwrap();
    let b = Model::build(lrelu(), 43, 42).unwrap();
    let c = Model::build(lrelu(), 43, 43).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let x = random_input(43, 3);
    let pa = a.forward(&x, false, &mut rng::seeded(0)).unwrap();
    let pb = b.forward(&x, false, &mut rng::seeded(99)).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(pa.len(), 11);
    assert!(pa.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn initial_biases_zero_and_weights_bounded() {
    let model = Model::build(ActivationKind::PRelu, 43, 5).unwrap();
    for (shape, p) in model.spec.parameter_shapes().iter().zip(&model.parameters) {
        assert_eq!(p.shape(), shape.as_slice());
    }
    // conv1: weight, bias, slopes
    assert!(model.parameters[1].values().iter().all(|&b| b == 0.0));
    assert!(model.parameters[2].values().iter().all(|&a| a == PRELU_INIT));
    let limit = (6.0f64 / (9.0 + 32.0 * 9.0)).sqrt();
    assert!(model.parameters[0].values().iter().all(|w| w.abs() <= limit));
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = Model::build(lrelu(), 43, 1).unwrap();
    let err = model.forward(&random_input(42, 0), false, &mut rng::seeded(0)).unwrap_err();
    assert!(matches!(err, ModelError::InputShape { .. }));
}

// Naive direct-loop reference network, written without im2col or caches.

fn naive_conv(x: &[f64], c_in: usize, h: usize, w: usize, weight: &[f64], bias: &[f64]) -> (Vec<f64>, usize, usize) {
    let c_out = bias.len();
    let (ho, wo) = (h + 2, w + 2);
    let mut out = vec![0.0; c_out * ho * wo];
    for o in 0..c_out {
        for y in 0..ho {
            for xx in 0..wo {
                let mut acc = bias[o];
                for i in 0..c_in {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (sy, sx) = (y as isize + ky as isize - 2, xx as isize + kx as isize - 2);
                            if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                                acc += weight[((o * c_in + i) * 3 + ky) * 3 + kx] * x[(i * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                }
                out[(o * ho + y) * wo + xx] = acc;
            }
        }
    }
    (out, ho, wo)
}

fn naive_pool(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (ho, wo) = ((h - 3) / 3 + 1, (w - 3) / 3 + 1);
    let mut out = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for y in 0..ho {
            for xx in 0..wo {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..3 {
                    for dx in 0..3 {
                        m = m.max(x[(ch * h + 3 * y + dy) * w + 3 * xx + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    (out, ho, wo)
}

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.33 * v
    }
}

fn naive_forward(model: &Model, input: &[f64], frames: usize) -> Vec<f64> {
    let p = |i: usize| model.parameters[i].values();
    let (mut x, mut c, mut h, mut w) = (input.to_vec(), 1, frames, MEL_BINS);
    for layer in 0..8 {
        let (y, ho, wo) = naive_conv(&x, c, h, w, p(2 * layer), p(2 * layer + 1));
        x = y.into_iter().map(leaky).collect();
        (c, h, w) = (p(2 * layer + 1).len(), ho, wo);
        if layer % 2 == 1 && layer < 7 {
            (x, h, w) = naive_pool(&x, c, h, w);
        }
    }
    let pooled: Vec<f64> = x.chunks(h * w).map(|ch| ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max)).collect();
    let hidden: Vec<f64> = (0..1024)
        .map(|j| leaky(p(17)[j] + (0..256).map(|k| p(16)[j * 256 + k] * pooled[k]).sum::<f64>()))
        .collect();
    (0..11)
        .map(|j| {
            let z = p(19)[j] + (0..1024).map(|k| p(18)[j * 1024 + k] * hidden[k]).sum::<f64>();
            1.0 / (1.0 + (-z).exp())
        })
        .collect()
}

#[test]
fn forward_matches_naive_reference() {
    let frames = 4;
    let mut model = Model::build(lrelu(), frames, 11).unwrap();
    let mut r = rng::seeded(12);
    for i in [1, 3, 5, 7, 9, 11, 13, 15, 17, 19] {
        model.parameters[i].tensor.values_mut().iter_mut().for_each(|b| *b = r.gen_range(-0.1..0.1));
    }
    for (seed, input) in [(0, Tensor::zeros(&[1, frames, MEL_BINS])), (1, random_input(frames, 13))] {
        let fast = model.forward(&input, false, &mut rng::seeded(seed)).unwrap();
        let slow = naive_forward(&model, input.values(), frames);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn inference_ignores_the_generator_but_training_uses_it() {
    let model = Model::build(lrelu(), 21, 2).unwrap();
    let x = random_input(21, 4);
    let a = model.forward(&x, true, &mut rng::seeded(1)).unwrap();
    let b = model.forward(&x, true, &mut rng::seeded(1)).unwrap();
    let c = model.forward(&x, true, &mut rng::seeded(2)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

/// Finite differences through the full network on a sample of coordinates
/// from every parameter tensor, with dropout masks held fixed by reseeding.
fn full_network_gradient_error(kind: ActivationKind, training: bool) -> f64 {
    let frames = 3;
    let mut model = Model::build(kind, frames, 21).unwrap();
    let x = random_input(frames, 22);
    let proj: Vec<f64> = {
        let mut r = rng::seeded(23);
        (0..11).map(|_| r.gen_range(-1.0..1.0)).collect()
    };
    let objective = |m: &Model| -> f64 {
        let p = m.forward(&x, training, &mut rng::seeded(24)).unwrap();
        p.iter().zip(&proj).map(|(a, b)| a * b).sum()
    };
    let trace = model.forward_trace(&x, training, &mut rng::seeded(24)).unwrap();
    let mut grads = model.zero_gradients();
    model.backward(&trace, &proj, &mut grads);

    let mut r = rng::seeded(25);
    // Thousands of max-pool windows: a larger step can cross an argmax.
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (pi, grad) in grads.iter().enumerate() {
        for _ in 0..4 {
            let i = r.gen_range(0..model.parameters[pi].len());
            let orig = model.parameters[pi].values()[i];
            model.parameters[pi].tensor.values_mut()[i] = orig + h;
            let up = objective(&model);
            model.parameters[pi].tensor.values_mut()[i] = orig - h;
            let down = objective(&model);
            model.parameters[pi].tensor.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grad[i], numeric));
        }
    }
    worst
}

#[test]
fn full_network_gradients_tanh() {
    let err = full_network_gradient_error(ActivationKind::Tanh, false);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn full_network_gradients_prelu_with_dropout() {
    let err = full_network_gradient_error(ActivationKind::PRelu, true);
    assert!(err < 1e-5, "{err}");
}

#[test]
fn save_load_save_is_byte_identical() {
    for kind in [lrelu(), ActivationKind::PRelu, ActivationKind::Tanh] {
        let model = Model::build(kind, 43, 8).unwrap();
        let bytes = write_model(&model);
        let back = read_model(&bytes).unwrap();
        assert_eq!(write_model(&back), bytes);
        assert_eq!(back.spec, model.spec);
        assert_eq!(back.rng_seed, 8);
    }
}

#[test]
fn reloaded_model_predicts_identically() {
    let mut model = Model::build(lrelu(), 43, 9).unwrap();
    model.round_to_storage_precision();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.icnn");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    let x = random_input(43, 10);
    assert_eq!(
        back.forward(&x, false, &mut rng::seeded(0)).unwrap(),
        model.forward(&x, false, &mut rng::seeded(0)).unwrap()
    );
}

#[test]
fn damaged_files_are_rejected() {
    let model = Model::build(lrelu(), 21, 3).unwrap();
    let bytes = write_model(&model);

    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    assert!(matches!(read_model(&flipped), Err(ModelError::Checksum { .. })));

    assert!(matches!(read_model(&bytes[..bytes.len() / 3]), Err(ModelError::Truncated)));
    assert!(matches!(read_model(&bytes[..6]), Err(ModelError::Truncated)));

    let mut future = bytes.clone();
    future[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        read_model(&future),
        Err(ModelError::VersionMismatch { found: 2, expected: 1 })
    ));

    let mut magic = bytes;
    magic[0] = b'X';
    assert!(matches!(read_model(&magic), Err(ModelError::BadMagic)));
}

