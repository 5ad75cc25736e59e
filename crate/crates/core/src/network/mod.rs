//! The instrument ConvNet.
//!
//! Four convolutional blocks of two 3×3 convolutions each (32, 64, 128, 256
//! filters), every convolution followed by the hidden activation. Blocks one
//! to three end in 3×3/3 max pooling and dropout 0.25; block four ends in
//! global max pooling. The head is a 1024-unit dense layer with the hidden
//! activation and dropout 0.5, then 11 sigmoid outputs.
//!
//! Parameter order: per convolution `weight, bias[, prelu slopes]`, then the
//! hidden dense `weight, bias[, prelu slopes]`, then the output dense
//! `weight, bias`.

mod io;

pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};

use thiserror::Error;

use crate::dsp::MelSpectrogram;
use crate::rng::{self, Rng};
use crate::tensor::{
    activation_backward, activation_forward, conv2d_backward, conv2d_forward, conv_output_dims, dense_backward,
    dense_forward, dropout_backward, dropout_forward, glorot_uniform_init, global_max_pool_backward,
    global_max_pool_forward, maxpool2d_backward, maxpool2d_forward, pool_output_dim, sigmoid, ActivationKind,
    Conv2dCache, DropoutMask, Parameter, PoolCache, Tensor, TensorError,
};
use crate::NUM_CLASSES;

pub const CHANNEL_PLAN: [usize; 4] = [32, 64, 128, 256];
pub const CONVS_PER_BLOCK: usize = 2;
pub const MEL_BINS: usize = 128;
pub const HIDDEN_UNITS: usize = 1024;
pub const BLOCK_DROPOUT: f64 = 0.25;
pub const HEAD_DROPOUT: f64 = 0.5;
pub const PRELU_INIT: f64 = 0.25;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("analysis window of {0} frames cannot pass four pooling stages")]
    WindowTooShort(usize),
    #[error("input is {actual:?}, model expects {expected:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("model file checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("model file is malformed: {0}")]
    Malformed(String),
}

/// Architecture family member: activation kind and analysis window length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchitectureSpec {
    pub activation: ActivationKind,
    pub input_frames: usize,
}

/// One row of the layer-by-layer shape table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub shape: Vec<usize>,
    pub description: String,
}

impl ArchitectureSpec {
    pub fn new(activation: ActivationKind, input_frames: usize) -> Result<Self, ModelError> {
        let spec = Self {
            activation,
            input_frames,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Every pooling stage needs at least a 3×3 input; with two cells of
    /// growth per convolution that holds for any non-empty window.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut h = self.input_frames;
        if h == 0 {
            return Err(ModelError::WindowTooShort(h));
        }
        for _ in 0..CHANNEL_PLAN.len() - 1 {
            h += CONVS_PER_BLOCK * crate::tensor::CONV_GROWTH;
            if h < crate::tensor::POOL_SIZE {
                return Err(ModelError::WindowTooShort(self.input_frames));
            }
            h = pool_output_dim(h);
        }
        Ok(())
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [1, self.input_frames, MEL_BINS]
    }

    /// Shapes after every layer, starting with the input.
    pub fn shape_trace(&self) -> Vec<LayerRow> {
        let row = |shape: Vec<usize>, description: String| LayerRow { shape, description };
        let (mut h, mut w) = (self.input_frames, MEL_BINS);
        let mut rows = vec![row(vec![1, h, w], "mel-spectrogram".into())];
        for (b, &c) in CHANNEL_PLAN.iter().enumerate() {
            for _ in 0..CONVS_PER_BLOCK {
                (h, w) = conv_output_dims(h, w);
                rows.push(row(vec![c, h, w], format!("3x3 convolution, {c} filters")));
            }
            if b + 1 < CHANNEL_PLAN.len() {
                (h, w) = (pool_output_dim(h), pool_output_dim(w));
                rows.push(row(vec![c, h, w], "3x3 max-pooling".into()));
                rows.push(row(vec![c, h, w], format!("dropout ({BLOCK_DROPOUT:.2})")));
            } else {
                rows.push(row(vec![c, 1, 1], "global max-pooling".into()));
            }
        }
        rows.push(row(vec![HIDDEN_UNITS], "flattened and fully connected".into()));
        rows.push(row(vec![HIDDEN_UNITS], format!("dropout ({HEAD_DROPOUT:.2})")));
        rows.push(row(vec![NUM_CLASSES], "sigmoid".into()));
        rows
    }

    /// Shapes of the learnable tensors in parameter-list order.
    pub fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        let prelu = self.activation.is_parametric();
        let mut shapes = Vec::new();
        let mut c_in = 1;
        for &c in &CHANNEL_PLAN {
            for _ in 0..CONVS_PER_BLOCK {
                shapes.push(vec![c, c_in, 3, 3]);
                shapes.push(vec![c]);
                if prelu {
                    shapes.push(vec![c]);
                }
                c_in = c;
            }
        }
        shapes.push(vec![HIDDEN_UNITS, c_in]);
        shapes.push(vec![HIDDEN_UNITS]);
        if prelu {
            shapes.push(vec![HIDDEN_UNITS]);
        }
        shapes.push(vec![NUM_CLASSES, HIDDEN_UNITS]);
        shapes.push(vec![NUM_CLASSES]);
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }

    fn layout(&self) -> Layout {
        let stride = if self.activation.is_parametric() { 3 } else { 2 };
        let n_conv = CHANNEL_PLAN.len() * CONVS_PER_BLOCK;
        Layout {
            stride,
            hidden: n_conv * stride,
            output: n_conv * stride + stride,
        }
    }
}

/// Positions of the layer groups in the parameter list.
#[derive(Debug, Clone, Copy)]
struct Layout {
    stride: usize,
    hidden: usize,
    output: usize,
}

impl Layout {
    fn conv(&self, layer: usize) -> usize {
        layer * self.stride
    }
}

/// Per-parameter gradient buffers, aligned with [`Model::parameters`].
pub type Gradients = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ArchitectureSpec,
    pub parameters: Vec<Parameter>,
    pub rng_seed: u64,
}

struct ConvStep {
    cache: Conv2dCache,
    pre_activation: Tensor,
}

struct PoolStep {
    cache: PoolCache,
    mask: DropoutMask,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardTrace {
    convs: Vec<ConvStep>,
    pools: Vec<PoolStep>,
    global: PoolCache,
    conv_out_shape: Vec<usize>,
    pooled: Tensor,
    hidden_pre: Tensor,
    hidden_mask: DropoutMask,
    hidden_out: Tensor,
    /// Output of each block after pooling (and dropout), for inspection.
    pub block_outputs: Vec<Tensor>,
    /// Shape after every layer, mirroring [`ArchitectureSpec::shape_trace`].
    pub shapes: Vec<Vec<usize>>,
    pub probabilities: Vec<f64>,
}

impl Model {
    /// Glorot-uniform weights, zero biases, PReLU slopes at 0.25.
    pub fn build(activation: ActivationKind, input_frames: usize, seed: u64) -> Result<Self, ModelError> {
        let spec = ArchitectureSpec::new(activation, input_frames)?;
        let mut rng = rng::seeded(seed);
        let layout = spec.layout();
        let shapes = spec.parameter_shapes();
        let parameters = shapes
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let offset = if i >= layout.output { i - layout.output } else { i % layout.stride };
                let tensor = match offset {
                    0 => glorot_uniform_init(shape, &mut rng),
                    1 => Tensor::zeros(shape),
                    _ => Tensor::from_vec(shape, vec![PRELU_INIT; shape[0]]).expect("slope shape"),
                };
                Parameter::new(tensor)
            })
            .collect();
        Ok(Self {
            spec,
            parameters,
            rng_seed: seed,
        })
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.parameters.iter().map(|p| vec![0.0; p.len()]).collect()
    }

    fn values(&self, i: usize) -> &Tensor {
        &self.parameters[i].tensor
    }

    fn slopes(&self, weight_index: usize) -> Option<&[f64]> {
        self.spec
            .activation
            .is_parametric()
            .then(|| self.parameters[weight_index + 2].values())
    }

    /// Runs the network on a `[1 × frames × 128]` tensor, keeping the state
    /// needed for [`Model::backward`]. Dropout is active only when
    /// `training`.
    pub fn forward_trace(&self, input: &Tensor, training: bool, rng: &mut Rng) -> Result<ForwardTrace, ModelError> {
        let expected = self.spec.input_shape();
        if input.shape() != expected {
            return Err(ModelError::InputShape {
                expected: expected.to_vec(),
                actual: input.shape().to_vec(),
            });
        }
        let layout = self.spec.layout();
        let kind = self.spec.activation;
        let mut shapes = vec![input.shape().to_vec()];
        let mut convs = Vec::with_capacity(8);
        let mut pools = Vec::with_capacity(3);
        let mut block_outputs = Vec::with_capacity(4);
        let mut x = input.clone();
        let mut layer = 0;
        for b in 0..CHANNEL_PLAN.len() {
            for _ in 0..CONVS_PER_BLOCK {
                let wi = layout.conv(layer);
                let (z, cache) = conv2d_forward(&x, self.values(wi), self.values(wi + 1))?;
                x = activation_forward(&z, kind, self.slopes(wi))?;
                shapes.push(x.shape().to_vec());
                convs.push(ConvStep {
                    cache,
                    pre_activation: z,
                });
                layer += 1;
            }
            if b + 1 < CHANNEL_PLAN.len() {
                let (pooled, cache) = maxpool2d_forward(&x)?;
                shapes.push(pooled.shape().to_vec());
                let (dropped, mask) = dropout_forward(&pooled, BLOCK_DROPOUT, training, rng)?;
                shapes.push(dropped.shape().to_vec());
                pools.push(PoolStep { cache, mask });
                block_outputs.push(dropped.clone());
                x = dropped;
            }
        }
        let conv_out_shape = x.shape().to_vec();
        let (pooled, global) = global_max_pool_forward(&x)?;
        shapes.push(vec![pooled.len(), 1, 1]);
        block_outputs.push(pooled.clone());

        let hidden_pre = dense_forward(&pooled, self.values(layout.hidden), self.values(layout.hidden + 1))?;
        let hidden_act = activation_forward(&hidden_pre, kind, self.slopes(layout.hidden))?;
        shapes.push(hidden_act.shape().to_vec());
        let (hidden_out, hidden_mask) = dropout_forward(&hidden_act, HEAD_DROPOUT, training, rng)?;
        shapes.push(hidden_out.shape().to_vec());
        let logits = dense_forward(&hidden_out, self.values(layout.output), self.values(layout.output + 1))?;
        let probabilities = sigmoid(&logits).into_values();
        shapes.push(vec![probabilities.len()]);

        Ok(ForwardTrace {
            convs,
            pools,
            global,
            conv_out_shape,
            pooled,
            hidden_pre,
            hidden_mask,
            hidden_out,
            block_outputs,
            shapes,
            probabilities,
        })
    }

    pub fn forward(&self, input: &Tensor, training: bool, rng: &mut Rng) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_trace(input, training, rng)?.probabilities)
    }

    /// Inference (dropout off) on one analysis window.
    pub fn predict(&self, mel: &MelSpectrogram) -> Result<Vec<f64>, ModelError> {
        let input = mel_to_input(mel);
        // The generator is untouched when dropout is off.
        self.forward(&input, false, &mut rng::seeded(0))
    }

    /// Back-propagates `dL/dp` (gradient w.r.t. the 11 sigmoid outputs) and
    /// adds the parameter gradients into `grads`.
    pub fn backward(&self, trace: &ForwardTrace, grad_probs: &[f64], grads: &mut Gradients) {
        let layout = self.spec.layout();
        let kind = self.spec.activation;
        let prelu = kind.is_parametric();

        let grad_logits: Vec<f64> = grad_probs
            .iter()
            .zip(&trace.probabilities)
            .map(|(g, p)| g * p * (1.0 - p))
            .collect();
        let (out_w, rest) = grads[layout.output..].split_at_mut(1);
        let g_hidden = dense_backward(
            &trace.hidden_out,
            self.values(layout.output),
            &grad_logits,
            &mut out_w[0],
            &mut rest[0],
        );
        let g_hidden = dropout_backward(&trace.hidden_mask, &g_hidden);
        let g_hidden_pre = {
            let (w_b, tail) = grads[layout.hidden..].split_at_mut(2);
            let ga = if prelu { Some(tail[0].as_mut_slice()) } else { None };
            let g = activation_backward(&trace.hidden_pre, kind, self.slopes(layout.hidden), &g_hidden, ga);
            let (gw, gb) = w_b.split_at_mut(1);
            dense_backward(&trace.pooled, self.values(layout.hidden), &g, &mut gw[0], &mut gb[0])
        };
        let mut g = global_max_pool_backward(&trace.global, &g_hidden_pre);
        debug_assert_eq!(g.len(), trace.conv_out_shape.iter().product::<usize>());

        let mut layer = trace.convs.len();
        for b in (0..CHANNEL_PLAN.len()).rev() {
            if b + 1 < CHANNEL_PLAN.len() {
                let pool = &trace.pools[b];
                g = dropout_backward(&pool.mask, &g);
                g = maxpool2d_backward(&pool.cache, &g);
            }
            for _ in 0..CONVS_PER_BLOCK {
                layer -= 1;
                let step = &trace.convs[layer];
                let wi = layout.conv(layer);
                let (w_b, tail) = grads[wi..].split_at_mut(2);
                let ga = if prelu { Some(tail[0].as_mut_slice()) } else { None };
                let gz = activation_backward(&step.pre_activation, kind, self.slopes(wi), &g, ga);
                let (gw, gb) = w_b.split_at_mut(1);
                match conv2d_backward(&step.cache, self.values(wi), &gz, &mut gw[0], &mut gb[0], layer > 0) {
                    Some(gi) => g = gi,
                    None => break,
                }
            }
        }
    }

    /// Rounds every parameter to the nearest `f32`, the precision of the
    /// model file, so that a saved and reloaded model is value-identical.
    pub fn round_to_storage_precision(&mut self) {
        for p in &mut self.parameters {
            p.tensor.values_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }
}

/// `[frames × bins]` mel matrix → `[1 × frames × bins]` network input.
pub fn mel_to_input(mel: &MelSpectrogram) -> Tensor {
    Tensor::from_vec(&[1, mel.frame_count(), mel.bins()], mel.values().to_vec()).expect("mel shape")
}

#[cfg(test)]
mod tests;
