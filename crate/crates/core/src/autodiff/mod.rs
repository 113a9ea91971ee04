//! Backpropagation through time for small feed-forward spiking networks.
//!
//! A [`Network`] is a chain of [`LayerSpec`]s. [`forward_sequence`] runs the
//! whole chain over every timestep of a spike train (layer by layer, each
//! layer seeing all `T × N` rows at once) and records a [`Tape`].
//! [`backward_bptt`] walks the tape in reverse, summing each weight's
//! gradient over timesteps; spike nondifferentiability is replaced by the
//! arctangent surrogate and the hard-reset gate is held constant.

mod kernels;
mod loss;
mod optim;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoders::SpikeTrain;
use crate::neuron::{NeuronConfig, SewMode};
use crate::rng::SeededRng;
use crate::tensor::{Tensor, TensorError};

pub use kernels::{ConvGeom, SpikeMode};
pub use loss::{accuracy_count, cross_entropy, cross_entropy_with_grad};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("layer {layer} ({kind}): {reason}")]
    Dims {
        layer: usize,
        kind: &'static str,
        reason: String,
    },
    #[error("input shape {found:?} does not match network input {expected:?}")]
    InputShape {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("network output must be flat (K), got {0}")]
    Readout(String),
    #[error("parameters do not match: {0}")]
    ParamMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("batch mismatch: {0}")]
    Batch(String),
    #[error("optimizer kind is {actual:?}, expected {expected:?}")]
    OptimizerKind {
        expected: OptimizerKind,
        actual: OptimizerKind,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// One layer of a network. Feature shapes are per sample: `(C, H, W)` for
/// spatial layers, `(F)` after [`LayerSpec::Flatten`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Weight stored `(in, out)`, bias `(out)`.
    Linear { in_features: usize, out_features: usize },
    /// Weight `(out, in, k, k)`, bias `(out)`.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    IfNeuron { neuron: NeuronConfig },
    /// Spike-element-wise residual block: two `3×3` conv→IF stages on the
    /// branch, combined with the block input by `mode`.
    SewBlock {
        channels: usize,
        mode: SewMode,
        neuron: NeuronConfig,
    },
    Flatten,
    AvgPool { kernel: usize },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::IfNeuron { .. } => "if_neuron",
            LayerSpec::SewBlock { .. } => "sew_block",
            LayerSpec::Flatten => "flatten",
            LayerSpec::AvgPool { .. } => "avg_pool",
        }
    }

    /// `(name, shape)` of each trainable tensor this layer owns.
    fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match *self {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => vec![
                ("weight", vec![in_features, out_features]),
                ("bias", vec![out_features]),
            ],
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => vec![
                ("weight", vec![out_channels, in_channels, kernel, kernel]),
                ("bias", vec![out_channels]),
            ],
            LayerSpec::SewBlock { channels: c, .. } => vec![
                ("conv1.weight", vec![c, c, 3, 3]),
                ("conv1.bias", vec![c]),
                ("conv2.weight", vec![c, c, 3, 3]),
                ("conv2.bias", vec![c]),
            ],
            LayerSpec::IfNeuron { .. } | LayerSpec::Flatten | LayerSpec::AvgPool { .. } => {
                Vec::new()
            }
        }
    }

    fn output_shape(&self, layer: usize, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |reason: String| ModelError::Dims {
            layer,
            kind: self.kind(),
            reason,
        };
        match *self {
            LayerSpec::Linear {
                in_features,
                out_features,
            } => {
                if input != [in_features] {
                    return Err(fail(format!("expects ({in_features}), got {input:?}")));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let &[c, h, w] = input else {
                    return Err(fail(format!("expects (C, H, W), got {input:?}")));
                };
                if c != in_channels {
                    return Err(fail(format!("expects {in_channels} channels, got {c}")));
                }
                if kernel == 0 || stride == 0 {
                    return Err(fail("kernel and stride must be positive".into()));
                }
                if h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(fail(format!("kernel {kernel} larger than padded input")));
                }
                let g = ConvGeom {
                    in_channels,
                    out_channels,
                    height: h,
                    width: w,
                    kernel,
                    stride,
                    padding,
                };
                Ok(vec![out_channels, g.out_height(), g.out_width()])
            }
            LayerSpec::IfNeuron { neuron } => {
                neuron.validate().map_err(|e| fail(e.to_string()))?;
                Ok(input.to_vec())
            }
            LayerSpec::SewBlock {
                channels, neuron, ..
            } => {
                neuron.validate().map_err(|e| fail(e.to_string()))?;
                match input {
                    &[c, _, _] if c == channels => Ok(input.to_vec()),
                    _ => Err(fail(format!("expects ({channels}, H, W), got {input:?}"))),
                }
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::AvgPool { kernel } => match input {
                &[c, h, w] if kernel > 0 && h >= kernel && w >= kernel => {
                    Ok(vec![c, h / kernel, w / kernel])
                }
                _ => Err(fail(format!("pool {kernel} does not fit {input:?}"))),
            },
        }
    }
}

/// A feed-forward chain of layers with a fixed per-sample input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl Network {
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>) -> Result<Self> {
        let net = Self {
            input_shape: input_shape.to_vec(),
            layers,
        };
        net.shapes()?;
        Ok(net)
    }

    /// Feature shape entering each layer, followed by the final output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = vec![self.input_shape.clone()];
        for (i, layer) in self.layers.iter().enumerate() {
            let next = layer.output_shape(i, shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    /// Number of classes read out, checking the readout contract.
    pub fn classes(&self) -> Result<usize> {
        let shapes = self.shapes()?;
        let out = shapes.last().unwrap();
        match out.as_slice() {
            &[k] if k > 0 => Ok(k),
            _ => Err(ModelError::Readout(format!("output shape {out:?}"))),
        }
    }

    /// Names and shapes of all parameters, in [`Parameters`] order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, layer)| {
                layer
                    .param_shapes()
                    .into_iter()
                    .map(move |(name, shape)| (format!("{i}.{}.{name}", layer.kind()), shape))
            })
            .collect()
    }

    /// `Flatten → Linear(hidden) → IF → Linear(classes) → IF`.
    pub fn mlp(input_shape: &[usize], hidden: usize, classes: usize, neuron: NeuronConfig) -> Result<Self> {
        let features = input_shape.iter().product();
        Network::new(
            input_shape,
            vec![
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: features,
                    out_features: hidden,
                },
                LayerSpec::IfNeuron { neuron },
                LayerSpec::Linear {
                    in_features: hidden,
                    out_features: classes,
                },
                LayerSpec::IfNeuron { neuron },
            ],
        )
    }

    /// `conv3×3(16) → IF → pool → conv3×3(32) → IF → pool → FC → IF`.
    pub fn convnet(input_shape: &[usize], classes: usize, neuron: NeuronConfig) -> Result<Self> {
        let &[c, h, w] = input_shape else {
            return Err(ModelError::InputShape {
                expected: vec![0, 0, 0],
                found: input_shape.to_vec(),
            });
        };
        let conv = |i, o| LayerSpec::Conv2d {
            in_channels: i,
            out_channels: o,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        Network::new(
            input_shape,
            vec![
                conv(c, 16),
                LayerSpec::IfNeuron { neuron },
                LayerSpec::AvgPool { kernel: 2 },
                conv(16, 32),
                LayerSpec::IfNeuron { neuron },
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: 32 * (h / 4) * (w / 4),
                    out_features: classes,
                },
                LayerSpec::IfNeuron { neuron },
            ],
        )
    }

    /// `conv3×3(channels) → IF → pool → SEW block → pool → FC → IF`.
    pub fn sew(
        input_shape: &[usize],
        channels: usize,
        mode: SewMode,
        classes: usize,
        neuron: NeuronConfig,
    ) -> Result<Self> {
        let &[c, h, w] = input_shape else {
            return Err(ModelError::InputShape {
                expected: vec![0, 0, 0],
                found: input_shape.to_vec(),
            });
        };
        Network::new(
            input_shape,
            vec![
                LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: channels,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::IfNeuron { neuron },
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::SewBlock {
                    channels,
                    mode,
                    neuron,
                },
                LayerSpec::AvgPool { kernel: 2 },
                LayerSpec::Flatten,
                LayerSpec::Linear {
                    in_features: channels * (h / 4) * (w / 4),
                    out_features: classes,
                },
                LayerSpec::IfNeuron { neuron },
            ],
        )
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let value = value.to_real();
        let grad = Tensor::zeros(value.shape(), crate::tensor::DType::Real64);
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn values(&self) -> &[f64] {
        self.value.as_real().expect("real parameter")
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.value.as_real_mut().expect("real parameter")
    }

    pub fn grads(&self) -> &[f64] {
        self.grad.as_real().expect("real gradient")
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        self.grad.as_real_mut().expect("real gradient")
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Parameters(pub Vec<Parameter>);

impl Parameters {
    pub fn iter(&self) -> std::slice::Iter<'_, Parameter> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Parameter> {
        self.0.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.0.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.0.iter_mut().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.0 {
            p.grads_mut().fill(0.0);
        }
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.0.iter().map(|p| p.value.len()).sum()
    }

    fn check_layout(&self, layout: &[(String, Vec<usize>)]) -> Result<()> {
        if self.0.len() != layout.len() {
            return Err(ModelError::ParamMismatch(format!(
                "expected {} tensors, got {}",
                layout.len(),
                self.0.len()
            )));
        }
        for (p, (name, shape)) in self.0.iter().zip(layout) {
            if p.value.shape() != shape.as_slice() || p.grad.shape() != shape.as_slice() {
                return Err(ModelError::ParamMismatch(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    p.value.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Weights uniform in `±sqrt(1 / fan_in)`, biases zero.
///
/// Draws are taken in layout order, so the result depends only on the
/// network and the generator state.
pub fn init_params(net: &Network, rng: &mut SeededRng) -> Result<Parameters> {
    net.shapes()?;
    let params = net
        .param_layout()
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data = if name.ends_with("bias") {
                vec![0.0; n]
            } else {
                let fan_in: usize = if shape.len() == 2 {
                    shape[0]
                } else {
                    shape[1..].iter().product()
                };
                let bound = (1.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.symmetric(bound)).collect()
            };
            let value = Tensor::from_real(&shape, data).expect("shape matches data");
            Parameter::new(name, value)
        })
        .collect();
    Ok(Parameters(params))
}

/// Saved forward state of one layer, for every timestep.
#[derive(Debug, Clone)]
enum Saved {
    Linear { input: Vec<f64>, n_in: usize },
    Conv { input: Vec<f64>, geom: ConvGeom },
    If {
        spikes: Vec<f64>,
        potentials: Vec<f64>,
        neuron: NeuronConfig,
    },
    Sew(Box<SewSaved>),
    Flatten,
    Pool { c: usize, h: usize, w: usize, k: usize },
}

#[derive(Debug, Clone)]
struct SewSaved {
    input: Vec<f64>,
    geom: ConvGeom,
    mode: SewMode,
    neuron: NeuronConfig,
    s1: Vec<f64>,
    u1: Vec<f64>,
    s2: Vec<f64>,
    u2: Vec<f64>,
}

/// Record of one layer's forward evaluation.
#[derive(Debug, Clone)]
pub struct TapeNode {
    op: &'static str,
    /// Index of the node whose output fed this one; `None` for the input.
    parent: Option<usize>,
    /// First parameter slot owned by this node.
    param_offset: usize,
    saved: Saved,
}

impl TapeNode {
    pub fn op(&self) -> &'static str {
        self.op
    }

    pub fn parent(&self) -> Option<usize> {
        self.parent
    }
}

/// Everything [`backward_bptt`] needs, produced by [`forward_sequence`].
#[derive(Debug, Clone)]
pub struct Tape {
    nodes: Vec<TapeNode>,
    layout: Vec<(String, Vec<usize>)>,
    timesteps: usize,
    batch: usize,
    classes: usize,
    /// Final-layer spikes, `(T, N, K)`.
    output: Vec<f64>,
}

impl Tape {
    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    /// Timesteps processed by this forward pass.
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Mean spike count of the output layer over all neurons and steps.
    pub fn output_rate(&self) -> f64 {
        if self.output.is_empty() {
            return 0.0;
        }
        self.output.iter().sum::<f64>() / self.output.len() as f64
    }
}

impl fmt::Display for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ops: Vec<_> = self.nodes.iter().map(|n| n.op).collect();
        write!(f, "Tape(T={}, N={}, {})", self.timesteps, self.batch, ops.join(" -> "))
    }
}

fn sew_forward(
    x: &[f64],
    steps: usize,
    batch: usize,
    geom: ConvGeom,
    mode: SewMode,
    neuron: NeuronConfig,
    params: &[Parameter],
    spike_mode: SpikeMode,
) -> (Vec<f64>, SewSaved) {
    let rows = steps * batch;
    let width = batch * geom.in_channels * geom.height * geom.width;
    let d1 = kernels::conv2d_forward(x, rows, &geom, params[0].values(), params[1].values());
    let (s1, u1) = kernels::if_forward(&d1, steps, width, &neuron, spike_mode);
    let d2 = kernels::conv2d_forward(&s1, rows, &geom, params[2].values(), params[3].values());
    let (s2, u2) = kernels::if_forward(&d2, steps, width, &neuron, spike_mode);
    let out = s2.iter().zip(x).map(|(&a, &b)| mode.apply(a, b)).collect();
    let saved = SewSaved {
        input: x.to_vec(),
        geom,
        mode,
        neuron,
        s1,
        u1,
        s2,
        u2,
    };
    (out, saved)
}

/// Runs `net` over every timestep of `spikes_in` from a resting state.
///
/// Returns the readout `(N, K)`: the final layer's output averaged over
/// time. For the provided architectures that layer is IF, so the readout is
/// each class's firing rate.
pub fn forward_sequence(
    net: &Network,
    params: &Parameters,
    spikes_in: &SpikeTrain,
    spike_mode: SpikeMode,
) -> Result<(Tensor, Tape)> {
    forward_tensor(net, params, spikes_in.spikes(), spike_mode)
}

/// [`forward_sequence`] over a raw `(T, N, features...)` tensor.
pub fn forward_tensor(
    net: &Network,
    params: &Parameters,
    input: &Tensor,
    spike_mode: SpikeMode,
) -> Result<(Tensor, Tape)> {
    let shapes = net.shapes()?;
    let classes = net.classes()?;
    let layout = net.param_layout();
    params.check_layout(&layout)?;
    if input.rank() < 2 || input.shape()[2..] != net.input_shape[..] {
        return Err(ModelError::InputShape {
            expected: net.input_shape.clone(),
            found: input.shape().get(2..).unwrap_or(&[]).to_vec(),
        });
    }
    let (steps, batch) = (input.shape()[0], input.shape()[1]);
    let rows = steps * batch;
    let mut x = input.to_real_vec();
    let mut nodes = Vec::with_capacity(net.layers.len());
    let mut slot = 0;

    for (i, layer) in net.layers.iter().enumerate() {
        let in_shape = &shapes[i];
        let owned = &params.0[slot..slot + layer.param_shapes().len()];
        let (y, saved) = match *layer {
            LayerSpec::Linear { in_features, .. } => {
                let y = kernels::linear_forward(&x, rows, in_features, owned[0].values(), owned[1].values());
                (y, Saved::Linear { input: x, n_in: in_features })
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let geom = ConvGeom {
                    in_channels,
                    out_channels,
                    height: in_shape[1],
                    width: in_shape[2],
                    kernel,
                    stride,
                    padding,
                };
                let y = kernels::conv2d_forward(&x, rows, &geom, owned[0].values(), owned[1].values());
                (y, Saved::Conv { input: x, geom })
            }
            LayerSpec::IfNeuron { neuron } => {
                let width = batch * in_shape.iter().product::<usize>();
                let (spikes, potentials) = kernels::if_forward(&x, steps, width, &neuron, spike_mode);
                (
                    spikes.clone(),
                    Saved::If {
                        spikes,
                        potentials,
                        neuron,
                    },
                )
            }
            LayerSpec::SewBlock {
                channels,
                mode,
                neuron,
            } => {
                let geom = ConvGeom {
                    in_channels: channels,
                    out_channels: channels,
                    height: in_shape[1],
                    width: in_shape[2],
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                };
                let (y, saved) = sew_forward(&x, steps, batch, geom, mode, neuron, owned, spike_mode);
                (y, Saved::Sew(Box::new(saved)))
            }
            LayerSpec::Flatten => (x, Saved::Flatten),
            LayerSpec::AvgPool { kernel } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let y = kernels::avg_pool_forward(&x, rows, c, h, w, kernel);
                (y, Saved::Pool { c, h, w, k: kernel })
            }
        };
        nodes.push(TapeNode {
            op: layer.kind(),
            parent: i.checked_sub(1),
            param_offset: slot,
            saved,
        });
        slot += layer.param_shapes().len();
        x = y;
    }

    let mut readout = vec![0.0; batch * classes];
    for t in 0..steps {
        for (acc, &s) in readout.iter_mut().zip(&x[t * batch * classes..(t + 1) * batch * classes]) {
            *acc += s;
        }
    }
    readout.iter_mut().for_each(|v| *v /= steps as f64);
    let tape = Tape {
        nodes,
        layout,
        timesteps: steps,
        batch,
        classes,
        output: x,
    };
    Ok((Tensor::from_real(&[batch, classes], readout)?, tape))
}

/// Accumulates `dL/dθ` into every parameter's gradient given `dL/dreadout`.
pub fn backward_bptt(tape: &Tape, params: &mut Parameters, readout_grad: &Tensor) -> Result<()> {
    params.check_layout(&tape.layout)?;
    let (steps, batch, classes) = (tape.timesteps, tape.batch, tape.classes);
    if readout_grad.shape() != [batch, classes] {
        return Err(ModelError::Batch(format!(
            "readout gradient {:?}, expected [{batch}, {classes}]",
            readout_grad.shape()
        )));
    }
    let rows = steps * batch;
    let g = readout_grad.to_real_vec();
    let scale = 1.0 / steps as f64;
    let mut grad: Vec<f64> = (0..steps).flat_map(|_| g.iter().map(|v| v * scale)).collect();

    let mut visited = vec![false; tape.nodes.len()];
    let mut current = tape.nodes.len().checked_sub(1);
    while let Some(idx) = current {
        assert!(!visited[idx], "tape node {idx} visited twice");
        visited[idx] = true;
        let node = &tape.nodes[idx];
        let need_dx = node.parent.is_some();
        let owned = &mut params.0[node.param_offset..];
        grad = match &node.saved {
            Saved::Linear { input, n_in } => {
                let (w, rest) = owned.split_at_mut(1);
                let w = &mut w[0];
                let w_vals = w.value.as_real().unwrap().to_vec();
                let dx = kernels::linear_backward(
                    input,
                    &grad,
                    rows,
                    *n_in,
                    &w_vals,
                    w.grads_mut(),
                    rest[0].grads_mut(),
                    need_dx,
                );
                dx.unwrap_or_default()
            }
            Saved::Conv { input, geom } => {
                let (w, rest) = owned.split_at_mut(1);
                let w = &mut w[0];
                let w_vals = w.value.as_real().unwrap().to_vec();
                let dx = kernels::conv2d_backward(
                    input,
                    &grad,
                    rows,
                    geom,
                    &w_vals,
                    w.grads_mut(),
                    rest[0].grads_mut(),
                    need_dx,
                );
                dx.unwrap_or_default()
            }
            Saved::If {
                spikes,
                potentials,
                neuron,
            } => {
                let width = spikes.len() / steps;
                kernels::if_backward(&grad, spikes, potentials, steps, width, neuron)
            }
            Saved::Sew(s) => sew_backward(s, &grad, steps, batch, owned),
            Saved::Flatten => grad,
            Saved::Pool { c, h, w, k } => kernels::avg_pool_backward(&grad, rows, *c, *h, *w, *k),
        };
        current = node.parent;
    }
    Ok(())
}

fn sew_backward(s: &SewSaved, d_out: &[f64], steps: usize, batch: usize, params: &mut [Parameter]) -> Vec<f64> {
    let rows = steps * batch;
    let width = batch * s.geom.in_channels * s.geom.height * s.geom.width;
    let mut d_branch = Vec::with_capacity(d_out.len());
    let mut d_shortcut = Vec::with_capacity(d_out.len());
    for ((&g, &a), &b) in d_out.iter().zip(&s.s2).zip(&s.input) {
        let (da, db) = s.mode.partials(a, b);
        d_branch.push(g * da);
        d_shortcut.push(g * db);
    }
    let d2 = kernels::if_backward(&d_branch, &s.s2, &s.u2, steps, width, &s.neuron);
    let w2 = params[2].values().to_vec();
    let (left, right) = params.split_at_mut(3);
    let ds1 = kernels::conv2d_backward(&s.s1, &d2, rows, &s.geom, &w2, left[2].grads_mut(), right[0].grads_mut(), true)
        .expect("dx requested");
    let d1 = kernels::if_backward(&ds1, &s.s1, &s.u1, steps, width, &s.neuron);
    let w1 = params[0].values().to_vec();
    let (left, right) = params.split_at_mut(1);
    let dx = kernels::conv2d_backward(&s.input, &d1, rows, &s.geom, &w1, left[0].grads_mut(), right[0].grads_mut(), true)
        .expect("dx requested");
    dx.iter().zip(&d_shortcut).map(|(a, b)| a + b).collect()
}
