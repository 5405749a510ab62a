//! Layered model description, parameter initialization, forward evaluation
//! with optional channel masking, and FLOP accounting.
//!
//! A network is a sequential chain of [`LayerSpec`]s. One parametric layer is
//! the *target*: its output channels are what importance metrics score and
//! what surgery removes. The target's *activation point* is its output after
//! the immediately following ReLU, if there is one; masking and gradient
//! readout both happen there.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{check_gradients, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
    },
    Relu,
    Flatten,
    /// `x + W2 · relu(W1 · x + b1) + b2` with outer width `width` and inner
    /// width `hidden`.
    ResidualMlpBlock {
        width: usize,
        hidden: usize,
    },
}

impl LayerSpec {
    pub fn is_parametric(&self) -> bool {
        !matches!(self, LayerSpec::Relu | LayerSpec::Flatten)
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => vec![
                vec![out_channels, in_channels, kernel[0], kernel[1]],
                vec![out_channels],
            ],
            LayerSpec::ResidualMlpBlock { width, hidden } => vec![
                vec![hidden, width],
                vec![hidden],
                vec![width, hidden],
                vec![width],
            ],
            LayerSpec::Relu | LayerSpec::Flatten => vec![],
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => match input {
                [d] if *d == inputs => Ok(vec![outputs]),
                _ => Err(Error::Spec(format!("dense({inputs}->{outputs}) fed {input:?}"))),
            },
            LayerSpec::Conv2d { in_channels, out_channels, kernel, stride, padding } => {
                let (c, h, w) = match input {
                    &[c, h, w] => (c, h, w),
                    _ => return Err(Error::Spec(format!("conv2d fed non-image shape {input:?}"))),
                };
                if c != in_channels {
                    return Err(Error::Spec(format!(
                        "conv2d expects {in_channels} channels, fed {c}"
                    )));
                }
                if stride == 0 {
                    return Err(Error::Spec("conv2d stride must be positive".into()));
                }
                if kernel[0] == 0 || kernel[1] == 0
                    || kernel[0] > h + 2 * padding
                    || kernel[1] > w + 2 * padding
                {
                    return Err(Error::Spec(format!(
                        "conv2d kernel {kernel:?} does not fit padded {h}x{w}"
                    )));
                }
                Ok(vec![
                    out_channels,
                    (h + 2 * padding - kernel[0]) / stride + 1,
                    (w + 2 * padding - kernel[1]) / stride + 1,
                ])
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::ResidualMlpBlock { width, .. } => match input {
                [d] if *d == width => Ok(vec![width]),
                _ => Err(Error::Spec(format!("residual block of width {width} fed {input:?}"))),
            },
        }
    }
}

/// Where the channels of the target layer are consumed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Consumer {
    /// Next parametric layer in the chain. `spatial` is the number of
    /// flattened positions per channel when a `Flatten` sits in between
    /// a conv target and a dense consumer (1 otherwise).
    Layer { index: usize, spatial: usize },
    /// Target is the inner layer of a residual block; `W2` consumes it.
    ResidualInner,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Per-sample input shape, `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub target_layer: usize,
}

impl NetworkSpec {
    /// Dense `inputs -> hidden -> relu -> classes` with the hidden layer targeted.
    pub fn mlp(inputs: usize, hidden: usize, classes: usize) -> Self {
        NetworkSpec {
            input_shape: vec![inputs],
            layers: vec![
                LayerSpec::Dense { inputs, outputs: hidden },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: hidden, outputs: classes },
            ],
            target_layer: 0,
        }
    }

    /// Dense stack `inputs -> hidden[0] -> relu -> ... -> classes`; the
    /// dense layer producing `hidden[target]` is the target.
    pub fn deep_mlp(inputs: usize, hidden: &[usize], classes: usize, target: usize) -> Self {
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Dense { inputs: width, outputs: h });
            layers.push(LayerSpec::Relu);
            width = h;
        }
        layers.push(LayerSpec::Dense { inputs: width, outputs: classes });
        NetworkSpec { input_shape: vec![inputs], layers, target_layer: 2 * target }
    }

    /// Per-sample output shape of every layer, validating the whole chain.
    pub fn layer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Spec(format!("bad input shape {:?}", self.input_shape)));
        }
        if self.layers.is_empty() {
            return Err(Error::Spec("network has no layers".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer
                .output_shape(&cur)
                .map_err(|e| Error::Spec(format!("layer {i}: {e}")))?;
            if cur.contains(&0) {
                return Err(Error::Spec(format!("layer {i} produces an empty shape")));
            }
            shapes.push(cur.clone());
        }
        if cur.len() != 1 {
            return Err(Error::Spec(format!("network output must be flat, got {cur:?}")));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes()?;
        let target = self.layers.get(self.target_layer).ok_or_else(|| {
            Error::Spec(format!("target layer {} out of range", self.target_layer))
        })?;
        if !target.is_parametric() {
            return Err(Error::Spec(format!(
                "target layer {} is not dense, conv2d or a residual block",
                self.target_layer
            )));
        }
        if !matches!(target, LayerSpec::ResidualMlpBlock { .. })
            && !self.layers[self.target_layer + 1..].iter().any(LayerSpec::is_parametric)
        {
            return Err(Error::Spec("target layer is the final classification layer".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> Result<usize> {
        Ok(self.layer_shapes()?.last().map(|s| s[0]).unwrap_or(0))
    }

    /// Channel count of the target layer.
    pub fn target_width(&self) -> usize {
        match self.layers[self.target_layer] {
            LayerSpec::Dense { outputs, .. } => outputs,
            LayerSpec::Conv2d { out_channels, .. } => out_channels,
            LayerSpec::ResidualMlpBlock { hidden, .. } => hidden,
            _ => 0,
        }
    }

    /// Layer after which the target channels are read and masked.
    pub fn activation_point(&self) -> usize {
        let t = self.target_layer;
        match self.layers.get(t + 1) {
            Some(LayerSpec::Relu) if !matches!(self.layers[t], LayerSpec::ResidualMlpBlock { .. }) => t + 1,
            _ => t,
        }
    }

    /// Identifies the unique consumer of the target channels.
    pub fn consumer(&self) -> Result<Consumer> {
        self.validate()?;
        if matches!(self.layers[self.target_layer], LayerSpec::ResidualMlpBlock { .. }) {
            return Ok(Consumer::ResidualInner);
        }
        let shapes = self.layer_shapes()?;
        let mut spatial = 1;
        for i in self.target_layer + 1..self.layers.len() {
            match &self.layers[i] {
                LayerSpec::Relu => {}
                LayerSpec::Flatten => {
                    let before = &shapes[i - 1];
                    if before.len() == 3 {
                        spatial = before[1] * before[2];
                    }
                }
                LayerSpec::Dense { .. } | LayerSpec::Conv2d { .. } => {
                    return Ok(Consumer::Layer { index: i, spatial });
                }
                LayerSpec::ResidualMlpBlock { .. } => {
                    return Err(Error::UnsupportedTopology(format!(
                        "target {} feeds residual block {i}, whose skip path also consumes it",
                        self.target_layer
                    )));
                }
            }
        }
        Err(Error::Spec("target layer has no consumer".into()))
    }

    /// Parameter tensor shapes in declaration order.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layers.iter().flat_map(LayerSpec::param_shapes).collect()
    }

    /// Index of the first parameter tensor belonging to `layer`.
    pub fn param_offset(&self, layer: usize) -> usize {
        self.layers[..layer].iter().map(|l| l.param_shapes().len()).sum()
    }

    /// Index of the weight tensor producing the target channels.
    pub fn target_weight_index(&self) -> usize {
        self.param_offset(self.target_layer)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub epoch: usize,
    /// Hex SHA-256 of the training history CSV, empty before training.
    pub history_digest: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Vec<Tensor>,
    pub meta: Metadata,
}

impl Checkpoint {
    pub fn new(spec: NetworkSpec, params: Vec<Tensor>, meta: Metadata) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::SpecMismatch(format!(
                "spec declares {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (i, (s, p)) in shapes.iter().zip(&params).enumerate() {
            if s.as_slice() != p.shape() {
                return Err(Error::SpecMismatch(format!(
                    "parameter {i}: spec shape {s:?}, tensor shape {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Checkpoint { spec, params, meta })
    }

    /// Weight tensor of the target layer (`W1` for a residual block).
    pub fn target_weight(&self) -> &Tensor {
        &self.params[self.spec.target_weight_index()]
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }
}

/// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
pub fn build(spec: &NetworkSpec, init_seed: u64) -> Result<Checkpoint> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut params = Vec::new();
    for layer in &spec.layers {
        for shape in layer.param_shapes() {
            if shape.len() == 1 {
                params.push(Tensor::zeros(&shape));
                continue;
            }
            let fan_in: usize = shape[1..].iter().product();
            let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
            params.push(Tensor::new(shape, data)?);
        }
    }
    Checkpoint::new(
        spec.clone(),
        params,
        Metadata { seed: init_seed, ..Metadata::default() },
    )
}

/// A forward pass recorded on a tape, with handles to the values the
/// importance metrics and the trainer read back.
pub struct Recording {
    pub tape: Tape,
    /// One handle per parameter tensor, declaration order.
    pub params: Vec<Var>,
    /// Input of the target layer.
    pub target_input: Var,
    /// Target channels at the activation point, after masking.
    pub target_activation: Var,
    pub logits: Var,
}

fn check_batch(spec: &NetworkSpec, batch: &Tensor) -> Result<()> {
    if batch.shape().len() != spec.input_shape.len() + 1 || batch.shape()[1..] != spec.input_shape[..] {
        return Err(Error::Input(format!(
            "batch shape {:?} does not match network input {:?}",
            batch.shape(),
            spec.input_shape
        )));
    }
    Ok(())
}

fn dense(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let wt = tape.transpose(w)?;
    let y = tape.matmul(x, wt)?;
    tape.add_bias(y, b)
}

/// Records a forward pass. `keep` masks target channels (false = zeroed);
/// `params_grad` marks parameters as requiring gradients.
pub fn record(
    model: &Checkpoint,
    batch: &Tensor,
    keep: Option<&[bool]>,
    params_grad: bool,
) -> Result<Recording> {
    let spec = &model.spec;
    check_batch(spec, batch)?;
    if let Some(k) = keep {
        if k.len() != spec.target_width() {
            return Err(Error::Input(format!(
                "mask covers {} channels, target has {}",
                k.len(),
                spec.target_width()
            )));
        }
    }
    let mut tape = Tape::new();
    let params: Vec<Var> = model
        .params
        .iter()
        .map(|p| tape.leaf(p.clone(), params_grad))
        .collect();
    let (target_input, target_activation, logits) = build_graph(&mut tape, spec, &params, batch, keep)?;
    Ok(Recording { tape, params, target_input, target_activation, logits })
}

/// Records the layer chain on `tape` over existing parameter handles.
/// Returns `(target_input, target_activation, logits)`.
fn build_graph(
    tape: &mut Tape,
    spec: &NetworkSpec,
    params: &[Var],
    batch: &Tensor,
    keep: Option<&[bool]>,
) -> Result<(Var, Var, Var)> {
    let n = batch.shape()[0];
    let mut x = tape.constant(batch.clone());
    let act_point = spec.activation_point();
    let mut target_input = None;
    let mut target_activation = None;
    let mut p = 0;

    for (i, layer) in spec.layers.iter().enumerate() {
        if i == spec.target_layer {
            target_input = Some(x);
        }
        x = match *layer {
            LayerSpec::Dense { .. } => {
                let y = dense(tape, x, params[p], params[p + 1])?;
                p += 2;
                y
            }
            LayerSpec::Conv2d { stride, padding, .. } => {
                let y = tape.conv2d(x, params[p], stride, padding)?;
                let y = tape.add_bias(y, params[p + 1])?;
                p += 2;
                y
            }
            LayerSpec::Relu => tape.relu(x)?,
            LayerSpec::Flatten => {
                let per: usize = tape.value(x).row_len();
                tape.reshape(x, &[n, per])?
            }
            LayerSpec::ResidualMlpBlock { .. } => {
                let pre = dense(tape, x, params[p], params[p + 1])?;
                let mut h = tape.relu(pre)?;
                if i == spec.target_layer {
                    if let Some(k) = keep {
                        h = tape.mask_channels(h, k)?;
                    }
                    target_activation = Some(h);
                }
                let out = dense(tape, h, params[p + 2], params[p + 3])?;
                p += 4;
                tape.add(x, out)?
            }
        };
        if i == act_point && target_activation.is_none() {
            if let Some(k) = keep {
                x = tape.mask_channels(x, k)?;
            }
            target_activation = Some(x);
        }
    }

    Ok((
        target_input.expect("validated target"),
        target_activation.expect("validated target"),
        x,
    ))
}

/// Finite-difference check of every parameter gradient of the batch-mean
/// cross-entropy of `model` on `(input, labels)`; see [`check_gradients`].
pub fn grad_check(model: &Checkpoint, input: &Tensor, labels: &[usize], step: f64) -> Result<f64> {
    check_batch(&model.spec, input)?;
    check_gradients(&model.params, step, |tape, params| {
        let (_, _, logits) = build_graph(tape, &model.spec, params, input, None)?;
        tape.cross_entropy(logits, labels)
    })
}

pub fn forward(model: &Checkpoint, batch: &Tensor) -> Result<Tensor> {
    let rec = record(model, batch, None, false)?;
    Ok(rec.tape.value(rec.logits).clone())
}

/// Forward pass with the given target channels forced to zero at the
/// activation point.
pub fn forward_masked(model: &Checkpoint, batch: &Tensor, zeroed: &BTreeSet<usize>) -> Result<Tensor> {
    let width = model.spec.target_width();
    if let Some(&bad) = zeroed.iter().find(|&&c| c >= width) {
        return Err(Error::Input(format!("channel {bad} outside target width {width}")));
    }
    if zeroed.is_empty() {
        return forward(model, batch);
    }
    let keep: Vec<bool> = (0..width).map(|c| !zeroed.contains(&c)).collect();
    let rec = record(model, batch, Some(&keep), false)?;
    Ok(rec.tape.value(rec.logits).clone())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlopReport {
    /// Per-layer FLOPs per sample (multiply-accumulates counted twice).
    pub per_layer: Vec<u64>,
    pub total: u64,
}

pub fn count_flops(model: &Checkpoint) -> Result<FlopReport> {
    count_flops_spec(&model.spec)
}

pub fn count_flops_spec(spec: &NetworkSpec) -> Result<FlopReport> {
    let shapes = spec.layer_shapes()?;
    let per_layer: Vec<u64> = spec
        .layers
        .iter()
        .zip(&shapes)
        .map(|(layer, out)| match *layer {
            LayerSpec::Dense { inputs, outputs } => 2 * (inputs * outputs) as u64,
            LayerSpec::Conv2d { in_channels, out_channels, kernel, .. } => {
                2 * (out_channels * in_channels * kernel[0] * kernel[1] * out[1] * out[2]) as u64
            }
            LayerSpec::ResidualMlpBlock { width, hidden } => 4 * (width * hidden) as u64,
            LayerSpec::Relu | LayerSpec::Flatten => 0,
        })
        .collect();
    let total = per_layer.iter().sum();
    Ok(FlopReport { per_layer, total })
}
