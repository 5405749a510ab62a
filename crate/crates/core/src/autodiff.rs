//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and the handles of
//! its inputs. `backward` walks the tape once, in exact reverse recording
//! order, so identical recordings give bitwise-identical gradients. Gradients
//! are produced for every node that requires them, which includes
//! intermediate activations as well as parameters.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    AddBias(Var, Var),
    Conv2d { input: Var, kernel: Var, stride: usize, pad: usize },
    Relu(Var),
    Softmax(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Tensor },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Reshape(Var),
    MaskChannels { input: Var, keep: Vec<bool> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. One tape supports exactly one `backward`.
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that does not take part in differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        assert_eq!(v.tape, self.id, "variable recorded on another tape");
        &self.nodes[v.index].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.index].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op, requires_grad });
        Var { tape: self.id, index }
    }

    fn check(&self, vars: &[Var]) -> Result<()> {
        if self.consumed {
            return Err(Error::Contract(
                "tape already differentiated; record a new one".into(),
            ));
        }
        for v in vars {
            if v.tape != self.id || v.index >= self.nodes.len() {
                return Err(Error::Contract("variable does not belong to this tape".into()));
            }
        }
        Ok(())
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.index].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(&[a])?;
        let out = tensor::transpose(self.value(a))?;
        let rg = self.any_grad(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    /// Adds a per-channel bias along axis 1 (features for `N x M`, channels
    /// for `N x C x H x W`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.check(&[x, bias])?;
        let xv = self.value(x);
        let bv = self.value(bias);
        if xv.shape().len() < 2 || bv.shape() != [xv.shape()[1]] {
            return Err(Error::Shape(format!(
                "bias {:?} does not match axis 1 of {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let channels = xv.shape()[1];
        let inner: usize = xv.shape()[2..].iter().product();
        let mut out = xv.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += bv.data()[(i / inner) % channels];
        }
        let rg = self.any_grad(&[x, bias]);
        Ok(self.push(out, Op::AddBias(x, bias), rg))
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        self.check(&[input, kernel])?;
        let out = tensor::conv2d(self.value(input), self.value(kernel), stride, pad)?;
        let rg = self.any_grad(&[input, kernel]);
        Ok(self.push(out, Op::Conv2d { input, kernel, stride, pad }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Relu(x), rg))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = tensor::softmax_rows(self.value(x))?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Softmax(x), rg))
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.check(&[logits])?;
        let lv = self.value(logits);
        let (n, c) = match lv.shape() {
            &[n, c] => (n, c),
            s => return Err(Error::Shape(format!("logits must be N x C, got {s:?}"))),
        };
        if labels.len() != n {
            return Err(Error::Input(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Input(format!("label {bad} outside [0, {c})")));
        }
        let probs = tensor::softmax_rows(lv)?;
        let mut loss = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            // log-sum-exp form keeps confident rows finite
            let row = lv.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[l];
        }
        loss /= n as f64;
        let rg = self.any_grad(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, labels: labels.to_vec(), probs },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(&[a, b])?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Result<Var> {
        self.check(&[x])?;
        let out = self.value(x).map(|v| alpha * v);
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Scale(x, alpha), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(&[x])?;
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Sum(x), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        self.check(&[x])?;
        let out = self.value(x).reshape(shape)?;
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::Reshape(x), rg))
    }

    /// Forces channels (axis 1) with `keep[c] == false` to exactly zero.
    pub fn mask_channels(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        self.check(&[x])?;
        let xv = self.value(x);
        if xv.shape().len() < 2 || xv.shape()[1] != keep.len() {
            return Err(Error::Shape(format!(
                "mask of {} channels for {:?}",
                keep.len(),
                xv.shape()
            )));
        }
        let channels = keep.len();
        let inner: usize = xv.shape()[2..].iter().product();
        let mut out = xv.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            if !keep[(i / inner) % channels] {
                *v = 0.0;
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(out, Op::MaskChannels { input: x, keep: keep.to_vec() }, rg))
    }

    /// Differentiates the scalar `loss` with respect to every recorded value
    /// that requires a gradient. The tape is consumed.
    pub fn backward(&mut self, loss: Var) -> Result<GradientStore> {
        self.check(&[loss])?;
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(Tensor::full(self.nodes[loss.index].value.shape(), 1.0));

        for i in (0..=loss.index).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (target, contrib) in self.adjoint(i, &g)? {
                if !self.nodes[target.index].requires_grad {
                    continue;
                }
                match &mut grads[target.index] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            grads[i] = Some(g);
        }

        let mut store = GradientStore { tape: self.id, grads: HashMap::new() };
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.requires_grad {
                continue;
            }
            let g = grads
                .get_mut(i)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
            store.grads.insert(i, g);
        }
        Ok(store)
    }

    /// Local vector-Jacobian products of node `i` given its output gradient.
    fn adjoint(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| &self.nodes[v.index].value;
        Ok(match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let ga = tensor::matmul(g, &tensor::transpose(val(*b))?)?;
                let gb = tensor::matmul(&tensor::transpose(val(*a))?, g)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Transpose(a) => vec![(*a, tensor::transpose(g)?)],
            Op::AddBias(x, b) => {
                let channels = val(*b).len();
                let inner: usize = g.shape()[2..].iter().product();
                let mut gb = vec![0.0; channels];
                for (k, &v) in g.data().iter().enumerate() {
                    gb[(k / inner) % channels] += v;
                }
                vec![(*x, g.clone()), (*b, Tensor::new(vec![channels], gb)?)]
            }
            Op::Conv2d { input, kernel, stride, pad } => {
                let (gi, gk) =
                    tensor::conv2d_backward(val(*input), val(*kernel), g, *stride, *pad)?;
                vec![(*input, gi), (*kernel, gk)]
            }
            Op::Relu(x) => {
                let gx = val(*x).zip_map(g, |xv, gv| if xv > 0.0 { gv } else { 0.0 })?;
                vec![(*x, gx)]
            }
            Op::Softmax(x) => {
                let p = &self.nodes[i].value;
                let c = p.shape()[1];
                let mut gx = vec![0.0; p.len()];
                for r in 0..p.shape()[0] {
                    let pr = p.row(r);
                    let gr = g.row(r);
                    let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..c {
                        gx[r * c + j] = pr[j] * (gr[j] - dot);
                    }
                }
                vec![(*x, Tensor::new(p.shape().to_vec(), gx)?)]
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let n = labels.len() as f64;
                let c = probs.shape()[1];
                let scale = g.item() / n;
                let mut gl = probs.data().to_vec();
                for (r, &l) in labels.iter().enumerate() {
                    gl[r * c + l] -= 1.0;
                }
                for v in &mut gl {
                    *v *= scale;
                }
                vec![(*logits, Tensor::new(probs.shape().to_vec(), gl)?)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Mul(a, b) => {
                let ga = g.zip_map(val(*b), |x, y| x * y)?;
                let gb = g.zip_map(val(*a), |x, y| x * y)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::Scale(x, alpha) => vec![(*x, g.map(|v| alpha * v))],
            Op::Sum(x) => vec![(*x, Tensor::full(val(*x).shape(), g.item()))],
            Op::Reshape(x) => vec![(*x, g.reshape(val(*x).shape())?)],
            Op::MaskChannels { input, keep } => {
                let channels = keep.len();
                let inner: usize = g.shape()[2..].iter().product();
                let mut gx = g.clone();
                for (k, v) in gx.data_mut().iter_mut().enumerate() {
                    if !keep[(k / inner) % channels] {
                        *v = 0.0;
                    }
                }
                vec![(*input, gx)]
            }
        })
    }
}

/// Gradients keyed by recorded value; shapes always match the value.
#[derive(Debug)]
pub struct GradientStore {
    tape: u64,
    grads: HashMap<usize, Tensor>,
}

impl GradientStore {
    /// Gradient of `v`, or `None` when `v` does not require one.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(&v.index)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Worst relative disagreement between the recorded gradients of `f` and
/// central differences of step `step`, over every entry of every
/// parameter. The denominator is `max(|analytic|, |numeric|, 1e-8)`.
/// No parameters means nothing to disagree on: 0.
pub fn check_gradients<F>(params: &[Tensor], step: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Input(format!("finite-difference step {step} must be positive")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone(), false)).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let loss = f(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe = params.to_vec();
    for (pi, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("leaf requires grad").data().to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = probe[pi].data()[j];
            probe[pi].data_mut()[j] = orig + step;
            let up = eval(&probe)?;
            probe[pi].data_mut()[j] = orig - step;
            let down = eval(&probe)?;
            probe[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
