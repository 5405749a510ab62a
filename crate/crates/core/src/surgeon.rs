//! Structural channel removal with weight inheritance.
//!
//! Only the target layer and its unique consumer change shape. The target
//! keeps the rows (output channels) in the keep set, the consumer keeps the
//! matching input columns, and every other parameter is copied bitwise.
//! Because masking happens after the target's ReLU, a pruned network
//! computes exactly what the full network computes with the removed
//! channels forced to zero.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{build, forward, forward_masked, Checkpoint, Consumer, LayerSpec, NetworkSpec};
use crate::tensor::Tensor;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub metric: String,
    pub k: usize,
    pub calibration_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub target_layer: usize,
    /// Surviving channels, strictly ascending.
    pub keep: Vec<usize>,
    pub provenance: Provenance,
}

impl PruneSpec {
    pub fn new(target_layer: usize, keep: Vec<usize>, provenance: Provenance) -> Self {
        PruneSpec { target_layer, keep, provenance }
    }

    pub fn validate_for(&self, spec: &NetworkSpec) -> Result<()> {
        if self.target_layer != spec.target_layer {
            return Err(Error::Spec(format!(
                "prune spec targets layer {}, network targets {}",
                self.target_layer, spec.target_layer
            )));
        }
        if self.keep.is_empty() {
            return Err(Error::Spec("keep set is empty".into()));
        }
        if self.keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Spec("keep set must be strictly ascending".into()));
        }
        let width = spec.target_width();
        if let Some(&bad) = self.keep.iter().find(|&&c| c >= width) {
            return Err(Error::Spec(format!("keep index {bad} outside target width {width}")));
        }
        Ok(())
    }

    /// Channels that surgery removes.
    pub fn removed(&self, width: usize) -> BTreeSet<usize> {
        complement(&self.keep, width)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("prune spec serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<PruneSpec> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::FormatLine {
            line: e.line() as u64,
            msg: e.to_string(),
        })
    }
}

pub fn complement(keep: &[usize], width: usize) -> BTreeSet<usize> {
    let kept: BTreeSet<usize> = keep.iter().copied().collect();
    (0..width).filter(|c| !kept.contains(c)).collect()
}

/// Keeps entries `keep` along axis 1 of a tensor viewed as
/// `outer x groups x inner`.
fn select_axis1(t: &Tensor, groups: usize, keep: &[usize]) -> Result<Tensor> {
    let outer = t.shape()[0];
    let inner = t.len() / (outer * groups);
    let mut data = Vec::with_capacity(outer * keep.len() * inner);
    for o in 0..outer {
        for &g in keep {
            let start = (o * groups + g) * inner;
            data.extend_from_slice(&t.data()[start..start + inner]);
        }
    }
    let mut shape = t.shape().to_vec();
    if shape.len() == 2 {
        shape[1] = keep.len() * inner;
    } else {
        shape[1] = keep.len();
    }
    Tensor::new(shape, data)
}

/// Removes every target channel outside `spec.keep`, inheriting all
/// surviving weights.
pub fn prune_structural(model: &Checkpoint, spec: &PruneSpec) -> Result<Checkpoint> {
    spec.validate_for(&model.spec)?;
    let consumer = model.spec.consumer()?;
    let width = model.spec.target_width();
    let k = spec.keep.len();
    let t = model.spec.target_layer;
    let tw = model.spec.param_offset(t);

    let mut net = model.spec.clone();
    let mut params = model.params.clone();
    params[tw] = model.params[tw].select_rows(&spec.keep);
    params[tw + 1] = model.params[tw + 1].select_rows(&spec.keep);

    match consumer {
        Consumer::ResidualInner => {
            if let LayerSpec::ResidualMlpBlock { hidden, .. } = &mut net.layers[t] {
                *hidden = k;
            }
            params[tw + 2] = select_axis1(&model.params[tw + 2], width, &spec.keep)?;
        }
        Consumer::Layer { index, spatial } => {
            match &mut net.layers[t] {
                LayerSpec::Dense { outputs, .. } => *outputs = k,
                LayerSpec::Conv2d { out_channels, .. } => *out_channels = k,
                _ => unreachable!("validated target kind"),
            }
            match &mut net.layers[index] {
                LayerSpec::Dense { inputs, .. } => *inputs = k * spatial,
                LayerSpec::Conv2d { in_channels, .. } => *in_channels = k,
                _ => unreachable!("consumer is parametric"),
            }
            let cw = model.spec.param_offset(index);
            params[cw] = select_axis1(&model.params[cw], width, &spec.keep)?;
        }
    }
    Checkpoint::new(net, params, model.meta.clone())
}

/// Same architecture as the pruned network, freshly initialized.
pub fn scratch_variant(pruned_spec: &NetworkSpec, seed: u64) -> Result<Checkpoint> {
    build(pruned_spec, seed)
}

/// Largest absolute difference between the pruned network and the full
/// network with the complement of `keep` masked, over `probe`.
pub fn equivalence_check(full: &Checkpoint, pruned: &Checkpoint, keep: &[usize], probe: &Tensor) -> Result<f64> {
    let removed = complement(keep, full.spec.target_width());
    let reference = forward_masked(full, probe, &removed)?;
    let got = forward(pruned, probe)?;
    Ok(reference
        .data()
        .iter()
        .zip(got.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}
