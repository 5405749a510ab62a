//! Diagnostics: selection stability, metric orthogonality, proxy fidelity
//! and entropy-bucketed routing.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::importance::{calibrate_agf, score, score_l1, topk, CalibrationConfig, ChannelScoreTable, Metric};
use crate::network::Checkpoint;
use crate::router::{Route, RoutingTrace};
use crate::tensor::softmax_rows;
use crate::trainer::logits;

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub metric: Metric,
    pub k: usize,
    pub trials: usize,
    /// `(trial_a, trial_b, jaccard)` for every `a < b`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub mean: f64,
}

/// Scores `metric` on `trials` disjoint calibration slices of
/// `config.batches × config.batch_size` samples each and compares the top-k
/// sets pairwise. Trial `t` calibrates with seed `config.seed + t`, so the
/// random metric draws a fresh permutation per trial.
pub fn stability(
    metric: Metric,
    model: &Checkpoint,
    ds: &Dataset,
    k: usize,
    trials: usize,
    config: &CalibrationConfig,
) -> Result<StabilityReport> {
    if trials < 2 {
        return Err(Error::Config(format!("stability needs at least 2 trials, got {trials}")));
    }
    config.validate()?;
    let slice = config.batches * config.batch_size;
    if slice * trials > ds.len() {
        return Err(Error::Config(format!(
            "{trials} disjoint slices of {slice} samples need {} samples, dataset has {}",
            slice * trials,
            ds.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut sets = Vec::with_capacity(trials);
    for t in 0..trials {
        let sub = ds.subset(&order[t * slice..(t + 1) * slice])?;
        let cfg = CalibrationConfig { seed: config.seed.wrapping_add(t as u64), ..*config };
        let table = score(metric, model, &sub, &cfg)?;
        sets.push(topk(&table.scores, k)?);
    }
    let mut pairs = Vec::new();
    for a in 0..trials {
        for b in a + 1..trials {
            pairs.push((a, b, jaccard(&sets[a], &sets[b])));
        }
    }
    let mean = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
    Ok(StabilityReport { metric, k, trials, pairs, mean })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrthogonalityReport {
    pub metrics: (Metric, Metric),
    pub k: usize,
    pub jaccard: f64,
    /// Min-max normalized `(a, b)` per channel.
    pub normalized: Vec<(f64, f64)>,
}

/// Maps scores onto [0, 1]; a constant table maps to all zeros.
pub fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    scores.iter().map(|&s| if span > 0.0 { (s - lo) / span } else { 0.0 }).collect()
}

pub fn orthogonality(a: &ChannelScoreTable, b: &ChannelScoreTable, k: usize) -> Result<OrthogonalityReport> {
    if a.layer != b.layer || a.width() != b.width() {
        return Err(Error::Input(format!(
            "score tables cover layer {} ({} channels) and layer {} ({} channels)",
            a.layer,
            a.width(),
            b.layer,
            b.width()
        )));
    }
    let j = jaccard(&topk(&a.scores, k)?, &topk(&b.scores, k)?);
    let normalized = min_max(&a.scores).into_iter().zip(min_max(&b.scores)).collect();
    Ok(OrthogonalityReport { metrics: (a.metric, b.metric), k, jaccard: j, normalized })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProxyFidelityReport {
    pub l1_full: f64,
    pub l1_pruned: f64,
    pub agf_full: f64,
    pub agf_pruned: f64,
}

fn ratio(full: f64, pruned: f64) -> Option<f64> {
    (pruned > 0.0).then(|| full / pruned)
}

impl ProxyFidelityReport {
    pub fn from_sums(l1_full: f64, l1_pruned: f64, agf_full: f64, agf_pruned: f64) -> Result<Self> {
        for (name, v) in [("l1_full", l1_full), ("l1_pruned", l1_pruned), ("agf_full", agf_full), ("agf_pruned", agf_pruned)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} must be a finite non-negative sum, got {v}")));
            }
        }
        Ok(ProxyFidelityReport { l1_full, l1_pruned, agf_full, agf_pruned })
    }

    /// `None` when the pruned sum is zero.
    pub fn l1_ratio(&self) -> Option<f64> {
        ratio(self.l1_full, self.l1_pruned)
    }

    pub fn agf_ratio(&self) -> Option<f64> {
        ratio(self.agf_full, self.agf_pruned)
    }
}

/// Summed ℓ1 mass and summed AGF utility of the target layer, full vs pruned.
pub fn proxy_fidelity(
    full: &Checkpoint,
    pruned: &Checkpoint,
    ds: &Dataset,
    config: &CalibrationConfig,
) -> Result<ProxyFidelityReport> {
    if full.spec.target_layer != pruned.spec.target_layer || full.spec.input_shape != pruned.spec.input_shape {
        return Err(Error::Input("pruned model does not share the full model's target layer".into()));
    }
    let l1 = |m: &Checkpoint| score_l1(m).scores.iter().sum::<f64>();
    let agf = |m: &Checkpoint| -> Result<f64> { Ok(calibrate_agf(m, ds, config)?.scores.iter().sum()) };
    ProxyFidelityReport::from_sums(l1(full), l1(pruned), agf(full)?, agf(pruned)?)
}

/// `-Σ p ln p`, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyBucketReport {
    pub num_classes: usize,
    /// Counts per bin over `[0, ln C]`, per route.
    pub pruned: Vec<usize>,
    pub full: Vec<usize>,
    pub entropies: Vec<f64>,
}

impl EntropyBucketReport {
    pub fn bins(&self) -> usize {
        self.pruned.len()
    }

    pub fn max_entropy(&self) -> f64 {
        (self.num_classes as f64).ln()
    }

    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let w = self.max_entropy() / self.bins() as f64;
        (b as f64 * w, (b + 1) as f64 * w)
    }

    pub fn total(&self) -> usize {
        self.pruned.iter().sum::<usize>() + self.full.iter().sum::<usize>()
    }

    /// Mean entropy of the samples that took `route`; `None` if none did.
    pub fn mean_entropy(&self, trace: &RoutingTrace, route: Route) -> Option<f64> {
        let hs: Vec<f64> =
            trace.rows.iter().zip(&self.entropies).filter(|(r, _)| r.route == route).map(|(_, &h)| h).collect();
        (!hs.is_empty()).then(|| hs.iter().sum::<f64>() / hs.len() as f64)
    }
}

/// Histograms the full model's prediction entropy, split by the route each
/// sample took in `trace`.
pub fn entropy_buckets(trace: &RoutingTrace, full: &Checkpoint, ds: &Dataset, bins: usize) -> Result<EntropyBucketReport> {
    if bins == 0 {
        return Err(Error::Config("entropy histogram needs at least one bin".into()));
    }
    if trace.rows.len() != ds.len() {
        return Err(Error::Input(format!("trace has {} rows, dataset {} samples", trace.rows.len(), ds.len())));
    }
    let probs = softmax_rows(&logits(full, ds)?)?;
    let c = probs.row_len();
    let hmax = (c as f64).ln();
    let mut report = EntropyBucketReport { num_classes: c, pruned: vec![0; bins], full: vec![0; bins], entropies: Vec::new() };
    for (i, row) in trace.rows.iter().enumerate() {
        let h = entropy(probs.row(i)).clamp(0.0, hmax);
        let b = if hmax > 0.0 { ((h / hmax * bins as f64) as usize).min(bins - 1) } else { 0 };
        match row.route {
            Route::Pruned => report.pruned[b] += 1,
            Route::Full => report.full[b] += 1,
        }
        report.entropies.push(h);
    }
    Ok(report)
}
