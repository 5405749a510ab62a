//! Channel importance scoring for the target layer.
//!
//! The primary metric is the absolute feature-space Taylor utility
//!
//! ```text
//! U_c = (1/T) Σ_t  E_{x ∈ B_t} [ mean over elements of |Y_c(x) ⊙ ∂ℓ(x)/∂Y_c(x)| ]
//! ```
//!
//! where `Y_c` is channel `c` at the target's activation point and `ℓ(x)` is
//! the per-sample cross-entropy. Taking the absolute value per element,
//! before any averaging, is what separates it from the classical net Taylor
//! score `|(1/T) Σ_t E_x[mean(Y_c ⊙ ∂ℓ/∂Y_c)]|`, whose positive and negative
//! per-sample terms can cancel. Every batch gets equal weight in the outer
//! average, including a short final batch.
//!
//! The remaining metrics are the usual comparison points: parameter-space
//! Taylor, ℓ1 magnitude, Wanda (|W|·‖X‖₂), RIA (relative importance times
//! activation) and uniform random scores. Biases never contribute.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batches, Dataset};
use crate::error::{Error, Result};
use crate::network::{record, Checkpoint};
use crate::tensor::Tensor;

/// Exponent on the input norm in the RIA score.
pub const RIA_EXPONENT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Agf,
    TaylorFeature,
    TaylorParam,
    L1,
    Wanda,
    Ria,
    Random,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::Agf,
        Metric::TaylorFeature,
        Metric::TaylorParam,
        Metric::L1,
        Metric::Wanda,
        Metric::Ria,
        Metric::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Agf => "agf",
            Metric::TaylorFeature => "taylor_feature",
            Metric::TaylorParam => "taylor_param",
            Metric::L1 => "l1",
            Metric::Wanda => "wanda",
            Metric::Ria => "ria",
            Metric::Random => "random",
        }
    }

    /// Metrics that read only the weights (plus a seed, for random).
    pub fn is_data_free(self) -> bool {
        matches!(self, Metric::L1 | Metric::Random)
    }

    pub fn valid_names() -> String {
        Metric::ALL.map(Metric::name).join(", ")
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}; valid: {}", Metric::valid_names())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Number of mini-batches `T`.
    pub batches: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches == 0 {
            return Err(Error::Config("calibration needs at least one batch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("calibration batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelScoreTable {
    pub metric: Metric,
    pub layer: usize,
    pub scores: Vec<f64>,
    /// Calibration batches used (0 for data-free metrics).
    pub batches: usize,
    pub seed: u64,
}

impl ChannelScoreTable {
    pub fn width(&self) -> usize {
        self.scores.len()
    }

    pub fn scaled(&self, alpha: f64) -> ChannelScoreTable {
        ChannelScoreTable {
            scores: self.scores.iter().map(|s| s * alpha).collect(),
            ..self.clone()
        }
    }
}

/// The first `T` batches of a seeded shuffle of `ds`.
pub fn calibration_batches(ds: &Dataset, config: &CalibrationConfig) -> Result<Vec<Vec<usize>>> {
    config.validate()?;
    let mut all = batches(ds.len(), config.batch_size, config.seed, true)?;
    if config.batches > all.len() {
        return Err(Error::Config(format!(
            "T = {} calibration batches requested but only {} batches of {} fit in {} samples",
            config.batches,
            all.len(),
            config.batch_size,
            ds.len()
        )));
    }
    all.truncate(config.batches);
    Ok(all)
}

/// Per-channel means of `|Y ⊙ G|` and of `Y ⊙ G` for one batch, taken over
/// samples and all element positions of each channel (axis 1).
pub fn batch_channel_terms(y: &Tensor, g: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    crate::tensor::same_shape(y, g)?;
    if y.shape().len() < 2 {
        return Err(Error::Shape(format!("activation {:?} has no channel axis", y.shape())));
    }
    let channels = y.shape()[1];
    let inner: usize = y.shape()[2..].iter().product();
    let mut abs = vec![0.0; channels];
    let mut signed = vec![0.0; channels];
    for (k, (&yv, &gv)) in y.data().iter().zip(g.data()).enumerate() {
        let c = (k / inner) % channels;
        let p = yv * gv;
        abs[c] += p.abs();
        signed[c] += p;
    }
    let count = (y.shape()[0] * inner) as f64;
    for c in 0..channels {
        abs[c] /= count;
        signed[c] /= count;
    }
    Ok((abs, signed))
}

/// Per-channel sums over batches of the absolute and signed feature-space
/// terms. `loss_scale` multiplies the per-sample loss before differentiation.
pub(crate) fn feature_terms(
    model: &Checkpoint,
    ds: &Dataset,
    config: &CalibrationConfig,
    loss_scale: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let width = model.spec.target_width();
    let mut abs_acc = vec![0.0; width];
    let mut signed_acc = vec![0.0; width];
    for idx in calibration_batches(ds, config)? {
        let (x, labels) = ds.batch(&idx);
        let mut rec = record(model, &x, None, true)?;
        let mean = rec.tape.cross_entropy(rec.logits, &labels)?;
        // mean loss times batch size: gradients are per-sample loss gradients
        let loss = rec.tape.scale(mean, loss_scale * labels.len() as f64)?;
        let grads = rec.tape.backward(loss)?;
        let y = rec.tape.value(rec.target_activation);
        let g = grads.get(rec.target_activation).expect("activation requires grad");
        let (abs, signed) = batch_channel_terms(y, g)?;
        for c in 0..width {
            abs_acc[c] += abs[c];
            signed_acc[c] += signed[c];
        }
    }
    Ok((abs_acc, signed_acc))
}

fn table(model: &Checkpoint, metric: Metric, scores: Vec<f64>, batches: usize, seed: u64) -> ChannelScoreTable {
    ChannelScoreTable {
        metric,
        layer: model.spec.target_layer,
        scores,
        batches,
        seed,
    }
}

/// Absolute feature-space Taylor utility `U_c`. Parameters are not modified.
pub fn calibrate_agf(model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<ChannelScoreTable> {
    let (abs, _) = feature_terms(model, ds, config, 1.0)?;
    let t = config.batches as f64;
    let scores = abs.into_iter().map(|s| s / t).collect();
    Ok(table(model, Metric::Agf, scores, config.batches, config.seed))
}

/// Net feature-space Taylor score: signed mean first, absolute value last.
pub fn score_taylor_feature(model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<ChannelScoreTable> {
    let (_, signed) = feature_terms(model, ds, config, 1.0)?;
    let t = config.batches as f64;
    let scores = signed.into_iter().map(|s| (s / t).abs()).collect();
    Ok(table(model, Metric::TaylorFeature, scores, config.batches, config.seed))
}

/// Parameter-space Taylor score `|(1/T) Σ_t Σ_{w ∈ channel} (∂L/∂w)·w|`
/// with `L` the batch-mean loss.
pub fn score_taylor_param(model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<ChannelScoreTable> {
    let width = model.spec.target_width();
    let widx = model.spec.target_weight_index();
    let w = &model.params[widx];
    let per = w.len() / width;
    let mut acc = vec![0.0; width];
    for idx in calibration_batches(ds, config)? {
        let (x, labels) = ds.batch(&idx);
        let mut rec = record(model, &x, None, true)?;
        let loss = rec.tape.cross_entropy(rec.logits, &labels)?;
        let grads = rec.tape.backward(loss)?;
        let g = grads.get(rec.params[widx]).expect("parameter requires grad");
        for (c, a) in acc.iter_mut().enumerate() {
            let range = c * per..(c + 1) * per;
            *a += g.data()[range.clone()]
                .iter()
                .zip(&w.data()[range])
                .map(|(gv, wv)| gv * wv)
                .sum::<f64>();
        }
    }
    let t = config.batches as f64;
    let scores = acc.into_iter().map(|s| (s / t).abs()).collect();
    Ok(table(model, Metric::TaylorParam, scores, config.batches, config.seed))
}

/// Sum of `|W|` over every weight producing each channel.
pub fn score_l1(model: &Checkpoint) -> ChannelScoreTable {
    let width = model.spec.target_width();
    let w = model.target_weight();
    let per = w.len() / width;
    let scores = (0..width)
        .map(|c| w.data()[c * per..(c + 1) * per].iter().map(|v| v.abs()).sum())
        .collect();
    table(model, Metric::L1, scores, 0, 0)
}

/// ℓ2 norm of every input channel of the target layer over all calibration
/// samples (and spatial positions).
pub fn input_norms(model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<Vec<f64>> {
    let mut sq: Option<Vec<f64>> = None;
    for idx in calibration_batches(ds, config)? {
        let (x, _) = ds.batch(&idx);
        let rec = record(model, &x, None, false)?;
        let xin = rec.tape.value(rec.target_input);
        let channels = xin.shape()[1];
        let inner: usize = xin.shape()[2..].iter().product();
        let acc = sq.get_or_insert_with(|| vec![0.0; channels]);
        for (k, v) in xin.data().iter().enumerate() {
            acc[(k / inner) % channels] += v * v;
        }
    }
    Ok(sq.expect("at least one batch").into_iter().map(f64::sqrt).collect())
}

/// Weight magnitudes of the target layer as a `channels x fan_in` matrix
/// plus the input channel each column reads.
fn weight_matrix(model: &Checkpoint) -> (usize, usize, Vec<f64>, Vec<usize>) {
    let w = model.target_weight();
    let rows = w.shape()[0];
    let cols = w.len() / rows;
    let per_input: usize = w.shape()[2..].iter().product();
    let input_of = (0..cols).map(|m| m / per_input).collect();
    (rows, cols, w.data().iter().map(|v| v.abs()).collect(), input_of)
}

pub fn wanda_from_norms(model: &Checkpoint, norms: &[f64]) -> Vec<f64> {
    let (rows, cols, a, input_of) = weight_matrix(model);
    (0..rows)
        .map(|c| (0..cols).map(|m| a[c * cols + m] * norms[input_of[m]]).sum())
        .collect()
}

pub fn ria_from_norms(model: &Checkpoint, norms: &[f64], exponent: f64) -> Vec<f64> {
    let (rows, cols, a, input_of) = weight_matrix(model);
    let row_sum: Vec<f64> = (0..rows).map(|c| a[c * cols..(c + 1) * cols].iter().sum()).collect();
    let col_sum: Vec<f64> = (0..cols).map(|m| (0..rows).map(|c| a[c * cols + m]).sum()).collect();
    (0..rows)
        .map(|c| {
            (0..cols)
                .map(|m| {
                    let v = a[c * cols + m];
                    let by_col = if col_sum[m] > 0.0 { v / col_sum[m] } else { 0.0 };
                    let by_row = if row_sum[c] > 0.0 { v / row_sum[c] } else { 0.0 };
                    (by_col + by_row) * norms[input_of[m]].powf(exponent)
                })
                .sum()
        })
        .collect()
}

/// Wanda: `Σ_j |W_cj| · ‖X_j‖₂`.
pub fn score_wanda(model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<ChannelScoreTable> {
    let norms = input_norms(model, ds, config)?;
    Ok(table(model, Metric::Wanda, wanda_from_norms(model, &norms), config.batches, config.seed))
}

/// RIA with the default exponent.
pub fn score_ria(model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<ChannelScoreTable> {
    score_ria_with(model, ds, config, RIA_EXPONENT)
}

pub fn score_ria_with(
    model: &Checkpoint,
    ds: &Dataset,
    config: &CalibrationConfig,
    exponent: f64,
) -> Result<ChannelScoreTable> {
    let norms = input_norms(model, ds, config)?;
    Ok(table(model, Metric::Ria, ria_from_norms(model, &norms, exponent), config.batches, config.seed))
}

/// I.i.d. uniform `[0, 1)` scores.
pub fn score_random(model: &Checkpoint, seed: u64) -> ChannelScoreTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = (0..model.spec.target_width()).map(|_| rng.gen::<f64>()).collect();
    table(model, Metric::Random, scores, 0, seed)
}

/// Scores the target layer with any metric. Data-free metrics ignore `ds`
/// and the batch count; random uses `config.seed`.
pub fn score(metric: Metric, model: &Checkpoint, ds: &Dataset, config: &CalibrationConfig) -> Result<ChannelScoreTable> {
    match metric {
        Metric::Agf => calibrate_agf(model, ds, config),
        Metric::TaylorFeature => score_taylor_feature(model, ds, config),
        Metric::TaylorParam => score_taylor_param(model, ds, config),
        Metric::L1 => Ok(score_l1(model)),
        Metric::Wanda => score_wanda(model, ds, config),
        Metric::Ria => score_ria(model, ds, config),
        Metric::Random => Ok(score_random(model, config.seed)),
    }
}

/// Indices of the `k` largest scores, ties to the smaller index, returned
/// in ascending order.
pub fn select_topk(table: &ChannelScoreTable, k: usize) -> Result<Vec<usize>> {
    topk(&table.scores, k)
}

pub fn topk(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::Input(format!("k = {k} outside [1, {}]", scores.len())));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Position of `channel` when scores are sorted descending (0 = best).
pub fn rank_of(scores: &[f64], channel: usize) -> usize {
    scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > scores[channel] || (s == scores[channel] && i < channel))
        .count()
}

/// Median of the scores (mean of the middle pair for even lengths).
pub fn median(scores: &[f64]) -> f64 {
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_cancellation_probe, gen_gaussian_clusters, SyntheticSpec};
    use crate::network::{build, LayerSpec, Metadata, NetworkSpec};

    fn probe_config() -> CalibrationConfig {
        CalibrationConfig { batches: 4, batch_size: 32, seed: 5 }
    }

    fn clusters() -> Dataset {
        gen_gaussian_clusters(&SyntheticSpec {
            num_classes: 3,
            dim: 5,
            samples_per_class: 20,
            cluster_separation: 3.0,
            noise_sigma: 1.0,
            seed: 2,
        })
        .unwrap()
    }

    #[test]
    fn batch_terms_hand_case() {
        // channel 0 sees activations [1, -2] with gradients [0.5, -0.5],
        // channel 1 sees [3, 4] with [1, -1]
        let y = Tensor::from_rows(&[&[1.0, 3.0], &[-2.0, 4.0]]);
        let g = Tensor::from_rows(&[&[0.5, 1.0], &[-0.5, -1.0]]);
        let (abs, signed) = batch_channel_terms(&y, &g).unwrap();
        assert_eq!(abs, vec![0.75, 3.5]);
        assert_eq!(signed, vec![0.75, -0.5]);
    }

    #[test]
    fn agf_on_probe_separates_designated_channel() {
        let p = gen_cancellation_probe(1).unwrap();
        let agf = calibrate_agf(&p.model, &p.dataset, &probe_config()).unwrap();
        let net = score_taylor_feature(&p.model, &p.dataset, &probe_config()).unwrap();
        assert!(net.scores[0] < 1e-6, "net {}", net.scores[0]);
        assert!(agf.scores[0] > 0.1, "agf {}", agf.scores[0]);
    }

    #[test]
    fn zero_gradient_gives_zero_scores() {
        // zero output weights make the loss constant in the hidden layer
        let spec = NetworkSpec::mlp(5, 4, 3);
        let mut m = build(&spec, 1).unwrap();
        m.params[2] = Tensor::zeros(&[3, 4]);
        let ds = clusters();
        let cfg = CalibrationConfig { batches: 2, batch_size: 10, seed: 0 };
        assert!(calibrate_agf(&m, &ds, &cfg).unwrap().scores.iter().all(|&s| s == 0.0));
        assert!(score_taylor_feature(&m, &ds, &cfg).unwrap().scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn doubling_the_loss_doubles_scores_exactly() {
        let m = build(&NetworkSpec::mlp(5, 6, 3), 4).unwrap();
        let ds = clusters();
        let cfg = CalibrationConfig { batches: 3, batch_size: 8, seed: 1 };
        let (a1, s1) = feature_terms(&m, &ds, &cfg, 1.0).unwrap();
        let (a2, s2) = feature_terms(&m, &ds, &cfg, 2.0).unwrap();
        for c in 0..6 {
            assert_eq!(a2[c], 2.0 * a1[c]);
            assert_eq!(s2[c], 2.0 * s1[c]);
        }
    }

    #[test]
    fn one_sided_contributions_make_net_equal_agf() {
        let p = gen_cancellation_probe(2).unwrap();
        let half: Vec<usize> = (0..crate::data::PROBE_PAIRS).collect();
        let ds = p.dataset.subset(&half).unwrap();
        let cfg = CalibrationConfig { batches: 2, batch_size: 32, seed: 3 };
        let agf = calibrate_agf(&p.model, &ds, &cfg).unwrap();
        let net = score_taylor_feature(&p.model, &ds, &cfg).unwrap();
        assert!((agf.scores[0] - net.scores[0]).abs() < 1e-12);
        assert!(agf.scores[0] > 0.1);
    }

    #[test]
    fn taylor_param_single_weight() {
        // y = w·x fed straight into a fixed 2-way output; the score is |g·w|
        let spec = NetworkSpec {
            input_shape: vec![1],
            layers: vec![
                LayerSpec::Dense { inputs: 1, outputs: 1 },
                LayerSpec::Dense { inputs: 1, outputs: 2 },
            ],
            target_layer: 0,
        };
        let m = Checkpoint::new(
            spec,
            vec![
                Tensor::from_rows(&[&[0.7]]),
                Tensor::zeros(&[1]),
                Tensor::from_rows(&[&[1.0], &[-1.0]]),
                Tensor::zeros(&[2]),
            ],
            Metadata::default(),
        )
        .unwrap();
        let ds = Dataset::new(Tensor::from_rows(&[&[2.0]]), vec![1], 2).unwrap();
        let cfg = CalibrationConfig { batches: 1, batch_size: 1, seed: 0 };
        let s = score_taylor_param(&m, &ds, &cfg).unwrap().scores[0];
        // z = [1.4, -1.4], label 1: dL/dy = p0 - (p1 - 1) = 2 p0, dL/dw = 2 p0 x
        let p0 = 1.0 / (1.0 + (-2.8f64).exp());
        let g = 2.0 * p0 * 2.0;
        assert!((s - (g * 0.7).abs()).abs() < 1e-12);

        let mut zero = m.clone();
        zero.params[0] = Tensor::zeros(&[1, 1]);
        assert_eq!(score_taylor_param(&zero, &ds, &cfg).unwrap().scores[0], 0.0);
    }

    #[test]
    fn l1_hand_case_and_scale() {
        let spec = NetworkSpec::mlp(3, 2, 2);
        let mut m = build(&spec, 0).unwrap();
        m.params[0] = Tensor::from_rows(&[&[1.0, -2.0, 3.0], &[0.0, 0.0, 0.0]]);
        assert_eq!(score_l1(&m).scores, vec![6.0, 0.0]);

        let m = build(&NetworkSpec::mlp(4, 9, 2), 3).unwrap();
        let mut doubled = m.clone();
        doubled.params[0] = m.params[0].map(|v| 2.0 * v);
        let a = score_l1(&m);
        let b = score_l1(&doubled);
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert_eq!(*y, 2.0 * x);
        }
        assert_eq!(select_topk(&a, 4).unwrap(), select_topk(&b, 4).unwrap());
    }

    #[test]
    fn wanda_and_ria_hand_cases() {
        let spec = NetworkSpec::mlp(2, 2, 2);
        let mut m = build(&spec, 0).unwrap();
        m.params[0] = Tensor::from_rows(&[&[1.0, -2.0], &[0.0, 0.0]]);
        assert_eq!(wanda_from_norms(&m, &[2.0, 1.0]), vec![4.0, 0.0]);

        m.params[0] = Tensor::identity(2);
        assert_eq!(ria_from_norms(&m, &[1.0, 1.0], 0.5), vec![2.0, 2.0]);

        m.params[0] = Tensor::from_rows(&[&[2.0, 0.0], &[1.0, 1.0]]);
        let r = ria_from_norms(&m, &[1.0, 1.0], 0.5);
        assert!((r[0] - (1.0 + 2.0 / 3.0)).abs() < 1e-15);
        assert!((r[1] - (0.5 + 1.0 / 3.0 + 0.5 + 1.0)).abs() < 1e-15);

        m.params[0] = Tensor::zeros(&[2, 2]);
        assert_eq!(ria_from_norms(&m, &[1.0, 1.0], 0.5), vec![0.0, 0.0]);
    }

    #[test]
    fn wanda_reduces_to_l1_on_unit_norms() {
        let m = build(&NetworkSpec::mlp(6, 5, 2), 8).unwrap();
        assert_eq!(wanda_from_norms(&m, &[1.0; 6]), score_l1(&m).scores);
    }

    #[test]
    fn zero_inputs_zero_activation_scores() {
        let m = build(&NetworkSpec::mlp(3, 4, 2), 8).unwrap();
        let ds = Dataset::new(Tensor::zeros(&[6, 3]), vec![0, 1, 0, 1, 0, 1], 2).unwrap();
        let cfg = CalibrationConfig { batches: 2, batch_size: 3, seed: 0 };
        assert!(score_wanda(&m, &ds, &cfg).unwrap().scores.iter().all(|&s| s == 0.0));
        assert!(score_ria(&m, &ds, &cfg).unwrap().scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn random_scores() {
        let m = build(&NetworkSpec::mlp(3, 64, 2), 0).unwrap();
        assert_eq!(score_random(&m, 5), score_random(&m, 5));
        let first = select_topk(&score_random(&m, 0), 4).unwrap();
        let collisions = (1..=100u64)
            .filter(|&s| select_topk(&score_random(&m, s), 4).unwrap() == first)
            .count();
        // C(64, 4) ≈ 635k sets; a repeat within 100 draws is vanishingly rare
        assert_eq!(collisions, 0);
        assert_eq!(select_topk(&score_random(&m, 9), 64).unwrap(), (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn topk_rules() {
        assert_eq!(topk(&[0.1, 0.9, 0.5], 2).unwrap(), vec![1, 2]);
        assert_eq!(topk(&[0.5, 0.5], 1).unwrap(), vec![0]);
        assert_eq!(topk(&[0.3, 0.2, 0.1], 3).unwrap(), vec![0, 1, 2]);
        assert!(matches!(topk(&[0.3], 0), Err(Error::Input(_))));
        assert!(matches!(topk(&[0.3], 2), Err(Error::Input(_))));
    }

    #[test]
    fn too_many_batches_is_config_error() {
        let ds = clusters();
        let cfg = CalibrationConfig { batches: 7, batch_size: 10, seed: 0 };
        let m = build(&NetworkSpec::mlp(5, 4, 3), 0).unwrap();
        assert!(matches!(calibrate_agf(&m, &ds, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        let err = "snip".parse::<Metric>().unwrap_err().to_string();
        assert!(err.contains("agf") && err.contains("ria"));
    }

    #[test]
    fn median_and_rank() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(rank_of(&[0.2, 0.9, 0.2], 2), 2);
        assert_eq!(rank_of(&[0.2, 0.9, 0.2], 1), 0);
    }
}
